fn main() {
    std::process::exit(pogit::cli::run(std::env::args_os()));
}
