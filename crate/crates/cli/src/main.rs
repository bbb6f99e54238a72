fn main() {
    std::process::exit(attrition_cli::run(std::env::args_os()));
}
