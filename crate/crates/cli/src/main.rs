fn main() {
    std::process::exit(manigen::main_with_args(std::env::args_os()));
}
