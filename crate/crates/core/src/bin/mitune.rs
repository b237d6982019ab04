fn main() {
    std::process::exit(mitune::run::main_with_args(std::env::args_os()));
}
