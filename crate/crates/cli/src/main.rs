fn main() {
    std::process::exit(textseek::main_with(std::env::args_os()));
}
