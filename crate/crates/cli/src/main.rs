fn main() {
    std::process::exit(qnflow::run(std::env::args_os()));
}
