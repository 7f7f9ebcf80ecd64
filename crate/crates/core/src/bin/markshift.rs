fn main() {
    std::process::exit(markshift::cli::dispatch(std::env::args_os()));
}
