fn main() {
    std::process::exit(dpcmf::cli::main_with_args(std::env::args_os()));
}
