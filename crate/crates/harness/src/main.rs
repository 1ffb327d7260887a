fn main() {
    std::process::exit(seqgc_harness::cli::main_with_args(std::env::args_os()));
}
