fn main() {
    std::process::exit(seg_genlab::cli::dispatch(std::env::args_os()));
}
