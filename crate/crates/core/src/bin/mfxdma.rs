fn main() {
    std::process::exit(mfxdma::pipeline::cli(std::env::args_os()));
}
