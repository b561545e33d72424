fn main() {
    std::process::exit(cellfree_energy::cli::run_from(std::env::args_os()));
}
