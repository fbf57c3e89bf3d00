fn main() {
    std::process::exit(matcache_cli::run(std::env::args_os()));
}
