fn main() {
    if let Err(err) = afss::cli::run() {
        eprintln!("afss: {err}");
        std::process::exit(1);
    }
}
