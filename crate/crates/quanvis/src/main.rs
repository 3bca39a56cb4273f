use quanvis::cli;

fn main() {
    match cli::parse_and_dispatch() {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
