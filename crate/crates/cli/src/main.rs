use clap::Parser;

fn main() {
    // NITROM_THREADS caps the worker pool; unset or invalid values leave
    // the default (one worker per core).
    if let Ok(value) = std::env::var("NITROM_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }

    let cli = nitrom_cli::Cli::parse();
    match nitrom_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_numerical() { 3 } else { 2 });
        }
    }
}
