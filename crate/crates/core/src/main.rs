use clap::Parser;

use nbfsir::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("NBFSIR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    std::process::exit(run(&cli));
}
