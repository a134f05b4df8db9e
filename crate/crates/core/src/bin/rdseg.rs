use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    // SEGNET_THREADS caps worker parallelism for the whole process
    if let Ok(threads) = std::env::var("SEGNET_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SEGNET_THREADS must be a positive integer, got '{threads}'");
                std::process::exit(1);
            }
        }
    }

    let cli = rdseg::cli::Cli::parse();
    std::process::exit(rdseg::cli::run(cli));
}
