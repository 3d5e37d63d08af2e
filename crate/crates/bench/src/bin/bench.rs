use std::fs::File;
use std::path::PathBuf;

use advice_bench::{run_benchmark, BenchConfig};
use advice_core::predictor::Domain;
use anyhow::Context;
use clap::Parser;

/// Explanation size and generation time per domain and grid side.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Args {
    #[arg(long, value_delimiter = ',', default_value = "taxi,wildfire")]
    domains: Vec<Domain>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed LIME budget for every grid side.
    #[arg(long)]
    lime_samples: Option<usize>,
    /// Directory holding `<domain>-<side>-{predictor,qnet}.ckpt`.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Also write the full report, fingerprint included, as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let config = BenchConfig {
        domains: args.domains,
        sizes: args.sizes,
        runs: args.runs,
        seed: args.seed,
        lime_samples: args.lime_samples,
        models: args.models,
        ..BenchConfig::default()
    };
    if config.models.is_none() {
        eprintln!("warning: no --models given; timing random-init networks");
    }
    let report = run_benchmark(&config, |r| {
        eprintln!(
            "{} {}x{} {:?}: {:.4}s",
            r.domain.as_str(),
            r.grid_size,
            r.grid_size,
            r.explainer,
            r.mean_time_s
        )
    })?;
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    report.write_csv(f)?;
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.table());
    println!(
        "host {} seed {} at {} ({} threads)",
        report.fingerprint.host, report.fingerprint.seed, report.fingerprint.timestamp, report.fingerprint.parallelism
    );
    Ok(())
}
