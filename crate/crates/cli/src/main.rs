use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qfeed_core::export::{export, RunManifest};
use qfeed_core::{run_series, without_qfeed, ReplicationScheme, RunReport, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Q-Feed control with the configured replication scheme.
    Qfeed,
    /// Plain k-random walk with path replication.
    Baseline,
    /// Both of the above on identical seeds and topology.
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Replication {
    Qrepl,
    Path,
}

#[derive(Debug, Parser)]
#[command(name = "qfeed-sim", version, about = "Simulate an unstructured P2P overlay with Q-Feed and Q-replication")]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory; overrides `reporting.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Qfeed)]
    mode: Mode,
    #[arg(long, conflicts_with = "replication")]
    no_replication: bool,
    #[arg(long, value_enum)]
    replication: Option<Replication>,
}

fn summary(label: &str, r: &RunReport) -> String {
    let census = r.status_census.percentages();
    let msgs = r.messages_by_origin_status.percentages();
    let per_query = r.avg_messages_per_successful_query.map_or("n/a".to_string(), |m| format!("{m:.4}"));
    format!(
        "{label}run {}: status {:.1}/{:.1}/{:.1}% msgs {} ({:.1}/{:.1}/{:.1}%) per-hit {} finished {:.2}% files +{} repl +{} dl",
        r.run_index,
        census[0],
        census[1],
        census[2],
        r.messages_total,
        msgs[0],
        msgs[1],
        msgs[2],
        per_query,
        r.queries_finished_pct,
        r.files_from_replication,
        r.files_from_download,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match SimConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        config.scenario.seed = seed;
    }
    if let Some(runs) = cli.runs {
        config.scenario.runs = runs;
    }
    if cli.no_replication {
        config.qrepl.scheme = ReplicationScheme::None;
    } else if let Some(r) = cli.replication {
        config.qrepl.scheme = match r {
            Replication::Qrepl => ReplicationScheme::Qrepl,
            Replication::Path => ReplicationScheme::Path,
        };
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.reporting.out_dir));

    let (primary, baseline) = match cli.mode {
        Mode::Qfeed => {
            config.qfeed.enabled = true;
            (config, None)
        }
        Mode::Baseline => {
            let scheme = if cli.no_replication || cli.replication.is_some() {
                config.qrepl.scheme
            } else {
                ReplicationScheme::Path
            };
            (without_qfeed(&config, scheme), None)
        }
        Mode::Compare => {
            config.qfeed.enabled = true;
            let base = without_qfeed(&config, ReplicationScheme::Path);
            (config, Some(base))
        }
    };
    let mode = match cli.mode {
        Mode::Qfeed => "qfeed",
        Mode::Baseline => "baseline",
        Mode::Compare => "compare",
    };

    let reports = match run_series(&primary) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let base_reports = match baseline.as_ref().map(run_series).transpose() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let label = if base_reports.is_some() { "qfeed " } else { "" };
    for r in &reports {
        println!("{}", summary(label, r));
    }
    for r in base_reports.iter().flatten() {
        println!("{}", summary("baseline ", r));
    }

    let manifest = RunManifest::new(mode, &primary, baseline.as_ref());
    if let Err(e) = export(&reports, base_reports.as_deref(), &manifest, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
