use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rulxai::pipeline::{
    self, cluster_from_artifacts, embed_from_artifacts, load_model, load_prepared, run_all,
    validate_from_artifacts, DataCase, MetricsTable, RunConfig, RunPaths,
};
use rulxai::surrogate::{self, SurrogateConfig};

#[derive(Parser)]
#[command(
    name = "rulxai",
    version,
    about = "Sensor-constrained maintenance binning for turbofan data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter, label, normalize and split the dataset.
    Ingest,
    /// Train the RUL regressor.
    Train,
    /// Compute Shapley attributions and the feature ranking.
    Explain,
    /// Embed the selected data cases into 2D.
    Embed,
    /// Fuzzy c-means on the saved embeddings.
    Cluster,
    /// Score the saved partitions against maintenance bins.
    Validate,
    /// Every stage in order, then the comparison table and manifest.
    RunAll,
    /// Write synthetic run-to-failure data in the raw text format.
    Surrogate {
        #[arg(long, default_value_t = 100)]
        units: usize,
        #[arg(long, default_value_t = 2008)]
        surrogate_seed: u64,
        /// Output file.
        path: PathBuf,
    },
}

#[derive(Args)]
struct Opts {
    /// key = value file; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Number of top-ranked features kept by the SHAP-informed cases [default: 5]
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// [default: 6]
    #[arg(long, global = true)]
    clusters: Option<usize>,
    /// [default: 3.0]
    #[arg(long, global = true)]
    fuzziness: Option<f64>,
    /// [default: 15]
    #[arg(long, global = true)]
    neighbors: Option<usize>,
    /// [default: 0.1]
    #[arg(long, global = true)]
    min_dist: Option<f64>,
    /// Comma-separated case ids, e.g. 1,2
    #[arg(long, global = true)]
    cases: Option<String>,
    /// ann or piecewise
    #[arg(long, global = true)]
    truth: Option<String>,
    /// test or all
    #[arg(long, global = true)]
    population: Option<String>,
    #[arg(long, global = true)]
    background: Option<usize>,
    #[arg(long, global = true)]
    coalitions: Option<usize>,
    #[arg(long, global = true)]
    layout_epochs: Option<usize>,
    #[arg(long, global = true)]
    include_cycle: bool,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_config_file(path)?;
        }
        let flags: [(&str, Option<String>); 15] = [
            ("data", self.data.as_ref().map(|p| p.display().to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("top-k", self.top_k.map(|v| v.to_string())),
            ("clusters", self.clusters.map(|v| v.to_string())),
            ("fuzziness", self.fuzziness.map(|v| v.to_string())),
            ("neighbors", self.neighbors.map(|v| v.to_string())),
            ("min-dist", self.min_dist.map(|v| v.to_string())),
            ("cases", self.cases.clone()),
            ("truth", self.truth.clone()),
            ("population", self.population.clone()),
            ("background", self.background.map(|v| v.to_string())),
            ("coalitions", self.coalitions.map(|v| v.to_string())),
            ("layout-epochs", self.layout_epochs.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v).with_context(|| format!("--{key}"))?;
            }
        }
        if self.include_cycle {
            cfg.include_cycle = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_table(table: &MetricsTable) {
    print!("{}", table.to_csv());
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Surrogate {
        units,
        surrogate_seed,
        path,
    } = &cli.command
    {
        let sc = SurrogateConfig {
            units: *units,
            seed: *surrogate_seed,
            ..SurrogateConfig::default()
        };
        surrogate::write(&sc, path)?;
        println!("wrote {} units to {}", units, path.display());
        return Ok(());
    }
    let cfg = cli.opts.resolve()?;
    let paths = RunPaths::new(&cfg.out);
    match cli.command {
        Command::Ingest => {
            let p = pipeline::ingest(&cfg, &paths)?;
            println!(
                "{} rows, {} features retained ({}), train {} / test {}",
                p.table.len(),
                p.table.n_features(),
                p.table.feature_names().join(" "),
                p.train.len(),
                p.test.len()
            );
        }
        Command::Train => {
            let p = load_prepared(&paths)?;
            let t = pipeline::train(&cfg, &paths, &p)?;
            let last = t.history.last().context("empty training history")?;
            println!(
                "epoch {}: train RMSE {:.4}, test RMSE {:.4}{}",
                last.epoch,
                last.train,
                last.test.unwrap_or(f64::NAN),
                if t.cached { " (cached)" } else { "" }
            );
        }
        Command::Explain => {
            let p = load_prepared(&paths)?;
            let model = load_model(&paths)?;
            let e = pipeline::explain_stage(&cfg, &paths, &p, &model)?;
            for (rank, f) in e.ranking()?.entries.iter().enumerate() {
                println!("{:>2} {:<12} {:.4}", rank + 1, f.name, f.importance);
            }
        }
        Command::Embed => {
            for case in cfg.selected_cases()? {
                let e = embed_from_artifacts(&cfg, &paths, case)?;
                println!("case {}: {} points embedded", case.id, e.n());
            }
        }
        Command::Cluster => {
            for case in cfg.selected_cases()? {
                let r = cluster_from_artifacts(&cfg, &paths, case)?;
                println!(
                    "case {}: {} iterations, objective {:.4}",
                    case.id,
                    r.iterations,
                    r.objective.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Validate => print_table(&validate_from_artifacts(&cfg, &paths)?),
        Command::RunAll => {
            let out = run_all(&cfg)?;
            if let Some(last) = out.history.last() {
                println!("test RMSE {:.4}", last.test.unwrap_or(f64::NAN));
            }
            println!("top features: {}", out.manifest.top_features.join(" "));
            for c in &out.manifest.cases {
                let case = DataCase::from_id(c.id)?;
                println!(
                    "case {}: {:?}, {} dimensions",
                    c.id, case.source, c.dimensions
                );
            }
            print_table(&out.table);
        }
        Command::Surrogate { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
