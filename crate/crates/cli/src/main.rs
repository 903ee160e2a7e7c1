use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sica_cli::commands::{cmd_ablate, cmd_eval, cmd_oracle, cmd_train, read_metrics_file, run_config};
use sica_cli::config::load_config;
use sica_cli::manifest::{out_root, RunManifest, CHECKPOINT_FILE, METRICS_FILE};
use sica_cli::plot::plot_svg;
use sica_core::trainer::Mode;

#[derive(Parser)]
#[command(name = "sica", version, about = "Train and evaluate SICA agents on small cooperative tasks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML config; defaults apply to anything left out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set run.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<sica_core::trainer::RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("run.seed={s}"));
        }
        load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Centralized,
    Decentralized,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output root (default: $SICA_OUT or ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(short, long)]
        quiet: bool,
    },
    /// Greedy evaluation of a trained run or checkpoint.
    Eval {
        /// Run directory, or a checkpoint file inside one.
        path: PathBuf,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "decentralized")]
        mode: ModeArg,
    },
    /// Train every variant x seed listed under [ablate].
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel cells; overrides ablate.workers.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Learning curves (mean and 95% band over seeds) as SVG.
    Plot {
        /// Metrics CSVs, run directories or ablation directories.
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "eval_return_decentralized")]
        column: String,
        #[arg(short, long, default_value = "curves.svg")]
        output: PathBuf,
    },
    /// Print the optimal expected return of the configured environment.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
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

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { cfg, out, quiet } => {
            let cfg = cfg.load()?;
            let root = out.unwrap_or_else(out_root).join("train");
            let outcome = cmd_train(&cfg, &root, !quiet)?;
            println!("run directory: {}", outcome.dir.display());
            if let Some(r) = outcome.final_row() {
                println!(
                    "final eval: centralized {:.4}, decentralized {:.4}",
                    r.eval_return_centralized.unwrap_or(f64::NAN),
                    r.eval_return_decentralized.unwrap_or(f64::NAN)
                );
            }
        }
        Cmd::Eval { path, episodes, mode } => {
            let (dir, ckpt) = if path.is_dir() {
                (path.clone(), path.join(CHECKPOINT_FILE))
            } else {
                let dir = path.parent().context("checkpoint has no parent directory")?.to_path_buf();
                (dir, path.clone())
            };
            let cfg = run_config(&dir)?;
            let mode = match mode {
                ModeArg::Centralized => Mode::Centralized,
                ModeArg::Decentralized => Mode::Decentralized,
            };
            println!("{}", cmd_eval(&cfg, &ckpt, episodes, mode)?);
        }
        Cmd::Ablate { cfg, out, workers } => {
            let cfg = cfg.load()?;
            let root = out.unwrap_or_else(out_root).join("ablate");
            let workers = workers.unwrap_or(cfg.ablate.workers);
            let outcome = cmd_ablate(&cfg, &root, workers, true)?;
            println!("ablation directory: {}", outcome.dir.display());
            println!("{:<10} {:>5} {:>14} {:>12}", "variant", "seeds", "dec. return", "L_Align");
            for c in &outcome.comparison {
                let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{:<10} {:>5} {:>14} {:>12}",
                    c.variant.key(),
                    c.seeds,
                    f(c.mean_final_eval_return_decentralized),
                    f(c.mean_final_l_align)
                );
            }
            if !outcome.failures.is_empty() {
                bail!("{} ablation cell(s) failed", outcome.failures.len());
            }
        }
        Cmd::Plot { inputs, column, output } => {
            if inputs.is_empty() {
                bail!("plot needs at least one input");
            }
            let groups = collect_groups(&inputs)?;
            std::fs::write(&output, plot_svg(&groups, &column)?)?;
            println!("wrote {}", output.display());
        }
        Cmd::Oracle { cfg } => {
            let cfg = cfg.load()?;
            println!("oracle_optimal_return {} = {}", cfg.env.key(), cmd_oracle(&cfg.env)?);
        }
    }
    Ok(())
}

/// Groups metrics files by the variant recorded in their run manifest
/// (file stem when there is none).
fn collect_groups(inputs: &[PathBuf]) -> Result<Vec<(String, Vec<Vec<sica_core::trainer::MetricsRow>>)>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_file() {
            files.push(p.clone());
        } else if p.join(METRICS_FILE).is_file() {
            files.push(p.join(METRICS_FILE));
        } else if p.is_dir() {
            let mut subs: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path().join(METRICS_FILE)))
                .filter(|f| f.is_file())
                .collect();
            subs.sort();
            if subs.is_empty() {
                bail!("{} holds no metrics", p.display());
            }
            files.extend(subs);
        } else {
            bail!("{} does not exist", p.display());
        }
    }
    let mut groups: Vec<(String, Vec<Vec<_>>)> = Vec::new();
    for f in files {
        let label = f
            .parent()
            .and_then(|d| RunManifest::read(d).ok())
            .map(|m| m.config.run.variant.key().to_string())
            .unwrap_or_else(|| f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        let rows = read_metrics_file(&f)?;
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, runs)) => runs.push(rows),
            None => groups.push((label, vec![rows])),
        }
    }
    Ok(groups)
}
