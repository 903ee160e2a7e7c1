//! The subcommands as library functions.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sica_core::envs::EnvConfig;
use sica_core::numcore::checkpoint;
use sica_core::trainer::{eval_seeds, read_metrics, MetricsRow, MetricsWriter, Mode, Policy, RunConfig, Trainer, Variant};

use crate::config::render_config;
use crate::manifest::{fresh_dir, run_dir_name, RunManifest, CHECKPOINT_FILE, METRICS_FILE, TRAJECTORY_FILE};

/// Sidecar of a checkpoint file: which training step it holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
}

fn meta_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}

pub fn save_checkpoint(policy: &Policy, path: &Path) -> Result<()> {
    checkpoint::save(&policy.params, path)?;
    let meta = CheckpointMeta { step: policy.step };
    fs::write(meta_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Loads a checkpoint for `cfg`; the parameter layout must match.
pub fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Policy> {
    let params = checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let step = match fs::read(meta_path(path)) {
        Ok(bytes) => serde_json::from_slice::<CheckpointMeta>(&bytes)?.step,
        Err(_) => cfg.run.total_steps,
    };
    Policy::from_params(cfg, params, step).context("checkpoint does not match the config")
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

impl TrainOutcome {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Trains into a new directory under `parent`.
pub fn cmd_train(cfg: &RunConfig, parent: &Path, progress: bool) -> Result<TrainOutcome> {
    let dir = fresh_dir(parent, &run_dir_name(cfg)?)?;
    train_into(cfg, &dir, progress)
}

/// Trains with `dir` (already created, empty) as the run directory.
pub fn train_into(cfg: &RunConfig, dir: &Path, progress: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    RunManifest::new(cfg)?.write(dir)?;
    fs::write(dir.join("config.toml"), render_config(cfg)?)?;
    let file = fs::File::create_new(dir.join(METRICS_FILE))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;
    let mut trainer = Trainer::new(cfg)?;
    let interval = cfg.train.checkpoint_interval;
    let mut rows = Vec::with_capacity(cfg.run.total_steps as usize);
    trainer.run(|tr, row| {
        writer.write(row)?;
        if interval > 0 && tr.step() % interval == 0 && !tr.is_done() {
            let path = dir.join(format!("ckpt-{}.bin", tr.step()));
            save_checkpoint(&tr.policy, &path).map_err(|e| sica_core::Error::Checkpoint(e.to_string()))?;
        }
        if progress && row.eval_return_decentralized.is_some() {
            println!(
                "step {:>7}  return {:>8.3}  L_TD {:.4}  L_Align {:.4}  alpha {:.3}  eval cen {:.3} dec {:.3}",
                row.step,
                row.ret,
                row.l_td,
                row.l_align,
                row.alpha,
                row.eval_return_centralized.unwrap_or(f64::NAN),
                row.eval_return_decentralized.unwrap_or(f64::NAN),
            );
        }
        rows.push(row.clone());
        Ok(())
    })?;
    writer.flush()?;
    save_checkpoint(&trainer.policy, &dir.join(CHECKPOINT_FILE))?;
    let mut env = cfg.env.build()?;
    let seeds = eval_seeds(cfg.run.seed, cfg.train.eval_episodes);
    let (_, episodes) = trainer.policy.evaluate(env.as_mut(), &seeds, Mode::Decentralized)?;
    let mut out = BufWriter::new(fs::File::create_new(dir.join(TRAJECTORY_FILE))?);
    for ep in &episodes {
        ep.write_jsonl(&mut out)?;
    }
    out.flush()?;
    Ok(TrainOutcome { dir: dir.to_path_buf(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub oracle: Option<f64>,
    pub step: u64,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
        };
        write!(f, "{mode} return {:.4} +- {:.4} over {} episodes", self.mean, self.std, self.episodes)?;
        match self.oracle {
            Some(o) => write!(f, " (oracle optimum {o})"),
            None => write!(f, " (no oracle for this environment)"),
        }
    }
}

/// Greedy evaluation of a checkpoint on the run's evaluation seeds.
pub fn cmd_eval(cfg: &RunConfig, ckpt: &Path, episodes: usize, mode: Mode) -> Result<EvalReport> {
    if episodes == 0 {
        bail!("episodes must be at least 1");
    }
    let policy = load_checkpoint(cfg, ckpt)?;
    let mut env = cfg.env.build()?;
    let seeds = eval_seeds(cfg.run.seed, episodes);
    let (summary, _) = policy.evaluate(env.as_mut(), &seeds, mode)?;
    Ok(EvalReport {
        mode,
        episodes,
        mean: summary.mean,
        std: summary.std,
        oracle: env.oracle_optimal_return().ok(),
        step: policy.step,
    })
}

/// Config of a run directory, from its manifest.
pub fn run_config(dir: &Path) -> Result<RunConfig> {
    Ok(RunManifest::read(dir)?.config)
}

pub fn cmd_oracle(env: &EnvConfig) -> Result<f64> {
    Ok(env.build()?.oracle_optimal_return()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub seed: u64,
    pub final_eval_return_decentralized: Option<f64>,
    #[serde(rename = "final_L_Align")]
    pub final_l_align: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub seeds: usize,
    pub mean_final_eval_return_decentralized: Option<f64>,
    #[serde(rename = "mean_final_L_Align")]
    pub mean_final_l_align: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AblateOutcome {
    pub dir: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub comparison: Vec<ComparisonRow>,
    /// `(variant, seed, error)` for cells that failed.
    pub failures: Vec<(Variant, u64, String)>,
    /// Wall-clock seconds per cell, in `summary` order.
    pub seconds: Vec<f64>,
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

fn cell_name(v: Variant, seed: u64) -> String {
    format!("{}-s{seed}", v.key())
}

/// Every variant x seed of `cfg.ablate`, each cell an independent run on a
/// bounded pool of `workers` threads.
pub fn cmd_ablate(cfg: &RunConfig, parent: &Path, workers: usize, progress: bool) -> Result<AblateOutcome> {
    cfg.validate()?;
    let base = format!("{}-ablate-{}", cfg.env.key(), crate::manifest::config_hash(cfg)?);
    let dir = fresh_dir(parent, &base)?;
    fs::write(dir.join("config.toml"), render_config(cfg)?)?;
    let cells: Vec<(Variant, u64)> = cfg
        .ablate
        .variants
        .iter()
        .flat_map(|&v| cfg.ablate.seeds.iter().map(move |&s| (v, s)))
        .collect();
    type CellResult = (Result<MetricsRow, String>, f64);
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(variant, seed)) = cells.get(k) else { break };
                let mut c = cfg.clone();
                c.run.variant = variant;
                c.run.seed = seed;
                let cell_dir = dir.join(cell_name(variant, seed));
                let started = Instant::now();
                let res = fs::create_dir(&cell_dir)
                    .map_err(anyhow::Error::from)
                    .and_then(|_| train_into(&c, &cell_dir, false))
                    .and_then(|o| o.final_row().cloned().context("run produced no rows"))
                    .map_err(|e| format!("{e:#}"));
                if progress {
                    match &res {
                        Ok(r) => println!(
                            "{:<10} seed {seed}: final decentralized return {:.4}, L_Align {:.5}",
                            variant.key(),
                            r.eval_return_decentralized.unwrap_or(f64::NAN),
                            r.l_align
                        ),
                        Err(e) => eprintln!("{:<10} seed {seed}: failed: {e}", variant.key()),
                    }
                }
                let secs = started.elapsed().as_secs_f64();
                results.lock().expect("no panics while holding the lock")[k] = Some((res, secs));
            });
        }
    });
    let results = results.into_inner().expect("workers joined");
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    let mut seconds = Vec::new();
    for (&(variant, seed), res) in cells.iter().zip(results) {
        let (res, secs) = res.unwrap_or_else(|| (Err("cell did not run".into()), 0.0));
        seconds.push(secs);
        let (ret, align) = match res {
            Ok(r) => (r.eval_return_decentralized, Some(r.l_align)),
            Err(e) => {
                failures.push((variant, seed, e));
                (None, None)
            }
        };
        summary.push(SummaryRow {
            variant,
            seed,
            final_eval_return_decentralized: ret,
            final_l_align: align,
        });
    }
    let comparison = compare(&cfg.ablate.variants, &summary);
    write_csv(&dir.join(SUMMARY_FILE), &summary)?;
    write_csv(&dir.join(COMPARISON_FILE), &comparison)?;
    Ok(AblateOutcome {
        dir,
        summary,
        comparison,
        failures,
        seconds,
    })
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-variant means over seeds; a variant with any failed cell gets no mean.
pub fn compare(variants: &[Variant], summary: &[SummaryRow]) -> Vec<ComparisonRow> {
    variants
        .iter()
        .map(|&v| {
            let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.variant == v).collect();
            ComparisonRow {
                variant: v,
                seeds: rows.len(),
                mean_final_eval_return_decentralized: mean(rows.iter().map(|r| r.final_eval_return_decentralized)),
                mean_final_l_align: mean(rows.iter().map(|r| r.final_l_align)),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create_new(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_metrics(f)?)
}
