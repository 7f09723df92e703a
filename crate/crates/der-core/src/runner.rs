//! Run orchestration: drive a training loop to completion while writing
//! its config snapshot, metrics CSV, optional replay dump, and final
//! checkpoint into an output directory; run mode/seed sweeps and
//! summarize them.

use crate::checkpoint::{save_checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::metrics::{MetricsError, MetricsRow, MetricsWriter};
use crate::trainer::{TrainError, TrainState};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("runner io: {0}")]
    Io(#[from] std::io::Error),
}

pub const REPLAY_DUMP_HEADER: &str = "episode,t,agent,r_i,delta,probability,weight";

/// Artifacts and headline numbers of one finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub t_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Greedy evaluation returns in cadence order.
    pub eval_returns: Vec<f64>,
}

/// Train one run to `t_max` under `cfg` with the given seed, writing
/// `config.toml`, `metrics.csv`, `model.ckpt`, and (when enabled)
/// `replay_dump.csv` into `out_dir`.
///
/// A metrics row is written per update; the evaluation return rides on
/// the row at which the cadence fired. Cadence crossings during the
/// buffer-warmup phase (before the first update) produce rows with zeroed
/// loss fields.
pub fn train_run(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<RunSummary, RunnerError> {
    cfg.validate()?;
    let train_cfg = cfg.train_config()?;
    let mut env = cfg.build_env()?;

    fs::create_dir_all(out_dir)?;
    let mut snapshot = cfg.clone();
    snapshot.seed = seed;
    fs::write(out_dir.join("config.toml"), snapshot.to_toml())?;

    let metrics_path = out_dir.join("metrics.csv");
    let mut writer = MetricsWriter::new(BufWriter::new(File::create(&metrics_path)?))?;
    let mut dump = if cfg.replay_dump {
        let mut w = BufWriter::new(File::create(out_dir.join("replay_dump.csv"))?);
        writeln!(w, "{REPLAY_DUMP_HEADER}")?;
        Some(w)
    } else {
        None
    };

    let mut state = TrainState::init(train_cfg, env.spec(), seed)?;
    state.record_selection = dump.is_some();
    let mut eval_marker = 0u64;
    let mut eval_returns = Vec::new();

    while state.t_step < state.config.t_max {
        let outcome = state.advance(env.as_mut())?;

        if let (Some(w), true) = (dump.as_mut(), outcome.update.is_some()) {
            for rec in &state.last_selection {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    rec.episode,
                    rec.t,
                    rec.agent,
                    rec.reward,
                    rec.td_error,
                    rec.probability,
                    rec.weight
                )?;
            }
        }

        let marker = state.t_step / cfg.eval_every;
        let eval_return = if marker > eval_marker {
            eval_marker = marker;
            let mut eval_env = env.fork();
            let ret = state.evaluate(eval_env.as_mut(), cfg.eval_episodes)?;
            eval_returns.push(ret);
            Some(ret)
        } else {
            None
        };

        if outcome.update.is_some() || eval_return.is_some() {
            let u = outcome.update.unwrap_or(crate::trainer::UpdateMetrics {
                l_tot: 0.0,
                l_ind: 0.0,
                mean_abs_delta: 0.0,
                eta: 0.0,
                selected: 0,
            });
            writer.write_row(&MetricsRow {
                t_step: state.t_step,
                l_tot: u.l_tot,
                l_ind: u.l_ind,
                mean_abs_delta: u.mean_abs_delta,
                eta: u.eta,
                epsilon: outcome.epsilon,
                selected_count: u.selected,
                eval_return,
            })?;
        }
    }
    writer.finish()?;
    if let Some(mut w) = dump {
        w.flush()?;
    }

    let checkpoint_path = out_dir.join("model.ckpt");
    save_checkpoint(&checkpoint_path, &state.store)?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        metrics_path,
        checkpoint_path,
        t_steps: state.t_step,
        episodes: state.episodes,
        updates: state.updates,
        eval_returns,
    })
}

/// Evaluation curves of several seeds of one mode, aggregated pointwise.
#[derive(Debug, Clone)]
pub struct ModeSummary {
    pub mode: String,
    pub seeds: Vec<u64>,
    /// Per evaluation index: (t_step of the cadence point, mean, p25, p75).
    pub points: Vec<(u64, f64, f64, f64)>,
}

/// Result of a mode sweep.
#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub out_dir: PathBuf,
    pub summary_path: PathBuf,
    pub modes: Vec<ModeSummary>,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile out of range");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Train every (mode, seed) pair into `out_dir/<mode>/seed-<k>/` and
/// aggregate greedy-return curves into `out_dir/summary.csv`
/// (`mode,eval_index,t_step,mean_return,p25,p75`).
pub fn compare_run(
    cfg: &RunConfig,
    modes: &[String],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<CompareSummary, RunnerError> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(RunnerError::Config(ConfigError::Invalid(
            "compare needs at least one mode and one seed".into(),
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut mode_summaries = Vec::new();

    for mode in modes {
        let mut mode_cfg = cfg.clone();
        mode_cfg.mode = mode.clone();
        mode_cfg.validate()?;
        let mut curves: Vec<Vec<f64>> = Vec::new();
        for &seed in seeds {
            let run_dir = out_dir.join(mode).join(format!("seed-{seed}"));
            let summary = train_run(&mode_cfg, seed, &run_dir)?;
            curves.push(summary.eval_returns);
        }
        let n_points = curves.iter().map(Vec::len).min().unwrap_or(0);
        let mut points = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let mut vals: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            vals.sort_by(f64::total_cmp);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let t = (i as u64 + 1) * cfg.eval_every;
            points.push((t, mean, percentile(&vals, 0.25), percentile(&vals, 0.75)));
        }
        mode_summaries.push(ModeSummary {
            mode: mode.clone(),
            seeds: seeds.to_vec(),
            points,
        });
    }

    let summary_path = out_dir.join("summary.csv");
    let mut w = BufWriter::new(File::create(&summary_path)?);
    writeln!(w, "mode,eval_index,t_step,mean_return,p25,p75")?;
    for m in &mode_summaries {
        for (i, &(t, mean, p25, p75)) in m.points.iter().enumerate() {
            writeln!(w, "{},{},{},{},{},{}", m.mode, i, t, mean, p25, p75)?;
        }
    }
    w.flush()?;

    Ok(CompareSummary {
        out_dir: out_dir.to_path_buf(),
        summary_path,
        modes: mode_summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::read_metrics;
    use std::io::BufReader;

    fn quick_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.env = "matrix".into();
        cfg.mixer = "vdn".into();
        cfg.t_max = 120;
        cfg.batch_episodes = 4;
        cfg.buffer_capacity = 64;
        cfg.agent_hidden = 8;
        cfg.mixer_embed = 4;
        cfg.hyper_hidden = 4;
        cfg.target_period = 10;
        cfg.epsilon_steps = 60;
        cfg.eval_every = 40;
        cfg.eval_episodes = 3;
        cfg
    }

    #[test]
    fn train_run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = quick_cfg();
        cfg.replay_dump = true;
        let summary = train_run(&cfg, 7, &out).unwrap();

        assert!(out.join("config.toml").exists());
        assert!(out.join("model.ckpt").exists());
        assert!(out.join("replay_dump.csv").exists());
        assert!(summary.t_steps >= cfg.t_max);
        // Matrix episodes are one step long: eval points at every
        // multiple of eval_every.
        assert_eq!(summary.eval_returns.len() as u64, cfg.t_max / cfg.eval_every);

        let rows = read_metrics(BufReader::new(File::open(&summary.metrics_path).unwrap()))
            .unwrap();
        assert!(!rows.is_empty());
        let with_eval: Vec<_> = rows.iter().filter(|r| r.eval_return.is_some()).collect();
        assert_eq!(with_eval.len(), summary.eval_returns.len());
        // Snapshot reloads and points at the same run.
        let snap = RunConfig::load(&out.join("config.toml")).unwrap();
        assert_eq!(snap.seed, 7);
        assert_eq!(snap.t_max, cfg.t_max);

        let dump = std::fs::read_to_string(out.join("replay_dump.csv")).unwrap();
        let mut lines = dump.lines();
        assert_eq!(lines.next().unwrap(), REPLAY_DUMP_HEADER);
        let first = lines.next().expect("at least one dumped record");
        assert_eq!(first.split(',').count(), 7);
    }

    #[test]
    fn identical_seeds_give_byte_identical_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg();
        let a = train_run(&cfg, 3, &dir.path().join("a")).unwrap();
        let b = train_run(&cfg, 3, &dir.path().join("b")).unwrap();
        let bytes_a = std::fs::read(a.metrics_path).unwrap();
        let bytes_b = std::fs::read(b.metrics_path).unwrap();
        assert!(!bytes_a.is_empty());
        assert_eq!(bytes_a, bytes_b);

        let c = train_run(&cfg, 4, &dir.path().join("c")).unwrap();
        assert_ne!(bytes_a, std::fs::read(c.metrics_path).unwrap());
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&vals, 0.0), 1.0);
        assert_eq!(percentile(&vals, 1.0), 4.0);
        assert_eq!(percentile(&vals, 0.5), 2.5);
        assert_eq!(percentile(&vals, 0.25), 1.75);
        assert_eq!(percentile(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn compare_produces_aligned_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("cmp");
        let cfg = quick_cfg();
        let modes = vec!["joint-baseline".to_string(), "divide-only".to_string()];
        let summary = compare_run(&cfg, &modes, &[1, 2, 3], &out).unwrap();

        assert_eq!(summary.modes.len(), 2);
        let expected_points = (cfg.t_max / cfg.eval_every) as usize;
        for m in &summary.modes {
            assert_eq!(m.points.len(), expected_points);
            for &(_, mean, p25, p75) in &m.points {
                assert!(p25 <= mean + 1e-12 && mean <= p75 + 1e-12 || p25 <= p75);
                assert!(p25 <= p75);
            }
        }
        let text = std::fs::read_to_string(&summary.summary_path).unwrap();
        assert!(text.starts_with("mode,eval_index,t_step,mean_return,p25,p75"));
        // 2 modes x expected_points rows + header.
        assert_eq!(text.lines().count(), 1 + 2 * expected_points);
        assert!(out.join("joint-baseline/seed-2/metrics.csv").exists());
    }
}
