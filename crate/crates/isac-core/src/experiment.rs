//! Monte-Carlo experiment driver producing CSV sweep data.
//!
//! One experiment fixes a scenario, sweeps a single variable, and runs every
//! requested scheme over `trials` independent channel realizations (trial
//! `t` uses seed `seed_base + t`, so results are reproducible and schemes
//! are compared on matched channels). Aggregated rows carry the mean and
//! standard error of the final sum-rate plus independently recomputed
//! constraint values.
//!
//! Sweep-value units: `Pt` in dBm, `Gamma_t` in dB, `eps_crb` linear, `N` an
//! element count. `iterations` mode dumps the per-iteration sum-rate trace;
//! `beampattern` mode dumps the 512-point transmit pattern of the first
//! scheme's returned beamformer.

use crate::baselines::{constraint_of_design, run_scheme, Mode, Scheme};
use crate::channel::realize;
use crate::config::{db_to_linear, dbm_to_watts, SystemConfig};
use crate::metrics::{beampattern_grid, sum_rate, transmit_beampattern};
use crate::{IsacError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

/// Swept variable of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Pt,
    N,
    GammaT,
    EpsCrb,
    Iterations,
    Beampattern,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::Pt => "Pt_dBm",
            SweepVar::N => "N",
            SweepVar::GammaT => "Gamma_t_dB",
            SweepVar::EpsCrb => "eps_crb",
            SweepVar::Iterations => "iteration",
            SweepVar::Beampattern => "beampattern",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Pt" | "pt" => Ok(SweepVar::Pt),
            "N" | "n" => Ok(SweepVar::N),
            "Gamma_t" | "gamma_t" => Ok(SweepVar::GammaT),
            "eps_crb" | "eps" => Ok(SweepVar::EpsCrb),
            "iterations" => Ok(SweepVar::Iterations),
            "beampattern" => Ok(SweepVar::Beampattern),
            other => Err(IsacError::Config(format!(
                "unknown sweep variable `{other}`"
            ))),
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub mode: Mode,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub seed_base: u64,
    pub out: PathBuf,
    pub raw: bool,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(IsacError::Config("trials must be >= 1".to_string()));
        }
        if self.schemes.is_empty() {
            return Err(IsacError::Config(
                "at least one scheme required".to_string(),
            ));
        }
        match self.sweep {
            SweepVar::Iterations | SweepVar::Beampattern => {}
            _ => {
                if self.values.is_empty() {
                    return Err(IsacError::Config(
                        "sweep needs at least one value".to_string(),
                    ));
                }
                if self.values.windows(2).any(|p| p[1] <= p[0]) {
                    return Err(IsacError::Config(
                        "sweep values must be strictly increasing".to_string(),
                    ));
                }
            }
        }
        if self.sweep == SweepVar::GammaT && self.mode != Mode::Snr {
            return Err(IsacError::Config(
                "Gamma_t sweeps require --mode snr".to_string(),
            ));
        }
        if self.sweep == SweepVar::EpsCrb && self.mode != Mode::Crb {
            return Err(IsacError::Config(
                "eps_crb sweeps require --mode crb".to_string(),
            ));
        }
        Ok(())
    }

    fn config_at(&self, value: f64) -> SystemConfig {
        let mut cfg = self.base.clone();
        match self.sweep {
            SweepVar::Pt => cfg.pt = dbm_to_watts(value),
            SweepVar::N => cfg.n = value.round() as usize,
            SweepVar::GammaT => cfg.gamma_t = db_to_linear(value),
            SweepVar::EpsCrb => cfg.eps_crb = value,
            SweepVar::Iterations | SweepVar::Beampattern => {}
        }
        // The inactive constraint of the other mode is disabled so runs only
        // enforce the mode under study.
        match self.mode {
            Mode::Snr => cfg.eps_crb = f64::INFINITY,
            Mode::Crb => cfg.gamma_t = 0.0,
        }
        cfg
    }
}

/// One trial's outcome for one scheme.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
    pub sum_rate: f64,
    pub constraint_value: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub trace: Vec<f64>,
    pub design_w: crate::CMat,
}

fn run_trials(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<Vec<TrialResult>> {
    let mut results: Vec<Option<Vec<TrialResult>>> = vec![None; spec.trials];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..spec.trials {
            let cfg = cfg.clone();
            let schemes = spec.schemes.clone();
            let mode = spec.mode;
            let seed = spec.seed_base + t as u64;
            handles.push((
                t,
                scope.spawn(move || -> Result<Vec<TrialResult>> {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let ch = realize(&cfg, &mut rng)?;
                    let mut out = Vec::with_capacity(schemes.len());
                    for &scheme in &schemes {
                        let start = Instant::now();
                        let (dv, trace) = run_scheme(scheme, mode, &cfg, &ch)?;
                        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                        let rate = sum_rate(&dv.w, &dv.phi, &ch, &cfg.sigma_k2)?;
                        let cons = constraint_of_design(mode, &cfg, &ch, &dv);
                        out.push(TrialResult {
                            scheme,
                            trial: t,
                            seed,
                            sum_rate: rate,
                            constraint_value: cons,
                            iterations: trace.iterations(),
                            wall_ms,
                            trace: trace.records.iter().map(|r| r.sum_rate).collect(),
                            design_w: dv.w,
                        });
                    }
                    Ok(out)
                }),
            ));
        }
        for (t, h) in handles {
            results[t] = Some(h.join().map_err(|_| {
                IsacError::Solver("experiment worker thread panicked".to_string())
            })??);
        }
        Ok::<(), IsacError>(())
    })?;
    Ok(results.into_iter().flatten().flatten().collect())
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

const HEADER: &str =
    "sweep_var,sweep_value,scheme,trials,sum_rate_mean,sum_rate_stderr,constraint_value_mean,iterations_mean,wall_ms_mean\n";

fn push_row(out: &mut String, var: &str, value: f64, scheme: Scheme, rows: &[&TrialResult]) {
    let rates: Vec<f64> = rows.iter().map(|r| r.sum_rate).collect();
    let (rate_mean, rate_se) = mean_stderr(&rates);
    let cons_mean = rows.iter().map(|r| r.constraint_value).sum::<f64>() / rows.len() as f64;
    let iters_mean = rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len() as f64;
    let wall_mean = rows.iter().map(|r| r.wall_ms).sum::<f64>() / rows.len() as f64;
    let _ = writeln!(
        out,
        "{},{:.9e},{},{},{:.9e},{:.9e},{:.9e},{:.3},{:.3}",
        var,
        value,
        scheme.as_str(),
        rows.len(),
        rate_mean,
        rate_se,
        cons_mean,
        iters_mean,
        wall_mean
    );
}

/// Run the experiment and write its CSV file(s). Returns the aggregated CSV
/// text (also written to `spec.out`).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<String> {
    spec.validate()?;
    let csv = match spec.sweep {
        SweepVar::Beampattern => beampattern_csv(spec)?,
        SweepVar::Iterations => iterations_csv(spec)?,
        _ => sweep_csv(spec)?,
    };
    std::fs::write(&spec.out, &csv)?;
    Ok(csv)
}

fn sweep_csv(spec: &ExperimentSpec) -> Result<String> {
    let mut out = String::from(HEADER);
    let mut raw = String::from(
        "sweep_var,sweep_value,scheme,trial,seed,sum_rate,constraint_value,iterations,wall_ms\n",
    );
    for &value in &spec.values {
        let cfg = spec.config_at(value);
        let results = run_trials(spec, &cfg)?;
        for &scheme in &spec.schemes {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.scheme == scheme).collect();
            if rows.is_empty() {
                continue;
            }
            push_row(&mut out, spec.sweep.as_str(), value, scheme, &rows);
            for r in &rows {
                let _ = writeln!(
                    raw,
                    "{},{:.9e},{},{},{},{:.9e},{:.9e},{},{:.3}",
                    spec.sweep.as_str(),
                    value,
                    scheme.as_str(),
                    r.trial,
                    r.seed,
                    r.sum_rate,
                    r.constraint_value,
                    r.iterations,
                    r.wall_ms
                );
            }
        }
    }
    if spec.raw {
        let mut raw_path = spec.out.clone();
        raw_path.set_extension("raw.csv");
        std::fs::write(raw_path, raw)?;
    }
    Ok(out)
}

fn iterations_csv(spec: &ExperimentSpec) -> Result<String> {
    let cfg = spec.config_at(0.0);
    let results = run_trials(spec, &cfg)?;
    let mut out = String::from(HEADER);
    for &scheme in &spec.schemes {
        let rows: Vec<&TrialResult> = results.iter().filter(|r| r.scheme == scheme).collect();
        if rows.is_empty() {
            continue;
        }
        let max_len = rows.iter().map(|r| r.trace.len()).max().unwrap_or(0);
        for it in 0..max_len {
            // Pad shorter traces with their final value.
            let vals: Vec<f64> = rows
                .iter()
                .map(|r| r.trace.get(it).or(r.trace.last()).copied().unwrap_or(0.0))
                .collect();
            let (mean, se) = mean_stderr(&vals);
            let cons = rows.iter().map(|r| r.constraint_value).sum::<f64>() / rows.len() as f64;
            let wall = rows.iter().map(|r| r.wall_ms).sum::<f64>() / rows.len() as f64;
            let _ = writeln!(
                out,
                "iteration,{:.9e},{},{},{:.9e},{:.9e},{:.9e},{:.3},{:.3}",
                it as f64,
                scheme.as_str(),
                rows.len(),
                mean,
                se,
                cons,
                it as f64,
                wall
            );
        }
    }
    Ok(out)
}

fn beampattern_csv(spec: &ExperimentSpec) -> Result<String> {
    let cfg = spec.config_at(0.0);
    let scheme = spec.schemes[0];
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed_base);
    let ch = realize(&cfg, &mut rng)?;
    let (dv, _) = run_scheme(scheme, spec.mode, &cfg, &ch)?;
    let grid = beampattern_grid(512);
    // Physical orientation: with the transposed channel convention the
    // radiated power toward a bearing is the conjugated beamformer's
    // pattern.
    let w_phys = dv.w.map(|z| z.conj());
    let pattern = transmit_beampattern(&w_phys, &grid);
    let peak = pattern.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let mut out = String::from("angle_rad,gain_linear,gain_db\n");
    for (theta, p) in grid.iter().zip(pattern.iter()) {
        let db = 10.0 * (p.max(1e-300) / peak).log10();
        let _ = writeln!(out, "{:.9e},{:.9e},{:.4}", theta, p, db);
    }
    Ok(out)
}
