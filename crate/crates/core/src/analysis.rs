//! Monte Carlo estimators on top of the scheme.
//!
//! Every estimator is a deterministic function of its inputs and the master
//! seed: sample `i` always uses `RngStream::new(seed, i)`, per-sample results
//! are collected in sample order and reduced with pairwise summation, so the
//! worker count never changes a result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpectrum, RngStream};
use crate::operators::Drift;
use crate::scheme::{steps_for_horizon, CoupledFamily, SchemeConfig, SchemeVariant, Simulation};
use crate::spectral::SpectralField;

/// Errors must exceed this many standard errors to enter a rate fit.
pub const NOISE_FLOOR_SE: f64 = 3.0;

/// The temporal reference step is at most the finest swept step over this.
pub const REFERENCE_REFINEMENT: f64 = 8.0;

/// Test functionals `Phi: H -> R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    /// `exp(-||v||^2)`
    ExpNegSq,
    /// `<v, phi_k>`
    Mode { k: usize },
    /// `cos(<v, phi_1>)`
    CosMode,
}

impl FunctionalSpec {
    pub fn eval(&self, coeffs: &[f64]) -> f64 {
        match *self {
            FunctionalSpec::ExpNegSq => (-coeffs.iter().map(|c| c * c).sum::<f64>()).exp(),
            FunctionalSpec::Mode { k } => coeffs.get(k - 1).copied().unwrap_or(0.0),
            FunctionalSpec::CosMode => coeffs[0].cos(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionalSpec::Mode { k: 0 } => Err(Error::domain("mode functional index starts at 1")),
            _ => Ok(()),
        }
    }
}

/// Pairwise (cascade) summation; deterministic and accurate for long sums.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Sample mean and `sample_std / sqrt(M)`.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let m = xs.len();
        if m < 2 {
            return Err(Error::precondition(format!("need at least 2 samples for a standard error, got {m}")));
        }
        let mean = pairwise_sum(xs) / m as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (m - 1) as f64;
        Ok(Self { mean, standard_error: (var / m as f64).sqrt(), samples: m })
    }
}

/// Shared Monte Carlo inputs.
#[derive(Debug, Clone)]
pub struct McSetup {
    pub drift: Drift,
    pub spectrum: NoiseSpectrum,
    pub u0: SpectralField,
    pub functional: FunctionalSpec,
    pub samples: usize,
    pub seed: u64,
}

impl McSetup {
    fn check(&self, min_samples: usize) -> Result<()> {
        if self.samples < min_samples {
            return Err(Error::precondition(format!(
                "need at least {min_samples} samples, got {}",
                self.samples
            )));
        }
        self.functional.validate()?;
        self.drift.check_dissipative()?;
        self.spectrum.require_admissible()?;
        Ok(())
    }

    fn rng(&self, sample: usize) -> RngStream {
        RngStream::new(self.seed, sample as u64)
    }
}

/// Runs `f` once per sample in parallel and returns results in sample order.
fn per_sample<T: Send>(samples: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..samples).into_par_iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    /// Trajectories that stayed finite.
    pub samples: usize,
    pub blowups: usize,
}

/// Estimates `E[Phi(V_K)]` over `setup.samples` independent trajectories.
///
/// Diverging trajectories (only possible for the untamed control) are counted
/// and excluded from the mean.
pub fn mc_weak_value(cfg: &SchemeConfig, setup: &McSetup) -> Result<McEstimate> {
    setup.check(2)?;
    let u0 = setup.u0.resized(cfg.n_modes);
    let finals = per_sample(setup.samples, |i| {
        let mut sim = Simulation::new(cfg, setup.drift, &setup.spectrum, &u0, setup.rng(i))?;
        for _ in 0..cfg.n_steps {
            match sim.advance() {
                Ok(()) => {}
                Err(Error::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(setup.functional.eval(sim.state())))
    })?;
    let survivors: Vec<f64> = finals.iter().flatten().copied().collect();
    let blowups = finals.len() - survivors.len();
    let est = Estimate::from_samples(&survivors)?;
    Ok(McEstimate { mean: est.mean, standard_error: est.standard_error, samples: est.samples, blowups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    /// 95% half-width from the weighted residual variance.
    pub halfwidth: f64,
    pub points: usize,
}

/// Weighted least-squares slope of `y` on `x`.
///
/// Returns `None` (indeterminate) with fewer than three points.
pub fn rate_regression(points: &[(f64, f64)], weights: &[f64]) -> Option<RateFit> {
    let n = points.len();
    if n < 3 || weights.len() != n {
        return None;
    }
    let sw: f64 = weights.iter().sum();
    let xm = points.iter().zip(weights).map(|((x, _), w)| w * x).sum::<f64>() / sw;
    let ym = points.iter().zip(weights).map(|((_, y), w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(weights).map(|((x, _), w)| w * (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().zip(weights).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = points
        .iter()
        .zip(weights)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (n - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(0.975)).unwrap_or(1.96);
    Some(RateFit { slope, halfwidth: t * se, points: n })
}

/// Fits `log error` against `log x` over the rows whose error clears the noise floor.
fn fit_rows(rows: &mut [WeakErrorRow], x: impl Fn(&WeakErrorRow) -> f64) -> Option<RateFit> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for row in rows.iter_mut() {
        row.used_in_fit = row.error_vs_ref > NOISE_FLOOR_SE * row.error_stderr && row.error_vs_ref > 0.0;
        if row.used_in_fit {
            points.push((x(row).ln(), row.error_vs_ref.ln()));
            // delta method: var(log e) ~ (se / e)^2
            let rel = (row.error_stderr / row.error_vs_ref).max(1e-8);
            weights.push(1.0 / (rel * rel));
        }
    }
    rate_regression(&points, &weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakErrorRow {
    pub tau: f64,
    pub n_modes: usize,
    pub mean: f64,
    pub stderr: f64,
    pub error_vs_ref: f64,
    pub error_stderr: f64,
    pub samples: usize,
    pub used_in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakErrorReport {
    pub kind: SweepKind,
    pub horizon: f64,
    pub reference_tau: f64,
    pub reference_n_modes: usize,
    pub reference: Estimate,
    pub rows: Vec<WeakErrorRow>,
    /// Slope of log error against log tau (temporal) or log N (spatial);
    /// `None` when fewer than three errors clear the noise floor.
    pub rate: Option<RateFit>,
}

impl WeakErrorReport {
    pub fn fitted_rate_tau(&self) -> Option<RateFit> {
        self.rate.filter(|_| self.kind == SweepKind::Temporal)
    }

    pub fn fitted_rate_n(&self) -> Option<RateFit> {
        self.rate.filter(|_| self.kind == SweepKind::Spatial)
    }
}

/// Runs a fine reference and coarse levels on common noise and tabulates
/// `|E Phi(coarse) - E Phi(reference)|` with paired standard errors.
fn coupled_sweep(
    setup: &McSetup,
    reference: &SchemeConfig,
    levels: &[SchemeConfig],
) -> Result<(Estimate, Vec<WeakErrorRow>)> {
    let per = per_sample(setup.samples, |i| {
        let mut family = CoupledFamily::new(reference, levels, setup.drift, &setup.spectrum, &setup.u0, setup.rng(i))?;
        family.run(reference.n_steps)?;
        let mut out = Vec::with_capacity(levels.len() + 1);
        out.push(setup.functional.eval(family.fine_state()));
        out.extend((0..levels.len()).map(|l| setup.functional.eval(family.coarse_state(l))));
        Ok(out)
    })?;
    let column = |j: usize| per.iter().map(|r| r[j]).collect::<Vec<_>>();
    let ref_values = column(0);
    let ref_est = Estimate::from_samples(&ref_values)?;
    let rows = levels
        .iter()
        .enumerate()
        .map(|(l, cfg)| {
            let values = column(l + 1);
            let est = Estimate::from_samples(&values)?;
            let diffs: Vec<f64> = values.iter().zip(&ref_values).map(|(a, b)| a - b).collect();
            let diff = Estimate::from_samples(&diffs)?;
            Ok(WeakErrorRow {
                tau: cfg.tau,
                n_modes: cfg.n_modes,
                mean: est.mean,
                stderr: est.standard_error,
                error_vs_ref: diff.mean.abs(),
                error_stderr: diff.standard_error,
                samples: est.samples,
                used_in_fit: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ref_est, rows))
}

/// Temporal weak errors at fixed `N` against a coupled reference at `tau_ref`.
pub fn weak_error_sweep(
    setup: &McSetup,
    tau_list: &[f64],
    n_modes: usize,
    tau_ref: f64,
    horizon: f64,
) -> Result<WeakErrorReport> {
    setup.check(2)?;
    let tau_min = tau_list.iter().copied().fold(f64::INFINITY, f64::min);
    if tau_ref > tau_min / REFERENCE_REFINEMENT {
        return Err(Error::precondition(format!(
            "reference step {tau_ref} must be at most tau_min / {REFERENCE_REFINEMENT} = {}",
            tau_min / REFERENCE_REFINEMENT
        )));
    }
    let beta = setup.spectrum.beta();
    let reference = SchemeConfig::tamed_for_horizon(n_modes, tau_ref, horizon, beta)?;
    let levels = tau_list
        .iter()
        .map(|&tau| {
            let r = tau / tau_ref;
            if (r - r.round()).abs() > 1e-9 * r.round().max(1.0) || r.round() < 1.0 {
                return Err(Error::precondition(format!(
                    "reference step {tau_ref} does not divide tau = {tau}"
                )));
            }
            SchemeConfig::tamed_for_horizon(n_modes, tau, horizon, beta)
        })
        .collect::<Result<Vec<_>>>()?;
    let (reference_est, mut rows) = coupled_sweep(setup, &reference, &levels)?;
    let rate = fit_rows(&mut rows, |r| r.tau);
    Ok(WeakErrorReport {
        kind: SweepKind::Temporal,
        horizon,
        reference_tau: tau_ref,
        reference_n_modes: n_modes,
        reference: reference_est,
        rows,
        rate,
    })
}

/// Spatial weak errors at fixed `tau` against a coupled reference with `n_ref` modes.
pub fn spatial_error_sweep(
    setup: &McSetup,
    n_list: &[usize],
    tau: f64,
    n_ref: usize,
    horizon: f64,
) -> Result<WeakErrorReport> {
    setup.check(2)?;
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if n_ref < 4 * n_max {
        return Err(Error::precondition(format!(
            "reference needs at least 4 x {n_max} modes, got {n_ref}"
        )));
    }
    let beta = setup.spectrum.beta();
    let reference = SchemeConfig::tamed_for_horizon(n_ref, tau, horizon, beta)?;
    let levels = n_list
        .iter()
        .map(|&n| SchemeConfig::tamed_for_horizon(n, tau, horizon, beta))
        .collect::<Result<Vec<_>>>()?;
    let (reference_est, mut rows) = coupled_sweep(setup, &reference, &levels)?;
    let rate = fit_rows(&mut rows, |r| r.n_modes as f64);
    Ok(WeakErrorReport {
        kind: SweepKind::Spatial,
        horizon,
        reference_tau: tau,
        reference_n_modes: n_ref,
        reference: reference_est,
        rows,
        rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurve {
    pub p: u32,
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Mean over `t in [0.9T, T]` divided by the mean over `t in [0.1T, 0.2T]`.
    pub flatness: f64,
    /// Largest grid sup norm seen on any sample path.
    pub max_sup: f64,
}

pub const MIN_MOMENT_SAMPLES: usize = 1000;

/// `E ||V_k||_inf^p` along the time grid for each `p` in `ps` (from `{2, 4, 8}`).
pub fn moment_curves(cfg: &SchemeConfig, setup: &McSetup, ps: &[u32]) -> Result<Vec<MomentCurve>> {
    if let Some(p) = ps.iter().find(|p| ![2, 4, 8].contains(*p)) {
        return Err(Error::domain(format!("moment order must be 2, 4 or 8, got {p}")));
    }
    setup.check(MIN_MOMENT_SAMPLES)?;
    let u0 = setup.u0.resized(cfg.n_modes);
    let sups = per_sample(setup.samples, |i| {
        let mut sim = Simulation::new(cfg, setup.drift, &setup.spectrum, &u0, setup.rng(i))?;
        let mut path = Vec::with_capacity(cfg.n_steps + 1);
        path.push(sim.sup_norm());
        for _ in 0..cfg.n_steps {
            sim.advance()?;
            path.push(sim.sup_norm());
        }
        Ok(path)
    })?;
    let max_sup = sups.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    let times: Vec<f64> = (0..=cfg.n_steps).map(|k| k as f64 * cfg.tau).collect();
    let horizon = cfg.horizon();
    ps.iter()
        .map(|&p| {
            let mut estimates = Vec::with_capacity(times.len());
            let mut standard_errors = Vec::with_capacity(times.len());
            for k in 0..times.len() {
                let column: Vec<f64> = sups.iter().map(|path| path[k].powi(p as i32)).collect();
                let est = Estimate::from_samples(&column)?;
                estimates.push(est.mean);
                standard_errors.push(est.standard_error);
            }
            let window_mean = |lo: f64, hi: f64| {
                let sel: Vec<f64> = times
                    .iter()
                    .zip(&estimates)
                    .filter(|(t, _)| **t >= lo - 1e-12 && **t <= hi + 1e-12)
                    .map(|(_, e)| *e)
                    .collect();
                pairwise_sum(&sel) / sel.len().max(1) as f64
            };
            let flatness = window_mean(0.9 * horizon, horizon) / window_mean(0.1 * horizon, 0.2 * horizon);
            Ok(MomentCurve { p, times: times.clone(), estimates, standard_errors, flatness, max_sup })
        })
        .collect()
}

pub fn moment_curve(cfg: &SchemeConfig, setup: &McSetup, p: u32) -> Result<MomentCurve> {
    Ok(moment_curves(cfg, setup, &[p])?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub times: Vec<f64>,
    /// `E Phi(V_k; u0_a) - E Phi(V_k; u0_b)` on common noise.
    pub gaps: Vec<f64>,
    pub gap_stderr: Vec<f64>,
    /// Fitted `rho` in `|gap| ~ C exp(-rho t)`, with the slope half-width.
    pub rate: Option<RateFit>,
    /// `lambda_1 - L_F`.
    pub theoretical_floor: f64,
}

impl ErgodicReport {
    pub fn rho(&self) -> Option<f64> {
        self.rate.map(|r| -r.slope)
    }
}

/// Exponential decay of the gap between two initial conditions driven by the
/// same noise.
pub fn ergodic_decay(
    cfg: &SchemeConfig,
    setup: &McSetup,
    u0_a: &SpectralField,
    u0_b: &SpectralField,
) -> Result<ErgodicReport> {
    setup.check(2)?;
    let (a0, b0) = (u0_a.resized(cfg.n_modes), u0_b.resized(cfg.n_modes));
    let per = per_sample(setup.samples, |i| {
        let mut a = Simulation::new(cfg, setup.drift, &setup.spectrum, &a0, setup.rng(i))?;
        let mut b = Simulation::new(cfg, setup.drift, &setup.spectrum, &b0, setup.rng(i))?;
        let mut diffs = Vec::with_capacity(cfg.n_steps + 1);
        diffs.push(setup.functional.eval(a.state()) - setup.functional.eval(b.state()));
        for _ in 0..cfg.n_steps {
            a.advance()?;
            b.advance()?;
            diffs.push(setup.functional.eval(a.state()) - setup.functional.eval(b.state()));
        }
        Ok(diffs)
    })?;
    let times: Vec<f64> = (0..=cfg.n_steps).map(|k| k as f64 * cfg.tau).collect();
    let mut gaps = Vec::with_capacity(times.len());
    let mut gap_stderr = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let column: Vec<f64> = per.iter().map(|d| d[k]).collect();
        let est = Estimate::from_samples(&column)?;
        gaps.push(est.mean);
        gap_stderr.push(est.standard_error);
    }
    // contiguous window from t = 0 while the gap clears the noise floor
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for k in 0..times.len() {
        let g = gaps[k].abs();
        if !(g > NOISE_FLOOR_SE * gap_stderr[k]) || !(g > f64::MIN_POSITIVE) {
            break;
        }
        points.push((times[k], g.ln()));
        let rel = (gap_stderr[k] / g).max(1e-8);
        weights.push(1.0 / (rel * rel));
    }
    Ok(ErgodicReport {
        times,
        gaps,
        gap_stderr,
        rate: rate_regression(&points, &weights),
        theoretical_floor: setup.drift.mixing_rate(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantEstimate {
    /// Per-path averages of `Phi(V_k)` over `t_k > burn_in`, averaged over paths.
    pub time_average: Estimate,
    /// `Phi(V_K)` averaged over paths.
    pub ensemble_average: Estimate,
    pub gap: f64,
    /// Standard error of the paired difference of the two averages.
    pub gap_stderr: f64,
    /// Burn-in shorter than five mixing times `5 / (lambda_1 - L_F)`.
    pub burn_in_warning: bool,
}

/// Time and ensemble averages approximating `int Phi d mu`, started from `setup.u0`.
pub fn invariant_measure_estimate(cfg: &SchemeConfig, setup: &McSetup, burn_in: f64) -> Result<InvariantEstimate> {
    setup.check(2)?;
    if !(burn_in >= 0.0) || cfg.horizon() < 2.0 * burn_in {
        return Err(Error::precondition(format!(
            "horizon {} must be at least twice the burn-in {burn_in}",
            cfg.horizon()
        )));
    }
    let first = (burn_in / cfg.tau).floor() as usize + 1;
    if first > cfg.n_steps {
        return Err(Error::precondition("no steps left after burn-in"));
    }
    let u0 = setup.u0.resized(cfg.n_modes);
    let per = per_sample(setup.samples, |i| {
        let mut sim = Simulation::new(cfg, setup.drift, &setup.spectrum, &u0, setup.rng(i))?;
        let mut values = Vec::with_capacity(cfg.n_steps + 1 - first);
        for k in 1..=cfg.n_steps {
            sim.advance()?;
            if k >= first {
                values.push(setup.functional.eval(sim.state()));
            }
        }
        let last = *values.last().expect("nonempty window");
        Ok((pairwise_sum(&values) / values.len() as f64, last))
    })?;
    let time_avgs: Vec<f64> = per.iter().map(|p| p.0).collect();
    let finals: Vec<f64> = per.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = per.iter().map(|p| p.0 - p.1).collect();
    let time_average = Estimate::from_samples(&time_avgs)?;
    let ensemble_average = Estimate::from_samples(&finals)?;
    let diff = Estimate::from_samples(&diffs)?;
    Ok(InvariantEstimate {
        time_average,
        ensemble_average,
        gap: diff.mean,
        gap_stderr: diff.standard_error,
        burn_in_warning: burn_in < 5.0 / setup.drift.mixing_rate(),
    })
}

/// Convenience for building tamed configurations in sweeps and tests.
pub fn tamed_config(n_modes: usize, tau: f64, horizon: f64, beta: f64) -> Result<SchemeConfig> {
    let n_steps = steps_for_horizon(tau, horizon)?;
    SchemeConfig::new(n_modes, tau, n_steps, beta, SchemeVariant::TamedExpEuler)
}
