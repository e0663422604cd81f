//! Fast deterministic checks of the algebraic identities the solver relies on.

use std::time::Instant;

use serde::Serialize;

use crate::noise::{philox4x32, NoiseSpectrum, RngStream};
use crate::operators::{
    decay_factor, nemytskii, one_sided_lipschitz, phi_multiplier, semigroup_apply, taming_factor, Drift, ModelParams,
};
use crate::scheme::{CoupledFamily, SchemeConfig, SchemeVariant};
use crate::spectral::{lambda, to_physical, to_spectral, CollocationGrid, SpectralField};

pub const ROUND_TRIP_TOL: f64 = 1e-12;
pub const SEMIGROUP_TOL: f64 = 1e-13;
pub const PHI_IDENTITY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub checks: Vec<CheckOutcome>,
    pub elapsed_secs: f64,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Check = fn() -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("transform_round_trip", transform_round_trip),
    ("semigroup_composition", semigroup_composition),
    ("phi_identity", phi_identity),
    ("one_sided_lipschitz", one_sided_lipschitz_pairs),
    ("taming_bounds", taming_bounds),
    ("ou_variance", ou_variance),
    ("drift_free_coupling", drift_free_coupling),
];

pub fn run_self_test() -> SelfTestReport {
    let start = Instant::now();
    let checks = CHECKS
        .iter()
        .map(|(name, check)| {
            let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
            match outcome {
                Ok(detail) => CheckOutcome { name, passed: true, detail },
                Err(detail) => CheckOutcome { name, passed: false, detail },
            }
        })
        .collect();
    SelfTestReport { checks, elapsed_secs: start.elapsed().as_secs_f64() }
}

/// Uniform deviates in `[-1, 1)` from a fixed Philox stream.
fn uniforms(tag: u32, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let r = philox4x32([i as u32, tag, 0, 0], [0x5eed, 0x7e57]);
            ((((r[0] as u64) << 21) ^ r[1] as u64) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn field(tag: u32, n: usize, amplitude: f64) -> SpectralField {
    SpectralField::new(uniforms(tag, n).into_iter().map(|u| amplitude * u).collect()).expect("finite")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn within(name: &str, err: f64, tol: f64) -> Result<String, String> {
    let detail = format!("{name}: max error {err:.3e} (tolerance {tol:e})");
    if err <= tol {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn transform_round_trip() -> Result<String, String> {
    let mut worst = 0.0_f64;
    for (tag, &n) in [1usize, 7, 64, 257].iter().enumerate() {
        let v = field(tag as u32, n, 1.0);
        for grid in [CollocationGrid::new(n).unwrap(), CollocationGrid::oversampled(n)] {
            let values = to_physical(&v, &grid).map_err(|e| e.to_string())?;
            let back = to_spectral(&values, &grid, n).map_err(|e| e.to_string())?;
            worst = worst.max(max_diff(back.coeffs(), v.coeffs()));
        }
        // grid values -> coefficients -> grid values on a square grid
        let grid = CollocationGrid::new(n).unwrap();
        let values = uniforms(100 + tag as u32, n);
        let c = to_spectral(&values, &grid, n).map_err(|e| e.to_string())?;
        let back = to_physical(&c, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(max_diff(&back, &values));
    }
    within("round trip", worst, ROUND_TRIP_TOL)
}

fn semigroup_composition() -> Result<String, String> {
    let v = field(11, 64, 1.0);
    let mut worst = 0.0_f64;
    for (t, s) in [(0.01, 0.02), (0.1, 0.3), (1e-4, 0.5)] {
        let two = semigroup_apply(&semigroup_apply(&v, s).unwrap(), t).unwrap();
        let one = semigroup_apply(&v, t + s).unwrap();
        worst = worst.max(max_diff(two.coeffs(), one.coeffs()));
    }
    within("S(t)S(s) - S(t+s)", worst, SEMIGROUP_TOL)
}

fn phi_identity() -> Result<String, String> {
    // A phi(tau) + S(tau) = I, mode by mode
    let mut worst = 0.0_f64;
    for tau in [1e-8, 1e-3, 0.1, 1.0] {
        for k in 1..=256 {
            let err = (lambda(k) * phi_multiplier(k, tau) + decay_factor(k, tau) - 1.0).abs();
            worst = worst.max(err);
        }
    }
    within("A phi + S - I", worst, PHI_IDENTITY_TOL)
}

fn one_sided_lipschitz_pairs() -> Result<String, String> {
    let models = [ModelParams::allen_cahn(), ModelParams::new(0.3, 2.0, 1.5, 1.0).unwrap()];
    let n = 16;
    let grid = CollocationGrid::oversampled(n);
    let mut worst = f64::NEG_INFINITY;
    for (m, params) in models.iter().enumerate() {
        let lf = one_sided_lipschitz(params.coefficients()[1], params.coefficients()[2], params.coefficients()[3])
            .map_err(|e| e.to_string())?;
        for pair in 0..500u32 {
            let tag = 1000 + 2 * (pair + 500 * m as u32);
            let u = field(tag, n, 2.0);
            let v = field(tag + 1, n, 2.0);
            let fu = nemytskii(&u, params, &grid).map_err(|e| e.to_string())?;
            let fv = nemytskii(&v, params, &grid).map_err(|e| e.to_string())?;
            let (mut lhs, mut dist) = (0.0, 0.0);
            for k in 0..n {
                let w = u.coeffs()[k] - v.coeffs()[k];
                lhs += (fu.coeffs()[k] - fv.coeffs()[k]) * w;
                dist += w * w;
            }
            worst = worst.max((lhs - lf * dist) / dist);
        }
    }
    let detail = format!("1000 pairs: max of <F(u)-F(v),u-v>/|u-v|^2 - L_F = {worst:.3e}");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn taming_bounds() -> Result<String, String> {
    let n = 32;
    let grid = CollocationGrid::oversampled(n);
    let v = field(21, n, 1.0);
    let mut previous = 1.0;
    for scale in [0.0, 1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3] {
        let g = taming_factor(&v.scaled(scale), 0.1, 1.0, &grid).map_err(|e| e.to_string())?;
        if !(g > 0.0 && g <= 1.0) {
            return Err(format!("taming factor {g} outside (0, 1] at scale {scale}"));
        }
        if scale == 0.0 && g != 1.0 {
            return Err(format!("taming factor {g} at the zero state"));
        }
        if g > previous {
            return Err(format!("taming factor increased to {g} at scale {scale}"));
        }
        previous = g;
    }
    let mut previous = 1.0;
    for tau in [1e-6, 1e-3, 0.01, 0.1, 1.0] {
        let g = taming_factor(&v, tau, 0.5, &grid).map_err(|e| e.to_string())?;
        if g > previous {
            return Err(format!("taming factor increased to {g} at tau {tau}"));
        }
        previous = g;
    }
    Ok("taming factor in (0, 1], nonincreasing in |V| and tau".to_string())
}

fn ou_variance() -> Result<String, String> {
    let spectrum = NoiseSpectrum::trace_class(4);
    let tau = 0.05;
    let samples = 20_000;
    let mut sum_sq = [0.0; 4];
    let mut buf = [0.0; 4];
    let rng = RngStream::new(3, 0);
    for step in 0..samples {
        rng.fill_step_normals(step as u64, &mut buf);
        for (k, (s, z)) in sum_sq.iter_mut().zip(&buf).enumerate() {
            *s += z * z * spectrum.increment_variance(k + 1, tau);
        }
    }
    for (k, s) in sum_sq.iter().enumerate() {
        let want = spectrum.increment_variance(k + 1, tau);
        let got = s / samples as f64;
        // Var of a squared Gaussian is 2 sigma^4
        let se = want * (2.0 / samples as f64).sqrt();
        if (got - want).abs() > 5.0 * se {
            return Err(format!("mode {}: variance {got:.6e} vs {want:.6e}", k + 1));
        }
    }
    // two half steps compose into a full step
    let mut worst = 0.0_f64;
    for k in 1..=64 {
        let half = spectrum.increment_variance(k, tau / 2.0);
        let combined = decay_factor(k, tau / 2.0).powi(2) * half + half;
        worst = worst.max((combined / spectrum.increment_variance(k, tau) - 1.0).abs());
    }
    within("increment variances, half-step composition", worst, 1e-13)
}

fn drift_free_coupling() -> Result<String, String> {
    // with F = 0 the exponential step is exact, so coupled levels coincide
    let n = 16;
    let spectrum = NoiseSpectrum::trace_class(n);
    let fine = SchemeConfig::new(n, 0.01, 40, 1.0, SchemeVariant::TamedExpEuler).unwrap();
    let coarse = [
        SchemeConfig::new(n, 0.02, 20, 1.0, SchemeVariant::TamedExpEuler).unwrap(),
        SchemeConfig::new(n, 0.08, 5, 1.0, SchemeVariant::TamedExpEuler).unwrap(),
    ];
    let u0 = field(31, n, 0.5);
    let mut family =
        CoupledFamily::new(&fine, &coarse, Drift::Off, &spectrum, &u0, RngStream::new(9, 1)).map_err(|e| e.to_string())?;
    family.run(fine.n_steps).map_err(|e| e.to_string())?;
    let worst = (0..coarse.len())
        .map(|l| max_diff(family.coarse_state(l), family.fine_state()))
        .fold(0.0, f64::max);
    within("coarse vs fine, drift-free", worst, 1e-13)
}
