//! Q-Wiener noise in the eigenbasis of `A`.
//!
//! `Q phi_k = q_k phi_k` with `q_k = k^{-2r}` (`r = 0` is space-time white
//! noise). Since `Q` commutes with `A`, the stochastic convolution decouples
//! into independent Ornstein-Uhlenbeck modes and every increment over a step
//! is sampled exactly:
//!
//! ```text
//! int_{t_k}^{t_{k+1}} S(t_{k+1} - s) dW(s) ~ N(0, q_k (1 - exp(-2 lambda_k tau)) / (2 lambda_k))
//! ```
//!
//! Gaussians come from Philox4x32-10 keyed by `(seed, sample, step, mode)`,
//! so a draw never depends on scheduling or on how many modes are simulated.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operators::check_beta;
use crate::spectral::{lambda, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpectrum {
    kind: NoiseKind,
    decay: f64,
    beta: f64,
    n_modes: usize,
}

impl NoiseSpectrum {
    pub fn new(kind: NoiseKind, decay: f64, beta: f64, n_modes: usize) -> Result<Self> {
        check_beta(beta)?;
        if n_modes == 0 {
            return Err(Error::domain("noise needs at least one mode"));
        }
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::domain(format!("decay exponent must be nonnegative, got {decay}")));
        }
        if kind == NoiseKind::White && decay != 0.0 {
            return Err(Error::domain("white noise has decay 0"));
        }
        Ok(Self { kind, decay, beta, n_modes })
    }

    /// `Q = I` with the boundary regularity `beta = 1/2`.
    pub fn white(n_modes: usize) -> Self {
        Self::new(NoiseKind::White, 0.0, 0.5, n_modes).expect("valid white noise")
    }

    /// `q_k = k^{-2 decay}`.
    pub fn power_law(n_modes: usize, decay: f64, beta: f64) -> Result<Self> {
        Self::new(NoiseKind::PowerLaw, decay, beta, n_modes)
    }

    /// Trace-class benchmark noise `q_k = k^{-2}`, `beta = 1`.
    pub fn trace_class(n_modes: usize) -> Self {
        Self::power_law(n_modes, 1.0, 1.0).expect("valid trace-class noise")
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn with_modes(&self, n_modes: usize) -> Self {
        Self { n_modes, ..*self }
    }

    /// `q_k` for mode `k >= 1`.
    pub fn q(&self, k: usize) -> f64 {
        if self.decay == 0.0 {
            1.0
        } else {
            (k as f64).powf(-2.0 * self.decay)
        }
    }

    /// Per-mode variance of the exact convolution increment over `tau`.
    pub fn increment_variance(&self, k: usize, tau: f64) -> f64 {
        let l = lambda(k);
        self.q(k) * -(-2.0 * l * tau).exp_m1() / (2.0 * l)
    }

    /// Stationary Ornstein-Uhlenbeck variance `q_k / (2 lambda_k)`.
    pub fn stationary_variance(&self, k: usize) -> f64 {
        self.q(k) / (2.0 * lambda(k))
    }

    pub fn require_admissible(&self) -> Result<RegularityReport> {
        let report = regularity_check(self);
        if !report.admissible {
            return Err(Error::Assumption(format!(
                "noise regularity violated: sum_k lambda_k^(beta-1) q_k diverges for beta = {} and decay = {} (tail exponent {})",
                self.beta, self.decay, report.tail_exponent
            )));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    pub admissible: bool,
    /// Tail exponent sits exactly at -1 (white noise with beta = 1/2).
    pub at_boundary: bool,
    /// `e` in `lambda_k^(beta-1) q_k ~ k^e`.
    pub tail_exponent: f64,
    /// `sum_{k <= N} lambda_k^(beta-1) q_k`.
    pub partial_sum: f64,
}

/// Hilbert-Schmidt check `||A^{(beta-1)/2} Q^{1/2}||_HS < infinity`.
///
/// The series behaves like `sum k^e` with `e = 2(beta - 1) - 2r`; it converges
/// for `e < -1`. The boundary `e = -1` is accepted and flagged.
pub fn regularity_check(spectrum: &NoiseSpectrum) -> RegularityReport {
    let beta = spectrum.beta;
    let tail_exponent = 2.0 * (beta - 1.0) - 2.0 * spectrum.decay;
    let partial_sum = (1..=spectrum.n_modes)
        .map(|k| lambda(k).powf(beta - 1.0) * spectrum.q(k))
        .sum();
    let at_boundary = (tail_exponent + 1.0).abs() < 1e-12;
    RegularityReport {
        admissible: tail_exponent < -1.0 || at_boundary,
        at_boundary,
        tail_exponent,
        partial_sum,
    }
}

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    #[inline(always)]
    fn mulhilo(a: u32, b: u32) -> (u32, u32) {
        let p = a as u64 * b as u64;
        ((p >> 32) as u32, p as u32)
    }
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DOMAIN_INCREMENTS: u64 = 0;
const DOMAIN_SEQUENTIAL: u64 = 1;

/// A reproducible Gaussian stream for one Monte Carlo sample.
///
/// Draws are a pure function of `(master_seed, stream_id, step, mode)`; the
/// internal counter only serves the sequential [`RngStream::next_normals`].
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    counter: u32,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id, counter: 0 }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    fn key(&self, domain: u64) -> [u32; 2] {
        let k = splitmix64(self.master_seed ^ splitmix64(domain));
        [k as u32, (k >> 32) as u32]
    }

    fn fill(&self, domain: u64, step: u32, out: &mut [f64]) {
        let key = self.key(domain);
        let (s_lo, s_hi) = (self.stream_id as u32, (self.stream_id >> 32) as u32);
        for (pair, chunk) in out.chunks_mut(2).enumerate() {
            let r = philox4x32([pair as u32, step, s_lo, s_hi], key);
            let (z0, z1) = box_muller(r);
            chunk[0] = z0;
            if let Some(z) = chunk.get_mut(1) {
                *z = z1;
            }
        }
    }

    /// Standard normals for modes `1..=out.len()` at time step `step`.
    pub fn fill_step_normals(&self, step: u64, out: &mut [f64]) {
        let step = u32::try_from(step).expect("step index exceeds 2^32");
        self.fill(DOMAIN_INCREMENTS, step, out);
    }

    /// Next block of standard normals from an independent sequential domain.
    pub fn next_normals(&mut self, out: &mut [f64]) {
        let c = self.counter;
        self.counter = c.checked_add(1).expect("sequential stream exhausted");
        self.fill(DOMAIN_SEQUENTIAL, c, out);
    }
}

#[inline]
fn box_muller(r: [u32; 4]) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let a = ((r[0] as u64) << 32) | r[1] as u64;
    let b = ((r[2] as u64) << 32) | r[3] as u64;
    // u1 in (0, 1), never 0
    let u1 = ((a >> 11) as f64 + 0.5) * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let rad = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (rad * c, rad * s)
}

/// Precomputed per-mode standard deviations of the convolution increment.
#[derive(Debug, Clone)]
pub(crate) struct IncrementSampler {
    sigma: Vec<f64>,
}

impl IncrementSampler {
    pub(crate) fn new(spectrum: &NoiseSpectrum, n_modes: usize, tau: f64) -> Self {
        let sigma = (1..=n_modes).map(|k| spectrum.increment_variance(k, tau).sqrt()).collect();
        Self { sigma }
    }

    pub(crate) fn sample_into(&self, rng: &RngStream, step: u64, out: &mut [f64]) {
        rng.fill_step_normals(step, out);
        out.iter_mut().zip(&self.sigma).for_each(|(z, s)| *z *= s);
    }
}

/// Exact increment of the Galerkin stochastic convolution over one step.
pub fn convolution_increment(
    spectrum: &NoiseSpectrum,
    tau: f64,
    rng: &RngStream,
    step: u64,
) -> Result<SpectralField> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {tau}")));
    }
    let sampler = IncrementSampler::new(spectrum, spectrum.n_modes(), tau);
    let mut out = vec![0.0; spectrum.n_modes()];
    sampler.sample_into(rng, step, &mut out);
    Ok(SpectralField::from_vec_unchecked(out))
}

/// Combines consecutive fine increments into the increment over their union,
/// `sum_j exp(-lambda_k (t_end - t_{j+1})) dO_j`, on the same Brownian path.
pub fn refine_coupling(fine_increments: &[SpectralField], tau_fine: f64) -> Result<SpectralField> {
    let first = fine_increments
        .first()
        .ok_or_else(|| Error::precondition("no fine increments to combine"))?;
    if !(tau_fine > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {tau_fine}")));
    }
    let n = first.n_modes();
    if fine_increments.iter().any(|f| f.n_modes() != n) {
        return Err(Error::precondition("fine increments differ in mode count"));
    }
    let decay: Vec<f64> = (1..=n).map(|k| (-lambda(k) * tau_fine).exp()).collect();
    let mut acc = vec![0.0; n];
    for inc in fine_increments {
        accumulate_increment(&mut acc, &decay, inc.coeffs());
    }
    Ok(SpectralField::from_vec_unchecked(acc))
}

/// `acc <- exp(-lambda tau_f) acc + inc` on the first `acc.len()` modes.
#[inline]
pub(crate) fn accumulate_increment(acc: &mut [f64], decay: &[f64], inc: &[f64]) {
    for ((a, d), i) in acc.iter_mut().zip(decay).zip(inc) {
        *a = d * *a + i;
    }
}

/// One draw from the `t -> infinity` law of the Galerkin stochastic convolution.
pub fn stationary_convolution_sample(spectrum: &NoiseSpectrum, rng: &mut RngStream) -> Result<SpectralField> {
    spectrum
        .require_admissible()
        .map_err(|e| Error::domain(e.to_string()))?;
    let mut out = vec![0.0; spectrum.n_modes()];
    rng.next_normals(&mut out);
    for (k, z) in out.iter_mut().enumerate() {
        *z *= spectrum.stationary_variance(k + 1).sqrt();
    }
    Ok(SpectralField::from_vec_unchecked(out))
}
