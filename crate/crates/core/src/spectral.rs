//! Galerkin space in the Dirichlet sine eigenbasis on (0, 1).
//!
//! A [`SpectralField`] holds the coefficients `c_k = <v, phi_k>` of
//! `v = sum_k c_k phi_k` with `phi_k(x) = sqrt(2) sin(k pi x)` and
//! `A phi_k = lambda_k phi_k`, `lambda_k = k^2 pi^2`.
//!
//! Physical values live on the uniform grid `x_j = j / (m + 1)`, `j = 1..m`.
//! Both directions of the transform are the same DST-I,
//!
//! ```text
//! S_k(w) = sum_{j=1}^{m} w_j sin(pi j k / (m + 1))
//! v(x_j) = sqrt(2) * S_j(c)              (synthesis)
//! c_k    = sqrt(2) / (m + 1) * S_k(v)    (analysis, = (2/(m+1)) sum v_j sin(..) / sqrt(2))
//! ```
//!
//! evaluated through a real FFT of the odd extension of length `2(m + 1)`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Oversampling factor between grid points and Galerkin modes used for the
/// sup norm and the pointwise nonlinearity.
pub const OVERSAMPLING: usize = 4;

/// `lambda_k = k^2 pi^2`.
pub fn eigenvalue(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("mode index starts at 1"));
    }
    Ok(lambda(k))
}

#[inline]
pub(crate) fn lambda(k: usize) -> f64 {
    let kf = k as f64;
    kf * kf * PI * PI
}

/// `lambda_1, .., lambda_n`.
pub fn eigenvalues(n: usize) -> Vec<f64> {
    (1..=n).map(lambda).collect()
}

/// `phi_k(x) = sqrt(2) sin(k pi x)` for `x` in `[0, 1]`.
pub fn eigenfunction_value(k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("mode index starts at 1"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(SQRT_2 * (k as f64 * PI * x).sin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub k: usize,
    pub lambda: f64,
}

impl Eigenpair {
    pub fn new(k: usize) -> Result<Self> {
        Ok(Self { k, lambda: eigenvalue(k)? })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        eigenfunction_value(self.k, x)
    }
}

/// An element of the Galerkin space `H^N`.
#[derive(Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("n_modes", &self.coeffs.len())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("a field needs at least one mode"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!("coefficient {} is not finite", i + 1)));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n_modes: usize) -> Self {
        assert!(n_modes > 0, "a field needs at least one mode");
        Self { coeffs: vec![0.0; n_modes] }
    }

    /// The field `phi_k` in `H^N`.
    pub fn unit_mode(n_modes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n_modes {
            return Err(Error::domain(format!("mode {k} not in 1..={n_modes}")));
        }
        let mut f = Self::zeros(n_modes);
        f.coeffs[k - 1] = 1.0;
        Ok(f)
    }

    /// Skips the finiteness check; used on hot paths whose inputs are known finite.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of mode `k` (1-based).
    pub fn mode(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }

    pub fn try_add(&self, other: &SpectralField) -> Result<SpectralField> {
        check_same_modes(self, other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { coeffs })
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        Self { coeffs: self.coeffs.iter().map(|c| alpha * c).collect() }
    }

    /// Keeps the first `n` modes, padding with zeros when `n` exceeds the current size.
    pub fn resized(&self, n: usize) -> SpectralField {
        let mut coeffs = vec![0.0; n];
        let k = n.min(self.coeffs.len());
        coeffs[..k].copy_from_slice(&self.coeffs[..k]);
        Self { coeffs }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub(crate) fn check_same_modes(a: &SpectralField, b: &SpectralField) -> Result<()> {
    if a.n_modes() != b.n_modes() {
        return Err(Error::precondition(format!(
            "mode counts differ: {} vs {}",
            a.n_modes(),
            b.n_modes()
        )));
    }
    Ok(())
}

/// Uniform interior grid `x_j = j/(m+1)` with a planned DST-I.
#[derive(Clone)]
pub struct CollocationGrid {
    m: usize,
    fft: Arc<dyn RealToComplex<f64>>,
}

impl fmt::Debug for CollocationGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CollocationGrid").field("m_points", &self.m).finish()
    }
}

impl CollocationGrid {
    pub fn new(m_points: usize) -> Result<Self> {
        if m_points == 0 {
            return Err(Error::domain("grid needs at least one point"));
        }
        let fft = RealFftPlanner::new().plan_fft_forward(2 * (m_points + 1));
        Ok(Self { m: m_points, fft })
    }

    /// The default grid for `n_modes`: the smallest `m >= 4 N` with `m + 1`
    /// a product of 2, 3 and 5, so the transform length factors cheaply.
    pub fn oversampled(n_modes: usize) -> Self {
        let mut p = OVERSAMPLING * n_modes.max(1) + 1;
        while !is_5_smooth(p) {
            p += 1;
        }
        Self::new(p - 1).expect("positive grid size")
    }

    pub fn m_points(&self) -> usize {
        self.m
    }

    pub fn abscissa(&self, j: usize) -> f64 {
        j as f64 / (self.m + 1) as f64
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (1..=self.m).map(|j| self.abscissa(j)).collect()
    }

    pub(crate) fn workspace(&self) -> DstWorkspace {
        DstWorkspace {
            input: self.fft.make_input_vec(),
            spectrum: self.fft.make_output_vec(),
            scratch: self.fft.make_scratch_vec(),
        }
    }

    /// `out[k-1] = scale * sum_{j=1}^{m} input[j-1] sin(pi j k/(m+1))` for
    /// `k = 1..=out.len()`, with `input` zero-padded to length `m`.
    fn dst_into(&self, input: &[f64], out: &mut [f64], scale: f64, ws: &mut DstWorkspace) {
        let m = self.m;
        debug_assert!(input.len() <= m && out.len() <= m);
        let len = 2 * (m + 1);
        let buf = &mut ws.input;
        buf.iter_mut().for_each(|z| *z = 0.0);
        for (j, &w) in input.iter().enumerate() {
            buf[j + 1] = w;
            buf[len - j - 1] = -w;
        }
        self.fft
            .process_with_scratch(buf, &mut ws.spectrum, &mut ws.scratch)
            .expect("buffer sizes come from the plan");
        // Y_k = -2i S_k
        let half = -0.5 * scale;
        for (k, o) in out.iter_mut().enumerate() {
            *o = half * ws.spectrum[k + 1].im;
        }
    }

    /// Physical values of `coeffs` on the grid, written into `values` (length `m`).
    pub(crate) fn synthesize_into(&self, coeffs: &[f64], values: &mut [f64], ws: &mut DstWorkspace) {
        self.dst_into(coeffs, values, SQRT_2, ws);
    }

    /// First `coeffs.len()` sine coefficients of grid values.
    pub(crate) fn analyze_into(&self, values: &[f64], coeffs: &mut [f64], ws: &mut DstWorkspace) {
        self.dst_into(values, coeffs, SQRT_2 / (self.m + 1) as f64, ws);
    }

    pub(crate) fn require_resolves(&self, n_modes: usize) -> Result<()> {
        if self.m < n_modes {
            return Err(Error::precondition(format!(
                "grid with {} points cannot resolve {} modes",
                self.m, n_modes
            )));
        }
        Ok(())
    }

    pub(crate) fn require_oversamples(&self, n_modes: usize) -> Result<()> {
        if self.m < OVERSAMPLING * n_modes {
            return Err(Error::precondition(format!(
                "grid with {} points is below {}x oversampling of {} modes",
                self.m, OVERSAMPLING, n_modes
            )));
        }
        Ok(())
    }
}

fn is_5_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

/// Reusable FFT buffers for one grid; one per worker.
pub(crate) struct DstWorkspace {
    input: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// `v(x_j) = sum_k c_k phi_k(x_j)`.
pub fn to_physical(field: &SpectralField, grid: &CollocationGrid) -> Result<Vec<f64>> {
    grid.require_resolves(field.n_modes())?;
    let mut values = vec![0.0; grid.m_points()];
    grid.synthesize_into(field.coeffs(), &mut values, &mut grid.workspace());
    Ok(values)
}

/// Discrete projection onto the first `n_modes` sine modes.
pub fn to_spectral(values: &[f64], grid: &CollocationGrid, n_modes: usize) -> Result<SpectralField> {
    if values.len() != grid.m_points() {
        return Err(Error::precondition(format!(
            "{} values for a grid of {} points",
            values.len(),
            grid.m_points()
        )));
    }
    if n_modes == 0 {
        return Err(Error::domain("a field needs at least one mode"));
    }
    grid.require_resolves(n_modes)?;
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain(format!("grid value {} is not finite", j + 1)));
    }
    let mut coeffs = vec![0.0; n_modes];
    grid.analyze_into(values, &mut coeffs, &mut grid.workspace());
    Ok(SpectralField::from_vec_unchecked(coeffs))
}

/// `||v||_{H^s} = (sum_k lambda_k^s c_k^2)^{1/2}`.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> f64 {
    sobolev_norm_sq(field.coeffs(), s).sqrt()
}

pub(crate) fn sobolev_norm_sq(coeffs: &[f64], s: f64) -> f64 {
    if s == 0.0 {
        return coeffs.iter().map(|c| c * c).sum();
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| lambda(i + 1).powf(s) * c * c)
        .sum()
}

/// Same sum with precomputed `lambda_k^s` weights.
#[inline]
pub(crate) fn weighted_norm_sq(coeffs: &[f64], weights: &[f64]) -> f64 {
    coeffs.iter().zip(weights).map(|(c, w)| w * c * c).sum()
}

/// Max of `|v(x_j)|` over the grid; requires `m >= 4 N`.
pub fn sup_norm(field: &SpectralField, grid: &CollocationGrid) -> Result<f64> {
    grid.require_oversamples(field.n_modes())?;
    let values = to_physical(field, grid)?;
    Ok(max_abs(&values))
}

#[inline]
pub(crate) fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_synthesis(coeffs: &[f64], grid: &CollocationGrid) -> Vec<f64> {
        grid.abscissae()
            .iter()
            .map(|&x| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * SQRT_2 * ((i + 1) as f64 * PI * x).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn eigenvalues_match_closed_form() {
        assert!((eigenvalue(1).unwrap() - 9.869604401089358).abs() < 1e-14);
        assert!((eigenvalue(3).unwrap() - 88.82643960980422).abs() < 1e-12);
        assert!(matches!(eigenvalue(0), Err(Error::Domain(_))));
        let ev = eigenvalues(20);
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn eigenfunction_values() {
        assert!((eigenfunction_value(1, 0.5).unwrap() - SQRT_2).abs() < 1e-15);
        assert!(eigenfunction_value(2, 0.5).unwrap().abs() < 1e-15);
        assert_eq!(eigenfunction_value(1, 0.0).unwrap(), 0.0);
        assert!(eigenfunction_value(1, 1.5).is_err());
        assert!(eigenfunction_value(1, -0.1).is_err());
        assert!(eigenfunction_value(0, 0.3).is_err());
    }

    #[test]
    fn field_rejects_non_finite_and_empty() {
        assert!(SpectralField::new(vec![1.0, f64::NAN]).is_err());
        assert!(SpectralField::new(vec![f64::INFINITY]).is_err());
        assert!(SpectralField::new(vec![]).is_err());
    }

    #[test]
    fn unit_mode_on_three_points() {
        let grid = CollocationGrid::new(3).unwrap();
        let v = to_physical(&SpectralField::unit_mode(1, 1).unwrap(), &grid).unwrap();
        let expected = [1.0, SQRT_2, 1.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn fft_synthesis_matches_direct_sum() {
        let grid = CollocationGrid::new(37).unwrap();
        let coeffs: Vec<f64> = (0..11).map(|i| ((i * 7 % 5) as f64 - 2.0) / (i + 1) as f64).collect();
        let fast = to_physical(&SpectralField::new(coeffs.clone()).unwrap(), &grid).unwrap();
        let slow = naive_synthesis(&coeffs, &grid);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn analysis_of_first_mode() {
        let grid = CollocationGrid::new(16).unwrap();
        let values: Vec<f64> = grid.abscissae().iter().map(|x| SQRT_2 * (PI * x).sin()).collect();
        let f = to_spectral(&values, &grid, 8).unwrap();
        assert!((f.mode(1) - 1.0).abs() < 1e-12);
        assert!(f.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
        let zero = to_spectral(&[0.0; 16], &grid, 8).unwrap();
        assert!(zero.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn analysis_truncates_higher_modes() {
        let grid = CollocationGrid::new(32).unwrap();
        let mut c = vec![0.0; 10];
        c[1] = 0.5;
        c[8] = 2.0;
        let values = to_physical(&SpectralField::new(c).unwrap(), &grid).unwrap();
        let f = to_spectral(&values, &grid, 4).unwrap();
        assert!((f.mode(2) - 0.5).abs() < 1e-13);
        assert!(f.mode(1).abs() < 1e-13 && f.mode(3).abs() < 1e-13 && f.mode(4).abs() < 1e-13);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let grid = CollocationGrid::new(4).unwrap();
        let f = SpectralField::zeros(5);
        assert!(matches!(to_physical(&f, &grid), Err(Error::Precondition(_))));
        assert!(matches!(to_spectral(&[0.0; 4], &grid, 5), Err(Error::Precondition(_))));
        let g = CollocationGrid::new(19).unwrap();
        assert!(matches!(sup_norm(&f, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn sobolev_norms() {
        let u1 = SpectralField::unit_mode(4, 1).unwrap();
        assert!((sobolev_norm(&u1, 0.0) - 1.0).abs() < 1e-15);
        assert!((sobolev_norm(&u1, 1.0) - PI).abs() < 1e-14);
        let two = SpectralField::new(vec![1.0, 1.0]).unwrap();
        assert!((sobolev_norm(&two, 0.0) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_of_low_modes() {
        let grid = CollocationGrid::oversampled(64);
        for k in [1, 2] {
            let f = SpectralField::unit_mode(64, k).unwrap();
            let s = sup_norm(&f, &grid).unwrap();
            assert!((s - SQRT_2).abs() < 1e-3, "mode {k}: {s}");
        }
        assert_eq!(sup_norm(&SpectralField::zeros(64), &grid).unwrap(), 0.0);
    }

    #[test]
    fn parseval_against_grid_quadrature() {
        // h * sum v_j^2 equals sum c_k^2 exactly for m >= N (discrete orthogonality)
        let grid = CollocationGrid::new(40).unwrap();
        let f = SpectralField::new(vec![0.3, -1.2, 0.7, 0.05]).unwrap();
        let v = to_physical(&f, &grid).unwrap();
        let h = 1.0 / 41.0;
        let quad: f64 = v.iter().map(|x| x * x).sum::<f64>() * h;
        assert!((quad - sobolev_norm(&f, 0.0).powi(2)).abs() < 1e-13);
    }
}
