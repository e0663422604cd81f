//! Deterministic operator algebra of the scheme: semigroup `S(t) = exp(-tA)`,
//! the integrated-drift operator `A^{-1}(I - S(tau))`, the cubic Nemytskii
//! operator and the taming factor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{
    lambda, max_abs, sobolev_norm_sq, CollocationGrid, SpectralField,
};

/// Coefficients of `f(x) = -a3 x^3 + a2 x^2 + a1 x + a0` with `a3 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    a0: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    lipschitz_onesided: f64,
}

impl ModelParams {
    pub fn new(a0: f64, a1: f64, a2: f64, a3: f64) -> Result<Self> {
        if ![a0, a1, a2, a3].iter().all(|a| a.is_finite()) {
            return Err(Error::domain("polynomial coefficients must be finite"));
        }
        let lipschitz_onesided = one_sided_lipschitz(a1, a2, a3)?;
        Ok(Self { a0, a1, a2, a3, lipschitz_onesided })
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// The benchmark double well `f(x) = x - x^3`.
    pub fn allen_cahn() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0).expect("valid benchmark coefficients")
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.a0, self.a1, self.a2, self.a3]
    }

    /// `L_F = sup_x f'(x)`.
    pub fn lipschitz_onesided(&self) -> f64 {
        self.lipschitz_onesided
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        ((-self.a3 * x + self.a2) * x + self.a1) * x + self.a0
    }

    #[inline]
    pub fn df(&self, x: f64) -> f64 {
        (-3.0 * self.a3 * x + 2.0 * self.a2) * x + self.a1
    }
}

/// Drift of the equation: the cubic nonlinearity, or none at all.
///
/// Switching the drift off keeps `ModelParams` valid (`a3 > 0`) while still
/// giving the linear Ornstein-Uhlenbeck oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Cubic(ModelParams),
    Off,
}

impl Drift {
    /// One-sided Lipschitz constant; `0` without drift.
    pub fn lipschitz_onesided(&self) -> f64 {
        match self {
            Drift::Cubic(p) => p.lipschitz_onesided(),
            Drift::Off => 0.0,
        }
    }

    /// Rejects `L_F >= lambda_1`.
    pub fn check_dissipative(&self) -> Result<()> {
        let lf = self.lipschitz_onesided();
        let l1 = lambda(1);
        if lf >= l1 {
            return Err(Error::Assumption(format!(
                "dissipativity assumption violated: L_F < lambda_1 required, got L_F = {lf} >= lambda_1 = {l1}"
            )));
        }
        Ok(())
    }

    /// `lambda_1 - L_F`, the exponential mixing rate.
    pub fn mixing_rate(&self) -> f64 {
        lambda(1) - self.lipschitz_onesided()
    }
}

/// `max_x f'(x) = a1 + a2^2 / (3 a3)`, the vertex of the parabola `f'`.
pub fn one_sided_lipschitz(a1: f64, a2: f64, a3: f64) -> Result<f64> {
    if !(a3 > 0.0) {
        return Err(Error::domain(format!("leading coefficient a3 must be positive, got {a3}")));
    }
    Ok(a1 + a2 * a2 / (3.0 * a3))
}

/// Per-mode decay `exp(-lambda_k t)`.
#[inline]
pub(crate) fn decay_factor(k: usize, t: f64) -> f64 {
    (-lambda(k) * t).exp()
}

/// Per-mode multiplier `(1 - exp(-lambda_k tau)) / lambda_k`.
#[inline]
pub fn phi_multiplier(k: usize, tau: f64) -> f64 {
    let l = lambda(k);
    -(-l * tau).exp_m1() / l
}

pub fn semigroup_apply(field: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("semigroup time must be nonnegative, got {t}")));
    }
    let coeffs = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| decay_factor(i + 1, t) * c)
        .collect();
    Ok(SpectralField::from_vec_unchecked(coeffs))
}

/// `A_N^{-1} (I - S_N(tau))` applied mode by mode.
pub fn phi_operator(field: &SpectralField, tau: f64) -> Result<SpectralField> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {tau}")));
    }
    let coeffs = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| phi_multiplier(i + 1, tau) * c)
        .collect();
    Ok(SpectralField::from_vec_unchecked(coeffs))
}

/// `P_N F(v)` evaluated pseudo-spectrally on an oversampled grid.
pub fn nemytskii(field: &SpectralField, params: &ModelParams, grid: &CollocationGrid) -> Result<SpectralField> {
    grid.require_oversamples(field.n_modes())?;
    let mut ws = grid.workspace();
    let mut values = vec![0.0; grid.m_points()];
    grid.synthesize_into(field.coeffs(), &mut values, &mut ws);
    values.iter_mut().for_each(|v| *v = params.f(*v));
    let mut coeffs = vec![0.0; field.n_modes()];
    grid.analyze_into(&values, &mut coeffs, &mut ws);
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("nonlinearity overflowed".into()));
    }
    Ok(SpectralField::from_vec_unchecked(coeffs))
}

/// `G = 1 / (1 + tau^beta ||v||_inf^6 + tau^beta ||v||_{H^beta}^6)`.
pub fn taming_factor(field: &SpectralField, tau: f64, beta: f64, grid: &CollocationGrid) -> Result<f64> {
    check_beta(beta)?;
    if !(tau > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {tau}")));
    }
    grid.require_oversamples(field.n_modes())?;
    let mut values = vec![0.0; grid.m_points()];
    grid.synthesize_into(field.coeffs(), &mut values, &mut grid.workspace());
    let sup = max_abs(&values);
    let h_sq = sobolev_norm_sq(field.coeffs(), beta);
    Ok(taming_from_norms(sup, h_sq, tau.powf(beta)))
}

/// Shared by [`taming_factor`] and the fused stepper so both agree bit for bit.
#[inline]
pub(crate) fn taming_from_norms(sup: f64, h_beta_sq: f64, tau_beta: f64) -> f64 {
    let s2 = sup * sup;
    1.0 / (1.0 + tau_beta * (s2 * s2 * s2) + tau_beta * (h_beta_sq * h_beta_sq * h_beta_sq))
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn lipschitz_constants() {
        assert_eq!(one_sided_lipschitz(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(one_sided_lipschitz(-2.5, 0.0, 4.0).unwrap(), -2.5);
        assert!((one_sided_lipschitz(0.0, 3.0, 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(one_sided_lipschitz(0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 0.0, -1.0).is_err());
        // brute-force sup of f' on a fine grid
        let p = ModelParams::new(0.3, -0.7, 1.9, 0.8).unwrap();
        let brute = (-40_000..=40_000)
            .map(|i| p.df(i as f64 * 1e-4))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((brute - p.lipschitz_onesided()).abs() < 1e-6);
    }

    #[test]
    fn pointwise_f() {
        let p = ModelParams::allen_cahn();
        assert_eq!(p.f(2.0), -6.0);
        assert_eq!(p.f(0.0), 0.0);
    }

    #[test]
    fn semigroup_examples() {
        let u = SpectralField::unit_mode(3, 1).unwrap();
        assert_eq!(semigroup_apply(&u, 0.0).unwrap(), u);
        let s = semigroup_apply(&u, 0.1).unwrap();
        assert!((s.mode(1) - (-0.9869604401089358_f64).exp()).abs() < 1e-15);
        assert!((s.mode(1) - 0.372708).abs() < 1e-6);
        assert!(semigroup_apply(&u, 100.0).unwrap().mode(1) < 1e-300);
        assert!(semigroup_apply(&u, -1.0).is_err());
    }

    #[test]
    fn phi_examples() {
        assert!((phi_multiplier(1, 0.1) - 0.0635578).abs() < 1e-6);
        for k in 1..50 {
            for tau in [1e-6, 1e-3, 0.1, 1.0] {
                let m = phi_multiplier(k, tau);
                assert!(m > 0.0 && m <= tau && m <= 1.0 / lambda(k));
            }
        }
        // lambda_k tau >= 50
        let k = 30;
        let tau = 50.0 / lambda(k);
        assert!((phi_multiplier(k, tau) - 1.0 / lambda(k)).abs() < 1e-15);
        assert!((phi_multiplier(1, 1e-12) / 1e-12 - 1.0).abs() < 1e-10);
        assert!(phi_operator(&SpectralField::zeros(2), 0.0).is_err());
    }

    #[test]
    fn nemytskii_of_constant() {
        let n = 64;
        let grid = CollocationGrid::oversampled(n);
        let p = ModelParams::new(1.0, 0.0, 0.0, 1.0).unwrap();
        let f = nemytskii(&SpectralField::zeros(n), &p, &grid).unwrap();
        // <1, phi_k> = 2 sqrt(2) / (k pi) for odd k; trapezoid error O(m^-2)
        for k in 1..=n {
            let exact = if k % 2 == 1 { 2.0 * SQRT_2 / (k as f64 * PI) } else { 0.0 };
            let tol = 2.0 * (k * k) as f64 / ((grid.m_points() + 1) as f64).powi(2);
            assert!((f.mode(k) - exact).abs() < tol, "k={k}: {} vs {exact}", f.mode(k));
        }
        assert!((f.mode(1) - 0.900316).abs() < 1e-4);
        let zero = nemytskii(&SpectralField::zeros(n), &ModelParams::allen_cahn(), &grid).unwrap();
        assert!(zero.coeffs().iter().all(|&c| c == 0.0));
        assert!(nemytskii(&SpectralField::zeros(n), &p, &CollocationGrid::new(4 * n - 1).unwrap()).is_err());
    }

    #[test]
    fn odd_cubic_is_alias_free_at_fourfold_oversampling() {
        // For f odd (a0 = a2 = 0), f(v) is a sine polynomial of degree <= 3N,
        // so the DST at m = 4N recovers P_N F exactly.
        let n = 5;
        let c = [0.4, -0.3, 0.2, 0.1, -0.25];
        let field = SpectralField::new(c.to_vec()).unwrap();
        let fast = nemytskii(&field, &ModelParams::allen_cahn(), &CollocationGrid::oversampled(n)).unwrap();
        // midpoint quadrature on a very fine grid as an independent oracle
        let q = 200_000;
        for k in 1..=n {
            let mut acc = 0.0;
            for i in 0..q {
                let x = (i as f64 + 0.5) / q as f64;
                let v: f64 = c.iter().enumerate().map(|(j, cj)| cj * SQRT_2 * ((j + 1) as f64 * PI * x).sin()).sum();
                acc += (v - v * v * v) * SQRT_2 * (k as f64 * PI * x).sin();
            }
            acc /= q as f64;
            assert!((fast.mode(k) - acc).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn taming_examples() {
        let n = 64;
        let grid = CollocationGrid::oversampled(n);
        assert_eq!(taming_factor(&SpectralField::zeros(n), 0.1, 1.0, &grid).unwrap(), 1.0);
        let u = SpectralField::unit_mode(n, 1).unwrap();
        let g = taming_factor(&u, 0.1, 1.0, &grid).unwrap();
        let exact = 1.0 / (1.0 + 0.1 * (8.0 + PI.powi(6)));
        assert!((exact - 0.0102105).abs() < 1e-7);
        assert!((g - exact).abs() < 1e-6, "{g} vs {exact}");
        let g2 = taming_factor(&u.scaled(2.0), 0.1, 1.0, &grid).unwrap();
        assert!(g2 < g);
        assert!(taming_factor(&u, 0.1, 0.0, &grid).is_err());
        assert!(taming_factor(&u, 0.1, 1.5, &grid).is_err());
    }

    #[test]
    fn dissipativity_gate() {
        assert!(Drift::Cubic(ModelParams::allen_cahn()).check_dissipative().is_ok());
        let bad = ModelParams::new(0.0, 20.0, 0.0, 1.0).unwrap();
        assert!(matches!(Drift::Cubic(bad).check_dissipative(), Err(Error::Assumption(_))));
        assert!(Drift::Off.check_dissipative().is_ok());
    }
}
