use std::f64::consts::PI;

use sace::analysis::{
    ergodic_decay, invariant_measure_estimate, mc_weak_value, moment_curves, FunctionalSpec, McSetup,
};
use sace::noise::{stationary_convolution_sample, NoiseSpectrum, RngStream};
use sace::operators::{Drift, ModelParams};
use sace::scheme::{SchemeConfig, SchemeVariant};
use sace::spectral::{sup_norm, CollocationGrid, SpectralField};

fn lambda(k: usize) -> f64 {
    (k as f64 * PI).powi(2)
}

fn tamed(n: usize, tau: f64, steps: usize) -> SchemeConfig {
    SchemeConfig::new(n, tau, steps, 1.0, SchemeVariant::TamedExpEuler).unwrap()
}

fn drift_free(n: usize, functional: FunctionalSpec, samples: usize, seed: u64) -> McSetup {
    McSetup {
        drift: Drift::Off,
        spectrum: NoiseSpectrum::trace_class(n),
        u0: SpectralField::zeros(n),
        functional,
        samples,
        seed,
    }
}

#[test]
fn centered_gaussian_mode_has_zero_mean() {
    let est = mc_weak_value(&tamed(16, 0.1, 10), &drift_free(16, FunctionalSpec::Mode { k: 1 }, 2000, 1)).unwrap();
    assert!(est.mean.abs() < 4.0 * est.standard_error);
}

#[test]
fn gaussian_moment_generating_oracle() {
    // E exp(-|v|^2) = prod_k (1 + 2 sigma_k^2)^(-1/2) for independent N(0, sigma_k^2) modes
    let n = 64;
    let t = 5.0;
    let est = mc_weak_value(&tamed(n, 0.1, 50), &drift_free(n, FunctionalSpec::ExpNegSq, 4000, 2)).unwrap();
    let oracle: f64 = (1..=n)
        .map(|k| {
            let s2 = (k as f64).powi(-2) * (1.0 - (-2.0 * lambda(k) * t).exp()) / (2.0 * lambda(k));
            (1.0 + 2.0 * s2).powf(-0.5)
        })
        .product();
    assert!((est.mean - oracle).abs() < 4.0 * est.standard_error, "{} vs {oracle}", est.mean);
}

#[test]
fn drift_free_moments_reach_the_stationary_plateau() {
    let n = 16;
    let setup = drift_free(n, FunctionalSpec::ExpNegSq, 1000, 3);
    let curves = moment_curves(&tamed(n, 0.05, 40), &setup, &[2]).unwrap();
    let curve = &curves[0];
    assert_eq!(curve.estimates[0], 0.0);
    // stationary L^inf second moment from direct stationary draws
    let grid = CollocationGrid::oversampled(n);
    let spectrum = NoiseSpectrum::trace_class(n);
    let mut rng = RngStream::new(99, 0);
    let draws: Vec<f64> = (0..4000)
        .map(|_| sup_norm(&stationary_convolution_sample(&spectrum, &mut rng).unwrap(), &grid).unwrap().powi(2))
        .collect();
    let m = draws.len() as f64;
    let oracle = draws.iter().sum::<f64>() / m;
    let oracle_se = (draws.iter().map(|d| (d - oracle).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
    let last = curve.estimates.len() - 1;
    let gap = (curve.estimates[last] - oracle).abs();
    let se = (curve.standard_errors[last].powi(2) + oracle_se.powi(2)).sqrt();
    assert!(gap < 4.0 * se, "{} vs {oracle}", curve.estimates[last]);
    // the plateau is approached from below
    assert!(curve.estimates[2] < curve.estimates[last]);
}

#[test]
fn drift_free_gap_decays_at_lambda_one() {
    let n = 32;
    let unit = SpectralField::unit_mode(n, 1).unwrap();
    let zero = SpectralField::zeros(n);
    let rep = ergodic_decay(&tamed(n, 0.01, 100), &drift_free(n, FunctionalSpec::Mode { k: 1 }, 2, 0), &unit, &zero)
        .unwrap();
    assert!((rep.rho().unwrap() / lambda(1) - 1.0).abs() < 1e-9);
    assert!((rep.gaps[100] - (-lambda(1)).exp()).abs() < 1e-14);
}

#[test]
fn symmetric_drift_gives_centered_invariant_averages() {
    let n = 16;
    let setup = McSetup {
        drift: Drift::Cubic(ModelParams::allen_cahn()),
        spectrum: NoiseSpectrum::trace_class(n),
        u0: SpectralField::zeros(n),
        functional: FunctionalSpec::Mode { k: 1 },
        samples: 400,
        seed: 4,
    };
    let est = invariant_measure_estimate(&tamed(n, 0.05, 40), &setup, 0.6).unwrap();
    assert!(!est.burn_in_warning);
    assert!(est.time_average.mean.abs() < 4.0 * est.time_average.standard_error);
    assert!(est.ensemble_average.mean.abs() < 4.0 * est.ensemble_average.standard_error);
}
