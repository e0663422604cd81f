//! Time stepping.
//!
//! The tamed accelerated exponential Euler step
//!
//! ```text
//! V_{k+1} = S_N(tau) V_k + G_k A_N^{-1} (I - S_N(tau)) F_N(V_k) + dO_k,
//! G_k     = 1 / (1 + tau^beta ||V_k||_inf^6 + tau^beta ||V_k||_{H^beta}^6),
//! ```
//!
//! is provided twice: [`tamed_exp_euler_step`] composes the public operators
//! literally, while [`Stepper`] fuses them over reusable buffers for the
//! Monte Carlo kernel. Both perform the same floating-point operations in
//! the same order, so they agree bit for bit.
//!
//! Two controls share the same machinery: the untamed step (`G = 1`) and a
//! semi-implicit spectral Galerkin / backward Euler step.

use serde::{Deserialize, Serialize};

use crate::analysis::FunctionalSpec;
use crate::error::{Error, Result};
use crate::noise::{accumulate_increment, IncrementSampler, NoiseSpectrum, RngStream};
use crate::operators::{
    check_beta, decay_factor, nemytskii, phi_multiplier, phi_operator, semigroup_apply, taming_factor,
    taming_from_norms, Drift,
};
use crate::spectral::{check_same_modes, lambda, max_abs, weighted_norm_sq, CollocationGrid, DstWorkspace, SpectralField};

/// Coefficient magnitude treated as divergence.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

const SEMI_IMPLICIT_TOL: f64 = 1e-10;
const SEMI_IMPLICIT_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeVariant {
    TamedExpEuler,
    UntamedExpEuler,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub n_modes: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub beta: f64,
    pub variant: SchemeVariant,
    pub tau_cap: f64,
}

impl SchemeConfig {
    pub fn new(n_modes: usize, tau: f64, n_steps: usize, beta: f64, variant: SchemeVariant) -> Result<Self> {
        Self::with_cap(n_modes, tau, n_steps, beta, variant, 1.0)
    }

    pub fn with_cap(
        n_modes: usize,
        tau: f64,
        n_steps: usize,
        beta: f64,
        variant: SchemeVariant,
        tau_cap: f64,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::domain("need at least one Galerkin mode"));
        }
        if !(tau > 0.0 && tau <= tau_cap) {
            return Err(Error::domain(format!("step size must lie in (0, {tau_cap}], got {tau}")));
        }
        check_beta(beta)?;
        Ok(Self { n_modes, tau, n_steps, beta, variant, tau_cap })
    }

    /// Tamed scheme reaching `horizon` in steps of `tau`.
    pub fn tamed_for_horizon(n_modes: usize, tau: f64, horizon: f64, beta: f64) -> Result<Self> {
        let n_steps = steps_for_horizon(tau, horizon)?;
        Self::new(n_modes, tau, n_steps, beta, SchemeVariant::TamedExpEuler)
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn with_variant(mut self, variant: SchemeVariant) -> Self {
        self.variant = variant;
        self
    }
}

/// `horizon / tau`, which must be a whole number.
pub fn steps_for_horizon(tau: f64, horizon: f64) -> Result<usize> {
    let k = horizon / tau;
    let rounded = k.round();
    if !(rounded >= 0.0) || (k - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::precondition(format!("horizon {horizon} is not a multiple of tau = {tau}")));
    }
    Ok(rounded as usize)
}

fn check_step_inputs(v: &SpectralField, noise_inc: &SpectralField, cfg: &SchemeConfig, drift: &Drift) -> Result<()> {
    check_same_modes(v, noise_inc)?;
    if v.n_modes() != cfg.n_modes {
        return Err(Error::precondition(format!(
            "state has {} modes, scheme expects {}",
            v.n_modes(),
            cfg.n_modes
        )));
    }
    drift.check_dissipative()
}

fn drift_term(v: &SpectralField, drift: &Drift, grid: &CollocationGrid) -> Result<SpectralField> {
    match drift {
        Drift::Cubic(p) => nemytskii(v, p, grid),
        Drift::Off => Ok(SpectralField::zeros(v.n_modes())),
    }
}

/// One tamed step composed from [`semigroup_apply`], [`phi_operator`],
/// [`nemytskii`] and [`taming_factor`].
pub fn tamed_exp_euler_step(
    v: &SpectralField,
    drift: &Drift,
    noise_inc: &SpectralField,
    cfg: &SchemeConfig,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    check_step_inputs(v, noise_inc, cfg, drift)?;
    let linear = semigroup_apply(v, cfg.tau)?;
    let integrated = phi_operator(&drift_term(v, drift, grid)?, cfg.tau)?;
    let g = match drift {
        Drift::Cubic(_) => taming_factor(v, cfg.tau, cfg.beta, grid)?,
        Drift::Off => 1.0,
    };
    linear.try_add(&integrated.scaled(g))?.try_add(noise_inc)
}

/// The exponential Euler step without taming (`G = 1`).
pub fn untamed_exp_euler_step(
    v: &SpectralField,
    drift: &Drift,
    noise_inc: &SpectralField,
    cfg: &SchemeConfig,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    check_step_inputs(v, noise_inc, cfg, drift)?;
    let linear = semigroup_apply(v, cfg.tau)?;
    let integrated = phi_operator(&drift_term(v, drift, grid)?, cfg.tau)?;
    let next = linear.try_add(&integrated.scaled(1.0))?.try_add(noise_inc)?;
    if let Some(c) = next.coeffs().iter().find(|c| c.abs() > BLOWUP_THRESHOLD) {
        return Err(Error::BlowUp { step: 1, detail: format!("coefficient magnitude {c:e}") });
    }
    Ok(next)
}

/// Backward Euler in the linear part and the drift:
/// `(I + tau A_N) V_{k+1} = V_k + tau F_N(V_{k+1}) + dO_k`.
pub fn semi_implicit_step(
    v: &SpectralField,
    drift: &Drift,
    noise_inc: &SpectralField,
    cfg: &SchemeConfig,
    grid: &CollocationGrid,
) -> Result<SpectralField> {
    check_step_inputs(v, noise_inc, cfg, drift)?;
    let cfg = cfg.with_variant(SchemeVariant::SemiImplicit);
    let mut stepper = Stepper::with_grid(&cfg, *drift, grid.clone())?;
    let mut state = v.coeffs().to_vec();
    stepper.step(&mut state, noise_inc.coeffs())?;
    Ok(SpectralField::from_vec_unchecked(state))
}

/// Fused in-place stepper over preallocated buffers.
pub struct Stepper {
    variant: SchemeVariant,
    drift: Drift,
    tau: f64,
    tau_beta: f64,
    grid: CollocationGrid,
    ws: DstWorkspace,
    decay: Vec<f64>,
    phi: Vec<f64>,
    lambda_beta: Vec<f64>,
    /// `1 + tau lambda_k`
    implicit_diag: Vec<f64>,
    values: Vec<f64>,
    forcing: Vec<f64>,
    scratch: Vec<f64>,
    steps_taken: usize,
    last_taming: f64,
}

impl Stepper {
    pub fn new(cfg: &SchemeConfig, drift: Drift) -> Result<Self> {
        Self::with_grid(cfg, drift, CollocationGrid::oversampled(cfg.n_modes))
    }

    pub fn with_grid(cfg: &SchemeConfig, drift: Drift, grid: CollocationGrid) -> Result<Self> {
        drift.check_dissipative()?;
        check_beta(cfg.beta)?;
        if matches!(drift, Drift::Cubic(_)) {
            grid.require_oversamples(cfg.n_modes)?;
        }
        if cfg.variant == SchemeVariant::SemiImplicit && cfg.tau * drift.lipschitz_onesided() >= 1.0 {
            return Err(Error::precondition(format!(
                "semi-implicit step needs tau * L_F < 1, got {}",
                cfg.tau * drift.lipschitz_onesided()
            )));
        }
        let n = cfg.n_modes;
        let tau = cfg.tau;
        Ok(Self {
            variant: cfg.variant,
            drift,
            tau,
            tau_beta: tau.powf(cfg.beta),
            ws: grid.workspace(),
            values: vec![0.0; grid.m_points()],
            grid,
            decay: (1..=n).map(|k| decay_factor(k, tau)).collect(),
            phi: (1..=n).map(|k| phi_multiplier(k, tau)).collect(),
            lambda_beta: (1..=n).map(|k| lambda(k).powf(cfg.beta)).collect(),
            implicit_diag: (1..=n).map(|k| 1.0 + tau * lambda(k)).collect(),
            forcing: vec![0.0; n],
            scratch: vec![0.0; n],
            steps_taken: 0,
            last_taming: 1.0,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.decay.len()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Taming factor used by the most recent tamed step.
    pub fn last_taming(&self) -> f64 {
        self.last_taming
    }

    /// Sup norm of the state on the collocation grid (uses the internal buffers).
    pub fn sup_norm(&mut self, state: &[f64]) -> f64 {
        self.grid.synthesize_into(state, &mut self.values, &mut self.ws);
        max_abs(&self.values)
    }

    /// `forcing <- P_N F(state)`; returns the grid sup norm of `state`.
    fn eval_drift(&mut self, state: &[f64]) -> f64 {
        match self.drift {
            Drift::Cubic(p) => {
                self.grid.synthesize_into(state, &mut self.values, &mut self.ws);
                let sup = max_abs(&self.values);
                self.values.iter_mut().for_each(|v| *v = p.f(*v));
                self.grid.analyze_into(&self.values, &mut self.forcing, &mut self.ws);
                sup
            }
            Drift::Off => {
                self.forcing.iter_mut().for_each(|f| *f = 0.0);
                f64::NAN
            }
        }
    }

    /// Advances `state` by one step with the given convolution increment.
    pub fn step(&mut self, state: &mut [f64], noise: &[f64]) -> Result<()> {
        let n = self.n_modes();
        if state.len() != n || noise.len() != n {
            return Err(Error::precondition(format!(
                "stepper has {n} modes, got state {} and noise {}",
                state.len(),
                noise.len()
            )));
        }
        match self.variant {
            SchemeVariant::TamedExpEuler | SchemeVariant::UntamedExpEuler => self.exponential_step(state, noise),
            SchemeVariant::SemiImplicit => self.semi_implicit(state, noise)?,
        }
        self.steps_taken += 1;
        if let Some(c) = state.iter().find(|c| !(c.abs() <= BLOWUP_THRESHOLD)) {
            return Err(Error::BlowUp {
                step: self.steps_taken,
                detail: format!("coefficient magnitude {c:e}"),
            });
        }
        Ok(())
    }

    fn exponential_step(&mut self, state: &mut [f64], noise: &[f64]) {
        if matches!(self.drift, Drift::Off) {
            for ((s, d), w) in state.iter_mut().zip(&self.decay).zip(noise) {
                *s = d * *s + w;
            }
            self.last_taming = 1.0;
            return;
        }
        let sup = self.eval_drift(state);
        let g = match self.variant {
            SchemeVariant::TamedExpEuler => {
                let h_sq = weighted_norm_sq(state, &self.lambda_beta);
                taming_from_norms(sup, h_sq, self.tau_beta)
            }
            _ => 1.0,
        };
        self.last_taming = g;
        for i in 0..state.len() {
            state[i] = self.decay[i] * state[i] + g * (self.phi[i] * self.forcing[i]) + noise[i];
        }
    }

    fn semi_implicit(&mut self, state: &mut [f64], noise: &[f64]) -> Result<()> {
        let tau = self.tau;
        if matches!(self.drift, Drift::Off) {
            for ((s, d), w) in state.iter_mut().zip(&self.implicit_diag).zip(noise) {
                *s = (*s + w) / d;
            }
            return Ok(());
        }
        // scratch holds the iterate W; state keeps V_k until convergence
        let mut iterate = std::mem::take(&mut self.scratch);
        iterate.copy_from_slice(state);
        let mut damping = 1.0;
        let mut last_residual = f64::INFINITY;
        for _ in 0..SEMI_IMPLICIT_MAX_SWEEPS {
            self.eval_drift(&iterate);
            // residual of W: (I + tau A) W - V_k - tau F(W) - dO
            let mut res_sq = 0.0;
            for i in 0..iterate.len() {
                let rhs = state[i] + tau * self.forcing[i] + noise[i];
                let r = self.implicit_diag[i] * iterate[i] - rhs;
                res_sq += r * r;
                self.forcing[i] = rhs / self.implicit_diag[i];
            }
            let residual = res_sq.sqrt();
            if !residual.is_finite() {
                break;
            }
            if residual <= SEMI_IMPLICIT_TOL {
                state.copy_from_slice(&iterate);
                self.scratch = iterate;
                return Ok(());
            }
            if residual > last_residual {
                damping *= 0.5;
            }
            last_residual = residual;
            for (w, t) in iterate.iter_mut().zip(&self.forcing) {
                *w = (1.0 - damping) * *w + damping * t;
            }
        }
        self.scratch = iterate;
        Err(Error::Numerical(format!(
            "semi-implicit fixed point did not reach {SEMI_IMPLICIT_TOL:e} in {SEMI_IMPLICIT_MAX_SWEEPS} sweeps (residual {last_residual:e})"
        )))
    }
}

/// One sample path: stepper, exact noise sampler and state.
pub struct Simulation {
    stepper: Stepper,
    sampler: IncrementSampler,
    rng: RngStream,
    state: Vec<f64>,
    noise: Vec<f64>,
    tau: f64,
    step: usize,
}

impl Simulation {
    pub fn new(
        cfg: &SchemeConfig,
        drift: Drift,
        spectrum: &NoiseSpectrum,
        u0: &SpectralField,
        rng: RngStream,
    ) -> Result<Self> {
        spectrum.require_admissible()?;
        if u0.n_modes() != cfg.n_modes {
            return Err(Error::precondition(format!(
                "initial state has {} modes, scheme expects {}",
                u0.n_modes(),
                cfg.n_modes
            )));
        }
        check_bound_beta(cfg, spectrum)?;
        Ok(Self {
            stepper: Stepper::new(cfg, drift)?,
            sampler: IncrementSampler::new(spectrum, cfg.n_modes, cfg.tau),
            rng,
            state: u0.coeffs().to_vec(),
            noise: vec![0.0; cfg.n_modes],
            tau: cfg.tau,
            step: 0,
        })
    }

    pub fn advance(&mut self) -> Result<()> {
        self.sampler.sample_into(&self.rng, self.step as u64, &mut self.noise);
        self.stepper.step(&mut self.state, &self.noise)?;
        self.step += 1;
        Ok(())
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.state.len() {
            return Err(Error::precondition("state size mismatch"));
        }
        self.state.copy_from_slice(coeffs);
        Ok(())
    }

    pub fn field(&self) -> SpectralField {
        SpectralField::from_vec_unchecked(self.state.clone())
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.tau
    }

    pub fn sup_norm(&mut self) -> f64 {
        let Self { stepper, state, .. } = self;
        stepper.sup_norm(state)
    }
}

/// The taming exponent is the noise regularity exponent.
fn check_bound_beta(cfg: &SchemeConfig, spectrum: &NoiseSpectrum) -> Result<()> {
    if cfg.beta != spectrum.beta() {
        return Err(Error::precondition(format!(
            "scheme beta {} differs from noise beta {}",
            cfg.beta,
            spectrum.beta()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub states: Option<Vec<SpectralField>>,
    pub functionals: Vec<f64>,
    pub step_times: Vec<f64>,
}

/// Runs `cfg.n_steps` steps from `u0`, recording the functional (and
/// optionally the state) at step 0 and every `save_stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    cfg: &SchemeConfig,
    drift: Drift,
    spectrum: &NoiseSpectrum,
    u0: &SpectralField,
    functional: &FunctionalSpec,
    rng: RngStream,
    save_stride: usize,
    keep_states: bool,
) -> Result<TrajectoryRecord> {
    if save_stride == 0 || (cfg.n_steps > 0 && !cfg.n_steps.is_multiple_of(save_stride)) {
        return Err(Error::precondition(format!(
            "save stride {save_stride} must divide the step count {}",
            cfg.n_steps
        )));
    }
    let mut sim = Simulation::new(cfg, drift, spectrum, u0, rng)?;
    let saves = cfg.n_steps / save_stride + 1;
    let mut record = TrajectoryRecord {
        states: keep_states.then(|| Vec::with_capacity(saves)),
        functionals: Vec::with_capacity(saves),
        step_times: Vec::with_capacity(saves),
    };
    let save = |sim: &Simulation, record: &mut TrajectoryRecord| {
        record.functionals.push(functional.eval(sim.state()));
        record.step_times.push(sim.time());
        if let Some(states) = record.states.as_mut() {
            states.push(sim.field());
        }
    };
    save(&sim, &mut record);
    for k in 1..=cfg.n_steps {
        sim.advance()?;
        if k % save_stride == 0 {
            save(&sim, &mut record);
        }
    }
    Ok(record)
}

/// A fine simulation with coarser companions driven by the same Brownian path.
///
/// Each coarse level uses the first `N_c <= N_f` modes and a step `r tau_f`;
/// its increments are the fine increments combined by the semigroup recursion
/// of [`crate::noise::refine_coupling`].
pub struct CoupledFamily {
    fine: Simulation,
    levels: Vec<CoarseLevel>,
}

struct CoarseLevel {
    stepper: Stepper,
    ratio: usize,
    fine_decay: Vec<f64>,
    acc: Vec<f64>,
    state: Vec<f64>,
    substep: usize,
}

impl CoupledFamily {
    pub fn new(
        fine_cfg: &SchemeConfig,
        coarse_cfgs: &[SchemeConfig],
        drift: Drift,
        spectrum: &NoiseSpectrum,
        u0: &SpectralField,
        rng: RngStream,
    ) -> Result<Self> {
        let fine = Simulation::new(fine_cfg, drift, spectrum, &u0.resized(fine_cfg.n_modes), rng)?;
        let levels = coarse_cfgs
            .iter()
            .map(|c| {
                let ratio = coupling_ratio(c, fine_cfg)?;
                check_bound_beta(c, spectrum)?;
                Ok(CoarseLevel {
                    stepper: Stepper::new(c, drift)?,
                    ratio,
                    fine_decay: (1..=c.n_modes).map(|k| decay_factor(k, fine_cfg.tau)).collect(),
                    acc: vec![0.0; c.n_modes],
                    state: u0.resized(c.n_modes).into_coeffs(),
                    substep: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { fine, levels })
    }

    /// One fine step; coarse levels step whenever their window completes.
    pub fn advance(&mut self) -> Result<()> {
        let fine = &mut self.fine;
        fine.sampler.sample_into(&fine.rng, fine.step as u64, &mut fine.noise);
        for level in &mut self.levels {
            accumulate_increment(&mut level.acc, &level.fine_decay, &fine.noise);
            level.substep += 1;
            if level.substep == level.ratio {
                level.stepper.step(&mut level.state, &level.acc)?;
                level.acc.iter_mut().for_each(|a| *a = 0.0);
                level.substep = 0;
            }
        }
        fine.stepper.step(&mut fine.state, &fine.noise)?;
        fine.step += 1;
        Ok(())
    }

    pub fn run(&mut self, fine_steps: usize) -> Result<()> {
        for _ in 0..fine_steps {
            self.advance()?;
        }
        Ok(())
    }

    pub fn fine_state(&self) -> &[f64] {
        self.fine.state()
    }

    pub fn coarse_state(&self, level: usize) -> &[f64] {
        &self.levels[level].state
    }
}

/// `coarse.tau / fine.tau` when it is a positive integer and the grids are nested.
fn coupling_ratio(coarse: &SchemeConfig, fine: &SchemeConfig) -> Result<usize> {
    if coarse.n_modes > fine.n_modes {
        return Err(Error::precondition(format!(
            "coarse level has more modes ({}) than the fine level ({})",
            coarse.n_modes, fine.n_modes
        )));
    }
    let r = coarse.tau / fine.tau;
    let ratio = r.round();
    if ratio < 1.0 || (r - ratio).abs() > 1e-9 * ratio {
        return Err(Error::precondition(format!(
            "coarse step {} is not an integer multiple of the fine step {}",
            coarse.tau, fine.tau
        )));
    }
    let ratio = ratio as usize;
    if coarse.n_steps * ratio != fine.n_steps {
        return Err(Error::precondition(format!(
            "horizons differ: coarse {} steps x {ratio} vs fine {} steps",
            coarse.n_steps, fine.n_steps
        )));
    }
    Ok(ratio)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub coarse_final: SpectralField,
    pub fine_final: SpectralField,
}

/// Coarse and fine final states on one Brownian path.
pub fn run_coupled_pair(
    coarse_cfg: &SchemeConfig,
    fine_cfg: &SchemeConfig,
    drift: Drift,
    spectrum: &NoiseSpectrum,
    u0: &SpectralField,
    rng: RngStream,
) -> Result<CoupledPair> {
    let mut family = CoupledFamily::new(fine_cfg, std::slice::from_ref(coarse_cfg), drift, spectrum, u0, rng)?;
    family.run(fine_cfg.n_steps)?;
    Ok(CoupledPair {
        coarse_final: SpectralField::from_vec_unchecked(family.coarse_state(0).to_vec()),
        fine_final: SpectralField::from_vec_unchecked(family.fine_state().to_vec()),
    })
}
