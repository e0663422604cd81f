//! Experiment configuration documents.
//!
//! A document has five flat sections, `[model]`, `[noise]`, `[scheme]`,
//! `[initial]` and `[run]`. Every key is optional; the defaults describe the
//! benchmark model `f(u) = u - u^3` with trace-class noise.

use serde::{Deserialize, Serialize};

use crate::analysis::{FunctionalSpec, McSetup};
use crate::error::{Error, Result};
use crate::noise::{NoiseKind, NoiseSpectrum};
use crate::operators::{Drift, ModelParams};
use crate::scheme::{SchemeConfig, SchemeVariant};
use crate::spectral::SpectralField;

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("model", &["a0", "a1", "a2", "a3", "drift_free"]),
    ("noise", &["kind", "decay", "beta"]),
    ("scheme", &["variant", "n_modes", "tau", "n_steps", "tau_cap"]),
    ("initial", &["preset", "coeffs", "scale", "compare_preset", "compare_coeffs", "compare_scale"]),
    (
        "run",
        &[
            "samples", "seed", "save_stride", "functional", "mode_index", "output", "format", "tau_list", "tau_ref",
            "n_list", "n_ref", "horizon", "burn_in", "moment_p",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub drift_free: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { a0: 0.0, a1: 1.0, a2: 0.0, a3: 1.0, drift_free: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub decay: Option<f64>,
    pub beta: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { kind: NoiseKind::PowerLaw, decay: None, beta: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Tamed,
    Untamed,
    SemiImplicit,
}

impl From<VariantName> for SchemeVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Tamed => SchemeVariant::TamedExpEuler,
            VariantName::Untamed => SchemeVariant::UntamedExpEuler,
            VariantName::SemiImplicit => SchemeVariant::SemiImplicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeSection {
    pub variant: VariantName,
    pub n_modes: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub tau_cap: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self { variant: VariantName::Tamed, n_modes: 64, tau: 0.1, n_steps: 10, tau_cap: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Zero,
    /// `sin(pi x)`, i.e. `phi_1 / sqrt(2)`.
    Sine,
    /// The coefficient list in `coeffs`.
    Coeffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSection {
    pub preset: Preset,
    pub coeffs: Vec<f64>,
    pub scale: f64,
    pub compare_preset: Preset,
    pub compare_coeffs: Vec<f64>,
    pub compare_scale: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            preset: Preset::Zero,
            coeffs: Vec::new(),
            scale: 1.0,
            compare_preset: Preset::Sine,
            compare_coeffs: Vec::new(),
            compare_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    ExpNegSq,
    Mode,
    CosMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub samples: usize,
    pub seed: u64,
    /// Defaults to `n_steps` (initial and final state only).
    pub save_stride: Option<usize>,
    pub functional: FunctionalName,
    pub mode_index: usize,
    pub output: Option<String>,
    pub format: OutputFormat,
    pub tau_list: Vec<f64>,
    pub tau_ref: Option<f64>,
    pub n_list: Vec<usize>,
    pub n_ref: Option<usize>,
    /// Defaults to `tau * n_steps`.
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub moment_p: Vec<u32>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            save_stride: None,
            functional: FunctionalName::ExpNegSq,
            mode_index: 1,
            output: None,
            format: OutputFormat::Csv,
            tau_list: Vec::new(),
            tau_ref: None,
            n_list: Vec::new(),
            n_ref: None,
            horizon: None,
            burn_in: None,
            moment_p: vec![2, 4],
        }
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub scheme: SchemeSection,
    pub initial: InitialSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        let unknown = unknown_keys(&doc);
        if !unknown.is_empty() {
            return Err(Error::config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        let cfg = cfg.resolved()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills kind-dependent noise defaults so the echoed config is complete.
    pub fn resolved(mut self) -> Result<Self> {
        let spectrum = self.spectrum()?;
        self.noise.decay = Some(spectrum.decay());
        self.noise.beta = Some(spectrum.beta());
        Ok(self)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The fully defaulted document, suitable for echoing into outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.drift()?.check_dissipative()?;
        self.spectrum()?.require_admissible()?;
        self.scheme_config()?;
        self.functional().validate()?;
        self.initial_state()?;
        self.compare_state()?;
        if self.run.save_stride == Some(0) {
            return Err(Error::config("save_stride must be positive"));
        }
        Ok(())
    }

    pub fn drift(&self) -> Result<Drift> {
        if self.model.drift_free {
            return Ok(Drift::Off);
        }
        let m = &self.model;
        Ok(Drift::Cubic(ModelParams::new(m.a0, m.a1, m.a2, m.a3)?))
    }

    pub fn spectrum(&self) -> Result<NoiseSpectrum> {
        let n = self.scheme.n_modes.max(1);
        match self.noise.kind {
            NoiseKind::White => NoiseSpectrum::new(NoiseKind::White, self.noise.decay.unwrap_or(0.0), self.noise.beta.unwrap_or(0.5), n),
            NoiseKind::PowerLaw => NoiseSpectrum::new(
                NoiseKind::PowerLaw,
                self.noise.decay.unwrap_or(1.0),
                self.noise.beta.unwrap_or(1.0),
                n,
            ),
        }
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = &self.scheme;
        SchemeConfig::with_cap(s.n_modes, s.tau, s.n_steps, self.spectrum()?.beta(), s.variant.into(), s.tau_cap)
    }

    pub fn functional(&self) -> FunctionalSpec {
        match self.run.functional {
            FunctionalName::ExpNegSq => FunctionalSpec::ExpNegSq,
            FunctionalName::Mode => FunctionalSpec::Mode { k: self.run.mode_index },
            FunctionalName::CosMode => FunctionalSpec::CosMode,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.run.horizon.unwrap_or(self.scheme.tau * self.scheme.n_steps as f64)
    }

    pub fn initial_state(&self) -> Result<SpectralField> {
        let i = &self.initial;
        build_state(i.preset, &i.coeffs, i.scale, self.scheme.n_modes)
    }

    /// Second initial state for ergodicity runs.
    pub fn compare_state(&self) -> Result<SpectralField> {
        let i = &self.initial;
        build_state(i.compare_preset, &i.compare_coeffs, i.compare_scale, self.scheme.n_modes)
    }

    pub fn mc_setup(&self) -> Result<McSetup> {
        Ok(McSetup {
            drift: self.drift()?,
            spectrum: self.spectrum()?,
            u0: self.initial_state()?,
            functional: self.functional(),
            samples: self.run.samples,
            seed: self.run.seed,
        })
    }
}

fn build_state(preset: Preset, coeffs: &[f64], scale: f64, n_modes: usize) -> Result<SpectralField> {
    if !scale.is_finite() {
        return Err(Error::config(format!("initial scale must be finite, got {scale}")));
    }
    let n = n_modes.max(1);
    let base = match preset {
        Preset::Zero => SpectralField::zeros(n),
        Preset::Sine => SpectralField::unit_mode(n, 1)?.scaled(std::f64::consts::FRAC_1_SQRT_2),
        Preset::Coeffs => {
            if coeffs.is_empty() {
                return Err(Error::config("preset \"coeffs\" needs a nonempty coefficient list"));
            }
            if coeffs.len() > n {
                return Err(Error::config(format!("{} initial coefficients for {n} modes", coeffs.len())));
            }
            SpectralField::new(coeffs.to_vec())
                .map_err(|e| Error::config(e.to_string()))?
                .resized(n)
        }
    };
    Ok(base.scaled(scale))
}

fn unknown_keys(doc: &toml::Table) -> Vec<String> {
    let mut unknown = Vec::new();
    for (section, value) in doc {
        let Some((_, keys)) = KNOWN_KEYS.iter().find(|(s, _)| s == section) else {
            unknown.push(format!("[{section}]"));
            continue;
        };
        if let Some(table) = value.as_table() {
            unknown.extend(table.keys().filter(|k| !keys.contains(&k.as_str())).map(|k| format!("{section}.{k}")));
        }
    }
    unknown
}
