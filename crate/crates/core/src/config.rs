//! Run configuration: a single JSON document with named sections, in the
//! units used in lab notebooks (mm, dB/cm, µm², ps, MHz, nm, mW, K).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fitting::Direction;
use crate::materials::{FcaTable, KerrModelParams, TpaModelParams, TpaVariant};
use crate::phase_retrieval::{InitPhase, RetrievalConfig};
use crate::propagation::{SolverConfig, Stepper};
use crate::pulse::{LaserSpec, NonlinearCoeffs, TemporalGrid, WaveguideSpec};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub waveguide: WaveguideConfig,
    #[serde(default)]
    pub laser: LaserConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub setup: SetupConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideConfig {
    #[serde(default = "d_length")]
    pub length_mm: f64,
    #[serde(default = "d_loss")]
    pub loss_db_per_cm: f64,
    /// No default: depends on the mode profile of the device.
    pub a_eff_um2: f64,
    /// Generation overlap factor; 1/A_eff² when absent.
    #[serde(default)]
    pub chi_per_um4: Option<f64>,
    #[serde(default = "d_tau_c")]
    pub carrier_lifetime_ns: f64,
}

fn d_length() -> f64 {
    19.09
}
fn d_loss() -> f64 {
    2.4
}
fn d_tau_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserConfig {
    pub fwhm_ps: f64,
    pub rep_rate_mhz: f64,
    pub wavelength_nm: f64,
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self {
            fwhm_ps: 4.9,
            rep_rate_mhz: 50.0,
            wavelength_nm: 1551.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub samples: usize,
    pub window_ps: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            samples: 512,
            window_ps: 48.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub dz_um: f64,
    pub max_step_halvings: usize,
    pub tol: f64,
    pub stepper: Stepper,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dz_um: 150.0,
            max_step_halvings: 8,
            tol: 1e-4,
            stepper: Stepper::PredictorCorrector,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    /// Interpolate the tabulated reference coefficients.
    #[default]
    Reference,
    /// Evaluate the temperature models; σ_FCA still comes from the table.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    pub temperature_k: f64,
    pub beta_cm_per_gw: f64,
    pub n2_nm2_per_w: f64,
    pub sigma_1e22_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpaConfig {
    pub k_ta: f64,
    pub k_to: f64,
    pub variant: TpaVariant,
}

impl Default for TpaConfig {
    fn default() -> Self {
        let d = TpaModelParams::default();
        Self {
            k_ta: d.branches[0].k,
            k_to: d.branches[1].k,
            variant: d.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KerrConfig {
    pub n2_0_nm2_per_w: f64,
    pub e_ph_k: f64,
}

impl Default for KerrConfig {
    fn default() -> Self {
        let d = KerrModelParams::default();
        Self {
            n2_0_nm2_per_w: d.n2_0 * 1e18,
            e_ph_k: d.e_ph_emp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialsConfig {
    pub coefficients: CoefficientSource,
    pub reference: Vec<ReferenceRow>,
    pub tpa: TpaConfig,
    pub kerr: KerrConfig,
    /// Free-carrier dispersion strength.
    pub mu: f64,
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        let row = |t, b, n, s| ReferenceRow {
            temperature_k: t,
            beta_cm_per_gw: b,
            n2_nm2_per_w: n,
            sigma_1e22_m2: s,
        };
        Self {
            coefficients: CoefficientSource::Reference,
            reference: vec![
                row(0.0, 0.420, 3.86, 0.0),
                row(5.5, 0.420, 3.86, 0.9),
                row(50.0, 0.424, 3.86, 2.7),
                row(150.0, 0.492, 4.03, 3.1),
                row(300.0, 0.761, 5.18, 3.7),
            ],
            tpa: TpaConfig::default(),
            kerr: KerrConfig::default(),
            mu: 7.0,
        }
    }
}

/// Measurement setup constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetupConfig {
    /// Total excess loss η_X of the cross-over switch in the `on` state.
    pub switch_excess_loss: f64,
    /// Switch state used when recording output spectra.
    pub spectra_direction: Direction,
    /// Nonlinear phase per watt picked up in the input fiber (rad/W).
    pub fiber_gamma_l_rad_per_w: f64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            switch_excess_loss: 1.0,
            spectra_direction: Direction::Off,
            fiber_gamma_l_rad_per_w: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub temperature_k: f64,
    /// Average in-waveguide power of the simulated pulse train.
    pub avg_power_mw: f64,
    /// In-waveguide average powers of the 1/T sweep.
    pub sweep_mw: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            avg_power_mw: 5.0,
            sweep_mw: (0..=10).map(|i| 0.5 * i as f64).collect(),
        }
    }
}

/// Ground truth used to synthesize scan and spectrum files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub eta_l: f64,
    pub eta_r: f64,
    /// Fiber input powers of every scan (mW).
    pub powers_mw: Vec<f64>,
    pub temperatures_k: Vec<f64>,
    /// Relative standard deviation of multiplicative noise on p_out.
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eta_l: 0.35,
            eta_r: 0.25,
            powers_mw: vec![0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.5, 6.5, 8.0],
            temperatures_k: vec![300.0],
            noise_rel: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSettings {
    pub max_iters: usize,
    pub err_tol: f64,
    /// Peak phases (rad) of the intensity-shaped starting guesses; the run
    /// with the lowest final error is kept. Empty means a flat start.
    pub seeds_rad: Vec<f64>,
    /// Fiber power of the reference spectrum; the lowest power when absent.
    pub reference_mw: Option<f64>,
    pub temperature_k: f64,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            max_iters: 300,
            err_tol: 1e-9,
            seeds_rad: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            reference_mw: None,
            temperature_k: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Piecewise-linear interpolation over ascending abscissae.
fn interpolate(points: &[(f64, f64)], x: f64, what: &str) -> Result<f64> {
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfRange(format!(
            "{what}: temperature {x} K outside the tabulated range [{lo}, {hi}] K"
        )));
    }
    let j = points.partition_point(|p| p.0 < x);
    if j == 0 {
        return Ok(points[0].1);
    }
    let (x0, y0) = points[j - 1];
    let (x1, y1) = points[j];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

impl RunConfig {
    /// Parses JSON text, applying `key.path=value` overrides before validation.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, overrides)
    }

    /// SHA-256 of the canonical serialization, so formatting does not matter.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.waveguide_spec().map_err(|e| Error::Config(e.to_string()))?;
        self.laser_spec().map_err(|e| Error::Config(e.to_string()))?;
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        self.solver().validate().map_err(|e| Error::Config(e.to_string()))?;
        let rows = &self.materials.reference;
        if rows.is_empty() {
            return cfg("materials.reference must have at least one row".into());
        }
        if rows.windows(2).any(|w| !(w[1].temperature_k > w[0].temperature_k)) {
            return cfg("materials.reference temperatures must be strictly ascending".into());
        }
        if rows
            .iter()
            .any(|r| !(r.beta_cm_per_gw >= 0.0 && r.n2_nm2_per_w >= 0.0 && r.sigma_1e22_m2 >= 0.0))
        {
            return cfg("materials.reference values must be >= 0".into());
        }
        if !(self.materials.mu >= 0.0) {
            return cfg("materials.mu must be >= 0".into());
        }
        let s = &self.setup;
        if !(s.switch_excess_loss > 0.0 && s.switch_excess_loss <= 1.0) {
            return cfg("setup.switch_excess_loss must lie in (0, 1]".into());
        }
        let y = &self.synthesis;
        if !(y.eta_l > 0.0 && y.eta_l <= 1.0 && y.eta_r > 0.0 && y.eta_r <= 1.0) {
            return cfg("synthesis couplers must lie in (0, 1]".into());
        }
        if y.powers_mw.iter().any(|p| !(*p > 0.0)) || !(y.noise_rel >= 0.0) {
            return cfg("synthesis powers must be > 0 and noise >= 0".into());
        }
        if self.retrieval.max_iters == 0 || !(self.retrieval.err_tol > 0.0) {
            return cfg("retrieval needs max_iters >= 1 and err_tol > 0".into());
        }
        Ok(())
    }

    pub fn waveguide_spec(&self) -> Result<WaveguideSpec> {
        let w = &self.waveguide;
        let a_eff = w.a_eff_um2 * 1e-12;
        let mut wg = WaveguideSpec::new(w.length_mm * 1e-3, units::convert_loss(w.loss_db_per_cm)?, a_eff)?
            .with_carrier_lifetime(w.carrier_lifetime_ns * 1e-9)?;
        if let Some(chi) = w.chi_per_um4 {
            wg = wg.with_chi(chi * 1e24)?;
        }
        Ok(wg)
    }

    pub fn laser_spec(&self) -> Result<LaserSpec> {
        let l = &self.laser;
        LaserSpec::new(
            units::ps_to_s(l.fwhm_ps),
            l.rep_rate_mhz * 1e6,
            units::nm_to_m(l.wavelength_nm),
        )
    }

    pub fn grid(&self) -> Result<TemporalGrid> {
        TemporalGrid::centered(self.grid.samples, units::ps_to_s(self.grid.window_ps))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dz: self.solver.dz_um * 1e-6,
            max_step_halvings: self.solver.max_step_halvings,
            tol: self.solver.tol,
            stepper: self.solver.stepper,
            carrier_preload: 0.0,
        }
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            max_iters: self.retrieval.max_iters,
            err_tol: self.retrieval.err_tol,
            init_phase: InitPhase::Zero,
        }
    }

    pub fn retrieval_seeds(&self) -> Vec<InitPhase> {
        if self.retrieval.seeds_rad.is_empty() {
            vec![InitPhase::Zero]
        } else {
            self.retrieval
                .seeds_rad
                .iter()
                .map(|k| InitPhase::IntensityScaled(*k))
                .collect()
        }
    }

    pub fn tpa_params(&self) -> TpaModelParams {
        let mut p = TpaModelParams::default().with_variant(self.materials.tpa.variant);
        p.branches[0].k = self.materials.tpa.k_ta;
        p.branches[1].k = self.materials.tpa.k_to;
        p
    }

    pub fn kerr_params(&self) -> KerrModelParams {
        KerrModelParams {
            n2_0: self.materials.kerr.n2_0_nm2_per_w * 1e-18,
            e_ph_emp: self.materials.kerr.e_ph_k,
        }
    }

    pub fn fca_table(&self) -> Result<FcaTable> {
        FcaTable::new(
            self.materials
                .reference
                .iter()
                .map(|r| (r.temperature_k, r.sigma_1e22_m2 * 1e-22))
                .collect(),
        )
    }

    fn reference_column(&self, f: impl Fn(&ReferenceRow) -> f64) -> Vec<(f64, f64)> {
        self.materials
            .reference
            .iter()
            .map(|r| (r.temperature_k, f(r)))
            .collect()
    }

    pub fn sigma_fca_at(&self, temperature: f64) -> Result<f64> {
        interpolate(
            &self.reference_column(|r| r.sigma_1e22_m2 * 1e-22),
            temperature,
            "σ_FCA",
        )
    }

    /// Material coefficients at `temperature` from the configured source.
    pub fn coefficients_at(&self, temperature: f64) -> Result<NonlinearCoeffs> {
        let sigma = self.sigma_fca_at(temperature)?;
        let (beta, n2) = match self.materials.coefficients {
            CoefficientSource::Reference => (
                interpolate(
                    &self.reference_column(|r| units::cm_per_gw_to_m_per_w(r.beta_cm_per_gw)),
                    temperature,
                    "β_TPA",
                )?,
                interpolate(&self.reference_column(|r| r.n2_nm2_per_w * 1e-18), temperature, "n₂")?,
            ),
            CoefficientSource::Model => (
                crate::materials::tpa_coefficient_si(temperature, &self.tpa_params())?,
                crate::materials::kerr_coefficient(temperature, &self.kerr_params()),
            ),
        };
        NonlinearCoeffs::new(
            n2,
            beta,
            sigma,
            self.materials.mu,
            units::nm_to_m(self.laser.wavelength_nm),
        )
    }
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, k) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{k}' is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(k.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(k.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("override '{spec}' has an empty key")))
}
