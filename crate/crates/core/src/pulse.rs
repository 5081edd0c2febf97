//! Time grids, pulse envelopes and the waveguide/laser records shared by the
//! solver, the fitters and the phase retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Ratio between the window width and the pulse FWHM below which a pulse
/// is rejected as not fitting its grid.
pub const MIN_WINDOW_OVER_FWHM: f64 = 8.0;

/// Largest edge-to-peak power ratio tolerated for a contained pulse.
pub const EDGE_DECAY: f64 = 1e-6;

/// Uniform sampling of the retarded time τ = t − z/v_g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalGrid {
    n_samples: usize,
    dt: f64,
    t0: f64,
}

impl TemporalGrid {
    pub fn new(n_samples: usize, dt: f64, t0: f64) -> Result<Self> {
        if n_samples < 2 || !n_samples.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two >= 2, got {n_samples}"
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive and finite, got dt={dt}"
            )));
        }
        Ok(Self { n_samples, dt, t0 })
    }

    /// Grid of `n_samples` points over `window` seconds with τ = 0 at index n/2.
    pub fn centered(n_samples: usize, window: f64) -> Result<Self> {
        let dt = window / n_samples as f64;
        Self::new(n_samples, dt, -(n_samples as f64 / 2.0) * dt)
    }

    /// 4096 samples over 64 ps.
    pub fn default_for_ps_pulses() -> Self {
        Self::centered(4096, 64e-12).expect("static grid")
    }

    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(|i| self.time(i))
    }

    /// n·dt, the full window width.
    pub fn window(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    /// Distance between the first and last sample, (n−1)·dt.
    pub fn span(&self) -> f64 {
        (self.n_samples - 1) as f64 * self.dt
    }

    pub fn same_as(&self, other: &TemporalGrid) -> bool {
        self.n_samples == other.n_samples
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt
    }

    pub(crate) fn ensure_same(&self, other: &TemporalGrid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{what}: temporal grids differ")))
        }
    }
}

/// Sampled power P(τ) and phase φ(τ) of an optical pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub grid: TemporalGrid,
    pub power: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PulseEnvelope {
    pub fn new(grid: TemporalGrid, power: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if power.len() != grid.len() || phase.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "envelope length mismatch: grid {}, power {}, phase {}",
                grid.len(),
                power.len(),
                phase.len()
            )));
        }
        if let Some(i) = power.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power must be finite and non-negative (sample {i} = {})",
                power[i]
            )));
        }
        if let Some(i) = phase.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("phase sample {i} is not finite")));
        }
        Ok(Self { grid, power, phase })
    }

    /// Envelope with zero phase.
    pub fn from_power(grid: TemporalGrid, power: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, power, vec![0.0; n])
    }

    pub fn peak_power(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    pub fn peak_index(&self) -> usize {
        argmax(&self.power)
    }

    /// True when the power at both window edges is below `EDGE_DECAY` of the peak.
    pub fn decays_at_edges(&self) -> bool {
        let peak = self.peak_power();
        let last = self.power.len() - 1;
        self.power[0] <= EDGE_DECAY * peak && self.power[last] <= EDGE_DECAY * peak
    }

    pub fn energy(&self) -> f64 {
        pulse_energy(self)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    #[default]
    Sech2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserSpec {
    /// Intensity FWHM (s).
    pub fwhm: f64,
    /// Repetition rate Γ (Hz).
    pub rep_rate: f64,
    /// Center wavelength (m).
    pub wavelength: f64,
    pub shape: PulseShape,
}

impl LaserSpec {
    pub fn new(fwhm: f64, rep_rate: f64, wavelength: f64) -> Result<Self> {
        for (name, v) in [("fwhm", fwhm), ("rep_rate", rep_rate), ("wavelength", wavelength)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "laser {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            fwhm,
            rep_rate,
            wavelength,
            shape: PulseShape::Sech2,
        })
    }

    /// 4.9 ps, 50 MHz, 1551.8 nm.
    pub fn c_band_default() -> Self {
        Self::new(4.9e-12, 50e6, 1551.8e-9).expect("static laser")
    }

    pub fn photon_energy(&self) -> f64 {
        units::photon_energy_j(self.wavelength)
    }

    /// sech² width parameter T₀.
    pub fn t0(&self) -> f64 {
        sech2_t0(self.fwhm)
    }
}

/// Waveguide geometry, linear loss and mode-overlap factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    /// Length L (m).
    pub length: f64,
    /// Linear power loss α (1/m).
    pub linear_loss: f64,
    /// SPM effective area (m²).
    pub a_eff: f64,
    /// Sixth-order overlap χ (1/m⁴), β̄_TPA = β_TPA·χ.
    pub chi: f64,
    /// Set when χ was not supplied and the uniform-mode value 1/A_eff² is used.
    pub chi_uniform_approx: bool,
    /// Free-carrier lifetime (s).
    pub carrier_lifetime: f64,
}

impl WaveguideSpec {
    /// Uses χ = 1/A_eff² and a 1 ns carrier lifetime.
    pub fn new(length: f64, linear_loss: f64, a_eff: f64) -> Result<Self> {
        let wg = Self {
            length,
            linear_loss,
            a_eff,
            chi: 1.0 / (a_eff * a_eff),
            chi_uniform_approx: true,
            carrier_lifetime: 1e-9,
        };
        wg.validate()?;
        Ok(wg)
    }

    pub fn with_chi(mut self, chi: f64) -> Result<Self> {
        self.chi = chi;
        self.chi_uniform_approx = false;
        self.validate()?;
        Ok(self)
    }

    pub fn with_carrier_lifetime(mut self, tau_c: f64) -> Result<Self> {
        self.carrier_lifetime = tau_c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("a_eff", self.a_eff),
            ("chi", self.chi),
            ("carrier_lifetime", self.carrier_lifetime),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "waveguide {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.linear_loss >= 0.0) || !self.linear_loss.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "linear loss must be non-negative, got {}",
                self.linear_loss
            )));
        }
        Ok(())
    }

    /// (1 − e^{−αL})/α, or L for a lossless guide.
    pub fn effective_length(&self) -> f64 {
        let a = self.linear_loss;
        if a * self.length < 1e-12 {
            self.length
        } else {
            -(-a * self.length).exp_m1() / a
        }
    }

    pub fn linear_transmission(&self) -> f64 {
        (-self.linear_loss * self.length).exp()
    }
}

/// Material nonlinear coefficients at a given wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearCoeffs {
    /// Kerr coefficient (m²/W).
    pub n2: f64,
    /// TPA coefficient (m/W).
    pub beta_tpa: f64,
    /// FCA cross-section (m²).
    pub sigma_fca: f64,
    /// Free-carrier dispersion strength relative to FCA.
    pub mu: f64,
    /// Wavelength the coefficients refer to (m).
    pub wavelength: f64,
}

impl NonlinearCoeffs {
    pub fn new(n2: f64, beta_tpa: f64, sigma_fca: f64, mu: f64, wavelength: f64) -> Result<Self> {
        let c = Self {
            n2,
            beta_tpa,
            sigma_fca,
            mu,
            wavelength,
        };
        c.validate()?;
        Ok(c)
    }

    /// All nonlinear terms off.
    pub fn zero(wavelength: f64) -> Self {
        Self {
            n2: 0.0,
            beta_tpa: 0.0,
            sigma_fca: 0.0,
            mu: 0.0,
            wavelength,
        }
    }

    /// Builds material coefficients from waveguide parameters γ and α_TPA.
    pub fn from_waveguide_params(
        gamma: f64,
        alpha_tpa: f64,
        sigma_fca: f64,
        mu: f64,
        wg: &WaveguideSpec,
        wavelength: f64,
    ) -> Result<Self> {
        Self::new(
            gamma * wg.a_eff / units::wavenumber(wavelength),
            alpha_tpa * wg.a_eff,
            sigma_fca,
            mu,
            wavelength,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n2", self.n2),
            ("beta_tpa", self.beta_tpa),
            ("sigma_fca", self.sigma_fca),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidArgument("mu must be finite".into()));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::InvalidArgument("wavelength must be positive".into()));
        }
        Ok(())
    }

    /// γ = k₀n₂/A_eff (1/(W·m)).
    pub fn gamma(&self, a_eff: f64) -> f64 {
        units::wavenumber(self.wavelength) * self.n2 / a_eff
    }

    /// α_TPA = β_TPA/A_eff (1/(W·m)).
    pub fn alpha_tpa(&self, a_eff: f64) -> f64 {
        self.beta_tpa / a_eff
    }
}

/// T₀ = FWHM / (2 arccosh √2).
pub fn sech2_t0(fwhm: f64) -> f64 {
    fwhm / (2.0 * std::f64::consts::SQRT_2.acosh())
}

/// Samples P(τ) = P_pk sech²((τ − center)/T₀) with zero phase.
pub fn sech2_pulse(grid: TemporalGrid, peak_power: f64, fwhm: f64, center: f64) -> Result<PulseEnvelope> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidArgument(format!("fwhm must be positive, got {fwhm}")));
    }
    if !(peak_power >= 0.0) || !peak_power.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "peak power must be non-negative, got {peak_power}"
        )));
    }
    if grid.window() < MIN_WINDOW_OVER_FWHM * fwhm {
        return Err(Error::Precondition(format!(
            "window {:.3e} s is shorter than {MIN_WINDOW_OVER_FWHM} x FWHM ({:.3e} s)",
            grid.window(),
            fwhm
        )));
    }
    let t0 = sech2_t0(fwhm);
    let power: Vec<f64> = grid
        .times()
        .map(|t| {
            let s = 1.0 / ((t - center) / t0).cosh();
            peak_power * s * s
        })
        .collect();
    let pulse = PulseEnvelope::from_power(grid, power)?;
    if peak_power > 0.0 && !pulse.decays_at_edges() {
        return Err(Error::Precondition(format!(
            "pulse centred at {center:.3e} s does not decay to {EDGE_DECAY:e} of peak inside the window"
        )));
    }
    Ok(pulse)
}

/// Peak power of a sech² pulse train with the given average power.
pub fn peak_from_average(avg_power: f64, laser: &LaserSpec) -> Result<f64> {
    if !(avg_power >= 0.0) || !avg_power.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "average power must be non-negative, got {avg_power}"
        )));
    }
    match laser.shape {
        PulseShape::Sech2 => Ok(avg_power / (laser.rep_rate * 2.0 * laser.t0())),
    }
}

/// Trapezoidal integral of P(τ) over the grid (J).
pub fn pulse_energy(pulse: &PulseEnvelope) -> f64 {
    trapezoid(&pulse.power, pulse.grid.dt())
}

pub(crate) fn trapezoid(v: &[f64], dt: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = v.iter().sum();
            dt * (inner - 0.5 * (v[0] + v[n - 1]))
        }
    }
}
