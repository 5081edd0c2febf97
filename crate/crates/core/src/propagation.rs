//! Marching solver for the reduced power / free-carrier system
//!
//! ```text
//! dP/dz  = −α_TPA P² − σ N̄ P − α P
//! dN̄/dτ  = β̄_TPA/(2ħω) P² − N̄/τ_c
//! φ(L,τ) = φ(0,τ) + γ S(τ) − (σμ/2) T(τ),   S = ∫P dz,  T = ∫N̄ dz
//! ```
//!
//! Each z-step treats the carrier density as fixed over the step, which turns
//! the power equation into a Bernoulli equation with an exact solution. With
//! no free-carrier absorption the march is therefore exact for any step; the
//! discretization error comes only from the carrier coupling.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{self, LaserSpec, NonlinearCoeffs, PulseEnvelope, TemporalGrid, WaveguideSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Carrier density from the start of each step; first order in dz.
    FrozenCarrier,
    /// Carrier density averaged between the step start and a predicted end
    /// point; second order in dz.
    #[default]
    PredictorCorrector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Initial spatial step (m).
    pub dz: f64,
    pub max_step_halvings: usize,
    /// Relative change of the transmission under one halving that counts as converged.
    pub tol: f64,
    #[serde(default)]
    pub stepper: Stepper,
    /// Carrier density present before the pulse arrives (1/m³).
    #[serde(default)]
    pub carrier_preload: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dz: 10e-6,
            max_step_halvings: 6,
            tol: 1e-5,
            stepper: Stepper::PredictorCorrector,
            carrier_preload: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dz > 0.0) || !self.dz.is_finite() {
            return Err(Error::InvalidArgument(format!("dz must be positive, got {}", self.dz)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.carrier_preload >= 0.0) {
            return Err(Error::InvalidArgument("carrier preload must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub output: PulseEnvelope,
    /// N̄(L, τ) (1/m³).
    pub carriers_out: Vec<f64>,
    /// S(τ) = ∫₀ᴸ P dz (W·m).
    pub s_table: Vec<f64>,
    /// T(τ) = ∫₀ᴸ N̄ dz (1/m²).
    pub t_table: Vec<f64>,
    /// Output over input pulse energy.
    pub transmission: f64,
    pub step_count: usize,
    /// |ΔT|/T between the last two step sizes.
    pub convergence_estimate: f64,
}

/// Coefficients of the reduced system in waveguide units.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    alpha: f64,
    alpha_tpa: f64,
    sigma: f64,
    /// β̄_TPA/(2ħω), (1/m³)/(W²·s).
    generation: f64,
    tau_c: f64,
    preload: f64,
}

impl Coefficients {
    fn new(wg: &WaveguideSpec, nl: &NonlinearCoeffs, cfg: &SolverConfig) -> Self {
        let photon = crate::units::photon_energy_j(nl.wavelength);
        Self {
            alpha: wg.linear_loss,
            alpha_tpa: nl.alpha_tpa(wg.a_eff),
            sigma: nl.sigma_fca,
            generation: nl.beta_tpa * wg.chi / (2.0 * photon),
            tau_c: wg.carrier_lifetime,
            preload: cfg.carrier_preload,
        }
    }
}

struct March {
    power: Vec<f64>,
    carriers: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
}

/// Advances N̄ along τ: exact decay over each sample plus trapezoidal source.
fn carrier_density(power: &[f64], dt: f64, c: &Coefficients, out: &mut [f64]) {
    let decay = (-dt / c.tau_c).exp();
    let k = 0.5 * c.generation * dt;
    let mut n = c.preload;
    let mut prev_sq = power[0] * power[0];
    out[0] = n;
    for i in 1..power.len() {
        let sq = power[i] * power[i];
        n = n * decay + k * (prev_sq * decay + sq);
        out[i] = n;
        prev_sq = sq;
    }
}

/// Exact solution of dP/dz = −aP² − bP over a step h. Returns the end
/// power and ∫P dz over the step.
#[inline]
fn bernoulli_step(p: f64, a: f64, b: f64, h: f64) -> (f64, f64) {
    let bh = b * h;
    let (e, g) = if bh.abs() < 1e-3 {
        // truncation error below 1e-17 relative
        let e = 1.0 - bh * (1.0 - bh * (0.5 - bh * (1.0 / 6.0 - bh * (1.0 / 24.0 - bh / 120.0))));
        let g = h * (1.0 - bh * (0.5 - bh * (1.0 / 6.0 - bh * (1.0 / 24.0 - bh / 120.0))));
        (e, g)
    } else {
        ((-bh).exp(), -(-bh).exp_m1() / b)
    };
    let apg = a * p * g;
    let end = p * e / (1.0 + apg);
    let integral = if apg < 1e-3 {
        p * g * (1.0 - apg * (0.5 - apg * (1.0 / 3.0 - apg * (0.25 - apg * (0.2 - apg / 6.0)))))
    } else {
        apg.ln_1p() / a
    };
    (end, integral)
}

fn march(input: &[f64], dt: f64, length: f64, steps: usize, c: &Coefficients, stepper: Stepper) -> Result<March> {
    let n = input.len();
    let h = length / steps as f64;
    let mut p = input.to_vec();
    let mut carriers = vec![0.0; n];
    let mut next_carriers = vec![0.0; n];
    let mut predicted = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let fca = c.sigma > 0.0;
    carrier_density(&p, dt, c, &mut carriers);

    for _ in 0..steps {
        if fca && stepper == Stepper::PredictorCorrector {
            for i in 0..n {
                predicted[i] = bernoulli_step(p[i], c.alpha_tpa, c.alpha + c.sigma * carriers[i], h).0;
            }
            carrier_density(&predicted, dt, c, &mut next_carriers);
            for i in 0..n {
                let nbar = 0.5 * (carriers[i] + next_carriers[i]);
                let (end, integral) = bernoulli_step(p[i], c.alpha_tpa, c.alpha + c.sigma * nbar, h);
                p[i] = end;
                s[i] += integral;
            }
        } else {
            for i in 0..n {
                let (end, integral) = bernoulli_step(p[i], c.alpha_tpa, c.alpha + c.sigma * carriers[i], h);
                p[i] = end;
                s[i] += integral;
            }
        }
        carrier_density(&p, dt, c, &mut next_carriers);
        for i in 0..n {
            t[i] += 0.5 * h * (carriers[i] + next_carriers[i]);
        }
        std::mem::swap(&mut carriers, &mut next_carriers);
    }
    if let Some(i) = p.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Instability(format!(
            "power sample {i} became {} with dz = {h:e} m",
            p[i]
        )));
    }
    Ok(March {
        power: p,
        carriers,
        s,
        t,
    })
}

fn energy_ratio(out: &[f64], input: &[f64], dt: f64, fallback: f64) -> f64 {
    let e_in = pulse::trapezoid(input, dt);
    if e_in > 0.0 {
        pulse::trapezoid(out, dt) / e_in
    } else {
        fallback
    }
}

/// Propagates `input` through the waveguide, halving dz until the pulse
/// transmission changes by less than `cfg.tol`.
pub fn propagate(
    input: &PulseEnvelope,
    wg: &WaveguideSpec,
    nl: &NonlinearCoeffs,
    cfg: &SolverConfig,
) -> Result<PropagationResult> {
    wg.validate()?;
    nl.validate()?;
    cfg.validate()?;
    if cfg.dz > wg.length / 100.0 {
        return Err(Error::Precondition(format!(
            "dz = {:e} m exceeds L/100 = {:e} m",
            cfg.dz,
            wg.length / 100.0
        )));
    }
    let c = Coefficients::new(wg, nl, cfg);
    let dt = input.grid.dt();
    let linear = wg.linear_transmission();
    let mut steps = (wg.length / cfg.dz).ceil() as usize;
    let mut prev = march(&input.power, dt, wg.length, steps, &c, cfg.stepper)?;
    let mut prev_t = energy_ratio(&prev.power, &input.power, dt, linear);
    let mut estimate = f64::INFINITY;
    for _ in 0..cfg.max_step_halvings {
        steps *= 2;
        let cur = march(&input.power, dt, wg.length, steps, &c, cfg.stepper)?;
        let cur_t = energy_ratio(&cur.power, &input.power, dt, linear);
        estimate = (cur_t - prev_t).abs() / cur_t;
        prev = cur;
        prev_t = cur_t;
        if estimate < cfg.tol {
            return finish(input, prev, prev_t, steps, estimate, nl, wg);
        }
    }
    Err(Error::Convergence {
        halvings: cfg.max_step_halvings,
        estimate,
    })
}

fn finish(
    input: &PulseEnvelope,
    m: March,
    transmission: f64,
    steps: usize,
    estimate: f64,
    nl: &NonlinearCoeffs,
    wg: &WaveguideSpec,
) -> Result<PropagationResult> {
    let gamma = nl.gamma(wg.a_eff);
    let fcd = 0.5 * nl.sigma_fca * nl.mu;
    let phase: Vec<f64> = input
        .phase
        .iter()
        .zip(m.s.iter().zip(&m.t))
        .map(|(phi0, (s, t))| phi0 + gamma * s - fcd * t)
        .collect();
    Ok(PropagationResult {
        output: PulseEnvelope::new(input.grid, m.power, phase)?,
        carriers_out: m.carriers,
        s_table: m.s,
        t_table: m.t,
        transmission,
        step_count: steps,
        convergence_estimate: estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPoint {
    /// Time-averaged power at the waveguide input (W).
    pub p_in_avg: f64,
    pub peak_power: f64,
    /// P_in/P_out of the waveguide alone.
    pub inverse_transmission: f64,
    pub convergence_estimate: f64,
}

/// Inverse waveguide transmission for sech² pulse trains of the given average powers.
pub fn transmission_curve(
    avg_powers: &[f64],
    laser: &LaserSpec,
    grid: TemporalGrid,
    wg: &WaveguideSpec,
    nl: &NonlinearCoeffs,
    cfg: &SolverConfig,
) -> Result<Vec<TransmissionPoint>> {
    avg_powers
        .par_iter()
        .map(|&avg| {
            let peak = pulse::peak_from_average(avg, laser)?;
            if peak == 0.0 {
                return Ok(TransmissionPoint {
                    p_in_avg: avg,
                    peak_power: 0.0,
                    inverse_transmission: 1.0 / wg.linear_transmission(),
                    convergence_estimate: 0.0,
                });
            }
            let input = pulse::sech2_pulse(grid, peak, laser.fwhm, 0.0)?;
            let r = propagate(&input, wg, nl, cfg)?;
            Ok(TransmissionPoint {
                p_in_avg: avg,
                peak_power: peak,
                inverse_transmission: 1.0 / r.transmission,
                convergence_estimate: r.convergence_estimate,
            })
        })
        .collect()
}

/// S(τ) and T(τ) for one (peak power, α_TPA) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StTable {
    pub grid: TemporalGrid,
    pub peak_power: f64,
    pub alpha_tpa: f64,
    pub sigma_fca: f64,
    pub length: f64,
    /// Input power profile the table was computed for.
    pub input_power: Vec<f64>,
    /// Modeled output power profile.
    pub output_power: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub transmission: f64,
    pub convergence_estimate: f64,
}

/// Runs the solver over the Cartesian product of peak powers and α_TPA
/// values with γ = μ = 0, keeping the S and T integrals. Output order is
/// peak-power major.
pub fn st_tables(
    peak_powers: &[f64],
    alpha_tpa: &[f64],
    sigma_fca: f64,
    wg: &WaveguideSpec,
    laser: &LaserSpec,
    grid: TemporalGrid,
    cfg: &SolverConfig,
) -> Result<Vec<StTable>> {
    if peak_powers.is_empty() || alpha_tpa.is_empty() {
        return Err(Error::InvalidArgument("S/T grids must be non-empty".into()));
    }
    for g in [peak_powers, alpha_tpa] {
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("S/T grids must be strictly ascending".into()));
        }
    }
    let jobs: Vec<(f64, f64)> = peak_powers
        .iter()
        .flat_map(|p| alpha_tpa.iter().map(move |a| (*p, *a)))
        .collect();
    jobs.par_iter()
        .map(|&(peak, a_tpa)| st_table(peak, a_tpa, sigma_fca, wg, laser, grid, cfg))
        .collect()
}

pub fn st_table(
    peak_power: f64,
    alpha_tpa: f64,
    sigma_fca: f64,
    wg: &WaveguideSpec,
    laser: &LaserSpec,
    grid: TemporalGrid,
    cfg: &SolverConfig,
) -> Result<StTable> {
    let nl = NonlinearCoeffs::from_waveguide_params(0.0, alpha_tpa, sigma_fca, 0.0, wg, laser.wavelength)?;
    let input = pulse::sech2_pulse(grid, peak_power, laser.fwhm, 0.0)?;
    let r = propagate(&input, wg, &nl, cfg)?;
    Ok(StTable {
        grid,
        peak_power,
        alpha_tpa,
        sigma_fca,
        length: wg.length,
        input_power: input.power,
        output_power: r.output.power,
        s: r.s_table,
        t: r.t_table,
        transmission: r.transmission,
        convergence_estimate: r.convergence_estimate,
    })
}

/// φ(τ) = γS(τ) − (σμ/2)T(τ).
pub fn phase_from_ansatz(gamma: f64, mu: f64, sigma_fca: f64, s: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if s.len() != t.len() {
        return Err(Error::InvalidArgument(format!(
            "S and T tables differ in length ({} vs {})",
            s.len(),
            t.len()
        )));
    }
    let fcd = 0.5 * sigma_fca * mu;
    Ok(s.iter().zip(t).map(|(s, t)| gamma * s - fcd * t).collect())
}

const ST_MAGIC: &str = "# st-table v1";

impl StTable {
    /// Columnar text: a commented header with the grid and run parameters,
    /// then one `tau_s S_W_m T_per_m2 P_in_W P_out_W` line per sample.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 * self.s.len());
        let _ = writeln!(out, "{ST_MAGIC}");
        let _ = writeln!(
            out,
            "# n_samples={} dt_s={:e} t0_s={:e}",
            self.grid.len(),
            self.grid.dt(),
            self.grid.t0()
        );
        let _ = writeln!(
            out,
            "# peak_power_W={:e} alpha_tpa_per_W_m={:e} sigma_fca_m2={:e} length_m={:e} transmission={:e} convergence={:e}",
            self.peak_power, self.alpha_tpa, self.sigma_fca, self.length, self.transmission, self.convergence_estimate
        );
        let _ = writeln!(out, "tau_s\tS_W_m\tT_per_m2\tP_in_W\tP_out_W");
        for i in 0..self.s.len() {
            let _ = writeln!(
                out,
                "{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                self.grid.time(i),
                self.s[i],
                self.t[i],
                self.input_power[i],
                self.output_power[i]
            );
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == ST_MAGIC => {}
            _ => return Err(perr(1, "missing st-table header".into())),
        }
        let mut kv = std::collections::HashMap::new();
        let mut s = Vec::new();
        let mut t = Vec::new();
        let mut p = Vec::new();
        let mut q = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        let v: f64 = v.parse().map_err(|_| perr(i + 1, format!("bad header value {tok}")))?;
                        kv.insert(k.to_string(), v);
                    }
                }
                continue;
            }
            if line.starts_with("tau_s") {
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(i + 1, format!("bad number: {e}")))?;
            if cols.len() != 5 {
                return Err(perr(i + 1, format!("expected 5 columns, got {}", cols.len())));
            }
            s.push(cols[1]);
            t.push(cols[2]);
            p.push(cols[3]);
            q.push(cols[4]);
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| perr(2, format!("header is missing {k}")))
        };
        let n = get("n_samples")? as usize;
        let grid = TemporalGrid::new(n, get("dt_s")?, get("t0_s")?)?;
        if s.len() != n {
            return Err(perr(0, format!("expected {n} rows, found {}", s.len())));
        }
        Ok(Self {
            grid,
            peak_power: get("peak_power_W")?,
            alpha_tpa: get("alpha_tpa_per_W_m")?,
            sigma_fca: get("sigma_fca_m2")?,
            length: get("length_m")?,
            input_power: p,
            output_power: q,
            s,
            t,
            transmission: get("transmission")?,
            convergence_estimate: get("convergence")?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
