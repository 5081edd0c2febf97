//! Gerchberg–Saxton reconstruction of the temporal phase of a pulse from its
//! power spectrum and an estimate of its temporal envelope, plus the baseline
//! and fiber-background corrections applied to reconstructed phases.
//!
//! Spectral samples follow the FFT bin order of the pulse's [`TemporalGrid`].
//! Bin `k` with FFT frequency `f_k` holds the optical angular-frequency offset
//! `Δω = −2π f_k` from the carrier (fields written as `A(τ)e^{−iω₀t}`).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{argmax, PulseEnvelope, TemporalGrid};
use crate::units::{dbm_to_mw, m_to_nm, nm_to_m, s_to_ps, C};

/// Spectral density, relative to the peak, above which a sample counts as
/// part of the spectrum's support.
pub const SUPPORT_FLOOR: f64 = 1e-4;

/// Fraction of peak power defining the region where phases are compared or fitted.
pub const SIGNIFICANT_POWER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    /// Strictly increasing wavelengths (m).
    pub wavelengths: Vec<f64>,
    /// Linear spectral density per unit wavelength (arbitrary units).
    pub psd: Vec<f64>,
    /// Instrument resolution bandwidth (m). Carried as metadata only.
    pub resolution_bw: f64,
}

impl SpectrumRecord {
    pub fn new(wavelengths: Vec<f64>, psd: Vec<f64>, resolution_bw: f64) -> Result<Self> {
        if wavelengths.len() != psd.len() {
            return Err(Error::InvalidArgument(format!(
                "spectrum has {} wavelengths but {} PSD values",
                wavelengths.len(),
                psd.len()
            )));
        }
        if wavelengths.len() < 2 {
            return Err(Error::InvalidArgument("spectrum needs at least two samples".into()));
        }
        if wavelengths.windows(2).any(|w| !(w[1] > w[0])) || !(wavelengths[0] > 0.0) {
            return Err(Error::InvalidArgument(
                "wavelengths must be positive and strictly increasing".into(),
            ));
        }
        if psd.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("PSD values must be finite and >= 0".into()));
        }
        Ok(Self {
            wavelengths,
            psd,
            resolution_bw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitPhase {
    #[default]
    Zero,
    /// φ₀(τ) = c·τ² with c in rad/s², τ measured from the grid centre.
    Quadratic(f64),
    /// φ₀(τ) = κ·|a(τ)|²/max|a|², the shape of a self-phase-modulation phase
    /// with peak κ (rad).
    IntensityScaled(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub max_iters: usize,
    /// Target normalized spectral-magnitude RMS error.
    pub err_tol: f64,
    pub init_phase: InitPhase,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            err_tol: 1e-6,
            init_phase: InitPhase::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedPhase {
    pub grid: TemporalGrid,
    /// Unwrapped phase, zero at `peak_index` (rad).
    pub phase: Vec<f64>,
    /// Normalized temporal power that was imposed (peak 1).
    pub intensity: Vec<f64>,
    pub peak_index: usize,
    pub final_error: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Spectral error before each magnitude projection.
    pub error_history: Vec<f64>,
}

impl RetrievedPhase {
    /// Indices where the imposed power exceeds `SIGNIFICANT_POWER` of its peak.
    pub fn significant(&self) -> Vec<usize> {
        (0..self.intensity.len())
            .filter(|&i| self.intensity[i] > SIGNIFICANT_POWER)
            .collect()
    }

    fn with_phase(&self, phase: Vec<f64>) -> Self {
        Self { phase, ..self.clone() }
    }
}

/// Optical angular-frequency offset of every FFT bin of the grid.
pub fn bin_offsets(grid: &TemporalGrid) -> Vec<f64> {
    let n = grid.len();
    let df = 1.0 / (n as f64 * grid.dt());
    (0..n)
        .map(|k| {
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            -2.0 * PI * kk * df
        })
        .collect()
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Unitary transform (Σ|x|² is preserved).
fn transform(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
    plan.process(buf);
    let s = 1.0 / (buf.len() as f64).sqrt();
    for x in buf.iter_mut() {
        *x *= s;
    }
}

/// Spectral field of a sampled envelope, in bin order, with unit energy.
pub fn spectrum_of(pulse: &PulseEnvelope) -> Vec<Complex64> {
    let (fwd, _) = plans(pulse.grid.len());
    let mut buf: Vec<Complex64> = pulse
        .power
        .iter()
        .zip(&pulse.phase)
        .map(|(p, ph)| Complex64::from_polar(p.sqrt(), *ph))
        .collect();
    transform(&fwd, &mut buf);
    normalize_complex(&mut buf);
    buf
}

fn normalize_complex(v: &mut [Complex64]) {
    let e: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    if e > 0.0 {
        let s = 1.0 / e.sqrt();
        v.iter_mut().for_each(|x| *x *= s);
    }
}

fn normalize(v: &mut [f64]) {
    let e: f64 = v.iter().map(|x| x * x).sum();
    if e > 0.0 {
        let s = 1.0 / e.sqrt();
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Spectral density per unit wavelength sampled at every FFT bin, sorted by
/// wavelength. Inverse of [`resample_spectrum`] for spectra synthesized on the grid.
pub fn spectrum_record_from_field(
    spectral: &[Complex64],
    grid: &TemporalGrid,
    center_wavelength: f64,
) -> Result<SpectrumRecord> {
    let w0 = 2.0 * PI * C / center_wavelength;
    let mut rows: Vec<(f64, f64)> = bin_offsets(grid)
        .iter()
        .zip(spectral)
        .map(|(dw, a)| {
            let lambda = 2.0 * PI * C / (w0 + dw);
            // per-frequency density → per-wavelength density
            (lambda, a.norm_sqr() * 2.0 * PI * C / (lambda * lambda))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dw = 2.0 * PI / (grid.len() as f64 * grid.dt());
    let rbw = center_wavelength * center_wavelength * dw / (2.0 * PI * C);
    SpectrumRecord::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        rbw,
    )
}

/// Maps a measured spectrum onto the grid's conjugate frequency axis and
/// returns unit-energy spectral magnitudes in FFT bin order.
pub fn resample_spectrum(s: &SpectrumRecord, grid: &TemporalGrid, center_wavelength: f64) -> Result<Vec<f64>> {
    let w0 = 2.0 * PI * C / center_wavelength;
    let nyquist = PI / grid.dt();
    // ascending angular-frequency offset with per-frequency density
    let mut pts: Vec<(f64, f64)> = s
        .wavelengths
        .iter()
        .zip(&s.psd)
        .map(|(l, p)| (2.0 * PI * C / l - w0, p * l * l / (2.0 * PI * C)))
        .collect();
    pts.reverse();
    let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidArgument("spectrum is identically zero".into()));
    }
    if let Some((w, _)) = pts.iter().find(|(w, p)| *p > SUPPORT_FLOOR * peak && w.abs() > nyquist) {
        return Err(Error::Aliasing(format!(
            "spectral support reaches {:.3e} rad/s offset, beyond the grid's Nyquist limit {:.3e} rad/s",
            w, nyquist
        )));
    }
    let (w_lo, w_hi) = (pts[0].0, pts[pts.len() - 1].0);
    let mut mag: Vec<f64> = bin_offsets(grid)
        .iter()
        .map(|&w| {
            if w < w_lo || w > w_hi {
                return 0.0;
            }
            let j = pts.partition_point(|p| p.0 <= w);
            let density = if j == 0 {
                pts[0].1
            } else if j == pts.len() {
                pts[j - 1].1
            } else {
                let (x0, y0) = pts[j - 1];
                let (x1, y1) = pts[j];
                y0 + (y1 - y0) * (w - x0) / (x1 - x0)
            };
            density.max(0.0).sqrt()
        })
        .collect();
    normalize(&mut mag);
    Ok(mag)
}

/// Alternating projections between the temporal magnitude and the spectral
/// magnitude constraints.
pub fn gerchberg_saxton(
    grid: TemporalGrid,
    spec_mag: &[f64],
    time_mag: &[f64],
    cfg: &RetrievalConfig,
) -> Result<RetrievedPhase> {
    let n = grid.len();
    if spec_mag.len() != n || time_mag.len() != n {
        return Err(Error::InvalidArgument(format!(
            "magnitudes must have the grid length {n} (spectral {}, temporal {})",
            spec_mag.len(),
            time_mag.len()
        )));
    }
    if cfg.max_iters < 1 || !(cfg.err_tol > 0.0) {
        return Err(Error::InvalidArgument("max_iters must be >= 1 and err_tol > 0".into()));
    }
    if spec_mag.iter().chain(time_mag).any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("magnitudes must be finite and >= 0".into()));
    }
    let mut target = spec_mag.to_vec();
    normalize(&mut target);
    let mut mag = time_mag.to_vec();
    normalize(&mut mag);
    let peak_index = argmax(&mag);
    let peak = mag[peak_index];
    if peak == 0.0 || target.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidArgument("magnitudes are identically zero".into()));
    }

    let centre = grid.time(n / 2);
    let mut field: Vec<Complex64> = (0..n)
        .map(|i| {
            let phi0 = match cfg.init_phase {
                InitPhase::Zero => 0.0,
                InitPhase::Quadratic(c) => {
                    let t = grid.time(i) - centre;
                    c * t * t
                }
                InitPhase::IntensityScaled(k) => k * (mag[i] / peak).powi(2),
            };
            Complex64::from_polar(mag[i], phi0)
        })
        .collect();

    let (fwd, inv) = plans(n);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        transform(&fwd, &mut field);
        let err = field
            .iter()
            .zip(&target)
            .map(|(a, s)| (a.norm() - s).powi(2))
            .sum::<f64>()
            .sqrt();
        history.push(err);
        if err < cfg.err_tol {
            converged = true;
            transform(&inv, &mut field);
            break;
        }
        for (a, s) in field.iter_mut().zip(&target) {
            *a = project(*a, *s);
        }
        transform(&inv, &mut field);
        for (a, m) in field.iter_mut().zip(&mag) {
            *a = project(*a, *m);
        }
    }

    let phase = unwrap_from(&field.iter().map(|a| a.arg()).collect::<Vec<_>>(), peak_index);
    Ok(RetrievedPhase {
        grid,
        phase,
        intensity: mag.iter().map(|m| (m / peak).powi(2)).collect(),
        peak_index,
        final_error: *history.last().unwrap_or(&f64::NAN),
        iterations_used: history.len(),
        converged,
        error_history: history,
    })
}

/// Replaces the modulus of `a` by `m`, keeping its phase.
#[inline]
fn project(a: Complex64, m: f64) -> Complex64 {
    let r = a.norm();
    if r > 0.0 {
        a * (m / r)
    } else {
        Complex64::new(m, 0.0)
    }
}

/// Unwraps outward from `origin` and shifts the result to zero there.
fn unwrap_from(wrapped: &[f64], origin: usize) -> Vec<f64> {
    let n = wrapped.len();
    let mut out = vec![0.0; n];
    let step = |prev_wrapped: f64, cur: f64| {
        let mut d = cur - prev_wrapped;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        d
    };
    for i in origin + 1..n {
        out[i] = out[i - 1] + step(wrapped[i - 1], wrapped[i]);
    }
    for i in (0..origin).rev() {
        out[i] = out[i + 1] + step(wrapped[i + 1], wrapped[i]);
    }
    out
}

/// Runs one retrieval per seed and keeps the one with the lowest final error,
/// returned with its seed. Ties keep the earlier seed.
pub fn gerchberg_saxton_multistart(
    grid: TemporalGrid,
    spec_mag: &[f64],
    time_mag: &[f64],
    base: &RetrievalConfig,
    seeds: &[InitPhase],
) -> Result<(RetrievedPhase, InitPhase)> {
    let mut best: Option<(RetrievedPhase, InitPhase)> = None;
    for seed in seeds {
        let cfg = RetrievalConfig {
            init_phase: *seed,
            ..*base
        };
        let r = gerchberg_saxton(grid, spec_mag, time_mag, &cfg)?;
        if best.as_ref().is_none_or(|b| r.final_error < b.0.final_error) {
            best = Some((r, *seed));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no retrieval seeds given".into()))
}

/// Seeds spanning peak SPM phases from 0.25 to 16 rad.
pub fn default_seeds() -> Vec<InitPhase> {
    [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|k| InitPhase::IntensityScaled(*k))
        .collect()
}

/// The time-reversed conjugate solution φ(τ) → −φ(−τ), which has the same
/// spectral and (for symmetric envelopes) temporal magnitudes.
pub fn time_reversed_twin(r: &RetrievedPhase) -> RetrievedPhase {
    let n = r.phase.len();
    let mirror = |i: usize| (n - i) % n;
    let mut phase: Vec<f64> = (0..n).map(|i| -r.phase[mirror(i)]).collect();
    let intensity: Vec<f64> = (0..n).map(|i| r.intensity[mirror(i)]).collect();
    let peak_index = mirror(r.peak_index);
    let off = phase[peak_index];
    phase.iter_mut().for_each(|p| *p -= off);
    RetrievedPhase {
        phase,
        intensity,
        peak_index,
        ..r.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseComparison {
    /// RMS difference over the significant-power region (rad).
    pub rms: f64,
    /// True when the time-reversed twin matched better.
    pub twin: bool,
    pub oriented: RetrievedPhase,
}

/// Compares a retrieved phase with a reference on the samples where
/// `reference_power` exceeds `SIGNIFICANT_POWER` of its peak, after shifting
/// the reference to zero at the retrieval's peak sample. Both orientations are
/// scored and the better one returned.
pub fn compare_phases(r: &RetrievedPhase, reference: &[f64], reference_power: &[f64]) -> Result<PhaseComparison> {
    if reference.len() != r.phase.len() || reference_power.len() != r.phase.len() {
        return Err(Error::InvalidArgument("phase comparison on mismatched grids".into()));
    }
    let pk = reference_power.iter().copied().fold(0.0, f64::max);
    let mask: Vec<usize> = (0..reference.len())
        .filter(|&i| reference_power[i] > SIGNIFICANT_POWER * pk)
        .collect();
    let score = |cand: &RetrievedPhase| {
        let off = reference[cand.peak_index];
        let ss: f64 = mask
            .iter()
            .map(|&i| (cand.phase[i] - (reference[i] - off)).powi(2))
            .sum();
        (ss / mask.len().max(1) as f64).sqrt()
    };
    let twin = time_reversed_twin(r);
    let (a, b) = (score(r), score(&twin));
    Ok(if b < a {
        PhaseComparison {
            rms: b,
            twin: true,
            oriented: twin,
        }
    } else {
        PhaseComparison {
            rms: a,
            twin: false,
            oriented: r.clone(),
        }
    })
}

/// Picks the orientation whose phase correlates positively with `shape`
/// (e.g. the expected Kerr phase profile) over the significant region.
pub fn orient_like(r: &RetrievedPhase, shape: &[f64]) -> Result<RetrievedPhase> {
    if shape.len() != r.phase.len() {
        return Err(Error::InvalidArgument("orientation shape has the wrong length".into()));
    }
    let idx = r.significant();
    let corr = |c: &RetrievedPhase| -> f64 {
        let off = shape[c.peak_index];
        idx.iter().map(|&i| c.phase[i] * (shape[i] - off)).sum()
    };
    let twin = time_reversed_twin(r);
    Ok(if corr(&twin) > corr(r) { twin } else { r.clone() })
}

/// Subtracts `reference` from every entry. The reference itself maps to zero.
pub fn baseline_correct(phases: &[RetrievedPhase], reference: &RetrievedPhase) -> Result<Vec<RetrievedPhase>> {
    phases
        .iter()
        .map(|p| {
            p.grid.ensure_same(&reference.grid, "baseline correction")?;
            if p.phase.len() != reference.phase.len() {
                return Err(Error::InvalidArgument("baseline correction: length mismatch".into()));
            }
            Ok(p.with_phase(p.phase.iter().zip(&reference.phase).map(|(a, b)| a - b).collect()))
        })
        .collect()
}

/// Removes the self-phase modulation picked up in the input fiber,
/// φ_fib(τ) = (γL)_fiber·P_launched(τ).
pub fn subtract_fiber_background(
    phase: &RetrievedPhase,
    fiber_gamma_l: f64,
    launched: &PulseEnvelope,
) -> Result<RetrievedPhase> {
    phase.grid.ensure_same(&launched.grid, "fiber background")?;
    if !fiber_gamma_l.is_finite() {
        return Err(Error::InvalidArgument("fiber γL must be finite".into()));
    }
    Ok(phase.with_phase(
        phase
            .phase
            .iter()
            .zip(&launched.power)
            .map(|(p, pw)| p - fiber_gamma_l * pw)
            .collect(),
    ))
}

const PHASE_MAGIC: &str = "# retrieved-phase v1";

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

impl SpectrumRecord {
    /// Two columns, wavelength (nm) and linear PSD, after a short header.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * self.psd.len());
        let _ = writeln!(out, "# scale: linear");
        let _ = writeln!(out, "# resolution_nm: {:e}", m_to_nm(self.resolution_bw));
        let _ = writeln!(out, "wavelength_nm\tpsd");
        for (l, p) in self.wavelengths.iter().zip(&self.psd) {
            let _ = writeln!(out, "{:.9}\t{:e}", m_to_nm(*l), p);
        }
        out
    }

    /// Accepts `# scale: linear` (default) or `# scale: dbm`, in which case
    /// the second column is converted from dBm to mW.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut dbm = false;
        let mut rbw = 0.0;
        let mut wl = Vec::new();
        let mut psd = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    match k.trim() {
                        "scale" => match v.trim().to_ascii_lowercase().as_str() {
                            "linear" => dbm = false,
                            "dbm" => dbm = true,
                            other => return Err(parse_error(path, i + 1, format!("unknown scale '{other}'"))),
                        },
                        "resolution_nm" => {
                            rbw = nm_to_m(
                                v.trim()
                                    .parse()
                                    .map_err(|_| parse_error(path, i + 1, "bad resolution"))?,
                            )
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|c| !c.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("expected 2 columns, got {}", cols.len()),
                ));
            }
            let l: f64 = cols[0]
                .parse()
                .map_err(|_| parse_error(path, i + 1, format!("bad wavelength '{}'", cols[0])))?;
            let v: f64 = cols[1]
                .parse()
                .map_err(|_| parse_error(path, i + 1, format!("bad value '{}'", cols[1])))?;
            wl.push(nm_to_m(l));
            psd.push(if dbm { dbm_to_mw(v) } else { v });
        }
        Self::new(wl, psd, rbw).map_err(|e| parse_error(path, 0, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

impl RetrievedPhase {
    /// Columns `tau_ps dphi_rad intensity`; the error history is not kept.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(48 * self.phase.len());
        let _ = writeln!(out, "{PHASE_MAGIC}");
        let _ = writeln!(
            out,
            "# n_samples={} dt_s={:e} t0_s={:e} peak_index={} final_error={:e} iterations={} converged={}",
            self.grid.len(),
            self.grid.dt(),
            self.grid.t0(),
            self.peak_index,
            self.final_error,
            self.iterations_used,
            u8::from(self.converged)
        );
        let _ = writeln!(out, "tau_ps\tdphi_rad\tintensity");
        for i in 0..self.phase.len() {
            let _ = writeln!(
                out,
                "{:e}\t{:e}\t{:e}",
                s_to_ps(self.grid.time(i)),
                self.phase[i],
                self.intensity[i]
            );
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == PHASE_MAGIC => {}
            _ => return Err(parse_error(path, 1, "missing retrieved-phase header")),
        }
        let mut kv = HashMap::new();
        let (mut phase, mut intensity) = (Vec::new(), Vec::new());
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with("tau_ps") {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        let v: f64 = v
                            .parse()
                            .map_err(|_| parse_error(path, i + 1, format!("bad header value {tok}")))?;
                        kv.insert(k.to_string(), v);
                    }
                }
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_error(path, i + 1, format!("bad number: {e}")))?;
            if cols.len() != 3 {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("expected 3 columns, got {}", cols.len()),
                ));
            }
            phase.push(cols[1]);
            intensity.push(cols[2]);
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| parse_error(path, 2, format!("header is missing {k}")))
        };
        let n = get("n_samples")? as usize;
        let grid = TemporalGrid::new(n, get("dt_s")?, get("t0_s")?)?;
        if phase.len() != n {
            return Err(parse_error(
                path,
                0,
                format!("expected {n} rows, found {}", phase.len()),
            ));
        }
        let peak_index = get("peak_index")? as usize;
        if peak_index >= n {
            return Err(parse_error(path, 2, "peak_index outside the grid"));
        }
        Ok(Self {
            grid,
            phase,
            intensity,
            peak_index,
            final_error: get("final_error")?,
            iterations_used: get("iterations")? as usize,
            converged: get("converged")? != 0.0,
            error_history: Vec::new(),
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
