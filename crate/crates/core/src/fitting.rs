//! Parameter recovery from measured data: apparent TPA coefficients from
//! inverse-transmission scans, true coefficients and coupler losses from
//! scans taken in both directions, and γ, μ from retrieved phase profiles.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{bracket_upward, golden_section};
use crate::phase_retrieval::RetrievedPhase;
use crate::propagation::{transmission_curve, SolverConfig, StTable};
use crate::pulse::{LaserSpec, NonlinearCoeffs, TemporalGrid, WaveguideSpec};

/// Cross-over switch state. `Off` launches through the left coupler, `On`
/// through the right one and adds the switch excess loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    On,
    Off,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::On => "on",
            Direction::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScan {
    pub direction: Direction,
    pub temperature: f64,
    /// (average fiber input power, average fiber output power), W.
    pub samples: Vec<(f64, f64)>,
    /// Total switch excess loss η_X; only applied when `direction` is `On`.
    pub excess_loss_on: f64,
}

impl PowerScan {
    pub fn new(
        direction: Direction,
        temperature: f64,
        mut samples: Vec<(f64, f64)>,
        excess_loss_on: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("power scan has no samples".into()));
        }
        if samples
            .iter()
            .any(|(a, b)| !(*a > 0.0 && *b > 0.0) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Data("scan powers must be finite and > 0".into()));
        }
        if !(excess_loss_on > 0.0 && excess_loss_on <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "switch excess loss must lie in (0, 1], got {excess_loss_on}"
            )));
        }
        if !(temperature >= 0.0) {
            return Err(Error::InvalidArgument("temperature must be >= 0 K".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            direction,
            temperature,
            samples,
            excess_loss_on,
        })
    }

    /// Transmittance of the switch on each side of the chip.
    pub fn switch_per_side(&self) -> f64 {
        match self.direction {
            Direction::On => self.excess_loss_on.sqrt(),
            Direction::Off => 1.0,
        }
    }

    pub fn inverse_transmission(&self) -> Vec<f64> {
        self.samples.iter().map(|(i, o)| i / o).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionFit {
    pub direction: Direction,
    pub temperature: f64,
    /// Waveguide linear loss (1/m).
    pub alpha: f64,
    pub alpha_tpa_apparent: f64,
    /// √(η_Lη_R) implied by the intercept.
    pub coupler_mean: f64,
    /// Fiber-to-fiber 1/T extrapolated to zero power.
    pub intercept: f64,
    pub sigma_fca: f64,
    pub residuals: Vec<f64>,
    pub residual_rms: f64,
    /// Covariance of (α_TPA, coupler_mean); None when the Jacobian is singular.
    pub covariance: Option<[[f64; 2]; 2]>,
    pub model_evaluations: usize,
    /// Largest solver convergence estimate seen at the optimum.
    pub convergence_estimate: f64,
}

/// Memoized inverse waveguide transmission keyed by (α_TPA, average power).
/// Entries are pure functions of their key, so concurrent fills are harmless.
pub struct CurveCache<'a> {
    laser: &'a LaserSpec,
    grid: TemporalGrid,
    wg: &'a WaveguideSpec,
    sigma_fca: f64,
    cfg: &'a SolverConfig,
    map: Mutex<HashMap<(u64, u64), (f64, f64)>>,
}

impl<'a> CurveCache<'a> {
    pub fn new(
        laser: &'a LaserSpec,
        grid: TemporalGrid,
        wg: &'a WaveguideSpec,
        sigma_fca: f64,
        cfg: &'a SolverConfig,
    ) -> Self {
        Self {
            laser,
            grid,
            wg,
            sigma_fca,
            cfg,
            map: Mutex::new(HashMap::new()),
        }
    }

    /// Returns (1/T, convergence estimate) of the waveguide for each power.
    pub fn evaluate(&self, alpha_tpa: f64, powers: &[f64]) -> Result<Vec<(f64, f64)>> {
        let key = |p: f64| (alpha_tpa.to_bits(), p.to_bits());
        let missing: Vec<f64> = {
            let map = self.map.lock().expect("cache lock");
            powers.iter().copied().filter(|p| !map.contains_key(&key(*p))).collect()
        };
        if !missing.is_empty() {
            let nl = NonlinearCoeffs::from_waveguide_params(
                0.0,
                alpha_tpa,
                self.sigma_fca,
                0.0,
                self.wg,
                self.laser.wavelength,
            )?;
            let pts = transmission_curve(&missing, self.laser, self.grid, self.wg, &nl, self.cfg)?;
            let mut map = self.map.lock().expect("cache lock");
            for (p, pt) in missing.iter().zip(pts) {
                map.insert(key(*p), (pt.inverse_transmission, pt.convergence_estimate));
            }
        }
        let map = self.map.lock().expect("cache lock");
        Ok(powers.iter().map(|p| map[&key(*p)]).collect())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Fixed-point passes refining the coupler for one trial coefficient.
const PROFILE_ITERS: usize = 6;
const REL_X_TOL: f64 = 5e-4;

/// Fits the apparent TPA coefficient of one directional scan. `sigma_fca` is
/// held fixed at the value expected for the scan temperature.
pub fn fit_inverse_transmission(
    scan: &PowerScan,
    wg: &WaveguideSpec,
    laser: &LaserSpec,
    grid: TemporalGrid,
    sigma_fca: f64,
    cfg: &SolverConfig,
) -> Result<TransmissionFit> {
    let n = scan.samples.len();
    let p: Vec<f64> = scan.samples.iter().map(|s| s.0).collect();
    if n < 4 {
        return Err(Error::Precondition(format!("need at least 4 scan samples, got {n}")));
    }
    if 10.0 * (p[n - 1] / p[0]).log10() < 10.0 - 1e-9 {
        return Err(Error::Precondition(
            "scan must span at least 10 dB of input power".into(),
        ));
    }
    let y = scan.inverse_transmission();
    let sw = scan.switch_per_side();
    let linear_inv = 1.0 / wg.linear_transmission();

    let (_, slope) = linear_regression(&p, &y);
    // secant through the two lowest powers; least biased by curvature
    let intercept0 = y[0] - (y[1] - y[0]) / (p[1] - p[0]) * p[0];
    if !(intercept0 > 0.0) {
        return Err(Error::DataInconsistent(format!(
            "inverse transmission extrapolates to a non-positive intercept ({intercept0:e})"
        )));
    }
    let g = (linear_inv / (intercept0 * sw * sw)).sqrt();

    let cache = CurveCache::new(laser, grid, wg, sigma_fca, cfg);
    let scale = |g: f64| 1.0 / (g * sw).powi(2);
    let model = |a: f64, g: f64| -> Result<Vec<f64>> {
        let pw: Vec<f64> = p.iter().map(|x| x * g * sw).collect();
        Ok(cache.evaluate(a, &pw)?.iter().map(|v| v.0 * scale(g)).collect())
    };

    // starting guess from a linearized slope at a reference coefficient
    let a_ref = 50.0;
    let m_ref = model(a_ref, g)?;
    let (_, slope_ref) = linear_regression(&p, &m_ref);
    let guess = if slope > 0.0 && slope_ref > 0.0 {
        a_ref * slope / slope_ref
    } else {
        1.0
    };

    // The curve depends on α_TPA and the coupler mainly through u = α_TPA·g,
    // so the search runs over u with g profiled out in closed form.
    let g_warm = Cell::new(g);
    let profile = |u: f64| -> Result<(f64, f64)> {
        let mut gg = g_warm.get();
        let mut sse = f64::NAN;
        for _ in 0..PROFILE_ITERS {
            let shape: Vec<f64> = model(u / gg, gg)?.iter().map(|v| v / scale(gg)).collect();
            let a_opt =
                shape.iter().zip(&y).map(|(s, yy)| s * yy).sum::<f64>() / shape.iter().map(|s| s * s).sum::<f64>();
            sse = shape.iter().zip(&y).map(|(s, yy)| (yy - a_opt * s).powi(2)).sum();
            let g_new = 1.0 / (sw * a_opt.sqrt());
            let moved = (g_new / gg - 1.0).abs();
            gg = g_new;
            if moved < 1e-5 {
                break;
            }
        }
        g_warm.set(gg);
        Ok((sse, gg))
    };
    let mut first_err: Option<Error> = None;
    let mut f = |u: f64| match profile(u) {
        Ok(v) => v.0,
        Err(e) => {
            first_err.get_or_insert(e);
            f64::NAN
        }
    };
    let u0 = guess * g;
    let bracket = bracket_upward(&mut f, 0.0, 2.0 * u0, 30);
    let best = bracket.and_then(|(lo, hi)| golden_section(&mut f, lo, hi, REL_X_TOL * u0, 200));
    if let Some(e) = first_err.take() {
        return Err(e);
    }
    let best = best?;
    let (sse_best, g_best) = profile(best.x)?;
    let (sse_zero, g_zero) = profile(0.0)?;
    let (alpha_tpa, g) = if sse_zero <= sse_best {
        (0.0, g_zero)
    } else {
        (best.x / g_best, g_best)
    };
    if g > 1.0 {
        return Err(Error::DataInconsistent(format!(
            "fitted coupler transmittance {g:.4} exceeds 1 for the configured waveguide loss"
        )));
    }

    let fitted = model(alpha_tpa, g)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(yy, m)| yy - m).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let residual_rms = (ssr / n as f64).sqrt();

    // covariance from a forward-difference Jacobian of the residuals
    let ha = (1e-3 * alpha_tpa).max(1e-3 * guess).max(1e-6);
    let hg = 1e-5 * g;
    let da = model(alpha_tpa + ha, g)?;
    let dg = model(alpha_tpa, g + hg)?;
    let ja: Vec<f64> = da.iter().zip(&fitted).map(|(a, b)| (a - b) / ha).collect();
    let jg: Vec<f64> = dg.iter().zip(&fitted).map(|(a, b)| (a - b) / hg).collect();
    let (s11, s22) = (
        ja.iter().map(|v| v * v).sum::<f64>(),
        jg.iter().map(|v| v * v).sum::<f64>(),
    );
    let s12: f64 = ja.iter().zip(&jg).map(|(a, b)| a * b).sum();
    let det = s11 * s22 - s12 * s12;
    let dof = n.saturating_sub(2).max(1) as f64;
    let s2 = ssr / dof;
    let covariance = (det > 0.0).then(|| [[s2 * s22 / det, -s2 * s12 / det], [-s2 * s12 / det, s2 * s11 / det]]);

    let pw: Vec<f64> = p.iter().map(|x| x * g * sw).collect();
    let convergence_estimate = cache.evaluate(alpha_tpa, &pw)?.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok(TransmissionFit {
        direction: scan.direction,
        temperature: scan.temperature,
        alpha: wg.linear_loss,
        alpha_tpa_apparent: alpha_tpa,
        coupler_mean: g,
        intercept: linear_inv * scale(g),
        sigma_fca,
        residuals,
        residual_rms,
        covariance,
        model_evaluations: cache.len(),
        convergence_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidirectionalResult {
    pub temperature: f64,
    pub alpha_tpa_true: f64,
    pub sigma_fca_true: Option<f64>,
    pub eta_l: f64,
    pub eta_r: f64,
    pub coupler_mean: f64,
}

/// Geometric-mean correction of a pair of scans taken in opposite directions.
/// The `Off` scan launches through η_L and yields α', the `On` scan yields α''.
pub fn combine_bidirectional(fit_on: &TransmissionFit, fit_off: &TransmissionFit) -> Result<BidirectionalResult> {
    let (a2, a1) = (fit_on.alpha_tpa_apparent, fit_off.alpha_tpa_apparent);
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "apparent TPA coefficients must be positive (off {a1:e}, on {a2:e})"
        )));
    }
    if !(fit_on.coupler_mean > 0.0 && fit_off.coupler_mean > 0.0) {
        return Err(Error::InvalidArgument("coupler transmittances must be positive".into()));
    }
    let g = (fit_on.coupler_mean * fit_off.coupler_mean).sqrt();
    let r = (a1 / a2).sqrt();
    let sigma =
        (fit_on.sigma_fca > 0.0 && fit_off.sigma_fca > 0.0).then(|| (fit_on.sigma_fca * fit_off.sigma_fca).sqrt());
    Ok(BidirectionalResult {
        temperature: 0.5 * (fit_on.temperature + fit_off.temperature),
        alpha_tpa_true: (a1 * a2).sqrt(),
        sigma_fca_true: sigma,
        eta_l: g * r,
        eta_r: g / r,
        coupler_mean: g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub gamma: f64,
    /// None when the carrier term is absent and μ cannot be determined.
    pub mu: Option<f64>,
    pub residual_rms: f64,
    pub samples: usize,
    /// Σ S² over the fitted samples; larger means a better-determined γ.
    pub weight: f64,
}

/// Linear least squares of the retrieved phase against the ansatz columns
/// S and T, both referenced to zero at the retrieval's peak sample. With a
/// `reference` table the columns are differences from it, matching phases
/// that were baseline-corrected against that reference.
pub fn fit_phase_profile(
    phase: &RetrievedPhase,
    table: &StTable,
    reference: Option<&StTable>,
    sigma_fca: f64,
) -> Result<PhaseFit> {
    phase.grid.ensure_same(&table.grid, "phase fit")?;
    let mut s = table.s.clone();
    let mut t = table.t.clone();
    if let Some(r) = reference {
        r.grid.ensure_same(&table.grid, "phase fit reference")?;
        s.iter_mut().zip(&r.s).for_each(|(a, b)| *a -= b);
        t.iter_mut().zip(&r.t).for_each(|(a, b)| *a -= b);
    }
    let k = phase.peak_index;
    let (s0, t0) = (s[k], t[k]);
    s.iter_mut().for_each(|v| *v -= s0);
    t.iter_mut().for_each(|v| *v -= t0);

    let mask = phase.significant();
    if mask.len() < 2 {
        return Err(Error::DegenerateFit(
            "fewer than two samples above 5% of peak power".into(),
        ));
    }
    let y = &phase.phase;
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &mask {
        a11 += s[i] * s[i];
        a12 += s[i] * t[i];
        a22 += t[i] * t[i];
        b1 += s[i] * y[i];
        b2 += t[i] * y[i];
    }
    if !(a11 > 0.0) {
        return Err(Error::DegenerateFit(
            "the S column vanishes; γ is unidentifiable".into(),
        ));
    }
    let t_scale = mask.iter().map(|&i| t[i].abs()).fold(0.0, f64::max);
    let (gamma, c, mu) = if t_scale == 0.0 {
        (b1 / a11, 0.0, None)
    } else {
        let det = a11 * a22 - a12 * a12;
        if !(det > 1e-12 * a11 * a22) {
            return Err(Error::DegenerateFit(
                "S and T columns are proportional; μ is unidentifiable".into(),
            ));
        }
        if !(sigma_fca > 0.0) {
            return Err(Error::DegenerateFit("σ_FCA = 0; μ is unidentifiable".into()));
        }
        let gamma = (a22 * b1 - a12 * b2) / det;
        let c = (a11 * b2 - a12 * b1) / det;
        (gamma, c, Some(-2.0 * c / sigma_fca))
    };
    let ss: f64 = mask.iter().map(|&i| (y[i] - gamma * s[i] - c * t[i]).powi(2)).sum();
    Ok(PhaseFit {
        gamma,
        mu,
        residual_rms: (ss / mask.len() as f64).sqrt(),
        samples: mask.len(),
        weight: a11,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; None for a single entry.
    pub std: Option<f64>,
    pub spread_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSeries {
    pub points: Vec<TemperaturePoint>,
}

/// Mean and sample standard deviation of the true TPA coefficient per temperature.
pub fn aggregate_series(results: &[BidirectionalResult]) -> TemperatureSeries {
    aggregate_values(results.iter().map(|r| (r.temperature, r.alpha_tpa_true)))
}

/// Groups (temperature, value) pairs by exact temperature, ascending.
pub fn aggregate_values(items: impl IntoIterator<Item = (f64, f64)>) -> TemperatureSeries {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (t, v) in items {
        // ordered key for non-negative floats
        groups.entry(t.to_bits()).or_insert_with(|| (t, Vec::new())).1.push(v);
    }
    let points = groups
        .into_values()
        .map(|(temperature, mut values)| {
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.len() >= 2)
                .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
            TemperaturePoint {
                temperature,
                spread_undefined: std.is_none(),
                values,
                mean,
                std,
            }
        })
        .collect();
    TemperatureSeries { points }
}
