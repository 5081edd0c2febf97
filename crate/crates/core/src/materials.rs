//! Temperature models for β_TPA, n₂ and σ_FCA, the nonlinear figure of merit,
//! pair-source heralding metrics, and least-squares fits of the model constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize;
use crate::units::{self, C, EPS_0, K_B_EV, M_0, Q_E};

/// Varshni bandgap law E(T) = E₀ − βT²/(T + δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarshniParams {
    /// E_gap(0) (eV).
    pub e_gap_0: f64,
    /// Slope β (eV/K).
    pub beta_v: f64,
    /// Offset δ (K).
    pub delta_v: f64,
}

impl Default for VarshniParams {
    /// Silicon.
    fn default() -> Self {
        Self {
            e_gap_0: 1.156,
            beta_v: 7.021e-4,
            delta_v: 1108.0,
        }
    }
}

pub fn varshni_gap(temperature: f64, p: &VarshniParams) -> f64 {
    p.e_gap_0 - p.beta_v * temperature * temperature / (temperature + p.delta_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhononBranch {
    TA,
    TO,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpaBranch {
    pub label: PhononBranch,
    /// Phonon energy (eV).
    pub e_ph: f64,
    /// Amplitude K_b, in units giving β in cm/GW.
    pub k: f64,
}

/// How the Bose occupation factors are attached to the phonon terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TpaVariant {
    /// Creation numerator (2ħω − E_g − E_ph)² over e^{E/kT} − 1 and
    /// annihilation numerator (2ħω − E_g + E_ph)² over 1 − e^{−E/kT}.
    AsPrinted,
    /// Creation numerator weighted by n_B + 1, annihilation by n_B.
    #[default]
    PhysicalBose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpaModelParams {
    pub branches: Vec<TpaBranch>,
    /// ħω (eV).
    pub photon_energy: f64,
    pub varshni: VarshniParams,
    #[serde(default)]
    pub variant: TpaVariant,
}

impl Default for TpaModelParams {
    /// Silicon at 1.55 µm: TA 212 K, TO 670 K, K_TA = 0.233, K_TO = 2.138, ħω = 0.797 eV.
    fn default() -> Self {
        Self {
            branches: vec![
                TpaBranch {
                    label: PhononBranch::TA,
                    e_ph: 212.0 * K_B_EV,
                    k: 0.233,
                },
                TpaBranch {
                    label: PhononBranch::TO,
                    e_ph: 670.0 * K_B_EV,
                    k: 2.138,
                },
            ],
            photon_energy: 0.797,
            varshni: VarshniParams::default(),
            variant: TpaVariant::PhysicalBose,
        }
    }
}

impl TpaModelParams {
    pub fn with_variant(mut self, variant: TpaVariant) -> Self {
        self.variant = variant;
        self
    }
}

/// Thermal phonon occupation n_B = 1/(e^{E/kT} − 1); zero at T = 0.
pub fn bose_occupation(e_ph: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (e_ph / (K_B_EV * temperature)).exp_m1()
}

/// Creation and annihilation terms of one branch, before the K_b amplitude
/// and the E_gap^{3/2} prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchTerms {
    /// Term with the (2ħω − E_gap − E_ph)² numerator (phonon creation).
    pub creation: f64,
    /// Term with the (2ħω − E_gap + E_ph)² numerator (phonon annihilation).
    pub annihilation: f64,
    /// Whichever of the two carries the n_B factor; vanishes as T → 0.
    pub thermal: f64,
}

pub fn branch_terms(
    temperature: f64,
    e_gap: f64,
    photon_energy: f64,
    e_ph: f64,
    variant: TpaVariant,
) -> Result<BranchTerms> {
    let base_c = 2.0 * photon_energy - e_gap - e_ph;
    if base_c < 0.0 {
        return Err(Error::Domain(format!(
            "two-photon channel closed: 2ħω − E_gap − E_ph = {base_c:.4} eV at T = {temperature} K"
        )));
    }
    let num_c = base_c * base_c;
    let base_a = 2.0 * photon_energy - e_gap + e_ph;
    let num_a = base_a * base_a;
    let n_b = bose_occupation(e_ph, temperature);
    Ok(match variant {
        TpaVariant::AsPrinted => {
            let creation = num_c * n_b;
            BranchTerms {
                creation,
                annihilation: num_a * (n_b + 1.0),
                thermal: creation,
            }
        }
        TpaVariant::PhysicalBose => {
            let annihilation = num_a * n_b;
            BranchTerms {
                creation: num_c * (n_b + 1.0),
                annihilation,
                thermal: annihilation,
            }
        }
    })
}

/// Per-branch basis functions E_gap^{3/2}·(F⁺ + F⁻) so that β = Σ K_b·basis_b.
pub fn tpa_basis(temperature: f64, p: &TpaModelParams) -> Result<Vec<f64>> {
    if !(temperature >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be >= 0 K, got {temperature}"
        )));
    }
    let gap = varshni_gap(temperature, &p.varshni);
    let pre = gap.powf(1.5);
    p.branches
        .iter()
        .map(|b| {
            let t = branch_terms(temperature, gap, p.photon_energy, b.e_ph, p.variant)?;
            Ok(pre * (t.creation + t.annihilation))
        })
        .collect()
}

/// β_TPA(T) in cm/GW.
pub fn tpa_coefficient(temperature: f64, p: &TpaModelParams) -> Result<f64> {
    let basis = tpa_basis(temperature, p)?;
    Ok(basis.iter().zip(&p.branches).map(|(f, b)| b.k * f).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrModelParams {
    /// n₂ at 0 K (m²/W).
    pub n2_0: f64,
    /// Empirical phonon energy expressed as a temperature E_ph/k_B (K).
    pub e_ph_emp: f64,
}

impl Default for KerrModelParams {
    fn default() -> Self {
        Self {
            n2_0: 3.86e-18,
            e_ph_emp: 576.0,
        }
    }
}

/// n₂(T) = n₂(0)·coth(E_ph / 2k_BT), the closed form of n_B + (n_B + 1).
pub fn kerr_coefficient(temperature: f64, p: &KerrModelParams) -> f64 {
    p.n2_0 * kerr_factor(temperature, p.e_ph_emp)
}

fn kerr_factor(temperature: f64, e_ph_kelvin: f64) -> f64 {
    if temperature <= 0.0 {
        return 1.0;
    }
    let x = e_ph_kelvin / (2.0 * temperature);
    1.0 / x.tanh()
}

/// Sum form 1/(e^{x}−1) + 1/(1−e^{−x}); kept for cross-checking the coth form.
pub fn kerr_coefficient_sum_form(temperature: f64, p: &KerrModelParams) -> f64 {
    if temperature <= 0.0 {
        return p.n2_0;
    }
    let x = p.e_ph_emp / temperature;
    p.n2_0 * (1.0 / x.exp_m1() + 1.0 / -(-x).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcaDrudeParams {
    /// Wavelength (m).
    pub wavelength: f64,
    pub refractive_index: f64,
    /// Electron effective mass in units of m₀.
    pub m_e_eff: f64,
    /// Hole effective mass in units of m₀.
    pub m_h_eff: f64,
    /// Electron mobility (m²/(V·s)).
    pub mu_e: f64,
    /// Hole mobility (m²/(V·s)).
    pub mu_h: f64,
}

impl FcaDrudeParams {
    /// Silicon masses and index at the given wavelength and mobilities.
    pub fn silicon(wavelength: f64, mu_e: f64, mu_h: f64) -> Self {
        Self {
            wavelength,
            refractive_index: 3.48,
            m_e_eff: 0.3,
            m_h_eff: 0.4,
            mu_e,
            mu_h,
        }
    }
}

/// Drude free-carrier absorption cross-section (m²).
pub fn fca_cross_section(p: &FcaDrudeParams) -> Result<f64> {
    let fields = [
        ("wavelength", p.wavelength),
        ("refractive_index", p.refractive_index),
        ("m_e_eff", p.m_e_eff),
        ("m_h_eff", p.m_h_eff),
        ("mu_e", p.mu_e),
        ("mu_h", p.mu_h),
    ];
    for (name, v) in fields {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let pi = std::f64::consts::PI;
    let pre = Q_E.powi(3) * p.wavelength * p.wavelength / (4.0 * pi * pi * EPS_0 * C.powi(3) * p.refractive_index);
    let me = p.m_e_eff * M_0;
    let mh = p.m_h_eff * M_0;
    // an infinite mobility switches off that carrier's term
    Ok(pre * (1.0 / (me * me * p.mu_e) + 1.0 / (mh * mh * p.mu_h)))
}

/// σ_FCA(T) tabulated at a few temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcaTable {
    /// (temperature K, σ m²), temperatures strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl FcaTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("FCA table is empty".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate FCA table temperature {}",
                    w[0].0
                )));
            }
        }
        if points.iter().any(|(_, s)| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("FCA cross-sections must be >= 0".into()));
        }
        Ok(Self { points })
    }

    pub fn max_temperature(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }
}

impl Default for FcaTable {
    /// Silicon, 0–300 K.
    fn default() -> Self {
        Self::new(vec![
            (0.0, 0.0),
            (5.5, 0.9e-22),
            (50.0, 2.7e-22),
            (150.0, 3.1e-22),
            (300.0, 3.7e-22),
        ])
        .expect("static table")
    }
}

/// Piecewise-linear σ_FCA(T).
pub fn fca_lookup(temperature: f64, table: &FcaTable) -> Result<f64> {
    let pts = &table.points;
    let (t_lo, t_hi) = (pts[0].0, table.max_temperature());
    if !(temperature >= t_lo) || temperature > t_hi {
        return Err(Error::OutOfRange(format!(
            "temperature {temperature} K outside FCA table range [{t_lo}, {t_hi}] K"
        )));
    }
    let i = pts.partition_point(|p| p.0 <= temperature);
    if i == pts.len() {
        return Ok(pts[pts.len() - 1].1);
    }
    let (t0, s0) = pts[i - 1];
    let (t1, s1) = pts[i];
    Ok(s0 + (s1 - s0) * (temperature - t0) / (t1 - t0))
}

/// Ratio of Kerr phase to two-photon loss, n₂/(λβ_TPA).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fom {
    Finite(f64),
    /// β_TPA = 0.
    Infinite,
}

impl Fom {
    pub fn value(&self) -> f64 {
        match self {
            Fom::Finite(v) => *v,
            Fom::Infinite => f64::INFINITY,
        }
    }
}

/// β in m/W, n₂ in m²/W, λ in m.
pub fn nonlinear_fom(n2: f64, beta_tpa: f64, wavelength: f64) -> Result<Fom> {
    if !(n2 >= 0.0) || !(beta_tpa >= 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "FOM inputs must be non-negative (n2={n2}, beta={beta_tpa}, lambda={wavelength})"
        )));
    }
    if beta_tpa == 0.0 {
        return Ok(Fom::Infinite);
    }
    Ok(Fom::Finite(n2 / (wavelength * beta_tpa)))
}

/// Pair-generation probability above which the weak-pump expressions are
/// flagged as unreliable.
pub const WEAK_PUMP_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSourceScenario {
    pub p_pair: f64,
    pub purity: f64,
    /// Nonlinear FOM; `f64::INFINITY` allowed.
    pub fom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSourceMetrics {
    /// Nonlinear-loss parameter ξ = α_TPA·L·P.
    pub xi: f64,
    /// Klyshko efficiency 1/(1 + ξ)².
    pub heralding: f64,
    /// γLP inferred from the pair probability.
    pub gamma_lp: f64,
    /// ξ obtained from γLP/(2π·FOM), for comparison with `xi`.
    pub xi_from_inversion: f64,
    pub weak_pump_warning: bool,
}

pub fn pair_source_metrics(s: &PairSourceScenario) -> Result<PairSourceMetrics> {
    if !(s.purity > 0.0 && s.purity < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "purity must lie in (0, 1), got {}",
            s.purity
        )));
    }
    if !(s.p_pair > 0.0 && s.p_pair < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_pair must lie in (0, 1), got {}",
            s.p_pair
        )));
    }
    if !(s.fom > 0.0) {
        return Err(Error::InvalidArgument(format!("FOM must be positive, got {}", s.fom)));
    }
    let pu = s.purity;
    let one_minus_sq = 1.0 - pu * pu;
    let gamma_lp = (2.0 * s.p_pair * (pu / one_minus_sq).sqrt()).sqrt();
    let two_pi = 2.0 * std::f64::consts::PI;
    let xi = (2.0 * s.p_pair * pu / one_minus_sq.sqrt()).sqrt() / (two_pi * s.fom);
    Ok(PairSourceMetrics {
        xi,
        heralding: heralding_efficiency(xi),
        gamma_lp,
        xi_from_inversion: gamma_lp / (two_pi * s.fom),
        weak_pump_warning: s.p_pair > WEAK_PUMP_LIMIT,
    })
}

pub fn heralding_efficiency(xi: f64) -> f64 {
    1.0 / ((1.0 + xi) * (1.0 + xi))
}

/// Which temperature model to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialModel {
    /// Fits the branch amplitudes; phonon energies, ħω and the Varshni law are held.
    /// `frozen` lists branches whose K stays at the template value.
    Tpa {
        template: TpaModelParams,
        frozen: Vec<PhononBranch>,
    },
    /// Fits n₂(0) and E_ph/k_B, scanning E_ph over the given range (K).
    Kerr { e_ph_range: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedMaterial {
    Tpa(TpaModelParams),
    Kerr(KerrModelParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialFit {
    pub params: FittedMaterial,
    /// model − value at each input point.
    pub residuals: Vec<f64>,
    pub rms: f64,
    /// RMS of residual/value.
    pub relative_rms: f64,
}

pub fn fit_material_constants(points: &[(f64, f64)], model: &MaterialModel) -> Result<MaterialFit> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 points to fit material constants, got {}",
            points.len()
        )));
    }
    match model {
        MaterialModel::Tpa { template, frozen } => fit_tpa(points, template, frozen),
        MaterialModel::Kerr { e_ph_range } => fit_kerr(points, *e_ph_range),
    }
}

fn fit_tpa(points: &[(f64, f64)], template: &TpaModelParams, frozen: &[PhononBranch]) -> Result<MaterialFit> {
    let free: Vec<usize> = (0..template.branches.len())
        .filter(|&i| !frozen.contains(&template.branches[i].label))
        .collect();
    if free.is_empty() {
        return Err(Error::InvalidArgument("every TPA branch is frozen".into()));
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|(t, _)| tpa_basis(*t, template))
        .collect::<Result<_>>()?;
    // frozen branches contribute a fixed offset
    let targets: Vec<f64> = points
        .iter()
        .zip(&rows)
        .map(|((_, v), row)| {
            let fixed: f64 = (0..template.branches.len())
                .filter(|i| !free.contains(i))
                .map(|i| template.branches[i].k * row[i])
                .sum();
            v - fixed
        })
        .collect();
    let m = free.len();
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (row, y) in rows.iter().zip(&targets) {
        for a in 0..m {
            atb[a] += row[free[a]] * y;
            for b in 0..m {
                ata[a][b] += row[free[a]] * row[free[b]];
            }
        }
    }
    let k = solve_normal(&ata, &atb).ok_or_else(|| {
        Error::DegenerateFit(
            "TPA normal equations are singular; branch basis functions are not independent over the data".into(),
        )
    })?;
    let mut fitted = template.clone();
    for (a, &i) in free.iter().enumerate() {
        fitted.branches[i].k = k[a];
    }
    let model: Vec<f64> = points
        .iter()
        .map(|(t, _)| tpa_coefficient(*t, &fitted))
        .collect::<Result<_>>()?;
    Ok(summarize(FittedMaterial::Tpa(fitted), points, &model))
}

/// Solves a small symmetric positive system by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve_normal(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, y)| r.iter().copied().chain([*y]).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn fit_kerr(points: &[(f64, f64)], range: (f64, f64)) -> Result<MaterialFit> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "invalid E_ph scan range ({lo}, {hi}) K"
        )));
    }
    if points.iter().all(|(t, _)| *t <= 0.0) {
        return Err(Error::DegenerateFit(
            "all Kerr points at T = 0; E_ph is unidentifiable".into(),
        ));
    }
    // closed-form n2(0) for a given E_ph, returning (n2_0, sse)
    let best_amplitude = |e_ph: f64| -> (f64, f64) {
        let f: Vec<f64> = points.iter().map(|(t, _)| kerr_factor(*t, e_ph)).collect();
        let ff: f64 = f.iter().map(|x| x * x).sum();
        let fy: f64 = f.iter().zip(points).map(|(x, (_, y))| x * y).sum();
        let n0 = fy / ff;
        let sse = f.iter().zip(points).map(|(x, (_, y))| (n0 * x - y).powi(2)).sum();
        (n0, sse)
    };
    // coarse scan, then golden-section refinement around the best cell
    let n_scan = 400;
    let step = (hi - lo) / n_scan as f64;
    let (mut best_i, mut best_sse) = (0, f64::INFINITY);
    for i in 0..=n_scan {
        let (_, sse) = best_amplitude(lo + i as f64 * step);
        if sse < best_sse {
            best_sse = sse;
            best_i = i;
        }
    }
    let a = (lo + (best_i as f64 - 1.0) * step).max(lo);
    let b = (lo + (best_i as f64 + 1.0) * step).min(hi);
    let scale = points.iter().map(|p| p.1 * p.1).sum::<f64>().max(f64::MIN_POSITIVE);
    let min = optimize::golden_section(|e| best_amplitude(e).1 / scale, a, b, 1e-10 * hi, 200)?;
    let e_ph = min.x;
    let (n2_0, _) = best_amplitude(e_ph);
    let params = KerrModelParams { n2_0, e_ph_emp: e_ph };
    let model: Vec<f64> = points.iter().map(|(t, _)| kerr_coefficient(*t, &params)).collect();
    Ok(summarize(FittedMaterial::Kerr(params), points, &model))
}

fn summarize(params: FittedMaterial, points: &[(f64, f64)], model: &[f64]) -> MaterialFit {
    let residuals: Vec<f64> = model.iter().zip(points).map(|(m, (_, y))| m - y).collect();
    let n = residuals.len() as f64;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let relative_rms = (residuals
        .iter()
        .zip(points)
        .map(|(r, (_, y))| if *y != 0.0 { (r / y).powi(2) } else { 0.0 })
        .sum::<f64>()
        / n)
        .sqrt();
    MaterialFit {
        params,
        residuals,
        rms,
        relative_rms,
    }
}

/// β_TPA model value converted to m/W.
pub fn tpa_coefficient_si(temperature: f64, p: &TpaModelParams) -> Result<f64> {
    Ok(units::cm_per_gw_to_m_per_w(tpa_coefficient(temperature, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn varshni_values() {
        let p = VarshniParams::default();
        assert_eq!(varshni_gap(0.0, &p), 1.156);
        // mpmath, 30 digits: 1.11112144886..., 1.15598092633...
        assert_relative_eq!(varshni_gap(300.0, &p), 1.111121448863636, max_relative = 1e-13);
        assert_relative_eq!(varshni_gap(5.5, &p), 1.155980926335878, max_relative = 1e-13);
    }

    #[test]
    fn tpa_variants() {
        let phys = TpaModelParams::default();
        let printed = TpaModelParams::default().with_variant(TpaVariant::AsPrinted);
        // reference values from an independent mpmath evaluation
        assert_relative_eq!(
            tpa_coefficient(300.0, &phys).unwrap(),
            0.7777573435,
            max_relative = 1e-8
        );
        assert_relative_eq!(tpa_coefficient(5.5, &phys).unwrap(), 0.4353024249, max_relative = 1e-8);
        assert_relative_eq!(
            tpa_coefficient(300.0, &printed).unwrap(),
            1.0666384120,
            max_relative = 1e-8
        );
        assert_relative_eq!(tpa_coefficient(0.0, &phys).unwrap(), 0.4352700134, max_relative = 1e-8);
        assert_relative_eq!(
            tpa_coefficient(0.0, &printed).unwrap(),
            0.7133371928,
            max_relative = 1e-8
        );
    }

    #[test]
    fn tpa_thermal_terms_vanish_at_zero() {
        for variant in [TpaVariant::AsPrinted, TpaVariant::PhysicalBose] {
            let p = TpaModelParams::default().with_variant(variant);
            let gap = varshni_gap(0.0, &p.varshni);
            for b in &p.branches {
                let t = branch_terms(0.0, gap, p.photon_energy, b.e_ph, variant).unwrap();
                assert_eq!(t.thermal, 0.0);
                assert!(t.creation >= 0.0 && t.annihilation >= 0.0);
            }
        }
    }

    #[test]
    fn tpa_channel_closed() {
        let p = TpaModelParams {
            photon_energy: 0.5,
            ..TpaModelParams::default()
        };
        assert!(matches!(tpa_coefficient(300.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn kerr_values() {
        let p = KerrModelParams::default();
        assert_eq!(kerr_coefficient(0.0, &p), 3.86e-18);
        assert_relative_eq!(kerr_coefficient(300.0, &p), 5.18e-18, max_relative = 5e-3);
        assert_relative_eq!(kerr_coefficient(150.0, &p), 4.03e-18, max_relative = 5e-3);
        for t in [1.0, 5.5, 50.0, 150.0, 300.0, 1000.0] {
            assert_relative_eq!(
                kerr_coefficient(t, &p),
                kerr_coefficient_sum_form(t, &p),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn drude_fca() {
        let p = FcaDrudeParams::silicon(1.5518e-6, 0.03, 0.01);
        let s = fca_cross_section(&p).unwrap();
        // constant-by-constant evaluation: 3.6246e-22
        assert_relative_eq!(s, 3.6246e-22, max_relative = 1e-4);
        assert!((s / 3.7e-22 - 1.0).abs() < 0.05);
        let doubled = FcaDrudeParams::silicon(1.5518e-6, 0.06, 0.02);
        assert_relative_eq!(fca_cross_section(&doubled).unwrap(), s / 2.0, max_relative = 1e-12);
        let electron_only = FcaDrudeParams {
            mu_h: f64::INFINITY,
            ..p
        };
        let pi = std::f64::consts::PI;
        let me = 0.3 * M_0;
        let expected =
            Q_E.powi(3) * p.wavelength.powi(2) / (4.0 * pi * pi * EPS_0 * C.powi(3) * 3.48) / (me * me * 0.03);
        assert_relative_eq!(
            fca_cross_section(&electron_only).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fca_table_lookup() {
        let t = FcaTable::default();
        assert_eq!(fca_lookup(300.0, &t).unwrap(), 3.7e-22);
        assert_eq!(fca_lookup(0.0, &t).unwrap(), 0.0);
        assert_relative_eq!(fca_lookup(225.0, &t).unwrap(), 3.4e-22, max_relative = 1e-12);
        assert!(matches!(fca_lookup(301.0, &t), Err(Error::OutOfRange(_))));
        assert!(fca_lookup(-1.0, &t).is_err());
    }

    #[test]
    fn fom_values() {
        let f = nonlinear_fom(5.18e-18, units::cm_per_gw_to_m_per_w(0.761), 1.551e-6).unwrap();
        assert!((f.value() - 0.44).abs() < 0.01);
        let f0 = nonlinear_fom(3.86e-18, units::cm_per_gw_to_m_per_w(0.420), 1.551e-6).unwrap();
        assert!((f0.value() - 0.59).abs() < 0.01);
        let f2 = nonlinear_fom(2.0 * 5.18e-18, units::cm_per_gw_to_m_per_w(0.761), 1.551e-6).unwrap();
        assert_relative_eq!(f2.value(), 2.0 * f.value(), max_relative = 1e-14);
        assert_eq!(nonlinear_fom(1e-18, 0.0, 1.5e-6).unwrap(), Fom::Infinite);
    }

    #[test]
    fn heralding_numbers() {
        let h = |fom| {
            pair_source_metrics(&PairSourceScenario {
                p_pair: 0.05,
                purity: 0.9,
                fom,
            })
            .unwrap()
        };
        assert!((h(0.44).heralding - 0.74).abs() < 0.01);
        assert!((h(0.59).heralding - 0.79).abs() < 0.01);
        assert!((h(4.4).heralding - 0.97).abs() < 0.005);
        // direct inversion of the pair probability gives the slightly lower 0.73
        let m = h(0.44);
        assert!((heralding_efficiency(m.xi_from_inversion) - 0.73).abs() < 0.01);
        assert_eq!(heralding_efficiency(0.0), 1.0);
        assert_relative_eq!(h(f64::INFINITY).heralding, 1.0);
        assert!(pair_source_metrics(&PairSourceScenario {
            p_pair: 0.05,
            purity: 1.0,
            fom: 1.0
        })
        .is_err());
        assert!(
            pair_source_metrics(&PairSourceScenario {
                p_pair: 0.3,
                purity: 0.5,
                fom: 1.0
            })
            .unwrap()
            .weak_pump_warning
        );
    }

    #[test]
    fn tpa_fit_recovers_synthetic_constants() {
        let truth = TpaModelParams::default();
        let mut truth2 = truth.clone();
        truth2.branches[0].k = 0.31;
        truth2.branches[1].k = 1.77;
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let t = 5.0 + 15.0 * i as f64;
                (t, tpa_coefficient(t, &truth2).unwrap())
            })
            .collect();
        let fit = fit_material_constants(
            &pts,
            &MaterialModel::Tpa {
                template: truth,
                frozen: vec![],
            },
        )
        .unwrap();
        let FittedMaterial::Tpa(p) = fit.params else { panic!() };
        assert_relative_eq!(p.branches[0].k, 0.31, max_relative = 1e-6);
        assert_relative_eq!(p.branches[1].k, 1.77, max_relative = 1e-6);
    }

    #[test]
    fn tpa_fit_single_branch() {
        let mut truth = TpaModelParams::default();
        truth.branches[1].k = 0.0;
        truth.branches[0].k = 0.9;
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 200.0, 300.0]
            .iter()
            .map(|t| (*t, tpa_coefficient(*t, &truth).unwrap()))
            .collect();
        let fit = fit_material_constants(
            &pts,
            &MaterialModel::Tpa {
                template: truth.clone(),
                frozen: vec![PhononBranch::TO],
            },
        )
        .unwrap();
        let FittedMaterial::Tpa(p) = fit.params else { panic!() };
        assert_relative_eq!(p.branches[0].k, 0.9, max_relative = 1e-10);
        assert_eq!(p.branches[1].k, 0.0);
    }

    #[test]
    fn tpa_fit_degenerate_at_zero_kelvin() {
        let pts = vec![(0.0, 0.42), (0.0, 0.43)];
        let r = fit_material_constants(
            &pts,
            &MaterialModel::Tpa {
                template: TpaModelParams::default(),
                frozen: vec![],
            },
        );
        assert!(matches!(r, Err(Error::DegenerateFit(_))), "{r:?}");
    }

    #[test]
    fn kerr_fit_on_tabulated_values() {
        let pts = vec![
            (300.0, 5.18e-18),
            (150.0, 4.03e-18),
            (50.0, 3.86e-18),
            (5.5, 3.86e-18),
            (0.0, 3.86e-18),
        ];
        let fit = fit_material_constants(
            &pts,
            &MaterialModel::Kerr {
                e_ph_range: (100.0, 2000.0),
            },
        )
        .unwrap();
        let FittedMaterial::Kerr(p) = fit.params else { panic!() };
        assert_relative_eq!(p.n2_0, 3.86e-18, max_relative = 0.02);
        assert_relative_eq!(p.e_ph_emp, 576.0, max_relative = 0.02);
        assert!(matches!(
            fit_material_constants(
                &[(0.0, 1.0), (0.0, 1.1)],
                &MaterialModel::Kerr {
                    e_ph_range: (100.0, 2000.0)
                }
            ),
            Err(Error::DegenerateFit(_))
        ));
    }
}
