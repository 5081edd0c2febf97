//! Physical constants and the unit conversions used at file and report
//! boundaries. Everything inside the library is SI.

use crate::error::{Error, Result};

/// Boltzmann constant (eV/K).
pub const K_B_EV: f64 = 8.617333e-5;
/// Elementary charge (C).
pub const Q_E: f64 = 1.602177e-19;
/// Vacuum permittivity (F/m).
pub const EPS_0: f64 = 8.854188e-12;
/// Free-electron mass (kg).
pub const M_0: f64 = 9.109384e-31;
/// Speed of light in vacuum (m/s).
pub const C: f64 = 2.997925e8;
/// Planck constant (J s).
pub const H: f64 = 6.62607015e-34;

/// Converts a propagation loss in dB/cm to a power attenuation coefficient in 1/m.
pub fn convert_loss(db_per_cm: f64) -> Result<f64> {
    if !(db_per_cm >= 0.0) || !db_per_cm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "loss must be a finite non-negative dB/cm value, got {db_per_cm}"
        )));
    }
    Ok(db_per_cm * std::f64::consts::LN_10 / 10.0 * 100.0)
}

pub fn per_m_to_db_per_cm(alpha: f64) -> f64 {
    alpha * 10.0 / std::f64::consts::LN_10 / 100.0
}

/// Power ratio to decibels.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn cm_per_gw_to_m_per_w(v: f64) -> f64 {
    v * 1e-11
}

pub fn m_per_w_to_cm_per_gw(v: f64) -> f64 {
    v * 1e11
}

pub fn mw_to_w(v: f64) -> f64 {
    v * 1e-3
}

pub fn w_to_mw(v: f64) -> f64 {
    v * 1e3
}

pub fn nm_to_m(v: f64) -> f64 {
    v * 1e-9
}

pub fn m_to_nm(v: f64) -> f64 {
    v * 1e9
}

pub fn ps_to_s(v: f64) -> f64 {
    v * 1e-12
}

pub fn s_to_ps(v: f64) -> f64 {
    v * 1e12
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    from_db(dbm)
}

/// Photon energy h c / λ in joules.
pub fn photon_energy_j(wavelength: f64) -> f64 {
    H * C / wavelength
}

/// Photon energy in electron-volts.
pub fn photon_energy_ev(wavelength: f64) -> f64 {
    photon_energy_j(wavelength) / Q_E
}

/// Vacuum wavenumber 2π/λ.
pub fn wavenumber(wavelength: f64) -> f64 {
    2.0 * std::f64::consts::PI / wavelength
}
