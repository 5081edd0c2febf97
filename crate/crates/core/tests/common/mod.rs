//! Shared fixtures and property checks for the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use si_nonlinear::fitting::{combine_bidirectional, Direction, TransmissionFit};
use si_nonlinear::phase_retrieval::{baseline_correct, RetrievedPhase};
use si_nonlinear::propagation::{propagate, transmission_curve, SolverConfig, Stepper};
use si_nonlinear::pulse::{sech2_pulse, LaserSpec, NonlinearCoeffs, TemporalGrid, WaveguideSpec};
use si_nonlinear::units;

pub const WAVELENGTH: f64 = 1551.8e-9;
pub const A_EFF: f64 = 1e-13;

pub fn laser() -> LaserSpec {
    LaserSpec::new(4.9e-12, 50e6, WAVELENGTH).unwrap()
}

pub fn small_grid() -> TemporalGrid {
    TemporalGrid::centered(256, 48e-12).unwrap()
}

/// Room-temperature silicon: n₂ 5.18e-18 m²/W, β 0.761 cm/GW, σ 3.7e-22 m², μ 7.
pub fn room_temperature() -> NonlinearCoeffs {
    NonlinearCoeffs::new(5.18e-18, units::cm_per_gw_to_m_per_w(0.761), 3.7e-22, 7.0, WAVELENGTH).unwrap()
}

pub fn reference_waveguide() -> WaveguideSpec {
    WaveguideSpec::new(19.09e-3, units::convert_loss(2.4).unwrap(), A_EFF).unwrap()
}

/// Randomized device and pulse for the propagation properties.
#[derive(Debug, Clone, Copy)]
pub struct PropCase {
    pub length: f64,
    pub loss_db_per_cm: f64,
    pub n2: f64,
    pub beta_cm_per_gw: f64,
    pub sigma: f64,
    pub mu: f64,
    pub tau_c: f64,
    pub peak: f64,
    pub stepper: Stepper,
}

impl PropCase {
    pub fn waveguide(&self) -> WaveguideSpec {
        WaveguideSpec::new(self.length, units::convert_loss(self.loss_db_per_cm).unwrap(), A_EFF)
            .unwrap()
            .with_carrier_lifetime(self.tau_c)
            .unwrap()
    }

    pub fn coeffs(&self) -> NonlinearCoeffs {
        NonlinearCoeffs::new(
            self.n2,
            units::cm_per_gw_to_m_per_w(self.beta_cm_per_gw),
            self.sigma,
            self.mu,
            WAVELENGTH,
        )
        .unwrap()
    }

    /// Coarse settings; the properties hold at any step size.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dz: self.length / 200.0,
            max_step_halvings: 1,
            tol: 1.0,
            stepper: self.stepper,
            carrier_preload: 0.0,
        }
    }
}

pub fn prop_case() -> impl Strategy<Value = PropCase> {
    (
        (1e-3..25e-3f64, 0.0..6.0f64, 0.0..1e-17f64, 0.0..2.0f64),
        (0.0..1e-21f64, -20.0..20.0f64, 1e-11..1e-8f64, 0.01..40.0f64),
        prop_oneof![Just(Stepper::PredictorCorrector), Just(Stepper::FrozenCarrier)],
    )
        .prop_map(
            |((length, loss, n2, beta), (sigma, mu, tau_c, peak), stepper)| PropCase {
                length,
                loss_db_per_cm: loss,
                n2,
                beta_cm_per_gw: beta,
                sigma,
                mu,
                tau_c,
                peak,
                stepper,
            },
        )
}

/// Output energy never exceeds the linearly attenuated input, and raising
/// the peak power never raises the transmission.
pub fn check_energy_monotonicity(c: &PropCase) -> Result<(), TestCaseError> {
    let (wg, nl, cfg) = (c.waveguide(), c.coeffs(), c.solver());
    let run = |peak: f64| {
        let input = sech2_pulse(small_grid(), peak, 4.9e-12, 0.0).unwrap();
        propagate(&input, &wg, &nl, &cfg).unwrap()
    };
    let lo = run(c.peak);
    let hi = run(2.0 * c.peak);
    let lin = wg.linear_transmission();
    prop_assert!(
        lo.transmission <= lin * (1.0 + 1e-9),
        "T {} > linear {}",
        lo.transmission,
        lin
    );
    prop_assert!(
        hi.transmission <= lo.transmission * (1.0 + 1e-9),
        "T rose with power: {} -> {}",
        lo.transmission,
        hi.transmission
    );
    prop_assert!(lo.transmission > 0.0);
    Ok(())
}

/// Carrier density and both path integrals stay non-negative.
pub fn check_carrier_positivity(c: &PropCase) -> Result<(), TestCaseError> {
    let input = sech2_pulse(small_grid(), c.peak, 4.9e-12, 0.0).unwrap();
    let r = propagate(&input, &c.waveguide(), &c.coeffs(), &c.solver()).unwrap();
    prop_assert!(r.carriers_out.iter().all(|n| *n >= 0.0 && n.is_finite()));
    prop_assert!(r.t_table.iter().all(|t| *t >= 0.0));
    prop_assert!(r.s_table.iter().all(|s| *s >= 0.0));
    prop_assert!(r.output.power.iter().all(|p| *p >= 0.0));
    Ok(())
}

pub fn fit_stub(direction: Direction, alpha_tpa: f64, coupler_mean: f64) -> TransmissionFit {
    TransmissionFit {
        direction,
        temperature: 300.0,
        alpha: 55.0,
        alpha_tpa_apparent: alpha_tpa,
        coupler_mean,
        intercept: 1.0,
        sigma_fca: 3.7e-22,
        residuals: vec![],
        residual_rms: 0.0,
        covariance: None,
        model_evaluations: 0,
        convergence_estimate: 0.0,
    }
}

/// (α', α'', g_on, g_off, scale)
pub fn mean_case() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (1e-2..1e3f64, 1e-2..1e3f64, 0.01..1.0f64, 0.01..1.0f64, 0.05..20.0f64)
}

/// Swapping the directions swaps η_L and η_R and keeps α; scaling both
/// apparent coefficients or both couplers scales the results by the same factor.
pub fn check_geometric_mean(a_off: f64, a_on: f64, g_on: f64, g_off: f64, k: f64) -> Result<(), TestCaseError> {
    let close = |a: f64, b: f64| (a / b - 1.0).abs() < 1e-12;
    let r = combine_bidirectional(
        &fit_stub(Direction::On, a_on, g_on),
        &fit_stub(Direction::Off, a_off, g_off),
    )
    .unwrap();
    let swapped = combine_bidirectional(
        &fit_stub(Direction::On, a_off, g_off),
        &fit_stub(Direction::Off, a_on, g_on),
    )
    .unwrap();
    prop_assert!(close(r.alpha_tpa_true, swapped.alpha_tpa_true));
    prop_assert!(close(r.eta_l, swapped.eta_r) && close(r.eta_r, swapped.eta_l));
    prop_assert!(close(r.alpha_tpa_true, (a_on * a_off).sqrt()));
    prop_assert!(close(r.eta_l / r.eta_r, a_off / a_on));
    prop_assert!(close(r.eta_l * r.eta_r, g_on * g_off));
    let scaled = combine_bidirectional(
        &fit_stub(Direction::On, k * a_on, g_on),
        &fit_stub(Direction::Off, k * a_off, g_off),
    )
    .unwrap();
    prop_assert!(close(scaled.alpha_tpa_true, k * r.alpha_tpa_true));
    prop_assert!(close(scaled.eta_l, r.eta_l) && close(scaled.eta_r, r.eta_r));
    let c = k.min(1.0 / k);
    let dim = combine_bidirectional(
        &fit_stub(Direction::On, a_on, c * g_on),
        &fit_stub(Direction::Off, a_off, c * g_off),
    )
    .unwrap();
    prop_assert!(close(dim.eta_l, c * r.eta_l) && close(dim.eta_r, c * r.eta_r));
    Ok(())
}

pub fn phase_record(grid: TemporalGrid, phase: Vec<f64>) -> RetrievedPhase {
    let n = phase.len();
    RetrievedPhase {
        grid,
        intensity: vec![1.0; n],
        phase,
        peak_index: n / 2,
        final_error: 0.0,
        iterations_used: 0,
        converged: true,
        error_history: vec![],
    }
}

/// (phase 1, phase 2, reference 1, reference 2, a, b) on a 64-sample grid.
pub fn baseline_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
    let v = || proptest::collection::vec(-10.0..10.0f64, 64);
    (v(), v(), v(), v(), -5.0..5.0f64, -5.0..5.0f64)
}

/// Baseline correction is linear in (phase, reference) jointly.
pub fn check_baseline_linearity(
    p1: &[f64],
    p2: &[f64],
    r1: &[f64],
    r2: &[f64],
    a: f64,
    b: f64,
) -> Result<(), TestCaseError> {
    let g = TemporalGrid::centered(64, 48e-12).unwrap();
    let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect::<Vec<_>>();
    let bc = |p: &[f64], r: &[f64]| {
        baseline_correct(&[phase_record(g, p.to_vec())], &phase_record(g, r.to_vec()))
            .unwrap()
            .remove(0)
            .phase
    };
    let lhs = bc(&mix(p1, p2), &mix(r1, r2));
    let (c1, c2) = (bc(p1, r1), bc(p2, r2));
    for i in 0..lhs.len() {
        let rhs = a * c1[i] + b * c2[i];
        prop_assert!(
            (lhs[i] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
            "sample {}: {} vs {}",
            i,
            lhs[i],
            rhs
        );
    }
    let zero = bc(r1, r1);
    prop_assert!(zero.iter().all(|x| *x == 0.0));
    Ok(())
}

/// A transmission sweep gives bit-identical output on 1 and 3 workers.
pub fn check_worker_determinism(c: &PropCase) -> Result<(), TestCaseError> {
    let powers: Vec<f64> = (1..=6).map(|i| c.peak * 1e-4 * i as f64).collect();
    let (wg, nl, cfg) = (c.waveguide(), c.coeffs(), c.solver());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| transmission_curve(&powers, &laser(), small_grid(), &wg, &nl, &cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    for (a, b) in one.iter().zip(&three) {
        prop_assert_eq!(a.inverse_transmission.to_bits(), b.inverse_transmission.to_bits());
        prop_assert_eq!(a.convergence_estimate.to_bits(), b.convergence_estimate.to_bits());
    }
    Ok(())
}
