//! One PASS/FAIL line per acceptance criterion. Every criterion runs even
//! when an earlier one fails; the target exits non-zero if any of them does.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};

use common::*;
use proptest::test_runner::{Config, TestRunner};

use si_nonlinear::config::RunConfig;
use si_nonlinear::materials::{
    fca_cross_section, fit_material_constants, kerr_coefficient, nonlinear_fom, pair_source_metrics, tpa_coefficient,
    FcaDrudeParams, KerrModelParams, MaterialModel, PairSourceScenario, TpaModelParams, TpaVariant,
};
use si_nonlinear::phase_retrieval::{
    compare_phases, default_seeds, gerchberg_saxton_multistart, spectrum_of, InitPhase, RetrievalConfig,
};
use si_nonlinear::pipeline::{cmd_fit_phase, cmd_fit_transmission, cmd_retrieve_phase, cmd_simulate, SimulateOptions};
use si_nonlinear::propagation::{propagate, SolverConfig, Stepper};
use si_nonlinear::pulse::{peak_from_average, sech2_pulse, NonlinearCoeffs, TemporalGrid};
use si_nonlinear::units::{self, to_db};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    let line = format!("{name} {got:.5} vs {want} (tol {tol})");
    if (got - want).abs() <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn within_rel(name: &str, got: f64, want: f64, rel: f64) -> Result<String, String> {
    let err = (got / want - 1.0).abs();
    let line = format!(
        "{name} {got:.5e} vs {want:e} ({:.3}% off, limit {}%)",
        100.0 * err,
        100.0 * rel
    );
    if err <= rel {
        Ok(line)
    } else {
        Err(line)
    }
}

/// Runs every check and joins their details; fails if any check fails.
fn all(checks: Vec<Result<String, String>>) -> Outcome {
    let failed = checks.iter().any(|c| c.is_err());
    let text = checks
        .into_iter()
        .map(|c| match c {
            Ok(s) => s,
            Err(s) => format!("FAILED {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn kerr_model() -> Outcome {
    let p = KerrModelParams::default();
    all([(300.0, 5.18), (150.0, 4.03), (50.0, 3.86), (5.5, 3.86), (0.0, 3.86)]
        .iter()
        .map(|&(t, n2)| within_rel(&format!("n2({t} K)"), kerr_coefficient(t, &p), n2 * 1e-18, 5e-3))
        .collect())
}

fn tpa_model() -> Outcome {
    let phys = TpaModelParams::default().with_variant(TpaVariant::PhysicalBose);
    let printed = TpaModelParams::default().with_variant(TpaVariant::AsPrinted);
    let range = |name: &str, v: f64, lo: f64, hi: f64| {
        let s = format!("{name} {v:.4} in [{lo}, {hi}]");
        if (lo..=hi).contains(&v) {
            Ok(s)
        } else {
            Err(s)
        }
    };
    let table = [(5.5, 0.420), (50.0, 0.424), (150.0, 0.492), (300.0, 0.761)];
    let refit = fit_material_constants(
        &table,
        &MaterialModel::Tpa {
            template: phys.clone(),
            frozen: vec![],
        },
    )
    .map_err(|e| e.to_string())?;
    let rms = format!("refit relative RMS {:.4}%", 100.0 * refit.relative_rms);
    all(vec![
        range(
            "beta(300 K)",
            tpa_coefficient(300.0, &phys).map_err(|e| e.to_string())?,
            0.74,
            0.82,
        ),
        range(
            "beta(5.5 K)",
            tpa_coefficient(5.5, &phys).map_err(|e| e.to_string())?,
            0.41,
            0.46,
        ),
        if refit.relative_rms < 0.01 { Ok(rms) } else { Err(rms) },
        within(
            "as-printed beta(300 K)",
            tpa_coefficient(300.0, &printed).map_err(|e| e.to_string())?,
            1.067,
            0.001,
        ),
    ])
}

fn reference_config() -> RunConfig {
    RunConfig::from_json(r#"{"waveguide": {"a_eff_um2": 0.1}}"#, &[]).unwrap()
}

fn headline_reductions() -> Outcome {
    let cfg = reference_config();
    let hot = cfg.coefficients_at(300.0).map_err(|e| e.to_string())?;
    let cold = cfg.coefficients_at(5.5).map_err(|e| e.to_string())?;
    let tpa = 100.0 * (1.0 - cold.beta_tpa / hot.beta_tpa);
    let kerr = 100.0 * (1.0 - cold.n2 / hot.n2);
    all(vec![
        within("TPA reduction %", tpa, 45.0, 1.0),
        within("Kerr reduction %", kerr, 25.0, 1.0),
    ])
}

fn fom_and_heralding() -> Outcome {
    let cfg = reference_config();
    let fom_at = |t: f64| {
        let c = cfg.coefficients_at(t).unwrap();
        nonlinear_fom(c.n2, c.beta_tpa, c.wavelength).unwrap().value()
    };
    let herald = |fom: f64| {
        pair_source_metrics(&PairSourceScenario {
            p_pair: 0.05,
            purity: 0.9,
            fom,
        })
        .unwrap()
        .heralding
    };
    all(vec![
        within("FOM(300 K)", fom_at(300.0), 0.44, 0.01),
        within("FOM(0 K)", fom_at(0.0), 0.59, 0.01),
        within("heralding(0.44)", herald(0.44), 0.74, 0.01),
        within("heralding(0.59)", herald(0.59), 0.79, 0.01),
        within("heralding(4.4)", herald(4.4), 0.97, 0.01),
    ])
}

fn fca_drude() -> Outcome {
    let s = fca_cross_section(&FcaDrudeParams::silicon(WAVELENGTH, 0.03, 0.01)).map_err(|e| e.to_string())?;
    within_rel("sigma", s, 3.7e-22, 0.05)
}

fn solver_oracles() -> Outcome {
    let wg = reference_waveguide();
    let grid = TemporalGrid::centered(1024, 48e-12).unwrap();
    let cfg = SolverConfig {
        dz: wg.length / 2000.0,
        max_step_halvings: 2,
        tol: 1e-4,
        stepper: Stepper::PredictorCorrector,
        carrier_preload: 0.0,
    };
    let input = sech2_pulse(grid, 18.0, 4.9e-12, 0.0).map_err(|e| e.to_string())?;
    let run = |nl: NonlinearCoeffs| propagate(&input, &wg, &nl, &cfg).map_err(|e| e.to_string());

    let linear = run(NonlinearCoeffs::zero(WAVELENGTH))?;

    let beta = units::cm_per_gw_to_m_per_w(0.761);
    let tpa = run(NonlinearCoeffs::new(0.0, beta, 0.0, 0.0, WAVELENGTH).unwrap())?;
    let a_tpa = beta / wg.a_eff;
    let (lin_t, l_eff) = (wg.linear_transmission(), wg.effective_length());
    let tpa_err = input
        .power
        .iter()
        .zip(&tpa.output.power)
        .filter(|(p0, _)| **p0 > 1e-3 * 18.0)
        .map(|(p0, p)| (p / (p0 * lin_t / (1.0 + a_tpa * p0 * l_eff)) - 1.0).abs())
        .fold(0.0, f64::max);
    let tpa_line = format!("TPA-only max relative error {tpa_err:.2e} (limit 1e-4)");

    let kerr_nl = NonlinearCoeffs::new(5.18e-18, 0.0, 0.0, 0.0, WAVELENGTH).unwrap();
    let kerr = run(kerr_nl)?;
    let gamma = kerr_nl.gamma(wg.a_eff);
    let kerr_err = input
        .power
        .iter()
        .zip(&kerr.output.phase)
        .filter(|(p0, _)| **p0 > 1e-3 * 18.0)
        .map(|(p0, phi)| (phi / (gamma * p0 * l_eff) - 1.0).abs())
        .fold(0.0, f64::max);
    let kerr_line = format!("Kerr-only max relative phase error {kerr_err:.2e} (limit 1e-6)");

    all(vec![
        within("linear transmission", linear.transmission, 0.3482, 1e-4),
        if tpa_err <= 1e-4 { Ok(tpa_line) } else { Err(tpa_line) },
        if kerr_err <= 1e-6 {
            Ok(kerr_line)
        } else {
            Err(kerr_line)
        },
    ])
}

fn pulse_energetics() -> Outcome {
    within(
        "peak power W",
        peak_from_average(5e-3, &laser()).map_err(|e| e.to_string())?,
        18.0,
        0.1,
    )
}

fn end_to_end() -> Outcome {
    let cfg = reference_config();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sim = dir.path().join("sim");
    let opts = SimulateOptions {
        synthesize_scans: true,
        synthesize_spectra: true,
        ..Default::default()
    };
    let e = |e: si_nonlinear::Error| e.to_string();
    cmd_simulate(&cfg, &opts, &sim).map_err(e)?;
    let fit_dir = dir.path().join("fit");
    let fit = cmd_fit_transmission(&cfg, &[sim.join("scans.csv")], &fit_dir).map_err(e)?;
    let ret = dir.path().join("ret");
    cmd_retrieve_phase(&cfg, &sim.join("spectra"), &fit_dir.join("fit_transmission.json"), &ret).map_err(e)?;
    let phase = cmd_fit_phase(&cfg, &ret, &dir.path().join("fp")).map_err(e)?;

    let pair = &fit.pairs[0];
    let truth = cfg.coefficients_at(300.0).map_err(e)?;
    all(vec![
        within_rel(
            "beta cm/GW",
            pair.beta_cm_per_gw,
            units::m_per_w_to_cm_per_gw(truth.beta_tpa),
            0.03,
        ),
        within_rel("n2", phase.n2_m2_per_w, truth.n2, 0.05),
        within("eta_L dB", pair.eta_l_db, to_db(cfg.synthesis.eta_l), 0.2),
        within("eta_R dB", pair.eta_r_db, to_db(cfg.synthesis.eta_r), 0.2),
    ])
}

fn phase_retrieval() -> Outcome {
    let grid = TemporalGrid::centered(1024, 64e-12).unwrap();
    let mut p = sech2_pulse(grid, 1.0, 4.9e-12, 0.0).unwrap();
    p.phase = p.power.iter().map(|x| 2.0 * x).collect();
    let spec: Vec<f64> = spectrum_of(&p).iter().map(|a| a.norm()).collect();
    let time: Vec<f64> = p.power.iter().map(|x| x.sqrt()).collect();
    let cfg = RetrievalConfig {
        max_iters: 300,
        err_tol: 1e-9,
        ..Default::default()
    };
    // the true 2 rad peak is kept out of the seed set
    let seeds: Vec<InitPhase> = default_seeds()
        .into_iter()
        .filter(|s| *s != InitPhase::IntensityScaled(2.0))
        .collect();
    let (r, seed) = gerchberg_saxton_multistart(grid, &spec, &time, &cfg, &seeds).map_err(|e| e.to_string())?;
    let c = compare_phases(&r, &p.phase, &p.power).map_err(|e| e.to_string())?;
    let monotone = r.error_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let rms = format!("RMS {:.4} rad over the >5% region (limit 0.05)", c.rms);
    all(vec![
        if c.rms < 0.05 { Ok(rms) } else { Err(rms) },
        if monotone {
            Ok(format!(
                "error non-increasing over {} iterations from {seed:?}",
                r.error_history.len()
            ))
        } else {
            Err("error sequence increased".into())
        },
    ])
}

fn s<T: std::fmt::Debug>(e: proptest::test_runner::TestError<T>) -> String {
    format!("{e:?}")
}

fn property_suites() -> Outcome {
    let run = |name: &str, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new(Config {
            failure_persistence: None,
            ..Config::with_cases(200)
        });
        f(&mut runner)
            .map(|_| format!("{name}: 200 cases"))
            .map_err(|e| format!("{name}: {e}"))
    };
    all(vec![
        run("energy monotonicity", &|r| {
            r.run(&prop_case(), |c| check_energy_monotonicity(&c)).map_err(s)
        }),
        run("carrier positivity", &|r| {
            r.run(&prop_case(), |c| check_carrier_positivity(&c)).map_err(s)
        }),
        run("geometric mean", &|r| {
            r.run(&mean_case(), |(a, b, g1, g2, k)| check_geometric_mean(a, b, g1, g2, k))
                .map_err(s)
        }),
        run("baseline linearity", &|r| {
            r.run(&baseline_case(), |(p1, p2, r1, r2, a, b)| {
                check_baseline_linearity(&p1, &p2, &r1, &r2, a, b)
            })
            .map_err(s)
        }),
        run("worker determinism", &|r| {
            r.run(&prop_case(), |c| check_worker_determinism(&c)).map_err(s)
        }),
    ])
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 10] = [
        ("Kerr model", kerr_model),
        ("TPA model", tpa_model),
        ("headline reductions", headline_reductions),
        ("FOM and heralding", fom_and_heralding),
        ("FCA cross-section", fca_drude),
        ("solver closed forms", solver_oracles),
        ("pulse energetics", pulse_energetics),
        ("end-to-end synthetic pipeline", end_to_end),
        ("phase retrieval", phase_retrieval),
        ("property suites", property_suites),
    ];
    let mut failures = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
                failures.push(i + 1);
            }
        }
    }
    if failures.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failures:?}");
        std::process::ExitCode::FAILURE
    }
}
