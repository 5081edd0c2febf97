mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use si_nonlinear::config::RunConfig;
use si_nonlinear::fitting::{fit_inverse_transmission, Direction, PowerScan};
use si_nonlinear::pipeline::{cmd_fit_transmission, cmd_material, synthesize_scans};
use si_nonlinear::propagation::SolverConfig;
use si_nonlinear::scans::{load_scan_set, write_scan_set};
use si_nonlinear::Error;

/// Reference device on the coarse 256-sample grid.
fn fast_config(extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> = vec!["grid.samples=256".into()];
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::from_json(r#"{"waveguide": {"a_eff_um2": 0.1}}"#, &o).unwrap()
}

fn sinl(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sinl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn scan_files_round_trip_through_disk() {
    let cfg = fast_config(&["synthesis.powers_mw=[0.5,1,2,4,8]"]);
    let scans = synthesize_scans(&cfg, &laser()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scans.csv");
    write_scan_set(&path, &scans).unwrap();
    let back = load_scan_set(&path, cfg.setup.switch_excess_loss).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in back.iter().zip(&scans) {
        assert_eq!((a.direction, a.temperature), (b.direction, b.temperature));
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x.0 / y.0 - 1.0).abs() < 1e-12 && (x.1 / y.1 - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn noisy_scans_recover_beta() {
    let cfg = fast_config(&["synthesis.noise_rel=0.01", "synthesis.seed=7"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scans.csv");
    write_scan_set(&path, &synthesize_scans(&cfg, &laser()).unwrap()).unwrap();
    let r = cmd_fit_transmission(&cfg, &[path], dir.path()).unwrap();
    let beta = r.pairs[0].beta_cm_per_gw;
    assert!((beta / 0.761 - 1.0).abs() < 0.03, "beta {beta}");
    assert!(dir.path().join("beta_series.csv").exists());
}

#[test]
fn flat_scan_fits_zero_tpa() {
    let wg = reference_waveguide();
    let t = 0.3 * wg.linear_transmission();
    let samples = (0..8).map(|i| {
        let p = 0.5e-3 * 1.5f64.powi(i);
        (p, p * t)
    });
    let scan = PowerScan::new(Direction::Off, 300.0, samples.collect(), 1.0).unwrap();
    let cfg = SolverConfig {
        dz: 150e-6,
        max_step_halvings: 8,
        tol: 1e-4,
        ..Default::default()
    };
    let f = fit_inverse_transmission(&scan, &wg, &laser(), small_grid(), 3.7e-22, &cfg).unwrap();
    assert_eq!(f.alpha_tpa_apparent, 0.0);
    assert!((f.coupler_mean - 0.3f64.sqrt()).abs() < 1e-6, "{}", f.coupler_mean);
}

#[test]
fn temperature_series_is_ordered() {
    let cfg = fast_config(&[
        "synthesis.temperatures_k=[5.5,50,150,300]",
        "synthesis.powers_mw=[0.5,1,2,4,8]",
    ]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scans.csv");
    write_scan_set(&path, &synthesize_scans(&cfg, &laser()).unwrap()).unwrap();
    let r = cmd_fit_transmission(&cfg, &[path], dir.path()).unwrap();
    let b: Vec<f64> = r.series.iter().map(|s| s.beta_mean_cm_per_gw).collect();
    assert_eq!(r.series.len(), 4);
    assert!(b[3] > b[2] && b[2] > b[1], "{b:?}");
    assert!((b[1] / b[0] - 1.0).abs() < 0.03, "{b:?}");
    // the launch through the better coupler sees the larger apparent TPA
    for pair in r.fits.chunks(2) {
        let (on, off) = (&pair[0], &pair[1]);
        assert_eq!((on.fit.direction, off.fit.direction), (Direction::On, Direction::Off));
        assert!(off.fit.alpha_tpa_apparent > on.fit.alpha_tpa_apparent);
    }
}

#[test]
fn unpaired_scans_are_nothing_to_fit() {
    let cfg = fast_config(&[]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scans.csv");
    std::fs::write(
        &path,
        "direction,temperature_K,p_in_mW,p_out_mW\noff,300,1,0.1\noff,300,2,0.19\noff,300,4,0.35\noff,300,8,0.6\n",
    )
    .unwrap();
    assert!(matches!(
        cmd_fit_transmission(&cfg, &[path], dir.path()),
        Err(Error::NothingToFit(_))
    ));
}

#[test]
fn material_table_orders_with_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_material(&fast_config(&[]), &[5.5, 50.0, 150.0, 300.0], None, dir.path()).unwrap();
    let beta: Vec<f64> = r.rows.iter().map(|x| x.beta_cm_per_gw).collect();
    assert!(beta.windows(2).all(|w| w[1] >= w[0]), "{beta:?}");
    let fom = r.rows.iter().map(|x| x.fom.unwrap()).collect::<Vec<_>>();
    assert!(fom[0] > fom[3]);
    let o = cmd_material(&fast_config(&[]), &[300.0], Some(0.761), dir.path()).unwrap();
    assert!((o.rows[0].fom.unwrap() - 0.44).abs() < 0.01);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // effective area has no default
    let o = sinl(&["material"], d);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = sinl(
        &[
            "--set",
            "waveguide.a_eff_um2=0.1",
            "--out",
            "h",
            "herald",
            "--p-pair",
            "0.05",
            "--purity",
            "0.9",
            "--fom",
            "0.44",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["heralding"].as_f64().unwrap() - 0.74).abs() < 0.01);
    assert!(d.join("h/herald.json").exists());

    std::fs::write(d.join("cfg.json"), r#"{"waveguide": {"a_eff_um2": 0.1, "colour": 1}}"#).unwrap();
    assert_eq!(sinl(&["--config", "cfg.json", "material"], d).status.code(), Some(2));

    std::fs::write(
        d.join("one.csv"),
        "direction,temperature_K,p_in_mW,p_out_mW\non,300,1,0.1\n",
    )
    .unwrap();
    let o = sinl(&["--set", "waveguide.a_eff_um2=0.1", "fit-transmission", "one.csv"], d);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(d.join("bad.csv"), "direction,temperature_K,p_in_mW\non,300,1\n").unwrap();
    let o = sinl(&["--set", "waveguide.a_eff_um2=0.1", "fit-transmission", "bad.csv"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:1"));

    let o = sinl(
        &[
            "--set",
            "waveguide.a_eff_um2=0.1",
            "--set",
            "solver.max_step_halvings=0",
            "--set",
            "solver.tol=1e-12",
            "simulate",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
