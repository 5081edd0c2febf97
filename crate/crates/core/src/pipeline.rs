//! Commands behind the `sinl` binary. Each command writes its files into an
//! output directory and returns the JSON document it wrote there.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CoefficientSource, RunConfig};
use crate::error::{Error, Result};
use crate::fitting::{
    aggregate_series, aggregate_values, combine_bidirectional, fit_inverse_transmission, fit_phase_profile,
    BidirectionalResult, Direction, PowerScan, TransmissionFit,
};
use crate::materials::{self, fca_lookup, nonlinear_fom, pair_source_metrics, PairSourceScenario, TpaVariant};
use crate::phase_retrieval::{
    gerchberg_saxton_multistart, orient_like, resample_spectrum, spectrum_of, spectrum_record_from_field,
    subtract_fiber_background, InitPhase, RetrievedPhase, SpectrumRecord,
};
use crate::propagation::{propagate, st_table, transmission_curve, StTable, Stepper, TransmissionPoint};
use crate::pulse::{peak_from_average, pulse_energy, sech2_pulse, LaserSpec, PulseEnvelope};
use crate::scans::{load_scan_set, write_scan_set};
use crate::units::{self, m_per_w_to_cm_per_gw, mw_to_w, to_db, w_to_mw};

/// Embedded in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub coefficient_source: CoefficientSource,
    pub tpa_variant: TpaVariant,
    pub stepper: Stepper,
    pub chi_uniform_approx: bool,
    pub inputs: Vec<String>,
}

fn provenance(cfg: &RunConfig, inputs: &[&Path]) -> Result<Provenance> {
    Ok(Provenance {
        config_hash: cfg.hash(),
        coefficient_source: cfg.materials.coefficients,
        tpa_variant: cfg.materials.tpa.variant,
        stepper: cfg.solver.stepper,
        chi_uniform_approx: cfg.waveguide_spec()?.chi_uniform_approx,
        inputs: inputs.iter().map(|p| display_name(p)).collect(),
    })
}

/// File name only, so outputs do not depend on where the inputs live.
fn display_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn num(v: f64) -> String {
    let a = v.abs();
    if v.is_infinite() {
        "inf".into()
    } else if a == 0.0 || (1e-3..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn spectrum_file_name(power_mw: f64) -> String {
    format!("spec_{power_mw}mW.txt")
}

/// Power encoded in a `spec_<power>mW.txt` name.
pub fn parse_spectrum_name(name: &str) -> Option<f64> {
    let p: f64 = name.strip_prefix("spec_")?.strip_suffix("mW.txt")?.parse().ok()?;
    (p > 0.0).then_some(p)
}

fn phase_file_name(power_mw: f64) -> String {
    format!("phase_{power_mw}mW.txt")
}

fn table_file_name(power_mw: f64) -> String {
    format!("st_{power_mw}mW.txt")
}

/// (input coupler, output coupler, switch transmittance per side).
fn couplers(direction: Direction, eta_l: f64, eta_r: f64, excess: f64) -> (f64, f64, f64) {
    match direction {
        Direction::Off => (eta_l, eta_r, 1.0),
        Direction::On => (eta_r, eta_l, excess.sqrt()),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerSpec {
    AverageMw(f64),
    PeakW(f64),
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Overrides `simulate.avg_power_mw`.
    pub power: Option<PowerSpec>,
    pub temperature_k: Option<f64>,
    pub synthesize_scans: bool,
    pub synthesize_spectra: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub provenance: Provenance,
    pub temperature_k: f64,
    pub avg_power_mw: f64,
    pub peak_power_w: f64,
    pub transmission: f64,
    pub step_count: usize,
    pub convergence_estimate: f64,
    pub peak_phase_rad: f64,
    pub sweep: Vec<TransmissionPoint>,
    pub sweep_max_convergence_estimate: f64,
    pub files: Vec<String>,
}

pub fn cmd_simulate(cfg: &RunConfig, opts: &SimulateOptions, out: &Path) -> Result<SimulateSummary> {
    ensure_dir(out)?;
    let wg = cfg.waveguide_spec()?;
    let laser = cfg.laser_spec()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver();
    let temperature = opts.temperature_k.unwrap_or(cfg.simulate.temperature_k);
    let nl = cfg.coefficients_at(temperature)?;

    let peak = match opts.power.unwrap_or(PowerSpec::AverageMw(cfg.simulate.avg_power_mw)) {
        PowerSpec::AverageMw(mw) => peak_from_average(mw_to_w(mw), &laser)?,
        PowerSpec::PeakW(w) => w,
    };
    let input = sech2_pulse(grid, peak, laser.fwhm, 0.0)?;
    let avg_power_mw = w_to_mw(pulse_energy(&input) * laser.rep_rate);
    let r = propagate(&input, &wg, &nl, &solver)?;
    let mut files = Vec::new();

    let rows = (0..grid.len()).map(|i| {
        vec![
            num(units::s_to_ps(grid.time(i))),
            num(input.power[i]),
            num(r.output.power[i]),
            num(r.output.phase[i]),
            num(r.carriers_out[i]),
        ]
    });
    write_text(
        &out.join("pulse.csv"),
        &csv_text(&["tau_ps", "p_in_W", "p_out_W", "phase_rad", "carriers_per_m3"], rows)?,
    )?;
    files.push("pulse.csv".to_string());

    spectrum_record_from_field(&spectrum_of(&r.output), &grid, laser.wavelength)?.write(&out.join("spectrum.txt"))?;
    files.push("spectrum.txt".into());

    let table = StTable {
        grid,
        peak_power: peak,
        alpha_tpa: nl.alpha_tpa(wg.a_eff),
        sigma_fca: nl.sigma_fca,
        length: wg.length,
        input_power: input.power.clone(),
        output_power: r.output.power.clone(),
        s: r.s_table.clone(),
        t: r.t_table.clone(),
        transmission: r.transmission,
        convergence_estimate: r.convergence_estimate,
    };
    table.write(&out.join("st_table.txt"))?;
    files.push("st_table.txt".into());

    let sweep_w: Vec<f64> = cfg.simulate.sweep_mw.iter().map(|p| mw_to_w(*p)).collect();
    let sweep = transmission_curve(&sweep_w, &laser, grid, &wg, &nl, &solver)?;
    let rows = sweep.iter().map(|p| {
        vec![
            num(w_to_mw(p.p_in_avg)),
            num(p.peak_power),
            num(p.inverse_transmission),
            num(p.convergence_estimate),
        ]
    });
    write_text(
        &out.join("transmission.csv"),
        &csv_text(
            &[
                "p_in_mW",
                "peak_power_W",
                "inverse_transmission",
                "convergence_estimate",
            ],
            rows,
        )?,
    )?;
    files.push("transmission.csv".into());

    if opts.synthesize_scans {
        let scans = synthesize_scans(cfg, &laser)?;
        write_scan_set(&out.join("scans.csv"), &scans)?;
        files.push("scans.csv".into());
    }
    if opts.synthesize_spectra {
        let dir = out.join("spectra");
        ensure_dir(&dir)?;
        for name in synthesize_spectra(cfg, &laser, temperature, &dir)? {
            files.push(format!("spectra/{name}"));
        }
    }

    let summary = SimulateSummary {
        provenance: provenance(cfg, &[])?,
        temperature_k: temperature,
        avg_power_mw,
        peak_power_w: peak,
        transmission: r.transmission,
        step_count: r.step_count,
        convergence_estimate: r.convergence_estimate,
        peak_phase_rad: r.output.phase.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sweep_max_convergence_estimate: sweep.iter().map(|p| p.convergence_estimate).fold(0.0, f64::max),
        sweep,
        files,
    };
    write_json(&out.join("simulate.json"), &summary)?;
    Ok(summary)
}

/// Fiber-to-fiber scans in both directions at every synthesis temperature.
pub fn synthesize_scans(cfg: &RunConfig, laser: &LaserSpec) -> Result<Vec<PowerScan>> {
    let wg = cfg.waveguide_spec()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver();
    let syn = &cfg.synthesis;
    let excess = cfg.setup.switch_excess_loss;
    let jobs: Vec<(f64, Direction)> = syn
        .temperatures_k
        .iter()
        .flat_map(|t| [(*t, Direction::On), (*t, Direction::Off)])
        .collect();
    let clean: Vec<Vec<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(t, dir)| {
            let nl = cfg.coefficients_at(t)?;
            let (e_in, e_out, sw) = couplers(dir, syn.eta_l, syn.eta_r, excess);
            let p_fiber: Vec<f64> = syn.powers_mw.iter().map(|p| mw_to_w(*p)).collect();
            let p_wg: Vec<f64> = p_fiber.iter().map(|p| p * e_in * sw).collect();
            let curve = transmission_curve(&p_wg, laser, grid, &wg, &nl, &solver)?;
            Ok(p_fiber
                .iter()
                .zip(p_wg.iter().zip(&curve))
                .map(|(pf, (pw, c))| (*pf, pw / c.inverse_transmission * e_out * sw))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(syn.seed);
    let noise = Normal::new(1.0, syn.noise_rel).map_err(|e| Error::Config(e.to_string()))?;
    jobs.iter()
        .zip(clean)
        .map(|(&(t, dir), samples)| {
            let samples = samples
                .into_iter()
                .map(|(pi, po)| {
                    (
                        pi,
                        if syn.noise_rel > 0.0 {
                            po * noise.sample(&mut rng)
                        } else {
                            po
                        },
                    )
                })
                .collect();
            PowerScan::new(dir, t, samples, excess)
        })
        .collect()
}

/// Output spectra recorded in `setup.spectra_direction`, including the
/// input-fiber self-phase modulation. Returns the file names written.
pub fn synthesize_spectra(cfg: &RunConfig, laser: &LaserSpec, temperature: f64, dir: &Path) -> Result<Vec<String>> {
    let wg = cfg.waveguide_spec()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver();
    let nl = cfg.coefficients_at(temperature)?;
    let syn = &cfg.synthesis;
    let (e_in, _, sw) = couplers(
        cfg.setup.spectra_direction,
        syn.eta_l,
        syn.eta_r,
        cfg.setup.switch_excess_loss,
    );
    let records: Vec<(f64, SpectrumRecord)> = syn
        .powers_mw
        .par_iter()
        .map(|&p| {
            let launched = sech2_pulse(grid, peak_from_average(mw_to_w(p), laser)?, laser.fwhm, 0.0)?;
            let phase = launched
                .power
                .iter()
                .map(|x| cfg.setup.fiber_gamma_l_rad_per_w * x)
                .collect();
            let input = PulseEnvelope::new(grid, launched.power.iter().map(|x| x * e_in * sw).collect(), phase)?;
            let r = propagate(&input, &wg, &nl, &solver)?;
            Ok((
                p,
                spectrum_record_from_field(&spectrum_of(&r.output), &grid, laser.wavelength)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut names = Vec::new();
    for (p, rec) in records {
        let name = spectrum_file_name(p);
        rec.write(&dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

// ---------------------------------------------------------- fit transmission

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub source: String,
    pub beta_apparent_cm_per_gw: f64,
    pub fit: TransmissionFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub source: String,
    pub beta_cm_per_gw: f64,
    pub eta_l_db: f64,
    pub eta_r_db: f64,
    pub result: BidirectionalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpairedScan {
    pub source: String,
    pub temperature_k: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSeriesRow {
    pub temperature_k: f64,
    pub beta_mean_cm_per_gw: f64,
    pub beta_std_cm_per_gw: Option<f64>,
    pub pairs: usize,
    pub spread_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub provenance: Provenance,
    pub a_eff_m2: f64,
    pub fits: Vec<FitEntry>,
    pub pairs: Vec<PairEntry>,
    pub unpaired: Vec<UnpairedScan>,
    pub series: Vec<BetaSeriesRow>,
}

impl TransmissionReport {
    /// Mean true α_TPA and couplers over the pairs at `temperature`.
    pub fn at_temperature(&self, temperature: f64) -> Option<(f64, f64, f64)> {
        let rows: Vec<&BidirectionalResult> = self
            .pairs
            .iter()
            .map(|p| &p.result)
            .filter(|r| (r.temperature - temperature).abs() <= 1e-9 * temperature.max(1.0))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&BidirectionalResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        Some((mean(|r| r.alpha_tpa_true), mean(|r| r.eta_l), mean(|r| r.eta_r)))
    }
}

pub fn cmd_fit_transmission(cfg: &RunConfig, scan_files: &[PathBuf], out: &Path) -> Result<TransmissionReport> {
    ensure_dir(out)?;
    let wg = cfg.waveguide_spec()?;
    let laser = cfg.laser_spec()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver();

    let mut scans: Vec<(String, PowerScan)> = Vec::new();
    for f in scan_files {
        let name = display_name(f);
        scans.extend(
            load_scan_set(f, cfg.setup.switch_excess_loss)?
                .into_iter()
                .map(|s| (name.clone(), s)),
        );
    }
    let mut unpaired = Vec::new();
    let mut paired: Vec<(String, PowerScan, PowerScan)> = Vec::new();
    let mut i = 0;
    // scans from one file arrive sorted by temperature with `on` first
    while i < scans.len() {
        let (src, s) = &scans[i];
        let partner = scans.get(i + 1).filter(|(src2, s2)| {
            src2 == src
                && s2.temperature == s.temperature
                && s.direction == Direction::On
                && s2.direction == Direction::Off
        });
        match partner {
            Some((_, off)) => {
                paired.push((src.clone(), s.clone(), off.clone()));
                i += 2;
            }
            None => {
                unpaired.push(UnpairedScan {
                    source: src.clone(),
                    temperature_k: s.temperature,
                    direction: s.direction,
                });
                i += 1;
            }
        }
    }
    for u in &unpaired {
        eprintln!(
            "warning: {} has an unpaired '{}' scan at {} K; skipped",
            u.source,
            u.direction.as_str(),
            u.temperature_k
        );
    }
    if paired.is_empty() {
        return Err(Error::NothingToFit(format!(
            "no on/off scan pairs among {} scan(s)",
            scans.len()
        )));
    }

    let fitted: Vec<(TransmissionFit, TransmissionFit)> = paired
        .par_iter()
        .map(|(_, on, off)| {
            let sigma = cfg.sigma_fca_at(on.temperature)?;
            let fon = fit_inverse_transmission(on, &wg, &laser, grid, sigma, &solver)?;
            let foff = fit_inverse_transmission(off, &wg, &laser, grid, sigma, &solver)?;
            Ok((fon, foff))
        })
        .collect::<Result<_>>()?;

    let to_beta = |a: f64| m_per_w_to_cm_per_gw(a * wg.a_eff);
    let mut fits = Vec::new();
    let mut pairs = Vec::new();
    for ((src, _, _), (fon, foff)) in paired.iter().zip(fitted) {
        let result = combine_bidirectional(&fon, &foff)?;
        for f in [fon, foff] {
            fits.push(FitEntry {
                source: src.clone(),
                beta_apparent_cm_per_gw: to_beta(f.alpha_tpa_apparent),
                fit: f,
            });
        }
        pairs.push(PairEntry {
            source: src.clone(),
            beta_cm_per_gw: to_beta(result.alpha_tpa_true),
            eta_l_db: to_db(result.eta_l),
            eta_r_db: to_db(result.eta_r),
            result,
        });
    }
    let series: Vec<BetaSeriesRow> = aggregate_series(&pairs.iter().map(|p| p.result.clone()).collect::<Vec<_>>())
        .points
        .into_iter()
        .map(|p| BetaSeriesRow {
            temperature_k: p.temperature,
            beta_mean_cm_per_gw: to_beta(p.mean),
            beta_std_cm_per_gw: p.std.map(to_beta),
            pairs: p.values.len(),
            spread_undefined: p.spread_undefined,
        })
        .collect();

    let inputs: Vec<&Path> = scan_files.iter().map(PathBuf::as_path).collect();
    let report = TransmissionReport {
        provenance: provenance(cfg, &inputs)?,
        a_eff_m2: wg.a_eff,
        fits,
        pairs,
        unpaired,
        series,
    };
    write_json(&out.join("fit_transmission.json"), &report)?;
    let rows = report.series.iter().map(|r| {
        vec![
            num(r.temperature_k),
            num(r.beta_mean_cm_per_gw),
            r.beta_std_cm_per_gw.map(num).unwrap_or_default(),
            r.pairs.to_string(),
        ]
    });
    write_text(
        &out.join("beta_series.csv"),
        &csv_text(&["temperature_K", "beta_cm_per_GW", "std_cm_per_GW", "n_pairs"], rows)?,
    )?;
    Ok(report)
}

// ------------------------------------------------------------ retrieve phase

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub power_mw: f64,
    pub waveguide_avg_power_mw: f64,
    pub peak_power_w: f64,
    pub reference: bool,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    pub error_non_increasing: bool,
    pub seed: InitPhase,
    pub time_reversed: bool,
    pub phase_file: String,
    pub table_file: String,
    pub table_convergence_estimate: f64,
    pub error_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub provenance: Provenance,
    pub temperature_k: f64,
    pub alpha_tpa_per_w_m: f64,
    pub sigma_fca_m2: f64,
    pub input_coupler: f64,
    pub reference_mw: f64,
    pub entries: Vec<RetrievalEntry>,
}

fn non_increasing(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15)
}

pub fn cmd_retrieve_phase(cfg: &RunConfig, spectra_dir: &Path, fit_file: &Path, out: &Path) -> Result<RetrievalReport> {
    ensure_dir(out)?;
    let wg = cfg.waveguide_spec()?;
    let laser = cfg.laser_spec()?;
    let grid = cfg.grid()?;
    let solver = cfg.solver();
    let temperature = cfg.retrieval.temperature_k;
    let fit: TransmissionReport = read_json(fit_file)?;
    let (alpha_tpa, eta_l, eta_r) = fit.at_temperature(temperature).ok_or_else(|| {
        Error::Config(format!(
            "{} has no bidirectional result at {temperature} K",
            fit_file.display()
        ))
    })?;
    let (e_in, _, sw) = couplers(cfg.setup.spectra_direction, eta_l, eta_r, cfg.setup.switch_excess_loss);
    let sigma = cfg.sigma_fca_at(temperature)?;

    let mut spectra: Vec<(f64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(spectra_dir).map_err(|e| Error::io(spectra_dir, e))? {
        let path = entry.map_err(|e| Error::io(spectra_dir, e))?.path();
        if let Some(p) = path.file_name().and_then(|n| n.to_str()).and_then(parse_spectrum_name) {
            spectra.push((p, path));
        }
    }
    spectra.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reference_mw = match cfg.retrieval.reference_mw {
        Some(r) => r,
        None => {
            spectra
                .first()
                .ok_or_else(|| Error::Config(format!("no spec_<power>mW.txt files in {}", spectra_dir.display())))?
                .0
        }
    };
    if !spectra.iter().any(|(p, _)| *p == reference_mw) {
        return Err(Error::Config(format!(
            "reference spectrum {} is missing from {}",
            spectrum_file_name(reference_mw),
            spectra_dir.display()
        )));
    }
    if spectra.len() < 2 {
        return Err(Error::Config(
            "need the reference spectrum and at least one other power".into(),
        ));
    }

    let base = cfg.retrieval_config();
    let seeds = cfg.retrieval_seeds();
    let results: Vec<(RetrievedPhase, StTable, InitPhase, bool, f64, f64)> = spectra
        .par_iter()
        .map(|(p_mw, path)| {
            let record = SpectrumRecord::read(path)?;
            let p_fiber = mw_to_w(*p_mw);
            let p_wg = p_fiber * e_in * sw;
            let peak = peak_from_average(p_wg, &laser)?;
            let table = st_table(peak, alpha_tpa, sigma, &wg, &laser, grid, &solver)?;
            let spec = resample_spectrum(&record, &grid, laser.wavelength)?;
            let time: Vec<f64> = table.output_power.iter().map(|x| x.sqrt()).collect();
            let (raw, seed) = gerchberg_saxton_multistart(grid, &spec, &time, &base, &seeds)?;
            let oriented = orient_like(&raw, &table.s)?;
            let twin = oriented.peak_index != raw.peak_index || oriented.phase != raw.phase;
            let launched = sech2_pulse(grid, peak_from_average(p_fiber, &laser)?, laser.fwhm, 0.0)?;
            let cleaned = subtract_fiber_background(&oriented, cfg.setup.fiber_gamma_l_rad_per_w, &launched)?;
            Ok((cleaned, table, seed, twin, p_wg, peak))
        })
        .collect::<Result<_>>()?;

    let ref_idx = spectra
        .iter()
        .position(|(p, _)| *p == reference_mw)
        .expect("checked above");
    let reference = results[ref_idx].0.clone();
    let mut entries = Vec::new();
    for ((p_mw, _), (phase, table, seed, twin, p_wg, peak)) in spectra.iter().zip(results) {
        let corrected = crate::phase_retrieval::baseline_correct(std::slice::from_ref(&phase), &reference)?
            .pop()
            .expect("one phase in, one out");
        let phase_file = phase_file_name(*p_mw);
        let table_file = table_file_name(*p_mw);
        corrected.write(&out.join(&phase_file))?;
        table.write(&out.join(&table_file))?;
        entries.push(RetrievalEntry {
            power_mw: *p_mw,
            waveguide_avg_power_mw: w_to_mw(p_wg),
            peak_power_w: peak,
            reference: *p_mw == reference_mw,
            iterations: phase.iterations_used,
            final_error: phase.final_error,
            converged: phase.converged,
            error_non_increasing: non_increasing(&phase.error_history),
            seed,
            time_reversed: twin,
            phase_file,
            table_file,
            table_convergence_estimate: table.convergence_estimate,
            error_history: phase.error_history,
        });
    }
    let report = RetrievalReport {
        provenance: provenance(cfg, &[spectra_dir, fit_file])?,
        temperature_k: temperature,
        alpha_tpa_per_w_m: alpha_tpa,
        sigma_fca_m2: sigma,
        input_coupler: e_in,
        reference_mw,
        entries,
    };
    write_json(&out.join("retrieval.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- fit phase

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFitEntry {
    pub power_mw: f64,
    pub gamma_per_w_m: Option<f64>,
    pub mu: Option<f64>,
    pub n2_m2_per_w: Option<f64>,
    pub residual_rms_rad: Option<f64>,
    pub weight: f64,
    /// Set when the fit was degenerate.
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFitReport {
    pub provenance: Provenance,
    pub temperature_k: f64,
    pub reference_mw: f64,
    pub entries: Vec<PhaseFitEntry>,
    /// Mean over powers weighted by Σ S².
    pub n2_m2_per_w: f64,
    pub n2_std_m2_per_w: Option<f64>,
    pub mu_mean: Option<f64>,
}

pub fn cmd_fit_phase(cfg: &RunConfig, phases_dir: &Path, out: &Path) -> Result<PhaseFitReport> {
    ensure_dir(out)?;
    let wg = cfg.waveguide_spec()?;
    let laser = cfg.laser_spec()?;
    let retrieval_file = phases_dir.join("retrieval.json");
    let retrieval: RetrievalReport = read_json(&retrieval_file)?;
    let reference = retrieval
        .entries
        .iter()
        .find(|e| e.reference)
        .ok_or_else(|| Error::Config(format!("{} lists no reference power", retrieval_file.display())))?;
    let ref_table = StTable::read(&phases_dir.join(&reference.table_file))?;
    let k0 = units::wavenumber(laser.wavelength);

    let mut entries = Vec::new();
    for e in retrieval.entries.iter().filter(|e| !e.reference) {
        let phase = RetrievedPhase::read(&phases_dir.join(&e.phase_file))?;
        let table = StTable::read(&phases_dir.join(&e.table_file))?;
        entries.push(
            match fit_phase_profile(&phase, &table, Some(&ref_table), retrieval.sigma_fca_m2) {
                Ok(f) => PhaseFitEntry {
                    power_mw: e.power_mw,
                    gamma_per_w_m: Some(f.gamma),
                    mu: f.mu,
                    n2_m2_per_w: Some(f.gamma * wg.a_eff / k0),
                    residual_rms_rad: Some(f.residual_rms),
                    weight: f.weight,
                    degenerate: None,
                },
                Err(Error::DegenerateFit(msg)) => PhaseFitEntry {
                    power_mw: e.power_mw,
                    gamma_per_w_m: None,
                    mu: None,
                    n2_m2_per_w: None,
                    residual_rms_rad: None,
                    weight: 0.0,
                    degenerate: Some(msg),
                },
                Err(other) => return Err(other),
            },
        );
    }
    let good: Vec<&PhaseFitEntry> = entries.iter().filter(|e| e.n2_m2_per_w.is_some()).collect();
    if good.is_empty() {
        let why = entries
            .iter()
            .filter_map(|e| e.degenerate.clone())
            .next()
            .unwrap_or_else(|| "no powers above the reference".into());
        return Err(Error::DegenerateFit(why));
    }
    let wsum: f64 = good.iter().map(|e| e.weight).sum();
    let n2 = good.iter().map(|e| e.weight * e.n2_m2_per_w.unwrap()).sum::<f64>() / wsum;
    let spread = aggregate_values(good.iter().map(|e| (retrieval.temperature_k, e.n2_m2_per_w.unwrap())));
    let mus: Vec<f64> = good.iter().filter_map(|e| e.mu).collect();
    let n_good = good.len();
    let report = PhaseFitReport {
        provenance: provenance(cfg, &[&retrieval_file])?,
        temperature_k: retrieval.temperature_k,
        reference_mw: retrieval.reference_mw,
        n2_m2_per_w: n2,
        n2_std_m2_per_w: spread.points[0].std,
        mu_mean: (!mus.is_empty()).then(|| mus.iter().sum::<f64>() / mus.len() as f64),
        entries,
    };
    write_json(&out.join("fit_phase.json"), &report)?;
    let row = vec![
        num(report.temperature_k),
        num(report.n2_m2_per_w),
        report.n2_std_m2_per_w.map(num).unwrap_or_default(),
        n_good.to_string(),
    ];
    write_text(
        &out.join("n2_series.csv"),
        &csv_text(&["temperature_K", "n2_m2_per_W", "std_m2_per_W", "n_powers"], [row])?,
    )?;
    Ok(report)
}

// ----------------------------------------------------------------- material

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRow {
    pub temperature_k: f64,
    pub beta_cm_per_gw: f64,
    pub n2_m2_per_w: f64,
    pub sigma_fca_m2: f64,
    /// None when β = 0.
    pub fom: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialReport {
    pub provenance: Provenance,
    pub beta_override_cm_per_gw: Option<f64>,
    pub rows: Vec<MaterialRow>,
}

/// Model values per temperature. `beta_override` replaces the TPA model in
/// the β and FOM columns.
pub fn cmd_material(
    cfg: &RunConfig,
    temperatures: &[f64],
    beta_override_cm_per_gw: Option<f64>,
    out: &Path,
) -> Result<MaterialReport> {
    ensure_dir(out)?;
    let tpa = cfg.tpa_params();
    let kerr = cfg.kerr_params();
    let fca = cfg.fca_table()?;
    let wavelength = units::nm_to_m(cfg.laser.wavelength_nm);
    let rows = temperatures
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("temperature must be >= 0 K, got {t}")));
            }
            let beta = match beta_override_cm_per_gw {
                Some(b) => b,
                None => materials::tpa_coefficient(t, &tpa)?,
            };
            let n2 = materials::kerr_coefficient(t, &kerr);
            let fom = nonlinear_fom(n2, units::cm_per_gw_to_m_per_w(beta), wavelength)?;
            Ok(MaterialRow {
                temperature_k: t,
                beta_cm_per_gw: beta,
                n2_m2_per_w: n2,
                sigma_fca_m2: fca_lookup(t, &fca)?,
                fom: fom.value().is_finite().then(|| fom.value()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MaterialReport {
        provenance: provenance(cfg, &[])?,
        beta_override_cm_per_gw,
        rows,
    };
    write_json(&out.join("material.json"), &report)?;
    let rows = report.rows.iter().map(|r| {
        vec![
            num(r.temperature_k),
            num(r.beta_cm_per_gw),
            num(r.n2_m2_per_w),
            num(r.sigma_fca_m2),
            num(r.fom.unwrap_or(f64::INFINITY)),
        ]
    });
    write_text(
        &out.join("material.csv"),
        &csv_text(
            &["temperature_K", "beta_cm_per_GW", "n2_m2_per_W", "sigma_fca_m2", "fom"],
            rows,
        )?,
    )?;
    Ok(report)
}

// ------------------------------------------------------------------ herald

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FomInput {
    Given(f64),
    /// FOM from the configured coefficients at this temperature (K).
    Temperature(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldReport {
    pub provenance: Provenance,
    pub p_pair: f64,
    pub purity: f64,
    /// None when infinite.
    pub fom: Option<f64>,
    pub fom_source: String,
    pub temperature_k: Option<f64>,
    pub xi: f64,
    pub heralding: f64,
    pub gamma_lp: f64,
    pub weak_pump_warning: bool,
}

pub fn cmd_herald(
    cfg: &RunConfig,
    p_pair: f64,
    purity: f64,
    fom_in: FomInput,
    out: Option<&Path>,
) -> Result<HeraldReport> {
    let (fom, source, temperature) = match fom_in {
        FomInput::Given(f) => (f, "given", None),
        FomInput::Temperature(t) => {
            let nl = cfg.coefficients_at(t)?;
            (
                nonlinear_fom(nl.n2, nl.beta_tpa, nl.wavelength)?.value(),
                "temperature",
                Some(t),
            )
        }
    };
    let m = pair_source_metrics(&PairSourceScenario { p_pair, purity, fom })?;
    let report = HeraldReport {
        provenance: provenance(cfg, &[])?,
        p_pair,
        purity,
        fom: fom.is_finite().then_some(fom),
        fom_source: source.into(),
        temperature_k: temperature,
        xi: m.xi,
        heralding: m.heralding,
        gamma_lp: m.gamma_lp,
        weak_pump_warning: m.weak_pump_warning,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("herald.json"), &report)?;
    }
    Ok(report)
}
