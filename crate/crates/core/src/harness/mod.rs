//! Experiment drivers behind the `homog` command line.
//!
//! Every command writes its artifacts plus `manifest.json` (configuration
//! echo, version, mask hashes, RNG) and `timing.json` (wall time) into the
//! output directory. Everything except `timing.json` is a deterministic
//! function of the configuration.

pub mod config;
pub mod io;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cell::{effective_coefficients, solve_cell, EffectiveCoefficients};
use crate::error::{HomogError, Result};
use crate::grid::build_domain_mask;
use crate::init::RNG_ALGORITHM;
use crate::macroscale::{run_macro, MacroLedgerRow, MacroParams, Orientation};
use crate::micro::{estimate_report, run_micro, LedgerRow, MicroParams};
use crate::sparse::{CgOptions, UzawaOptions};
use crate::unfolding::{extend, integral_identity_check, macro_pore_average, pairing, two_scale_error, unfold, Extension, TwoScaleReport, TwoScaleRow, UnfoldedField};

pub use config::{Command, ExperimentConfig, FieldChoice};
use io::{write_csv, write_json, write_snapshot, Manifest, SnapshotMeta, Timing};
use sweep::{run_sweep, SweepReport, SweepSettings};

/// Process exit codes of the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const VERDICT: i32 = 4;
}

/// Exit code for an error: configuration and input problems give 2,
/// everything raised while computing gives 3.
pub fn exit_code(err: &HomogError) -> i32 {
    match err {
        HomogError::Config { .. }
        | HomogError::ConfigMissing(_)
        | HomogError::Parse(_)
        | HomogError::Geometry(_)
        | HomogError::Resolution(_)
        | HomogError::Misaligned { .. } => exit::CONFIG,
        _ => exit::SOLVER,
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    /// `Some(false)` when a verdict-bearing command failed its checks.
    pub verdict: Option<bool>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Some(false) => exit::VERDICT,
            _ => exit::OK,
        }
    }
}

pub fn micro_params(cfg: &ExperimentConfig) -> MicroParams {
    MicroParams {
        lambda: cfg.lambda,
        mu: cfg.mu,
        exponents: cfg.exponents,
        override_exponents: cfg.override_exponents,
        dt: cfg.dt,
        steps: cfg.steps,
        stabilization: cfg.stabilization,
        snapshot_stride: cfg.stride,
        force_zero_velocity: cfg.force_zero_velocity,
        cg: CgOptions {
            tol: cfg.tol,
            max_iter: 50_000,
            jacobi: cfg.jacobi,
            mean_zero: false,
        },
        uzawa: UzawaOptions {
            tol: cfg.uzawa_tol,
            ..UzawaOptions::default()
        },
    }
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.artifacts.push(p.clone());
        Ok(p)
    }

    fn relative(&self) -> Vec<String> {
        self.artifacts
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
            .collect()
    }

    fn finish(mut self, cfg: &ExperimentConfig, mask_hashes: Vec<String>, notes: Vec<String>, started: Instant) -> Result<Vec<PathBuf>> {
        let manifest_path = self.dir.join("manifest.json");
        let timing_path = self.dir.join("timing.json");
        let mut artifacts = self.relative();
        artifacts.push("manifest.json".into());
        artifacts.push("timing.json".into());
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cfg.command.label().into(),
            config_text: cfg.to_text(),
            config: serde_json::to_value(cfg)?,
            seed: cfg.seed,
            rng: RNG_ALGORITHM,
            mask_hashes,
            artifacts,
            notes,
        };
        write_json(&manifest_path, &manifest)?;
        write_json(
            &timing_path,
            &Timing {
                wall_seconds: started.elapsed().as_secs_f64(),
            },
        )?;
        self.artifacts.push(manifest_path);
        self.artifacts.push(timing_path);
        Ok(self.artifacts)
    }
}

/// Runs the configured command, writing into `out`.
pub fn run_command(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let started = Instant::now();
    match cfg.command {
        Command::Cell => run_cell_command(cfg, out, started),
        Command::Micro => run_micro_command(cfg, out, started),
        Command::Macro => run_macro_command(cfg, out, started),
        Command::Unfold => run_unfold_command(cfg, out, started),
        Command::Sweep => run_sweep_command(cfg, out, started),
    }
}

fn run_cell_command(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Outcome> {
    let (_, coeffs) = solve_cell(&cfg.geometry, cfg.n, cfg.convention)?;
    let mut w = Writer::new(out)?;
    fs::write(w.path("coefficients.json")?, coeffs.to_json()? + "\n")?;
    let mask = crate::grid::build_cell_mask(&cfg.geometry, cfg.n)?;
    let notes = vec![
        "sigma solves the Laplacian form with the stated convention".into(),
        "means of sigma are volume means over the pore part".into(),
    ];
    let artifacts = w.finish(cfg, vec![mask.hash()], notes, started)?;
    Ok(Outcome {
        artifacts,
        verdict: None,
        summary: format!(
            "theta={:.6} sigma_bar={:e} D_eff=[{:.6}, {:.6}] K={}",
            coeffs.theta,
            coeffs.sigma_bar,
            coeffs.d_eff[0][0],
            coeffs.d_eff[1][1],
            match coeffs.k.tensor() {
                Some(k) => format!("[{:.6e}, {:.6e}]", k[0][0], k[1][1]),
                None => "not defined".into(),
            }
        ),
    })
}

fn step_stem(step: usize) -> String {
    format!("step_{step:06}")
}

fn run_micro_command(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Outcome> {
    let k = cfg.eps[0];
    let params = micro_params(cfg);
    let run = run_micro(&cfg.geometry, k, cfg.n_cell, &params, &cfg.initial_condition())?;
    let domain = build_domain_mask(&cfg.geometry, k, cfg.n_cell)?;
    let mut w = Writer::new(out)?;
    write_csv(&w.path("ledger.csv")?, LedgerRow::CSV_HEADER, run.ledger.iter().map(|r| r.csv()))?;
    for (step, s) in &run.snapshots {
        let meta = SnapshotMeta {
            kind: "micro".into(),
            step: *step,
            t: s.t,
            n: domain.n(),
            k: Some(k),
            n_cell: Some(cfg.n_cell),
            geometry: Some(cfg.geometry.label()),
            mask_hash: run.mask_hash.clone(),
        };
        let stem = step_stem(*step);
        write_snapshot(&out.join("snapshots"), &stem, &meta, &domain.mask, &s.c, &s.w, &s.p, &s.u)?;
        w.artifacts.push(out.join("snapshots").join(format!("{stem}.csv")));
        w.artifacts.push(out.join("snapshots").join(format!("{stem}.json")));
    }
    let estimate = estimate_report(&run.ledger);
    write_json(&w.path("estimate.json")?, &estimate)?;
    let last = run.ledger.last().expect("ledger has the initial row");
    let artifacts = w.finish(cfg, vec![run.mask_hash.clone()], Vec::new(), started)?;
    Ok(Outcome {
        artifacts,
        verdict: None,
        summary: format!(
            "eps=1/{k} steps={} E={:e} mass={:e}",
            cfg.steps, last.energy, last.mass
        ),
    })
}

fn load_coefficients(cfg: &ExperimentConfig) -> Result<EffectiveCoefficients> {
    match &cfg.coefficients {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| HomogError::Parse(format!("{}: {e}", path.display())))?;
            EffectiveCoefficients::from_json(&text)
                .map_err(|e| HomogError::Parse(format!("{}: {e}", path.display())))
        }
        None => effective_coefficients(&cfg.geometry, cfg.n, cfg.convention),
    }
}

fn run_macro_command(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Outcome> {
    let coefficients = load_coefficients(cfg)?;
    let params = MacroParams {
        lambda: cfg.lambda,
        mu: cfg.mu,
        dt: cfg.dt,
        steps: cfg.steps,
        stabilization: cfg.stabilization,
        sigma_bar_override: cfg.sigma_bar,
        orientation: cfg.orientation,
        coefficients,
        n: cfg.n_macro,
        snapshot_stride: cfg.stride,
        tol: cfg.tol,
    };
    let run = run_macro(&params, &cfg.initial_condition())?;
    let mask = crate::grid::Mask::full(cfg.n_macro);
    let mut w = Writer::new(out)?;
    write_csv(
        &w.path("ledger.csv")?,
        MacroLedgerRow::CSV_HEADER,
        run.ledger.iter().map(|r| r.csv()),
    )?;
    for (step, s) in &run.snapshots {
        let meta = SnapshotMeta {
            kind: "macro".into(),
            step: *step,
            t: s.t,
            n: cfg.n_macro,
            k: None,
            n_cell: None,
            geometry: Some(params.coefficients.geometry.clone()),
            mask_hash: mask.hash(),
        };
        let stem = step_stem(*step);
        write_snapshot(&out.join("snapshots"), &stem, &meta, &mask, &s.c, &s.w, &s.p, &s.u)?;
        w.artifacts.push(out.join("snapshots").join(format!("{stem}.csv")));
        w.artifacts.push(out.join("snapshots").join(format!("{stem}.json")));
    }
    let mut notes = vec![format!("orientation={}", params.orientation.label())];
    notes.push(match cfg.sigma_bar {
        Some(s) => format!("sigma_bar override in use: {s:e} (cell value {:e})", params.coefficients.sigma_bar),
        None => format!("sigma_bar from cell problem: {:e}", params.coefficients.sigma_bar),
    });
    notes.push("outer boundary: no-flux for c and p".into());
    if params.orientation == Orientation::AsWritten {
        notes.push(format!("growth guard: abort when max|c| > {}", crate::macroscale::GROWTH_LIMIT));
    }
    let last = run.ledger.last().expect("ledger has the initial row");
    let artifacts = w.finish(cfg, vec![mask.hash()], notes, started)?;
    Ok(Outcome {
        artifacts,
        verdict: None,
        summary: format!("steps={} max|c|={:e} mass={:e}", cfg.steps, last.c_max, last.mass),
    })
}

fn run_unfold_command(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Outcome> {
    let mut snaps = Vec::with_capacity(cfg.snapshots.len());
    for p in &cfg.snapshots {
        let s = io::read_snapshot(p)?;
        let k = s.meta.k.ok_or_else(|| {
            HomogError::Parse(format!("{}: snapshot has no eps level (macro snapshot?)", p.display()))
        })?;
        snaps.push((k, s));
    }
    snaps.sort_by_key(|(k, _)| *k);
    let (kf, finest) = snaps.last().expect("at least one snapshot");
    let kf = *kf;
    let n_cell = finest.meta.n_cell.unwrap_or(finest.meta.n / kf);
    let pick = |s: &io::Snapshot| match cfg.field {
        FieldChoice::C => s.c.clone(),
        FieldChoice::W => s.w.clone(),
    };
    // limit candidate: y-independent pore average of the finest snapshot
    let base = macro_pore_average(&pick(finest), &finest.mask, kf)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (k, s) in snaps.iter().rev() {
        let k = *k;
        if kf % k != 0 || s.meta.n != k * n_cell {
            return Err(HomogError::Misaligned { n: s.meta.n, k });
        }
        let r = kf / k;
        let mut lim = vec![0.0; k * k];
        for j in 0..kf {
            for i in 0..kf {
                lim[(j / r) * k + i / r] += base[j * kf + i] / (r * r) as f64;
            }
        }
        let field = extend(&pick(s), &s.mask, k, cfg.extension)?;
        let mut values = Vec::with_capacity(k * k * n_cell * n_cell);
        for &a in &lim {
            for j in 0..n_cell {
                for i in 0..n_cell {
                    let pore = cfg.extension == Extension::CellAverage || s.mask.cell(i, j);
                    values.push(if pore { a } else { 0.0 });
                }
            }
        }
        let limit = UnfoldedField { k, n_cell, values };
        rows.push(TwoScaleRow {
            eps: 1.0 / k as f64,
            distance: two_scale_error(&unfold(&field, k)?, &limit)?,
            pairing: pairing(&field, k, |x, _| (2.0 * std::f64::consts::PI * x[0]).cos())?,
        });
        checks.push(integral_identity_check(&field, k)?);
    }
    let report = TwoScaleReport::new(rows);
    let mut w = Writer::new(out)?;
    fs::write(w.path("two_scale.csv")?, report.to_csv())?;
    write_json(&w.path("integral_checks.json")?, &checks)?;
    let hashes = snaps.iter().map(|(_, s)| s.meta.mask_hash.clone()).collect();
    let artifacts = w.finish(
        cfg,
        hashes,
        vec!["pairing test function: cos(2 pi x1)".into()],
        started,
    )?;
    Ok(Outcome {
        artifacts,
        verdict: None,
        summary: format!("{} levels, strictly decreasing: {}", report.rows.len(), report.strictly_decreasing),
    })
}

pub fn sweep_settings(cfg: &ExperimentConfig) -> SweepSettings {
    SweepSettings {
        geometry: cfg.geometry,
        levels: cfg.eps.clone(),
        n_cell: cfg.n_cell,
        params: micro_params(cfg),
        c0: cfg.initial_condition(),
        convention: cfg.convention,
        sigma_bar: cfg.sigma_bar,
        extension: cfg.extension,
    }
}

fn run_sweep_command(cfg: &ExperimentConfig, out: &Path, started: Instant) -> Result<Outcome> {
    let (report, runs) = run_sweep(&sweep_settings(cfg))?;
    let mut w = Writer::new(out)?;
    write_csv(&w.path("sweep.csv")?, SweepReport::CSV_HEADER, report.csv_rows())?;
    write_json(&w.path("verdict.json")?, &report)?;
    let mut hashes = Vec::new();
    for (k, run) in &runs {
        write_csv(
            &w.path(&format!("levels/eps_1_{k}/ledger.csv"))?,
            LedgerRow::CSV_HEADER,
            run.ledger.iter().map(|r| r.csv()),
        )?;
        hashes.push(run.mask_hash.clone());
    }
    let notes = vec![
        format!(
            "sigma_bar {} = {:e}",
            if report.sigma_bar_fitted { "fitted at the finest level" } else { "from config" },
            report.sigma_bar
        ),
        format!("monitor order: {}", SweepReport::monitor_names().join(",")),
    ];
    let artifacts = w.finish(cfg, hashes, notes, started)?;
    Ok(Outcome {
        artifacts,
        verdict: Some(report.passed()),
        summary: format!(
            "bounded_ratio={} c_decreasing={} w_decreasing={} ratios={:?}",
            report.bounded_ratio, report.c_decreasing, report.w_decreasing, report.monitor_ratios
        ),
    })
}

/// True when the ledger energy never rises by more than `slack` per step.
pub fn energy_is_monotone(ledger: &[LedgerRow], slack: f64) -> bool {
    ledger.windows(2).all(|w| w[1].energy <= w[0].energy + slack)
}
