//! Two-scale sweep: micro runs at several eps, unfolded and compared with
//! the limit candidates, plus the uniform-bound check on the monitors.
//!
//! Limit candidates, built from the finest level `k_f`:
//! * `c(x)`: pore average of `c^eps` over each eps-cell of the finest run,
//!   block-averaged onto coarser lattices; independent of `y`.
//! * `w(x, y) = ∂_t c(x) (ς(y) + s̄)` on the pore part, with `∂_t c` built
//!   the same way from the last backward difference and `s̄` either given or
//!   fitted by least squares at the finest level.

use serde::{Deserialize, Serialize};

use crate::cell::{solve_sigma, SigmaConvention};
use crate::error::{HomogError, Result};
use crate::field::ScalarField;
use crate::grid::{build_cell_mask, build_domain_mask, CellGeometry, Mask};
use crate::init::InitialCondition;
use crate::micro::{estimate_report, run_micro, EstimateReport, MicroParams, MicroRun, MONITOR_NAMES};
use crate::unfolding::{extend, macro_pore_average, pairing, strictly_decreasing, two_scale_error, unfold, Extension, UnfoldedField};

/// Largest allowed max/min ratio of a monitor across eps.
pub const RATIO_BOUND: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub geometry: CellGeometry,
    /// Lattice counts `k` (`eps = 1/k`).
    pub levels: Vec<usize>,
    pub n_cell: usize,
    pub params: MicroParams,
    pub c0: InitialCondition,
    pub convention: SigmaConvention,
    pub sigma_bar: Option<f64>,
    pub extension: Extension,
}

/// What the analysis needs from one level; solver output or manufactured.
#[derive(Debug, Clone)]
pub struct LevelData {
    pub k: usize,
    pub mask: Mask,
    pub c: ScalarField,
    pub w: ScalarField,
    pub dcdt: ScalarField,
    pub estimate: EstimateReport,
}

impl LevelData {
    pub fn from_run(k: usize, mask: Mask, run: &MicroRun) -> Self {
        LevelData {
            k,
            mask,
            c: run.final_state.c.clone(),
            w: run.final_state.w.clone(),
            dcdt: run.final_dcdt.clone(),
            estimate: estimate_report(&run.ledger),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub k: usize,
    pub monitors: EstimateReport,
    pub c_distance: f64,
    pub w_distance: f64,
    /// `∫ c^eps cos(2 pi x1) dx`.
    pub c_pairing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Sorted by decreasing eps.
    pub rows: Vec<SweepRow>,
    /// Max/min across eps per monitor (1 when a monitor is zero everywhere).
    pub monitor_ratios: [f64; 6],
    pub bounded_ratio: bool,
    pub c_decreasing: bool,
    pub w_decreasing: bool,
    pub sigma_bar: f64,
    pub sigma_bar_fitted: bool,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str =
        "eps,k,grad_u,grad_w,grad_c,c_l4,w_l2,dtc_dual,c_distance,w_distance,c_pairing";

    pub fn passed(&self) -> bool {
        self.bounded_ratio && self.c_decreasing && self.w_decreasing
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let m = r.monitors.values();
                format!(
                    "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    r.eps, r.k, m[0], m[1], m[2], m[3], m[4], m[5], r.c_distance, r.w_distance, r.c_pairing
                )
            })
            .collect()
    }

    pub fn monitor_names() -> [&'static str; 6] {
        MONITOR_NAMES
    }
}

/// Max/min of nonnegative values; 1 when all vanish, infinite when only
/// some do.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Distances strictly decreasing with eps, or all zero (data already equal
/// to the limit, as for stationary runs).
pub fn approaching(values: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().all(|&d| d == 0.0) || strictly_decreasing(v)
}

/// Block-averages a `kf x kf` array of macro values onto a `k x k` lattice.
fn coarsen(values: &[f64], kf: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 || kf % k != 0 {
        return Err(HomogError::IllPosed(format!(
            "eps level 1/{k} does not divide the finest level 1/{kf}"
        )));
    }
    let r = kf / k;
    let mut out = vec![0.0; k * k];
    for j in 0..kf {
        for i in 0..kf {
            out[(j / r) * k + i / r] += values[j * kf + i];
        }
    }
    let w = (r * r) as f64;
    out.iter_mut().for_each(|v| *v /= w);
    Ok(out)
}

/// Pore indicator of the reference cell as read off level data.
fn cell_indicator(mask: &Mask, n_cell: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_cell * n_cell];
    for j in 0..n_cell {
        for i in 0..n_cell {
            out[j * n_cell + i] = mask.cell(i, j) as u8 as f64;
        }
    }
    out
}

fn product(k: usize, n_cell: usize, macro_vals: &[f64], micro_vals: &[f64]) -> UnfoldedField {
    let mut values = Vec::with_capacity(k * k * n_cell * n_cell);
    for &a in macro_vals {
        values.extend(micro_vals.iter().map(|b| a * b));
    }
    UnfoldedField { k, n_cell, values }
}

/// Compares the levels with the limit candidates and applies the verdicts.
/// `sigma` is the cell solution `ς` on the `n_cell` grid.
pub fn analyze(
    levels: &[LevelData],
    n_cell: usize,
    sigma: &ScalarField,
    sigma_bar: Option<f64>,
    extension: Extension,
) -> Result<SweepReport> {
    if levels.len() < 3 {
        return Err(HomogError::IllPosed("sweep needs ≥ 3 levels".into()));
    }
    let mut order: Vec<&LevelData> = levels.iter().collect();
    order.sort_by_key(|l| l.k);
    let finest = *order.last().expect("nonempty");
    let kf = finest.k;
    let c_macro = macro_pore_average(&finest.c, &finest.mask, kf)?;
    let dtc_macro = macro_pore_average(&finest.dcdt, &finest.mask, kf)?;
    let chi = cell_indicator(&finest.mask, n_cell);
    let ones = vec![1.0; n_cell * n_cell];

    let (s_bar, fitted) = match sigma_bar {
        Some(s) => (s, false),
        None => {
            let tw = unfold(&extend(&finest.w, &finest.mask, kf, Extension::Zero)?, kf)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for (m, &d) in dtc_macro.iter().enumerate() {
                for q in 0..n_cell * n_cell {
                    if chi[q] == 1.0 {
                        num += d * (tw.get(m, q) - d * sigma.values[q]);
                        den += d * d;
                    }
                }
            }
            (if den > 0.0 { num / den } else { 0.0 }, true)
        }
    };
    let profile: Vec<f64> = (0..n_cell * n_cell)
        .map(|q| chi[q] * (sigma.values[q] + s_bar))
        .collect();

    let mut rows = Vec::with_capacity(order.len());
    for level in &order {
        let k = level.k;
        let c_lim = coarsen(&c_macro, kf, k)?;
        let dtc_lim = coarsen(&dtc_macro, kf, k)?;
        let c_ext = extend(&level.c, &level.mask, k, extension)?;
        let c_limit = product(k, n_cell, &c_lim, if extension == Extension::Zero { &chi } else { &ones });
        let c_distance = two_scale_error(&unfold(&c_ext, k)?, &c_limit)?;
        let w_ext = extend(&level.w, &level.mask, k, Extension::Zero)?;
        let w_distance = two_scale_error(&unfold(&w_ext, k)?, &product(k, n_cell, &dtc_lim, &profile))?;
        let c_pairing = pairing(&c_ext, k, |x, _| (2.0 * std::f64::consts::PI * x[0]).cos())?;
        rows.push(SweepRow {
            eps: 1.0 / k as f64,
            k,
            monitors: level.estimate,
            c_distance,
            w_distance,
            c_pairing,
        });
    }

    let mut monitor_ratios = [0.0; 6];
    for (q, ratio) in monitor_ratios.iter_mut().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.monitors.values()[q]).collect();
        *ratio = spread(&vals);
    }
    Ok(SweepReport {
        bounded_ratio: monitor_ratios.iter().all(|&r| r <= RATIO_BOUND),
        c_decreasing: approaching(rows.iter().map(|r| r.c_distance)),
        w_decreasing: approaching(rows.iter().map(|r| r.w_distance)),
        rows,
        monitor_ratios,
        sigma_bar: s_bar,
        sigma_bar_fitted: fitted,
    })
}

/// Runs every level (concurrently) and analyses them. Returns the report
/// and the runs ordered by decreasing eps.
pub fn run_sweep(settings: &SweepSettings) -> Result<(SweepReport, Vec<(usize, MicroRun)>)> {
    if settings.levels.len() < 3 {
        return Err(HomogError::IllPosed("sweep needs ≥ 3 levels".into()));
    }
    let mut ks = settings.levels.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() != settings.levels.len() {
        return Err(HomogError::IllPosed("sweep levels must be distinct".into()));
    }
    let cell = build_cell_mask(&settings.geometry, settings.n_cell)?;
    let sigma = solve_sigma(&cell, settings.convention)?;
    let results: Vec<Result<(usize, Mask, MicroRun)>> = std::thread::scope(|s| {
        let handles: Vec<_> = ks
            .iter()
            .map(|&k| {
                s.spawn(move || -> Result<(usize, Mask, MicroRun)> {
                    let domain = build_domain_mask(&settings.geometry, k, settings.n_cell)?;
                    let run = run_micro(&settings.geometry, k, settings.n_cell, &settings.params, &settings.c0)?;
                    Ok((k, domain.mask, run))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep level thread panicked"))
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut data = Vec::with_capacity(results.len());
    for r in results {
        let (k, mask, run) = r?;
        data.push(LevelData::from_run(k, mask, &run));
        runs.push((k, run));
    }
    let report = analyze(&data, settings.n_cell, &sigma.sigma, settings.sigma_bar, settings.extension)?;
    Ok((report, runs))
}
