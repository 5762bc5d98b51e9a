//! Upscaled model on `Omega = (0,1)^2`: a closed scalar phase-field equation
//! for the macro order parameter and the Darcy flux it drives.
//!
//! With `w̄ = ς̄ ∂_t c` and the corrector closure, the macro equation is
//! stepped semi-implicitly in one of two orientations:
//!
//! ```text
//!   AsWritten:    ς̄ (c' - c)/dt = -div(D grad c') + f(c) + S (c' - c)
//!   GradientFlow: ς̄ (c' - c)/dt = +div(D grad c') - f(c) - S (c' - c)
//! ```
//!
//! with no-flux walls. The Darcy flux is
//! `ū = -(K/mu) grad p - (lambda/(2 mu)) M ∂_t(c^2)` with `div ū = 0`.
//! Both tensors must be diagonal on this grid (two-point fluxes).

use serde::{Deserialize, Serialize};

use crate::cell::EffectiveCoefficients;
use crate::error::{HomogError, Result};
use crate::field::{Axis, CellIndex, FaceIndex, ScalarField, StaggeredVectorField};
use crate::grid::{Boundary, Mask};
use crate::init::InitialCondition;
use crate::micro::double_well;
use crate::ops::{laplacian, links, Link};
use crate::sparse::{cg_solve, CsrMatrix, minres_solve, norm2, project_mean_zero, CgOptions, LinearOperator};

/// Largest `‖c‖_∞` an as-written run may reach before it is aborted.
pub const GROWTH_LIMIT: f64 = 10.0;

/// `|ς̄|` at or below this counts as zero.
pub const SIGMA_BAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    AsWritten,
    GradientFlow,
}

impl Orientation {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "as_written" => Ok(Orientation::AsWritten),
            "gradient_flow" => Ok(Orientation::GradientFlow),
            other => Err(HomogError::IllPosed(format!(
                "unknown orientation '{other}' (expected as_written or gradient_flow)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Orientation::AsWritten => "as_written",
            Orientation::GradientFlow => "gradient_flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroParams {
    pub lambda: f64,
    pub mu: f64,
    pub dt: f64,
    pub steps: usize,
    pub stabilization: f64,
    pub sigma_bar_override: Option<f64>,
    pub orientation: Orientation,
    pub coefficients: EffectiveCoefficients,
    /// Macro grid cells per side.
    pub n: usize,
    pub snapshot_stride: usize,
    pub tol: f64,
}

impl MacroParams {
    /// `ς̄` actually used: the override if given, else the cell value.
    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar_override.unwrap_or(self.coefficients.sigma_bar)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(HomogError::IllPosed(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.mu > 0.0) {
            return Err(HomogError::IllPosed(format!("mu must be positive, got {}", self.mu)));
        }
        if self.n < 2 {
            return Err(HomogError::Resolution(self.n));
        }
        if self.snapshot_stride == 0 {
            return Err(HomogError::IllPosed("snapshot stride must be >= 1".into()));
        }
        if self.coefficients.k.tensor().is_none() {
            return Err(HomogError::IllPosed(
                "permeability not defined for this cell; the macro model needs K".into(),
            ));
        }
        diagonal(&self.coefficients.d_eff, "D_eff")?;
        diagonal(&self.coefficients.k.tensor().expect("checked above"), "K")?;
        // the cell value is zero up to rounding; with it the time derivative
        // drops out of either orientation
        if self.sigma_bar().abs() <= SIGMA_BAR_FLOOR {
            return Err(HomogError::IllPosed(
                "macro equation degenerate; supply sigma_bar override".into(),
            ));
        }
        Ok(())
    }
}

fn diagonal(t: &[[f64; 2]; 2], name: &str) -> Result<[f64; 2]> {
    let norm = t.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let off = t[0][1].abs().max(t[1][0].abs());
    if off > 1e-6 * norm {
        return Err(HomogError::IllPosed(format!(
            "{name} has off-diagonal entries ({:e}, {:e}); only diagonal tensors are supported",
            t[0][1], t[1][0]
        )));
    }
    Ok([t[0][0], t[1][1]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub t: f64,
    pub c: ScalarField,
    pub w: ScalarField,
    pub p: ScalarField,
    pub u: StaggeredVectorField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroLedgerRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub c_l2: f64,
    pub c_max: f64,
    pub u_l2: f64,
    /// `max |div ū|` over cells.
    pub div_max: f64,
    /// Residual of the stepped equation at `(c, c')`, relative to its largest term.
    pub step_residual: f64,
}

impl MacroLedgerRow {
    pub const CSV_HEADER: &'static str = "step,t,mass,c_l2,c_max,u_l2,div_max,step_residual";

    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.t, self.mass, self.c_l2, self.c_max, self.u_l2, self.div_max, self.step_residual
        )
    }
}

/// `-div(D grad .)` for diagonal `D`, kept as two integer-valued stencils
/// so that constants are annihilated exactly.
pub struct Diffusion {
    lx: CsrMatrix,
    ly: CsrMatrix,
    d: [f64; 2],
}

impl Diffusion {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let a = self.lx.mul_vec(x);
        let b = self.ly.mul_vec(x);
        a.iter().zip(&b).map(|(p, q)| self.d[0] * p + self.d[1] * q).collect()
    }
}

/// `a x + b L_D x`
struct Shifted<'a> {
    l: &'a Diffusion,
    a: f64,
    b: f64,
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.l.lx.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let lx = self.l.apply(x);
        for k in 0..y.len() {
            y[k] = self.a * x[k] + self.b * lx[k];
        }
    }
}

/// `G^T diag(kappa) G` with `G` the face gradient.
struct WeightedLaplacian<'a> {
    links: &'a [Link],
    kappa: &'a [f64],
    n_cells: usize,
    inv_h: f64,
}

impl WeightedLaplacian<'_> {
    fn grad(&self, p: &[f64]) -> Vec<f64> {
        self.links.iter().map(|l| (p[l.hi] - p[l.lo]) * self.inv_h).collect()
    }

    fn grad_t(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (l, &gl) in self.links.iter().zip(g) {
            out[l.hi] += gl * self.inv_h;
            out[l.lo] -= gl * self.inv_h;
        }
    }
}

impl LinearOperator for WeightedLaplacian<'_> {
    fn dim(&self) -> usize {
        self.n_cells
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g: Vec<f64> = self.grad(x).iter().zip(self.kappa).map(|(a, b)| a * b).collect();
        self.grad_t(&g, y);
    }
}

/// Discretisation of the macro model for fixed parameters.
pub struct MacroSolver {
    pub params: MacroParams,
    pub mask: Mask,
    pub cells: CellIndex,
    pub faces: FaceIndex,
    links: Vec<Link>,
    pub diffusion: Diffusion,
    k: [f64; 2],
}

impl MacroSolver {
    pub fn new(params: MacroParams) -> Result<Self> {
        params.validate()?;
        let mask = Mask::full(params.n);
        let cells = CellIndex::new(&mask);
        let faces = FaceIndex::new(&mask, Boundary::Walled);
        let links = links(&mask, Boundary::Walled, &cells);
        let d = diagonal(&params.coefficients.d_eff, "D_eff")?;
        let k = diagonal(&params.coefficients.k.tensor().expect("validated"), "K")?;
        let diffusion = Diffusion {
            lx: laplacian(&mask, Boundary::Walled, &cells, [1.0, 0.0]),
            ly: laplacian(&mask, Boundary::Walled, &cells, [0.0, 1.0]),
            d,
        };
        Ok(MacroSolver {
            params,
            mask,
            cells,
            faces,
            links,
            diffusion,
            k,
        })
    }

    pub fn d_diag(&self) -> [f64; 2] {
        self.diffusion.d
    }

    fn h2(&self) -> f64 {
        let h = self.mask.h();
        h * h
    }

    fn axis_index(axis: Axis) -> usize {
        match axis {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    /// Darcy pressure and flux for given `c` and `∂_t c`.
    pub fn darcy_solve(&self, c: &ScalarField, dcdt: &ScalarField) -> Result<(StaggeredVectorField, ScalarField, f64)> {
        let c = self.cells.gather(c);
        let dcdt = self.cells.gather(dcdt);
        let (u, p, div) = self.darcy_compact(&c, &dcdt)?;
        Ok((self.faces.scatter(&u), self.cells.scatter(&p), div))
    }

    /// Returns face fluxes, mean-zero pressure and `max |div ū|`.
    pub fn darcy_compact(&self, c: &[f64], dcdt: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let p = &self.params;
        let m = p.coefficients.m;
        let scale = p.lambda / (2.0 * p.mu);
        let drive: Vec<f64> = self
            .links
            .iter()
            .map(|l| {
                let dc2 = c[l.lo] * dcdt[l.lo] + c[l.hi] * dcdt[l.hi];
                scale * m[Self::axis_index(l.axis)] * dc2
            })
            .collect();
        let kappa: Vec<f64> = self.links.iter().map(|l| self.k[Self::axis_index(l.axis)] / p.mu).collect();
        let op = WeightedLaplacian {
            links: &self.links,
            kappa: &kappa,
            n_cells: self.cells.len(),
            inv_h: self.params.n as f64,
        };
        let mut rhs = vec![0.0; self.cells.len()];
        op.grad_t(&drive, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let pressure = if rhs.iter().all(|&v| v == 0.0) {
            vec![0.0; self.cells.len()]
        } else {
            let opts = CgOptions {
                tol: p.tol,
                max_iter: 100_000,
                jacobi: false,
                mean_zero: true,
            };
            let (x, rep) = cg_solve(&op, &rhs, &opts);
            rep.into_result("Darcy pressure")?;
            project_mean_zero(&x, &vec![1.0; x.len()])?
        };
        let grad = op.grad(&pressure);
        let u: Vec<f64> = (0..self.links.len()).map(|q| -kappa[q] * grad[q] - drive[q]).collect();
        let mut div = vec![0.0; self.cells.len()];
        op.grad_t(&u, &mut div);
        let div_max = div.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok((u, pressure, div_max))
    }

    /// One macro step; returns `(c', w̄', residual)` on the compact numbering.
    /// The linear solve is for the increment `c' - c`, so fixed points of the
    /// explicit part are reproduced exactly. `residual` is the relative
    /// residual of the stepped equation.
    pub fn step_compact(&self, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let p = &self.params;
        let sb = p.sigma_bar();
        let s = p.stabilization;
        let l = &self.diffusion;
        let lc = l.apply(c);
        let f: Vec<f64> = c.iter().map(|&v| double_well(v).1).collect();
        // GradientFlow: (sb/dt + S) d + L_D d = -L_D c - f(c)
        // AsWritten:    (sb/dt - S) d - L_D d = +L_D c + f(c)
        let (a, b, sign) = match p.orientation {
            Orientation::GradientFlow => (sb / p.dt + s, 1.0, -1.0),
            Orientation::AsWritten => (sb / p.dt - s, -1.0, 1.0),
        };
        let rhs: Vec<f64> = lc.iter().zip(&f).map(|(x, y)| sign * (x + y)).collect();
        let op = Shifted { l, a, b };
        let delta = if rhs.iter().all(|&v| v == 0.0) {
            vec![0.0; c.len()]
        } else {
            let (x, rep) = if p.orientation == Orientation::GradientFlow && a > 0.0 {
                let opts = CgOptions {
                    tol: p.tol,
                    max_iter: 100_000,
                    ..CgOptions::default()
                };
                cg_solve(&op, &rhs, &opts)
            } else {
                minres_solve(&op, &rhs, p.tol, 100_000)
            };
            rep.into_result("macro phase-field step")?;
            x
        };
        let c_next: Vec<f64> = c.iter().zip(&delta).map(|(x, d)| x + d).collect();
        let residual = self.step_residual(c, &c_next);
        let w: Vec<f64> = delta.iter().map(|d| sb * d / p.dt).collect();
        Ok((c_next, w, residual))
    }

    /// Relative residual of the stepped equation at `(c, c')`, measured
    /// against the size of its terms.
    pub fn step_residual(&self, c: &[f64], c_next: &[f64]) -> f64 {
        let p = &self.params;
        let sb = p.sigma_bar();
        let lcn = self.diffusion.apply(c_next);
        let sign = match p.orientation {
            Orientation::GradientFlow => -1.0,
            Orientation::AsWritten => 1.0,
        };
        let mut r = Vec::with_capacity(c.len());
        let mut scale = 0.0_f64;
        for k in 0..c.len() {
            let d = c_next[k] - c[k];
            let lhs = sb * d / p.dt;
            let f = double_well(c[k]).1;
            let rhs = sign * (lcn[k] + f + p.stabilization * d);
            r.push(lhs - rhs);
            scale = scale.max(lhs.abs()).max(lcn[k].abs()).max(f.abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            norm2(&r) / (scale * (c.len() as f64).sqrt())
        }
    }

    /// One macro step on full fields.
    pub fn macro_ch_step(&self, c: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        let (cn, w, _) = self.step_compact(&self.cells.gather(c))?;
        Ok((self.cells.scatter(&cn), self.cells.scatter(&w)))
    }

    pub fn mass(&self, c: &[f64]) -> f64 {
        c.iter().sum::<f64>() * self.h2()
    }
}

#[derive(Debug, Clone)]
pub struct MacroRun {
    pub snapshots: Vec<(usize, MacroState)>,
    pub ledger: Vec<MacroLedgerRow>,
    pub final_state: MacroState,
    pub sigma_bar_used: f64,
}

pub fn run_macro(params: &MacroParams, c0: &InitialCondition) -> Result<MacroRun> {
    let solver = MacroSolver::new(params.clone())?;
    let p = &solver.params;
    let cells = &solver.cells;
    let h2 = solver.h2();
    let mut c = cells.gather(&c0.sample(&solver.mask));
    let mut w = vec![0.0; c.len()];
    let zero = vec![0.0; c.len()];
    let (mut u, mut pr, mut div) = solver.darcy_compact(&c, &zero).map_err(|e| e.at_step(0))?;

    let row = |step: usize, c: &[f64], u: &[f64], div: f64, res: f64| MacroLedgerRow {
        step,
        t: step as f64 * p.dt,
        mass: solver.mass(c),
        c_l2: (c.iter().map(|v| v * v).sum::<f64>() * h2).sqrt(),
        c_max: c.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        u_l2: (u.iter().map(|v| v * v).sum::<f64>() * h2).sqrt(),
        div_max: div,
        step_residual: res,
    };
    let state = |step: usize, c: &[f64], w: &[f64], u: &[f64], pr: &[f64]| MacroState {
        t: step as f64 * p.dt,
        c: cells.scatter(c),
        w: cells.scatter(w),
        p: cells.scatter(pr),
        u: solver.faces.scatter(u),
    };

    let mut ledger = vec![row(0, &c, &u, div, 0.0)];
    let mut snapshots = vec![(0, state(0, &c, &w, &u, &pr))];
    for step in 1..=p.steps {
        let (cn, wn, res) = solver.step_compact(&c).map_err(|e| e.at_step(step))?;
        let max_abs = cn.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !max_abs.is_finite() || (p.orientation == Orientation::AsWritten && max_abs > GROWTH_LIMIT) {
            return Err(HomogError::Growth {
                step,
                max_abs,
                limit: GROWTH_LIMIT,
            });
        }
        let dcdt: Vec<f64> = cn.iter().zip(&c).map(|(a, b)| (a - b) / p.dt).collect();
        c = cn;
        w = wn;
        let darcy = solver.darcy_compact(&c, &dcdt).map_err(|e| e.at_step(step))?;
        u = darcy.0;
        pr = darcy.1;
        div = darcy.2;
        ledger.push(row(step, &c, &u, div, res));
        if step % p.snapshot_stride == 0 || step == p.steps {
            snapshots.push((step, state(step, &c, &w, &u, &pr)));
        }
    }
    Ok(MacroRun {
        final_state: state(p.steps, &c, &w, &u, &pr),
        snapshots,
        ledger,
        sigma_bar_used: p.sigma_bar(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellResiduals, Permeability, SigmaConvention};

    pub(crate) fn coeffs(m: [f64; 2]) -> EffectiveCoefficients {
        EffectiveCoefficients {
            theta: 0.8,
            sigma_bar: 0.0,
            d_eff: [[0.8, 0.0], [0.0, 0.8]],
            k: Permeability::Defined([[0.01, 0.0], [0.0, 0.01]]),
            m,
            convention: SigmaConvention::FluxBalance,
            n: 32,
            geometry: "disc:0.25".into(),
            sigma_flux: 0.5,
            residuals: CellResiduals {
                sigma_compatibility: 0.0,
                sigma_solve: 0.0,
                corrector_solve: 0.0,
                stokes_divergence: 0.0,
                k_asymmetry: 0.0,
            },
        }
    }

    fn params(orientation: Orientation, m: [f64; 2]) -> MacroParams {
        MacroParams {
            lambda: 1.0,
            mu: 1.0,
            dt: 1e-3,
            steps: 10,
            stabilization: 2.0,
            sigma_bar_override: Some(1.0),
            orientation,
            coefficients: coeffs(m),
            n: 16,
            snapshot_stride: 5,
            tol: 1e-12,
        }
    }

    #[test]
    fn fixed_points_in_both_modes() {
        for o in [Orientation::AsWritten, Orientation::GradientFlow] {
            let s = MacroSolver::new(params(o, [0.0, 0.0])).unwrap();
            for v in [1.0, -1.0, 0.0] {
                let c = ScalarField::from_fn(&s.mask, |_, _| v);
                let (cn, w) = s.macro_ch_step(&c).unwrap();
                assert_eq!(cn, c);
                assert_eq!(w.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn vanishing_sigma_bar_is_degenerate_in_both_modes() {
        for o in [Orientation::AsWritten, Orientation::GradientFlow] {
            let mut p = params(o, [0.0, 0.0]);
            p.sigma_bar_override = None;
            p.coefficients.sigma_bar = 6e-19;
            let err = MacroSolver::new(p).err().unwrap();
            assert!(err.to_string().contains("degenerate"));
        }
    }

    #[test]
    fn off_diagonal_tensors_rejected() {
        let mut p = params(Orientation::GradientFlow, [0.0, 0.0]);
        p.coefficients.d_eff[0][1] = 0.1;
        assert!(MacroSolver::new(p).is_err());
    }

    #[test]
    fn undefined_permeability_rejected() {
        let mut p = params(Orientation::GradientFlow, [0.0, 0.0]);
        p.coefficients.k = Permeability::NotDefined;
        assert!(MacroSolver::new(p).is_err());
    }

    #[test]
    fn darcy_without_drive_is_rest() {
        let s = MacroSolver::new(params(Orientation::GradientFlow, [0.3, 0.1])).unwrap();
        let c = InitialCondition::Random { seed: 1 }.sample(&s.mask);
        let (u, p, _) = s.darcy_solve(&c, &ScalarField::zeros(16)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(p.max_abs(), 0.0);
        let s0 = MacroSolver::new(params(Orientation::GradientFlow, [0.0, 0.0])).unwrap();
        let dcdt = ScalarField::from_fn(&s0.mask, |x, _| x);
        let (u, p, _) = s0.darcy_solve(&c, &dcdt).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(p.max_abs(), 0.0);
    }

    #[test]
    fn darcy_flux_is_divergence_free() {
        let s = MacroSolver::new(params(Orientation::GradientFlow, [0.3, 0.1])).unwrap();
        let c = InitialCondition::Random { seed: 1 }.sample(&s.mask);
        let dcdt = ScalarField::from_fn(&s.mask, |x, _| (2.0 * std::f64::consts::PI * x).sin());
        let (u, _, div) = s.darcy_solve(&c, &dcdt).unwrap();
        assert!(u.max_abs() > 0.0);
        assert!(div <= 1e-8, "{div}");
    }

    #[test]
    fn gradient_flow_run_stays_bounded_and_deterministic() {
        let mut p = params(Orientation::GradientFlow, [0.3, 0.3]);
        p.steps = 100;
        let a = run_macro(&p, &InitialCondition::Stripe).unwrap();
        let b = run_macro(&p, &InitialCondition::Stripe).unwrap();
        for r in &a.ledger {
            assert!(r.c_max <= 1.1, "{}", r.c_max);
            assert!(r.step_residual <= 1e-10);
            assert!(r.div_max <= 1e-8);
        }
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn constant_run_is_stationary() {
        let p = params(Orientation::AsWritten, [0.3, 0.3]);
        let r = run_macro(&p, &InitialCondition::Constant { value: 1.0 }).unwrap();
        for (_, s) in &r.snapshots {
            assert!(s.c.values.iter().all(|&v| v == 1.0));
            assert_eq!(s.u.max_abs(), 0.0);
        }
    }

    #[test]
    fn as_written_random_data_trips_growth_guard() {
        let mut p = params(Orientation::AsWritten, [0.0, 0.0]);
        p.steps = 2000;
        let err = run_macro(&p, &InitialCondition::Random { seed: 0 }).unwrap_err();
        assert!(matches!(err, HomogError::Growth { .. }), "{err}");
    }
}
