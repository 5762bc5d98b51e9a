//! Pore-scale Stokes-Cahn-Hilliard time stepping on a perforated domain.
//!
//! Each step first advances the order parameter with the current velocity,
//!
//! ```text
//!   (c' - c)/dt + eps^beta div(u c_up) = -eps^alpha L w'
//!   w' = eps^gamma L c' + f(c) + S (c' - c)
//! ```
//!
//! where `L = -Δ` is the Neumann Laplacian on pore cells, and then solves the
//! Stokes problem `mu eps^2 A u + grad p = -eps lambda c grad w` for the new
//! `(c', w')`. The coupled CH pair is reduced to one SPD system for the
//! increment `c' - c`; the final `c'` is rebuilt from the flux form of the
//! first equation so mass is conserved to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::{CellIndex, ScalarField, StaggeredVectorField};
use crate::grid::{build_domain_mask, Boundary, CellGeometry, DomainMask};
use crate::init::InitialCondition;
use crate::ops::{laplacian, MacStokes};
use crate::sparse::{cg_solve, dot, uzawa_solve_from, CgOptions, CsrMatrix, LinearOperator, UzawaOptions};

/// Double-well potential `F(s) = (s^2 - 1)^2 / 4` and `f = F' = s^3 - s`.
#[inline]
pub fn double_well(s: f64) -> (f64, f64) {
    let q = s * s - 1.0;
    (0.25 * q * q, s * s * s - s)
}

/// Scaling exponents of the mobility, advection and gradient-energy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Exponents {
    pub const DEFAULT: Exponents = Exponents {
        alpha: 2.0,
        beta: 1.0,
        gamma: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroParams {
    pub lambda: f64,
    pub mu: f64,
    pub exponents: Exponents,
    /// Must be set to run with exponents other than `(2, 1, 0)`.
    pub override_exponents: bool,
    pub dt: f64,
    pub steps: usize,
    /// Linear stabilisation constant `S`.
    pub stabilization: f64,
    pub snapshot_stride: usize,
    /// Pure Cahn-Hilliard: skip the Stokes solves and keep `u = 0`.
    pub force_zero_velocity: bool,
    pub cg: CgOptions,
    pub uzawa: UzawaOptions,
}

impl Default for MicroParams {
    fn default() -> Self {
        MicroParams {
            lambda: 1.0,
            mu: 1.0,
            exponents: Exponents::DEFAULT,
            override_exponents: false,
            dt: 1e-3,
            steps: 0,
            stabilization: 2.0,
            snapshot_stride: 1,
            force_zero_velocity: false,
            cg: CgOptions {
                tol: 1e-10,
                max_iter: 50_000,
                ..CgOptions::default()
            },
            uzawa: UzawaOptions::default(),
        }
    }
}

impl MicroParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HomogError::IllPosed(m));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.stabilization >= 0.0) {
            return bad(format!("stabilization must be >= 0, got {}", self.stabilization));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot stride must be >= 1".into());
        }
        if self.exponents != Exponents::DEFAULT && !self.override_exponents {
            return bad(format!(
                "exponents {:?} differ from (2, 1, 0); set the override flag to run them",
                self.exponents
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    pub t: f64,
    pub u: StaggeredVectorField,
    pub p: ScalarField,
    pub c: ScalarField,
    pub w: ScalarField,
}

/// One ledger row. Energy and dissipation are instantaneous; the six
/// monitors are norms over `(0, t)`: time integrals for the `L2(S; .)`
/// quantities, running suprema for the `L_inf(S; .)` ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    /// `(lambda/2) eps^gamma ||grad c||^2 + lambda sum F(c) h^2`.
    pub energy: f64,
    /// `mu eps^2 ||grad u||^2`.
    pub d_u: f64,
    /// `lambda eps^alpha ||grad w||^2`.
    pub d_w: f64,
    pub mass: f64,
    /// `sqrt(mu) eps ||grad u||_{L2(S x Omega)}`
    pub grad_u: f64,
    /// `sqrt(lambda) eps ||grad w||_{L2(S x Omega)}`
    pub grad_w: f64,
    /// `||grad c||_{Linf(S; L2)}`
    pub grad_c: f64,
    /// `||c||_{Linf(S; L4)}`
    pub c_l4: f64,
    /// `||w||_{L2(S x Omega)}`
    pub w_l2: f64,
    /// `||d_t c||_{L2(S; H1*)}` from one Riesz solve per step
    pub dtc_dual: f64,
}

impl LedgerRow {
    pub const CSV_HEADER: &'static str =
        "step,t,E,D_u,D_w,mass,grad_u,grad_w,grad_c,c_l4,w_l2,dtc_dual";

    pub fn monitors(&self) -> [f64; 6] {
        [self.grad_u, self.grad_w, self.grad_c, self.c_l4, self.w_l2, self.dtc_dual]
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step,
            self.t,
            self.energy,
            self.d_u,
            self.d_w,
            self.mass,
            self.grad_u,
            self.grad_w,
            self.grad_c,
            self.c_l4,
            self.w_l2,
            self.dtc_dual
        )
    }
}

pub const MONITOR_NAMES: [&str; 6] = ["grad_u", "grad_w", "grad_c", "c_l4", "w_l2", "dtc_dual"];

/// Time suprema of the ledger monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub grad_u: f64,
    pub grad_w: f64,
    pub grad_c: f64,
    pub c_l4: f64,
    pub w_l2: f64,
    pub dtc_dual: f64,
}

impl EstimateReport {
    pub fn values(&self) -> [f64; 6] {
        [self.grad_u, self.grad_w, self.grad_c, self.c_l4, self.w_l2, self.dtc_dual]
    }
}

/// Suprema over the ledger of each monitored quantity. Panics on an empty
/// ledger.
pub fn estimate_report(ledger: &[LedgerRow]) -> EstimateReport {
    assert!(!ledger.is_empty(), "estimate report needs at least one ledger row");
    let mut m = [0.0_f64; 6];
    for row in ledger {
        for (acc, v) in m.iter_mut().zip(row.monitors()) {
            *acc = acc.max(v);
        }
    }
    EstimateReport {
        grad_u: m[0],
        grad_w: m[1],
        grad_c: m[2],
        c_l4: m[3],
        w_l2: m[4],
        dtc_dual: m[5],
    }
}

/// Result of one CH step.
#[derive(Debug, Clone)]
pub struct ChStep {
    pub c: ScalarField,
    pub w: ScalarField,
    pub iterations: usize,
}

/// `x/dt + eps^alpha L (eps^gamma L + S) x`
struct ChSchur<'a> {
    l: &'a CsrMatrix,
    inv_dt: f64,
    mobility: f64,
    stiffness: f64,
    s: f64,
}

impl LinearOperator for ChSchur<'_> {
    fn dim(&self) -> usize {
        self.l.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let lx = self.l.mul_vec(x);
        let inner: Vec<f64> = lx.iter().zip(x).map(|(a, b)| self.stiffness * a + self.s * b).collect();
        self.l.matvec(&inner, y);
        for k in 0..y.len() {
            y[k] = x[k] * self.inv_dt + self.mobility * y[k];
        }
    }
}

/// `(L + I)`, the Riesz map of the discrete H1 inner product.
struct H1Riesz<'a> {
    l: &'a CsrMatrix,
}

impl LinearOperator for H1Riesz<'_> {
    fn dim(&self) -> usize {
        self.l.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.l.matvec(x, y);
        for k in 0..y.len() {
            y[k] += x[k];
        }
    }
}

/// Discretisation of one perforated domain with fixed parameters.
pub struct MicroSolver {
    pub domain: DomainMask,
    pub params: MicroParams,
    pub stokes: MacStokes,
    /// Neumann Laplacian on pore cells (walls on the outer edge).
    pub laplacian: CsrMatrix,
    viscous: CsrMatrix,
    eps: f64,
}

impl MicroSolver {
    pub fn new(domain: DomainMask, params: MicroParams) -> Result<Self> {
        params.validate()?;
        let stokes = MacStokes::new(&domain.mask, Boundary::Walled)?;
        let laplacian = laplacian(&domain.mask, Boundary::Walled, &stokes.cells, [1.0, 1.0]);
        let eps = domain.eps();
        let viscous = stokes.a.scaled(params.mu * eps * eps);
        Ok(MicroSolver {
            domain,
            params,
            stokes,
            laplacian,
            viscous,
            eps,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cells(&self) -> &CellIndex {
        &self.stokes.cells
    }

    fn h2(&self) -> f64 {
        let h = self.domain.h();
        h * h
    }

    /// Face forcing `-eps lambda c_face (w_hi - w_lo)/h` on velocity unknowns.
    fn surface_tension(&self, c: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.domain.n() as f64;
        let scale = -self.eps * self.params.lambda;
        self.stokes
            .face_cells
            .iter()
            .map(|&(lo, hi)| scale * 0.5 * (c[lo] + c[hi]) * (w[hi] - w[lo]) * n)
            .collect()
    }

    /// Stokes solve for given `(c, w)` on the compact pore numbering.
    /// `p_guess` warm-starts the pressure.
    pub fn stokes_solve_compact(&self, c: &[f64], w: &[f64], p_guess: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.surface_tension(c, w);
        let p0 = p_guess.map(|p| p.to_vec()).unwrap_or_else(|| vec![0.0; c.len()]);
        let (u, p, report) = uzawa_solve_from(&self.viscous, &self.stokes.b, &f, p0, &self.params.uzawa);
        report.into_result("Stokes (Uzawa)")?;
        Ok((u, p))
    }

    /// Velocity and mean-zero pressure driven by `-eps lambda c grad w`.
    pub fn stokes_solve(&self, c: &ScalarField, w: &ScalarField) -> Result<(StaggeredVectorField, ScalarField)> {
        let cells = self.cells();
        let (u, p) = self.stokes_solve_compact(&cells.gather(c), &cells.gather(w), None)?;
        Ok((self.stokes.faces.scatter(&u), cells.scatter(&p)))
    }

    /// `eps^beta div(u c_upwind)` per pore cell, conservative flux form.
    fn advection(&self, u: &[f64], c: &[f64]) -> Vec<f64> {
        let n = self.domain.n() as f64;
        let scale = self.eps.powf(self.params.exponents.beta);
        let mut div = vec![0.0; c.len()];
        for (&(lo, hi), &uf) in self.stokes.face_cells.iter().zip(u) {
            if uf == 0.0 {
                continue;
            }
            let flux = uf * if uf > 0.0 { c[lo] } else { c[hi] };
            div[lo] += flux * n;
            div[hi] -= flux * n;
        }
        div.iter_mut().for_each(|d| *d *= scale);
        div
    }

    /// One semi-implicit CH step on the compact numbering.
    pub fn ch_step_compact(&self, c: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let p = &self.params;
        let mobility = self.eps.powf(p.exponents.alpha);
        let stiffness = self.eps.powf(p.exponents.gamma);
        let l = &self.laplacian;
        let adv = self.advection(u, c);
        let lc = l.mul_vec(c);
        // explicit part of w: eps^gamma L c + f(c)
        let w_explicit: Vec<f64> = lc
            .iter()
            .zip(c)
            .map(|(lci, &ci)| stiffness * lci + double_well(ci).1)
            .collect();
        let lw = l.mul_vec(&w_explicit);
        let rhs: Vec<f64> = adv.iter().zip(&lw).map(|(a, b)| -a - mobility * b).collect();
        let op = ChSchur {
            l,
            inv_dt: 1.0 / p.dt,
            mobility,
            stiffness,
            s: p.stabilization,
        };
        let (delta, report) = cg_solve(&op, &rhs, &p.cg);
        let report = report.into_result("Cahn-Hilliard step")?;
        let ldelta = l.mul_vec(&delta);
        let w_next: Vec<f64> = (0..c.len())
            .map(|k| w_explicit[k] + stiffness * ldelta[k] + p.stabilization * delta[k])
            .collect();
        let lw_next = l.mul_vec(&w_next);
        let c_next: Vec<f64> = (0..c.len())
            .map(|k| c[k] + p.dt * (-adv[k] - mobility * lw_next[k]))
            .collect();
        Ok((c_next, w_next, report.iterations))
    }

    /// One CH step for a full state; returns `(c_next, w_next)`.
    pub fn ch_step(&self, state: &MicroState) -> Result<ChStep> {
        let cells = self.cells();
        let u = self.stokes.faces.gather(&state.u);
        let (c, w, iterations) = self.ch_step_compact(&cells.gather(&state.c), &u)?;
        Ok(ChStep {
            c: cells.scatter(&c),
            w: cells.scatter(&w),
            iterations,
        })
    }

    /// `w = eps^gamma L c + f(c)`.
    pub fn chemical_potential(&self, c: &[f64]) -> Vec<f64> {
        let stiffness = self.eps.powf(self.params.exponents.gamma);
        let lc = self.laplacian.mul_vec(c);
        lc.iter().zip(c).map(|(a, &ci)| stiffness * a + double_well(ci).1).collect()
    }

    pub fn energy(&self, c: &[f64]) -> f64 {
        let stiffness = self.eps.powf(self.params.exponents.gamma);
        let grad2 = self.h2() * dot(c, &self.laplacian.mul_vec(c));
        let bulk: f64 = c.iter().map(|&ci| double_well(ci).0).sum::<f64>() * self.h2();
        self.params.lambda * (0.5 * stiffness * grad2 + bulk)
    }

    pub fn mass(&self, c: &[f64]) -> f64 {
        c.iter().sum::<f64>() * self.h2()
    }

    fn grad_sq(&self, x: &[f64]) -> f64 {
        self.h2() * dot(x, &self.laplacian.mul_vec(x))
    }

    /// Squared discrete `H1*` norm of `g`.
    fn dual_sq(&self, g: &[f64]) -> Result<f64> {
        if g.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let op = H1Riesz { l: &self.laplacian };
        let (phi, report) = cg_solve(&op, g, &self.params.cg);
        report.into_result("H1 dual-norm solve")?;
        Ok(self.h2() * dot(g, &phi))
    }
}

/// Everything a micro run produces.
#[derive(Debug, Clone)]
pub struct MicroRun {
    pub eps: f64,
    pub mask_hash: String,
    pub snapshots: Vec<(usize, MicroState)>,
    pub ledger: Vec<LedgerRow>,
    pub final_state: MicroState,
    /// `(c^N - c^{N-1}) / dt` at the last step (zero when no step was taken).
    pub final_dcdt: ScalarField,
    pub ch_iterations: usize,
}

struct Accumulator {
    grad_u2: f64,
    grad_w2: f64,
    w2: f64,
    dual2: f64,
    grad_c_sup: f64,
    c_l4_sup: f64,
}

/// Time-marches the pore-scale system on the `k x k` tiling of `geom`.
pub fn run_micro(
    geom: &CellGeometry,
    k: usize,
    n_cell: usize,
    params: &MicroParams,
    c0: &InitialCondition,
) -> Result<MicroRun> {
    let domain = build_domain_mask(geom, k, n_cell)?;
    let solver = MicroSolver::new(domain, *params)?;
    run_with(&solver, c0)
}

pub fn run_with(solver: &MicroSolver, c0: &InitialCondition) -> Result<MicroRun> {
    let p = solver.params;
    let cells = solver.cells();
    let faces = &solver.stokes.faces;
    let eps = solver.eps();
    let mask_hash = solver.domain.hash();

    let mut c = cells.gather(&c0.sample(&solver.domain.mask));
    let mut w = solver.chemical_potential(&c);
    let (mut u, mut pr) = if p.force_zero_velocity {
        (vec![0.0; faces.len()], vec![0.0; cells.len()])
    } else {
        solver.stokes_solve_compact(&c, &w, None).map_err(|e| e.at_step(0))?
    };

    let state_of = |t: f64, c: &[f64], w: &[f64], u: &[f64], pr: &[f64]| MicroState {
        t,
        u: faces.scatter(u),
        p: cells.scatter(pr),
        c: cells.scatter(c),
        w: cells.scatter(w),
    };

    let h2 = solver.h2();
    let grad_c0 = solver.grad_sq(&c).sqrt();
    let l4 = |c: &[f64]| (c.iter().map(|x| x.powi(4)).sum::<f64>() * h2).powf(0.25);
    let mut acc = Accumulator {
        grad_u2: 0.0,
        grad_w2: 0.0,
        w2: 0.0,
        dual2: 0.0,
        grad_c_sup: grad_c0,
        c_l4_sup: l4(&c),
    };
    let row = |step: usize, c: &[f64], w: &[f64], u: &[f64], acc: &Accumulator| LedgerRow {
        step,
        t: step as f64 * p.dt,
        energy: solver.energy(c),
        d_u: p.mu * eps * eps * solver.stokes.dirichlet_energy(u),
        d_w: p.lambda * eps.powf(p.exponents.alpha) * solver.grad_sq(w),
        mass: solver.mass(c),
        grad_u: p.mu.sqrt() * eps * acc.grad_u2.sqrt(),
        grad_w: p.lambda.sqrt() * eps * acc.grad_w2.sqrt(),
        grad_c: acc.grad_c_sup,
        c_l4: acc.c_l4_sup,
        w_l2: acc.w2.sqrt(),
        dtc_dual: acc.dual2.sqrt(),
    };

    let mut ledger = vec![row(0, &c, &w, &u, &acc)];
    let mut snapshots = vec![(0, state_of(0.0, &c, &w, &u, &pr))];
    let mut dcdt = vec![0.0; c.len()];
    let mut ch_iterations = 0;

    for step in 1..=p.steps {
        let (c_next, w_next, iters) = solver.ch_step_compact(&c, &u).map_err(|e| e.at_step(step))?;
        ch_iterations += iters;
        dcdt = c_next.iter().zip(&c).map(|(a, b)| (a - b) / p.dt).collect();
        c = c_next;
        w = w_next;
        if !p.force_zero_velocity {
            let (u_next, p_next) = solver
                .stokes_solve_compact(&c, &w, Some(&pr))
                .map_err(|e| e.at_step(step))?;
            u = u_next;
            pr = p_next;
        }
        acc.grad_u2 += p.dt * solver.stokes.dirichlet_energy(&u);
        acc.grad_w2 += p.dt * solver.grad_sq(&w);
        acc.w2 += p.dt * dot(&w, &w) * h2;
        acc.dual2 += p.dt * solver.dual_sq(&dcdt).map_err(|e| e.at_step(step))?;
        acc.grad_c_sup = acc.grad_c_sup.max(solver.grad_sq(&c).sqrt());
        acc.c_l4_sup = acc.c_l4_sup.max(l4(&c));

        let r = row(step, &c, &w, &u, &acc);
        if !r.monitors().iter().all(|v| v.is_finite()) || !r.energy.is_finite() {
            return Err(HomogError::IllPosed("non-finite ledger entry".into()).at_step(step));
        }
        ledger.push(r);
        if step % p.snapshot_stride == 0 || step == p.steps {
            snapshots.push((step, state_of(step as f64 * p.dt, &c, &w, &u, &pr)));
        }
    }

    let final_state = state_of(p.steps as f64 * p.dt, &c, &w, &u, &pr);
    Ok(MicroRun {
        eps,
        mask_hash,
        snapshots,
        ledger,
        final_state,
        final_dcdt: cells.scatter(&dcdt),
        ch_iterations,
    })
}
