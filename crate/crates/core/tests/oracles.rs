//! Iterative solvers against dense direct solves of the same discrete
//! systems (nalgebra LU), at sizes where the dense solve is cheap.

use nalgebra::{DMatrix, DVector};

use porehomog::cell::{effective_coefficients, solve_stokes_cell, SigmaConvention, StokesForcing};
use porehomog::field::{Axis, ScalarField};
use porehomog::grid::{build_cell_mask, build_domain_mask, Boundary, CellGeometry, Mask};
use porehomog::macroscale::{MacroParams, MacroSolver, Orientation};
use porehomog::micro::{MicroParams, MicroSolver};
use porehomog::ops::MacStokes;
use porehomog::sparse::{uzawa_solve, CsrMatrix, UzawaOptions};

const PI: f64 = std::f64::consts::PI;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dense solve of `[A B^T; B 0] (u, p) = (f, 0)` with the pressure mean
/// fixed to zero through a bordering multiplier.
fn dense_saddle(a: &CsrMatrix, b: &CsrMatrix, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nu, np) = (a.n_rows(), b.n_rows());
    let size = nu + np + 1;
    let mut m = DMatrix::<f64>::zeros(size, size);
    for r in 0..nu {
        for (c, v) in a.row(r) {
            m[(r, c)] += v;
        }
    }
    for r in 0..np {
        for (c, v) in b.row(r) {
            m[(nu + r, c)] += v;
            m[(c, nu + r)] += v;
        }
        m[(nu + r, size - 1)] = 1.0;
        m[(size - 1, nu + r)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(size);
    rhs.rows_mut(0, nu).copy_from_slice(f);
    let x = m.lu().solve(&rhs).expect("saddle system is nonsingular");
    (x.rows(0, nu).iter().copied().collect(), x.rows(nu, np).iter().copied().collect())
}

fn x_forcing(stokes: &MacStokes, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = (1.0 / stokes.h).round() as usize;
    stokes
        .faces
        .faces()
        .iter()
        .map(|&(axis, k)| match axis {
            // x-face (i, j) sits at (i h, (j + 1/2) h)
            Axis::X => g((k % n) as f64 * stokes.h, ((k / n) as f64 + 0.5) * stokes.h),
            Axis::Y => 0.0,
        })
        .collect()
}

#[test]
fn walled_box_constant_force_is_balanced_by_pressure() {
    let stokes = MacStokes::new(&Mask::full(8), Boundary::Walled).unwrap();
    let f = x_forcing(&stokes, |_, _| 1.0);
    let (u, p, rep) = uzawa_solve(&stokes.a, &stokes.b, &f, &UzawaOptions::default());
    assert!(rep.converged);
    let (ud, pd) = dense_saddle(&stokes.a, &stokes.b, &f);
    assert!(max_diff(&u, &ud) <= 1e-8);
    assert!(max_diff(&p, &pd) <= 1e-8);
    assert!(u.iter().all(|v| v.abs() <= 1e-8));
    // p = x - 1/2 at the cell centres
    for (m, &pv) in p.iter().enumerate() {
        let i = stokes.cells.cell(m) % 8;
        assert!((pv - ((i as f64 + 0.5) / 8.0 - 0.5)).abs() <= 1e-8);
    }
}

#[test]
fn walled_box_shear_force_matches_dense() {
    let stokes = MacStokes::new(&Mask::full(16), Boundary::Walled).unwrap();
    let f = x_forcing(&stokes, |x, y| (2.0 * PI * y).sin() + x);
    let (u, p, rep) = uzawa_solve(&stokes.a, &stokes.b, &f, &UzawaOptions::default());
    assert!(rep.converged);
    let (ud, pd) = dense_saddle(&stokes.a, &stokes.b, &f);
    assert!(ud.iter().any(|v| v.abs() > 1e-4), "forcing must drive a flow");
    assert!(max_diff(&u, &ud) <= 1e-8, "{}", max_diff(&u, &ud));
    assert!(max_diff(&p, &pd) <= 1e-8, "{}", max_diff(&p, &pd));
}

#[test]
fn periodic_disc_cell_flow_matches_dense() {
    let mask = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 16).unwrap();
    let cell = solve_stokes_cell(&mask, StokesForcing::E1).unwrap();
    let stokes = MacStokes::new(&mask, Boundary::Periodic).unwrap();
    let f = x_forcing(&stokes, |_, _| 1.0);
    let (ud, pd) = dense_saddle(&stokes.a, &stokes.b, &f);
    let u = stokes.faces.gather(&cell.omega);
    let p = stokes.cells.gather(&cell.pi);
    assert!(max_diff(&u, &ud) <= 1e-8, "{}", max_diff(&u, &ud));
    assert!(max_diff(&p, &pd) <= 1e-8, "{}", max_diff(&p, &pd));
}

#[test]
fn micro_stokes_matches_dense() {
    let domain = build_domain_mask(&CellGeometry::disc(0.25).unwrap(), 2, 8).unwrap();
    let params = MicroParams::default();
    let solver = MicroSolver::new(domain.clone(), params.clone()).unwrap();
    let c = ScalarField::from_fn(&domain.mask, |x, y| (2.0 * PI * x).cos() * (PI * y).sin());
    let w = ScalarField::from_fn(&domain.mask, |x, y| (2.0 * PI * y).sin() + x * x);
    let (u, p) = solver.stokes_solve(&c, &w).unwrap();

    let stokes = &solver.stokes;
    let (cc, wc) = (stokes.cells.gather(&c), stokes.cells.gather(&w));
    let eps = 0.5;
    let f: Vec<f64> = stokes
        .face_cells
        .iter()
        .map(|&(lo, hi)| -eps * params.lambda * 0.5 * (cc[lo] + cc[hi]) * (wc[hi] - wc[lo]) / stokes.h)
        .collect();
    let a = stokes.a.scaled(params.mu * eps * eps);
    let (ud, pd) = dense_saddle(&a, &stokes.b, &f);
    let (u, p) = (stokes.faces.gather(&u), stokes.cells.gather(&p));
    assert!(ud.iter().any(|v| v.abs() > 1e-6), "forcing must drive a flow");
    assert!(max_diff(&u, &ud) <= 1e-8, "{}", max_diff(&u, &ud));
    assert!(max_diff(&p, &pd) <= 1e-8, "{}", max_diff(&p, &pd));
}

fn macro_solver(m: [f64; 2]) -> MacroSolver {
    let mut coefficients = effective_coefficients(&CellGeometry::disc(0.25).unwrap(), 32, SigmaConvention::FluxBalance).unwrap();
    coefficients.m = m;
    MacroSolver::new(MacroParams {
        lambda: 1.5,
        mu: 0.8,
        dt: 1e-3,
        steps: 0,
        stabilization: 2.0,
        sigma_bar_override: Some(1.0),
        orientation: Orientation::GradientFlow,
        coefficients,
        n: 16,
        snapshot_stride: 1,
        tol: 1e-13,
    })
    .unwrap()
}

/// Dense Darcy system on the walled `n x n` grid: `div u = 0` with face
/// fluxes `u = -(K/mu) dp/dn - (lambda / 2 mu) M (c dcdt)_lo+hi`.
fn dense_darcy(n: usize, kappa: [f64; 2], drive: [f64; 2], c: &[f64], dcdt: &[f64]) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let size = n * n + 1;
    let mut m = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    let mut link = |lo: usize, hi: usize, axis: usize| {
        let k = kappa[axis] / (h * h);
        let d = drive[axis] * (c[lo] * dcdt[lo] + c[hi] * dcdt[hi]) / h;
        // net outflow per cell: the flux lo -> hi leaves lo and enters hi
        m[(lo, lo)] += k;
        m[(lo, hi)] -= k;
        m[(hi, hi)] += k;
        m[(hi, lo)] -= k;
        rhs[lo] += d;
        rhs[hi] -= d;
    };
    for j in 0..n {
        for i in 0..n {
            if i + 1 < n {
                link(j * n + i, j * n + i + 1, 0);
            }
            if j + 1 < n {
                link(j * n + i, (j + 1) * n + i, 1);
            }
        }
    }
    for q in 0..n * n {
        m[(q, size - 1)] = 1.0;
        m[(size - 1, q)] = 1.0;
    }
    let x = m.lu().solve(&rhs).expect("bordered Neumann system is nonsingular");
    x.rows(0, n * n).iter().copied().collect()
}

#[test]
fn darcy_matches_dense_and_is_divergence_free() {
    let m = [0.4, 0.25];
    let solver = macro_solver(m);
    let n = 16;
    let mask = Mask::full(n);
    let c = ScalarField::from_fn(&mask, |_, y| 0.5 + 0.3 * (PI * y).cos());
    let dcdt = ScalarField::from_fn(&mask, |x, _| (2.0 * PI * x).sin());
    let (u, p, div) = solver.darcy_solve(&c, &dcdt).unwrap();
    assert!(div <= 1e-8, "{div}");

    let params = &solver.params;
    let k = params.coefficients.k.tensor().unwrap();
    let kappa = [k[0][0] / params.mu, k[1][1] / params.mu];
    let scale = params.lambda / (2.0 * params.mu);
    let pd = dense_darcy(n, kappa, [scale * m[0], scale * m[1]], &c.values, &dcdt.values);
    assert!(pd.iter().any(|v| v.abs() > 1e-6), "drive must build a pressure");
    assert!(max_diff(&p.values, &pd) <= 1e-8, "{}", max_diff(&p.values, &pd));

    // independent divergence of the returned face fluxes, walls closed
    let h = 1.0 / n as f64;
    for j in 0..n {
        for i in 0..n {
            let right = if i + 1 < n { u.u[j * n + i + 1] } else { 0.0 };
            let top = if j + 1 < n { u.v[(j + 1) * n + i] } else { 0.0 };
            let d = (right - u.u[j * n + i] + top - u.v[j * n + i]) / h;
            assert!(d.abs() <= 1e-8, "div at ({i},{j}) = {d}");
        }
    }
}

#[test]
fn darcy_with_cell_coefficients_is_at_rest() {
    let coefficients = effective_coefficients(&CellGeometry::disc(0.25).unwrap(), 32, SigmaConvention::FluxBalance).unwrap();
    let solver = macro_solver(coefficients.m);
    let mask = Mask::full(16);
    let c = ScalarField::from_fn(&mask, |x, y| x - y);
    let dcdt = ScalarField::from_fn(&mask, |x, _| (2.0 * PI * x).sin());
    let (u, p, div) = solver.darcy_solve(&c, &dcdt).unwrap();
    assert!(coefficients.m.iter().all(|v| v.abs() <= 1e-8), "{:?}", coefficients.m);
    assert!(u.max_abs() <= 1e-8 && p.max_abs() <= 1e-8 && div <= 1e-8);
}
