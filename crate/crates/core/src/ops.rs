//! Finite-volume operators on masked grids: Neumann Laplacians, face
//! gradients and the MAC Stokes blocks.
//!
//! Walls (inactive cells, and the outer edge under [`Boundary::Walled`]) carry
//! homogeneous Neumann data for cell-centred unknowns and no-slip for
//! velocities. A velocity whose tangential neighbour lies behind a wall uses a
//! mirrored ghost value so that the wall sits on the cell edge.

use crate::error::Result;
use crate::field::{Axis, CellIndex, FaceIndex};
use crate::grid::{Boundary, Mask};
use crate::sparse::CsrMatrix;

/// An active face coupling two cell unknowns. `lo` is the left/bottom cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub axis: Axis,
    /// Grid index of the face (same convention as the field arrays).
    pub face: usize,
    pub lo: usize,
    pub hi: usize,
}

pub fn links(mask: &Mask, bc: Boundary, cells: &CellIndex) -> Vec<Link> {
    let n = mask.n();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if mask.x_link(i, j, bc) {
                let west = j * n + (i + n - 1) % n;
                out.push(Link {
                    axis: Axis::X,
                    face: k,
                    lo: cells.get(west).expect("active face has active cells"),
                    hi: cells.get(k).expect("active face has active cells"),
                });
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if mask.y_link(i, j, bc) {
                let south = ((j + n - 1) % n) * n + i;
                out.push(Link {
                    axis: Axis::Y,
                    face: k,
                    lo: cells.get(south).expect("active face has active cells"),
                    hi: cells.get(k).expect("active face has active cells"),
                });
            }
        }
    }
    out
}

/// `-div(coef grad .)` with zero normal flux through walls: symmetric
/// positive semidefinite, `coef[0]` on x-links and `coef[1]` on y-links.
pub fn laplacian(mask: &Mask, bc: Boundary, cells: &CellIndex, coef: [f64; 2]) -> CsrMatrix {
    // 1/h^2 = n^2 exactly, so integer coefficients give exact row sums
    let inv_h2 = (mask.n() * mask.n()) as f64;
    let mut t = Vec::new();
    for m in 0..cells.len() {
        t.push((m, m, 0.0));
    }
    for l in links(mask, bc, cells) {
        let c = match l.axis {
            Axis::X => coef[0],
            Axis::Y => coef[1],
        } * inv_h2;
        t.push((l.lo, l.lo, c));
        t.push((l.hi, l.hi, c));
        t.push((l.lo, l.hi, -c));
        t.push((l.hi, l.lo, -c));
    }
    CsrMatrix::assemble_symmetric(&t, cells.len()).expect("laplacian assembly is symmetric by construction")
}

/// Face differences `(x_hi - x_lo) / h`, one row per link.
pub fn gradient(links: &[Link], n_cells: usize, h: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(2 * links.len());
    for (r, l) in links.iter().enumerate() {
        t.push((r, l.hi, 1.0 / h));
        t.push((r, l.lo, -(1.0 / h)));
    }
    CsrMatrix::assemble(&t, links.len(), n_cells).expect("link indices in range")
}

/// Outward unit normals (of the pore space) of every active-cell face that
/// touches a solid cell, with wraparound. Returned as `(cell unknown, normal)`.
pub fn solid_faces(mask: &Mask, cells: &CellIndex) -> Vec<(usize, [f64; 2])> {
    let n = mask.n();
    let mut out = Vec::new();
    for m in 0..cells.len() {
        let k = cells.cell(m);
        let (i, j) = (k % n, k / n);
        if !mask.cell((i + n - 1) % n, j) {
            out.push((m, [-1.0, 0.0]));
        }
        if !mask.cell((i + 1) % n, j) {
            out.push((m, [1.0, 0.0]));
        }
        if !mask.cell(i, (j + n - 1) % n) {
            out.push((m, [0.0, -1.0]));
        }
        if !mask.cell(i, (j + 1) % n) {
            out.push((m, [0.0, 1.0]));
        }
    }
    out
}

/// MAC discretisation of the Stokes blocks on a masked grid.
///
/// `a` is the (unscaled) vector Laplacian `-Δ` on velocity unknowns and `b`
/// is minus the divergence, so `b^T` is the face gradient of cell pressures.
#[derive(Debug, Clone)]
pub struct MacStokes {
    pub bc: Boundary,
    pub h: f64,
    pub cells: CellIndex,
    pub faces: FaceIndex,
    /// `(lo, hi)` cell unknowns on either side of each velocity unknown.
    pub face_cells: Vec<(usize, usize)>,
    pub a: CsrMatrix,
    pub b: CsrMatrix,
}

impl MacStokes {
    pub fn new(mask: &Mask, bc: Boundary) -> Result<Self> {
        let n = mask.n();
        let h = mask.h();
        let inv_h2 = (n * n) as f64;
        let cells = CellIndex::new(mask);
        let faces = FaceIndex::new(mask, bc);
        let walled = bc == Boundary::Walled;

        let step = |i: usize, d: isize| -> Option<usize> {
            let t = i as isize + d;
            if walled && (t < 0 || t >= n as isize) {
                None
            } else {
                Some(t.rem_euclid(n as isize) as usize)
            }
        };

        let mut ta = Vec::new();
        for (m, &(axis, k)) in faces.faces().iter().enumerate() {
            let (i, j) = (k % n, k / n);
            let mut diag = 0.0;
            // normal direction: a missing neighbour is a face on the wall itself
            // tangential direction: a missing neighbour lies behind the wall
            let (normal, tangential): ([(isize, isize); 2], [(isize, isize); 2]) = match axis {
                Axis::X => ([(-1, 0), (1, 0)], [(0, -1), (0, 1)]),
                Axis::Y => ([(0, -1), (0, 1)], [(-1, 0), (1, 0)]),
            };
            for (di, dj) in normal {
                let nb = step(i, di).zip(step(j, dj)).and_then(|(a, b)| faces.get(axis, b * n + a));
                diag += inv_h2;
                if let Some(q) = nb {
                    ta.push((m, q, -inv_h2));
                }
            }
            for (di, dj) in tangential {
                let nb = step(i, di).zip(step(j, dj)).and_then(|(a, b)| faces.get(axis, b * n + a));
                match nb {
                    Some(q) => {
                        diag += inv_h2;
                        ta.push((m, q, -inv_h2));
                    }
                    None => diag += 2.0 * inv_h2,
                }
            }
            ta.push((m, m, diag));
        }
        let a = CsrMatrix::assemble_symmetric(&ta, faces.len())?;

        let mut tb = Vec::new();
        let mut face_cells = Vec::with_capacity(faces.len());
        for (m, &(axis, k)) in faces.faces().iter().enumerate() {
            let (i, j) = (k % n, k / n);
            let lo = match axis {
                Axis::X => j * n + (i + n - 1) % n,
                Axis::Y => ((j + n - 1) % n) * n + i,
            };
            let lo = cells.get(lo).expect("active face has active cells");
            let hi = cells.get(k).expect("active face has active cells");
            face_cells.push((lo, hi));
            tb.push((hi, m, n as f64));
            tb.push((lo, m, -(n as f64)));
        }
        let b = CsrMatrix::assemble(&tb, cells.len(), faces.len())?;
        Ok(MacStokes {
            bc,
            h,
            cells,
            faces,
            face_cells,
            a,
            b,
        })
    }

    /// Cell divergence of a velocity given on the unknown faces.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        self.b.mul_vec(u).into_iter().map(|x| -x).collect()
    }

    /// `||grad u||^2 = h^2 u^T A u` including the wall contributions.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let au = self.a.mul_vec(u);
        self.h * self.h * crate::sparse::dot(u, &au)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cell_mask, CellGeometry};

    #[test]
    fn laplacian_kills_constants_and_is_conservative() {
        let m = build_cell_mask(&CellGeometry::disc(0.3).unwrap(), 16).unwrap();
        for bc in [Boundary::Periodic, Boundary::Walled] {
            let cells = CellIndex::new(&m);
            let l = laplacian(&m, bc, &cells, [1.0, 2.0]);
            let ones = vec![1.0; cells.len()];
            assert!(l.mul_vec(&ones).iter().all(|&v| v.abs() < 1e-9));
            // column sums vanish too (symmetric)
            let colsum = l.transpose_mul_vec(&ones);
            assert!(colsum.iter().all(|&v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn laplacian_equals_grad_transpose_grad() {
        let m = build_cell_mask(&CellGeometry::disc(0.2).unwrap(), 10).unwrap();
        let cells = CellIndex::new(&m);
        let ls = links(&m, Boundary::Walled, &cells);
        let g = gradient(&ls, cells.len(), m.h());
        let l = laplacian(&m, Boundary::Walled, &cells, [1.0, 1.0]);
        let x: Vec<f64> = (0..cells.len()).map(|k| (k as f64 * 0.7).sin()).collect();
        let gx = g.mul_vec(&x);
        let gtgx = g.transpose_mul_vec(&gx);
        let lx = l.mul_vec(&x);
        for k in 0..x.len() {
            assert!((gtgx[k] - lx[k]).abs() < 1e-9 * lx[k].abs().max(1.0));
        }
    }

    #[test]
    fn solid_normals_sum_to_zero_on_closed_interface() {
        let m = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 32).unwrap();
        let cells = CellIndex::new(&m);
        let sf = solid_faces(&m, &cells);
        let s = sf.iter().fold([0.0, 0.0], |acc, (_, nrm)| [acc[0] + nrm[0], acc[1] + nrm[1]]);
        assert_eq!(s, [0.0, 0.0]);
        assert!(solid_faces(&Mask::full(8), &CellIndex::new(&Mask::full(8))).is_empty());
    }

    #[test]
    fn stokes_blocks_shapes_and_gradient() {
        let m = Mask::full(6);
        let s = MacStokes::new(&m, Boundary::Walled).unwrap();
        assert_eq!(s.faces.len(), 2 * 6 * 5);
        assert_eq!(s.cells.len(), 36);
        assert!(s.a.check_symmetric().is_ok());
        // B^T of a linear pressure is its (constant) gradient on every face
        let h = m.h();
        let p: Vec<f64> = (0..36).map(|k| ((k % 6) as f64 + 0.5) * h).collect();
        let g = s.b.transpose_mul_vec(&p);
        for (q, &(axis, _)) in s.faces.faces().iter().enumerate() {
            let expect = if axis == Axis::X { 1.0 } else { 0.0 };
            assert!((g[q] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stokes_operator_is_positive_definite_with_walls() {
        let m = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 8).unwrap();
        let s = MacStokes::new(&m, Boundary::Periodic).unwrap();
        let d = s.a.to_dense();
        let nd = d.len();
        let mat = nalgebra::DMatrix::from_fn(nd, nd, |r, c| d[r][c]);
        let eig = mat.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > 1e-8));
    }
}
