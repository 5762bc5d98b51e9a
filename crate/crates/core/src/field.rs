//! Grid fields and the numbering of unknowns on active cells/faces.

use serde::{Deserialize, Serialize};

use crate::grid::{Boundary, Mask};

const NONE: usize = usize::MAX;

/// Cell-centred field on an `n x n` grid. Inactive cells hold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Samples `f` at the centres of active cells.
    pub fn from_fn(mask: &Mask, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = mask.n();
        let h = mask.h();
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                if mask.cell(i, j) {
                    values[j * n + i] = f((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                }
            }
        }
        ScalarField { n, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    /// `sum v h^2` over the whole grid (inactive entries are zero).
    pub fn integral(&self) -> f64 {
        let h2 = 1.0 / (self.n * self.n) as f64;
        self.values.iter().sum::<f64>() * h2
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm with cell measure `h^2`.
    pub fn l2(&self) -> f64 {
        let h2 = 1.0 / (self.n * self.n) as f64;
        (self.values.iter().map(|v| v * v).sum::<f64>() * h2).sqrt()
    }
}

/// MAC velocity: `u[idx(i,j)]` sits on the left face of cell `(i,j)`,
/// `v[idx(i,j)]` on its bottom face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaggeredVectorField {
    pub n: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl StaggeredVectorField {
    pub fn zeros(n: usize) -> Self {
        StaggeredVectorField {
            n,
            u: vec![0.0; n * n],
            v: vec![0.0; n * n],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `sum u h^2` per component.
    pub fn integral(&self) -> [f64; 2] {
        let h2 = 1.0 / (self.n * self.n) as f64;
        [
            self.u.iter().sum::<f64>() * h2,
            self.v.iter().sum::<f64>() * h2,
        ]
    }

    pub fn l2(&self) -> f64 {
        let h2 = 1.0 / (self.n * self.n) as f64;
        (self.u.iter().chain(self.v.iter()).map(|x| x * x).sum::<f64>() * h2).sqrt()
    }
}

/// Compact numbering of the active cells of a mask.
#[derive(Debug, Clone)]
pub struct CellIndex {
    n: usize,
    map: Vec<usize>,
    cells: Vec<usize>,
}

impl CellIndex {
    pub fn new(mask: &Mask) -> Self {
        let n = mask.n();
        let mut map = vec![NONE; n * n];
        let mut cells = Vec::with_capacity(mask.active_count());
        for (k, &active) in mask.cells().iter().enumerate() {
            if active {
                map[k] = cells.len();
                cells.push(k);
            }
        }
        CellIndex { n, map, cells }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Unknown number of grid cell `k`, if active.
    #[inline]
    pub fn get(&self, k: usize) -> Option<usize> {
        let m = self.map[k];
        (m != NONE).then_some(m)
    }

    /// Grid index of unknown `m`.
    #[inline]
    pub fn cell(&self, m: usize) -> usize {
        self.cells[m]
    }

    pub fn gather(&self, field: &ScalarField) -> Vec<f64> {
        self.cells.iter().map(|&k| field.values[k]).collect()
    }

    pub fn scatter(&self, x: &[f64]) -> ScalarField {
        let mut values = vec![0.0; self.n * self.n];
        for (m, &k) in self.cells.iter().enumerate() {
            values[k] = x[m];
        }
        ScalarField { n: self.n, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Numbering of velocity unknowns: active faces that are not on a wall.
/// X-faces come first, then y-faces.
#[derive(Debug, Clone)]
pub struct FaceIndex {
    n: usize,
    map_x: Vec<usize>,
    map_y: Vec<usize>,
    faces: Vec<(Axis, usize)>,
}

impl FaceIndex {
    pub fn new(mask: &Mask, bc: Boundary) -> Self {
        let n = mask.n();
        let mut map_x = vec![NONE; n * n];
        let mut map_y = vec![NONE; n * n];
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if mask.x_link(i, j, bc) {
                    map_x[j * n + i] = faces.len();
                    faces.push((Axis::X, j * n + i));
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                if mask.y_link(i, j, bc) {
                    map_y[j * n + i] = faces.len();
                    faces.push((Axis::Y, j * n + i));
                }
            }
        }
        FaceIndex {
            n,
            map_x,
            map_y,
            faces,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn get(&self, axis: Axis, k: usize) -> Option<usize> {
        let m = match axis {
            Axis::X => self.map_x[k],
            Axis::Y => self.map_y[k],
        };
        (m != NONE).then_some(m)
    }

    #[inline]
    pub fn face(&self, m: usize) -> (Axis, usize) {
        self.faces[m]
    }

    pub fn faces(&self) -> &[(Axis, usize)] {
        &self.faces
    }

    pub fn gather(&self, field: &StaggeredVectorField) -> Vec<f64> {
        self.faces
            .iter()
            .map(|&(axis, k)| match axis {
                Axis::X => field.u[k],
                Axis::Y => field.v[k],
            })
            .collect()
    }

    pub fn scatter(&self, x: &[f64]) -> StaggeredVectorField {
        let mut out = StaggeredVectorField::zeros(self.n);
        for (m, &(axis, k)) in self.faces.iter().enumerate() {
            match axis {
                Axis::X => out.u[k] = x[m],
                Axis::Y => out.v[k] = x[m],
            }
        }
        out
    }
}
