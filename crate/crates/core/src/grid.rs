//! Unit-cell geometry and the discrete masks every solver consumes.
//!
//! Cells are indexed `(i, j)` with `i` along `y1` (x) and `j` along `y2` (y),
//! stored row-major as `j * n + i`. The x-face with index `(i, j)` is the left
//! face of cell `(i, j)`, shared with cell `(i - 1, j)` (wrapping); the y-face
//! `(i, j)` is the bottom face, shared with `(i, j - 1)`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HomogError, Result};

/// Pore/solid layout of the reference cell `Y = (0,1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellGeometry {
    /// Solid disc of the given radius centred at `(0.5, 0.5)`.
    Disc { radius: f64 },
    /// Pore space is the horizontal strip `lower < y2 < upper`. The solid
    /// touches the cell boundary, so this is a test geometry only (it has a
    /// closed-form permeability).
    SlabChannel { lower: f64, upper: f64 },
    Empty,
}

impl CellGeometry {
    pub fn disc(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 0.5) {
            return Err(HomogError::Geometry(format!(
                "disc radius must lie in (0, 0.5), got {radius}"
            )));
        }
        Ok(CellGeometry::Disc { radius })
    }

    pub fn slab(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower < upper && upper <= 1.0) {
            return Err(HomogError::Geometry(format!(
                "slab channel needs 0 <= lower < upper <= 1, got ({lower}, {upper})"
            )));
        }
        Ok(CellGeometry::SlabChannel { lower, upper })
    }

    /// Parses `disc:0.25`, `slab:0.25:0.75` or `empty`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| HomogError::Geometry(format!("bad number '{s}' in '{text}'")))
        };
        match parts.as_slice() {
            ["disc", r] => Self::disc(num(r)?),
            ["slab", a, b] => Self::slab(num(a)?, num(b)?),
            ["empty"] => Ok(CellGeometry::Empty),
            _ => Err(HomogError::Geometry(format!(
                "unrecognised geometry '{text}' (expected disc:<r>, slab:<a>:<b> or empty)"
            ))),
        }
    }

    /// Canonical text form, inverse of [`CellGeometry::parse`].
    pub fn label(&self) -> String {
        match self {
            CellGeometry::Disc { radius } => format!("disc:{radius}"),
            CellGeometry::SlabChannel { lower, upper } => format!("slab:{lower}:{upper}"),
            CellGeometry::Empty => "empty".to_string(),
        }
    }

    /// Exact pore area `|Y_p|`.
    pub fn pore_area(&self) -> f64 {
        match *self {
            CellGeometry::Disc { radius } => 1.0 - PI * radius * radius,
            CellGeometry::SlabChannel { lower, upper } => upper - lower,
            CellGeometry::Empty => 1.0,
        }
    }

    /// Exact length of the pore/solid interface inside one cell.
    pub fn interface_length(&self) -> f64 {
        match *self {
            CellGeometry::Disc { radius } => 2.0 * PI * radius,
            CellGeometry::SlabChannel { lower, upper } => {
                let mut len = 0.0;
                if lower > 0.0 {
                    len += 1.0;
                }
                if upper < 1.0 {
                    len += 1.0;
                }
                len
            }
            CellGeometry::Empty => 0.0,
        }
    }
}

impl fmt::Display for CellGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Characteristic function of the pore part: 1 in `Y_p`, 0 in `Y_s`.
pub fn indicator(geom: &CellGeometry, y: [f64; 2]) -> u8 {
    let pore = match *geom {
        CellGeometry::Disc { radius } => {
            let dx = y[0] - 0.5;
            let dy = y[1] - 0.5;
            (dx * dx + dy * dy).sqrt() > radius
        }
        CellGeometry::SlabChannel { lower, upper } => lower < y[1] && y[1] < upper,
        CellGeometry::Empty => true,
    };
    pore as u8
}

/// How the outer edge of a grid is treated by the discrete operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Wraparound adjacency (unit-cell problems).
    Periodic,
    /// The edge of the square is a wall: no links cross it (micro and macro
    /// problems on `Omega`).
    Walled,
}

/// Cell and face activity on a uniform `n x n` grid of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    n: usize,
    h: f64,
    cells: Vec<bool>,
    face_x: Vec<bool>,
    face_y: Vec<bool>,
}

impl Mask {
    pub fn from_cells(n: usize, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), n * n, "cell array does not match grid");
        let mut face_x = vec![false; n * n];
        let mut face_y = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                let west = j * n + (i + n - 1) % n;
                let south = ((j + n - 1) % n) * n + i;
                face_x[k] = cells[k] && cells[west];
                face_y[k] = cells[k] && cells[south];
            }
        }
        Mask {
            n,
            h: 1.0 / n as f64,
            cells,
            face_x,
            face_y,
        }
    }

    /// Empty mask: every cell active.
    pub fn full(n: usize) -> Self {
        Self::from_cells(n, vec![true; n * n])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.n + i]
    }

    /// Left face of cell `(i, j)`.
    #[inline]
    pub fn face_x(&self, i: usize, j: usize) -> bool {
        self.face_x[j * self.n + i]
    }

    /// Bottom face of cell `(i, j)`.
    #[inline]
    pub fn face_y(&self, i: usize, j: usize) -> bool {
        self.face_y[j * self.n + i]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Whether the left face of `(i, j)` couples two unknowns under `bc`.
    #[inline]
    pub fn x_link(&self, i: usize, j: usize, bc: Boundary) -> bool {
        self.face_x(i, j) && !(bc == Boundary::Walled && i == 0)
    }

    /// Whether the bottom face of `(i, j)` couples two unknowns under `bc`.
    #[inline]
    pub fn y_link(&self, i: usize, j: usize, bc: Boundary) -> bool {
        self.face_y(i, j) && !(bc == Boundary::Walled && j == 0)
    }

    pub fn active_count(&self) -> usize {
        self.cells.iter().filter(|&&a| a).count()
    }

    pub fn porosity(&self) -> f64 {
        self.active_count() as f64 / (self.n * self.n) as f64
    }

    /// Copy shifted by `(di, dj)` with wraparound.
    pub fn shifted(&self, di: usize, dj: usize) -> Mask {
        let n = self.n;
        let mut cells = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                cells[((j + dj) % n) * n + (i + di) % n] = self.cells[j * n + i];
            }
        }
        Mask::from_cells(n, cells)
    }

    /// Number of connected components of active cells (4-adjacency).
    pub fn components(&self, bc: Boundary) -> usize {
        let n = self.n;
        let mut seen = vec![false; n * n];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..n * n {
            if !self.cells[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % n, k / n);
                let mut visit = |nb: usize, linked: bool| {
                    if linked && !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                };
                visit(j * n + (i + n - 1) % n, self.x_link(i, j, bc));
                visit(j * n + (i + 1) % n, self.x_link((i + 1) % n, j, bc));
                visit(((j + n - 1) % n) * n + i, self.y_link(i, j, bc));
                visit(((j + 1) % n) * n + i, self.y_link(i, (j + 1) % n, bc));
            }
        }
        count
    }

    /// SHA-256 over the grid size and cell activity, hex encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        let bytes: Vec<u8> = self.cells.iter().map(|&a| a as u8).collect();
        hasher.update(&bytes);
        hex::encode(hasher.finalize())
    }
}

/// Discretised unit cell.
#[derive(Debug, Clone)]
pub struct CellMask {
    pub geometry: CellGeometry,
    pub mask: Mask,
}

impl std::ops::Deref for CellMask {
    type Target = Mask;
    fn deref(&self) -> &Mask {
        &self.mask
    }
}

/// Perforated domain `Omega_p^eps`: the `k x k` tiling of a cell mask.
#[derive(Debug, Clone)]
pub struct DomainMask {
    pub geometry: CellGeometry,
    /// Number of eps-cells per side (`eps = 1/k`).
    pub k: usize,
    pub n_cell: usize,
    pub mask: Mask,
}

impl DomainMask {
    pub fn eps(&self) -> f64 {
        1.0 / self.k as f64
    }
}

impl std::ops::Deref for DomainMask {
    type Target = Mask;
    fn deref(&self) -> &Mask {
        &self.mask
    }
}

fn sample_cells(geom: &CellGeometry, n: usize) -> Vec<bool> {
    let h = 1.0 / n as f64;
    let mut cells = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            cells[j * n + i] = indicator(geom, y) == 1;
        }
    }
    cells
}

/// Samples the indicator at cell centres and checks periodic connectivity.
pub fn build_cell_mask(geom: &CellGeometry, n: usize) -> Result<CellMask> {
    if n < 4 {
        return Err(HomogError::Resolution(n));
    }
    let mask = Mask::from_cells(n, sample_cells(geom, n));
    let components = mask.components(Boundary::Periodic);
    if components != 1 {
        return Err(HomogError::Disconnected { n, components });
    }
    Ok(CellMask {
        geometry: *geom,
        mask,
    })
}

/// Tiles the cell mask `k x k` times. Connectivity is checked with walls on
/// the outer edge since that is how the domain solvers treat it.
pub fn build_domain_mask(geom: &CellGeometry, k: usize, n_cell: usize) -> Result<DomainMask> {
    if k == 0 {
        return Err(HomogError::Geometry("eps = 1/k needs k >= 1".into()));
    }
    let cell = build_cell_mask(geom, n_cell)?;
    let n = k * n_cell;
    let mut cells = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            cells[j * n + i] = cell.cell(i % n_cell, j % n_cell);
        }
    }
    let mask = Mask::from_cells(n, cells);
    let components = mask.components(Boundary::Walled);
    if components != 1 {
        return Err(HomogError::Disconnected { n, components });
    }
    Ok(DomainMask {
        geometry: *geom,
        k,
        n_cell,
        mask,
    })
}

pub fn porosity(mask: &Mask) -> f64 {
    mask.porosity()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_examples() {
        let disc = CellGeometry::disc(0.25).unwrap();
        assert_eq!(indicator(&disc, [0.5, 0.5]), 0);
        assert_eq!(indicator(&disc, [0.05, 0.05]), 1);
        for y in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(indicator(&CellGeometry::Empty, y), 1);
        }
        let slab = CellGeometry::slab(0.25, 0.75).unwrap();
        assert_eq!(indicator(&slab, [0.1, 0.5]), 1);
        assert_eq!(indicator(&slab, [0.1, 0.2]), 0);
    }

    #[test]
    fn geometry_validation() {
        assert!(CellGeometry::disc(0.5).is_err());
        assert!(CellGeometry::disc(0.0).is_err());
        assert!(CellGeometry::slab(0.5, 0.5).is_err());
        assert!(CellGeometry::slab(-0.1, 0.5).is_err());
        assert_eq!(
            CellGeometry::parse("slab:0.25:0.75").unwrap(),
            CellGeometry::SlabChannel {
                lower: 0.25,
                upper: 0.75
            }
        );
        assert_eq!(CellGeometry::parse("empty").unwrap(), CellGeometry::Empty);
        assert!(CellGeometry::parse("square:0.2").is_err());
        let g = CellGeometry::disc(0.25).unwrap();
        assert_eq!(CellGeometry::parse(&g.label()).unwrap(), g);
    }

    #[test]
    fn empty_mask_all_active() {
        let m = build_cell_mask(&CellGeometry::Empty, 8).unwrap();
        assert_eq!(m.active_count(), 64);
        for j in 0..8 {
            for i in 0..8 {
                assert!(m.face_x(i, j) && m.face_y(i, j));
            }
        }
    }

    #[test]
    fn disc_mask_porosity_near_area() {
        let m = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 64).unwrap();
        assert!((m.porosity() - (1.0 - PI / 16.0)).abs() < 0.01);
    }

    #[test]
    fn slab_rows() {
        let m = build_cell_mask(&CellGeometry::slab(0.25, 0.75).unwrap(), 8).unwrap();
        let active_rows: Vec<usize> = (0..8).filter(|&j| m.cell(0, j)).collect();
        assert_eq!(active_rows, vec![2, 3, 4, 5]);
        assert_eq!(m.porosity(), 0.5);
    }

    #[test]
    fn small_grid_rejected() {
        assert!(matches!(
            build_cell_mask(&CellGeometry::Empty, 3),
            Err(HomogError::Resolution(3))
        ));
    }

    #[test]
    fn disconnected_rejected() {
        // two separate channels once tiled with walls on the outer edge
        let slab = CellGeometry::slab(0.25, 0.75).unwrap();
        assert!(build_domain_mask(&slab, 1, 8).is_ok());
        assert!(matches!(
            build_domain_mask(&slab, 2, 8),
            Err(HomogError::Disconnected { .. })
        ));
        // a disc so large that it cuts the cell into separate corners is
        // impossible with r < 0.5, so build a disconnected mask by hand
        let mut cells = vec![false; 16];
        cells[0] = true;
        cells[10] = true;
        let m = Mask::from_cells(4, cells);
        assert_eq!(m.components(Boundary::Periodic), 2);
    }

    #[test]
    fn domain_tiling() {
        let d = build_domain_mask(&CellGeometry::Empty, 2, 4).unwrap();
        assert_eq!(d.n(), 8);
        assert_eq!(d.active_count(), 64);

        let disc = CellGeometry::disc(0.25).unwrap();
        let cell = build_cell_mask(&disc, 16).unwrap();
        let dom = build_domain_mask(&disc, 4, 16).unwrap();
        assert_eq!(dom.porosity(), cell.porosity());
        // matched total resolution 64
        let a = build_domain_mask(&disc, 2, 32).unwrap();
        let b = build_domain_mask(&disc, 4, 16).unwrap();
        assert_eq!(a.porosity(), build_cell_mask(&disc, 32).unwrap().porosity());
        assert_eq!(b.porosity(), build_cell_mask(&disc, 16).unwrap().porosity());
    }

    #[test]
    fn periodic_shift_identity() {
        let disc = CellGeometry::disc(0.3).unwrap();
        let m = build_cell_mask(&disc, 20).unwrap();
        assert_eq!(m.shifted(20, 20), m.mask);
        assert_eq!(m.shifted(7, 3).shifted(13, 17), m.mask);
        let d = build_domain_mask(&disc, 3, 8).unwrap();
        assert_eq!(d.shifted(8, 16), d.mask);
    }

    #[test]
    fn face_mask_consistency() {
        let m = build_cell_mask(&CellGeometry::disc(0.4).unwrap(), 32).unwrap();
        let n = m.n();
        for j in 0..n {
            for i in 0..n {
                if m.face_x(i, j) {
                    assert!(m.cell(i, j) && m.cell((i + n - 1) % n, j));
                }
                if m.face_y(i, j) {
                    assert!(m.cell(i, j) && m.cell(i, (j + n - 1) % n));
                }
                if !m.cell(i, j) {
                    assert!(!m.face_x(i, j) && !m.face_y(i, j));
                    assert!(!m.face_x((i + 1) % n, j) && !m.face_y(i, (j + 1) % n));
                }
            }
        }
    }

    #[test]
    fn porosity_refinement_first_order() {
        let disc = CellGeometry::disc(0.25).unwrap();
        let exact = disc.pore_area();
        let errs: Vec<f64> = [32usize, 64, 128, 256]
            .iter()
            .map(|&n| (build_cell_mask(&disc, n).unwrap().porosity() - exact).abs())
            .collect();
        let c = errs
            .iter()
            .zip([32.0, 64.0, 128.0, 256.0])
            .map(|(e, n)| e * n)
            .fold(0.0_f64, f64::max);
        assert!(c.is_finite() && c < 1.0, "C = {c}");
        let increases = errs.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increases <= 1, "errors {errs:?}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 16).unwrap();
        let b = build_cell_mask(&CellGeometry::disc(0.25).unwrap(), 16).unwrap();
        let c = build_cell_mask(&CellGeometry::disc(0.3).unwrap(), 16).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
