//! Periodic unfolding `T^eps u(x, y) = u(eps [x/eps] + eps y)` on grids
//! aligned with the eps-lattice, and the two-scale distances built on it.
//!
//! On an aligned grid of `k * n_cell` cells per side the operator is a pure
//! reshape: macro cell `(I, J)` and micro point `(i, j)` read the global cell
//! `(I n_cell + i, J n_cell + j)`. Product-grid points carry the measure
//! `eps^2 h_y^2`, so the reshape preserves integrals exactly.

use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::field::ScalarField;
use crate::grid::Mask;

/// Values on (macro cell) x (micro point). Macro cells are numbered
/// `J * k + I`, micro points `j * n_cell + i`; storage is macro-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedField {
    pub k: usize,
    pub n_cell: usize,
    pub values: Vec<f64>,
}

impl UnfoldedField {
    pub fn eps(&self) -> f64 {
        1.0 / self.k as f64
    }

    #[inline]
    pub fn get(&self, macro_cell: usize, micro: usize) -> f64 {
        self.values[macro_cell * self.n_cell * self.n_cell + micro]
    }

    /// Measure of one product-grid point: `eps^2 h_y^2`.
    pub fn weight(&self) -> f64 {
        let w = 1.0 / (self.k * self.n_cell) as f64;
        w * w
    }

    /// Samples `f(x, y)` with `x` at the centre of each macro cell and `y`
    /// at the micro cell centres.
    pub fn from_fn(k: usize, n_cell: usize, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> Self {
        let eps = 1.0 / k as f64;
        let hy = 1.0 / n_cell as f64;
        let mut values = Vec::with_capacity(k * k * n_cell * n_cell);
        for mj in 0..k {
            for mi in 0..k {
                let x = [(mi as f64 + 0.5) * eps, (mj as f64 + 0.5) * eps];
                for j in 0..n_cell {
                    for i in 0..n_cell {
                        values.push(f(x, [(i as f64 + 0.5) * hy, (j as f64 + 0.5) * hy]));
                    }
                }
            }
        }
        UnfoldedField { k, n_cell, values }
    }

    fn check_same_shape(&self, other: &UnfoldedField) -> Result<()> {
        if self.k != other.k || self.n_cell != other.n_cell {
            return Err(HomogError::Shape(format!(
                "unfolded fields on (k={}, n_cell={}) and (k={}, n_cell={})",
                self.k, self.n_cell, other.k, other.n_cell
            )));
        }
        Ok(())
    }

    /// Pointwise product (the product rule holds exactly on grids).
    pub fn mul(&self, other: &UnfoldedField) -> Result<UnfoldedField> {
        self.check_same_shape(other)?;
        Ok(UnfoldedField {
            k: self.k,
            n_cell: self.n_cell,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// `sum v * eps^2 h_y^2` (the unit cell has `|Y| = 1`).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.weight()
    }
}

fn cells_per_eps(n: usize, k: usize) -> Result<usize> {
    if k == 0 || n % k != 0 {
        return Err(HomogError::Misaligned { n, k });
    }
    Ok(n / k)
}

/// `T^eps` of a field on an `n x n` grid with `eps = 1/k`.
pub fn unfold(field: &ScalarField, k: usize) -> Result<UnfoldedField> {
    let n = field.n;
    let n_cell = cells_per_eps(n, k)?;
    let mut values = Vec::with_capacity(n * n);
    for mj in 0..k {
        for mi in 0..k {
            for j in 0..n_cell {
                let row = (mj * n_cell + j) * n + mi * n_cell;
                values.extend_from_slice(&field.values[row..row + n_cell]);
            }
        }
    }
    Ok(UnfoldedField { k, n_cell, values })
}

/// Inverse reshape: `u(x) = T^eps u(x, {x/eps})`.
pub fn refold(unfolded: &UnfoldedField) -> ScalarField {
    let (k, nc) = (unfolded.k, unfolded.n_cell);
    let n = k * nc;
    let mut values = vec![0.0; n * n];
    let mut src = unfolded.values.iter();
    for mj in 0..k {
        for mi in 0..k {
            for j in 0..nc {
                let row = (mj * nc + j) * n + mi * nc;
                for v in values[row..row + nc].iter_mut() {
                    *v = *src.next().expect("unfolded field has k^2 n_cell^2 values");
                }
            }
        }
    }
    ScalarField { n, values }
}

/// How solid cells are filled before unfolding a perforated-domain field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    Zero,
    /// Each solid cell takes the pore average of its eps-cell.
    CellAverage,
}

/// Extends a field given on the active cells of `mask` to the whole grid.
pub fn extend(field: &ScalarField, mask: &Mask, k: usize, ext: Extension) -> Result<ScalarField> {
    let n = field.n;
    if mask.n() != n {
        return Err(HomogError::Shape(format!("field n={n} vs mask n={}", mask.n())));
    }
    let nc = cells_per_eps(n, k)?;
    let mut out = field.clone();
    for (v, &active) in out.values.iter_mut().zip(mask.cells()) {
        if !active {
            *v = 0.0;
        }
    }
    if ext == Extension::CellAverage {
        let avg = macro_pore_average(&out, mask, k)?;
        for j in 0..n {
            for i in 0..n {
                if !mask.cell(i, j) {
                    out.values[j * n + i] = avg[(j / nc) * k + i / nc];
                }
            }
        }
    }
    Ok(out)
}

/// Mean over the active cells of each eps-cell (0 where none are active).
pub fn macro_pore_average(field: &ScalarField, mask: &Mask, k: usize) -> Result<Vec<f64>> {
    let n = field.n;
    let nc = cells_per_eps(n, k)?;
    let mut sum = vec![0.0; k * k];
    let mut count = vec![0usize; k * k];
    for j in 0..n {
        for i in 0..n {
            if mask.cell(i, j) {
                let m = (j / nc) * k + i / nc;
                sum[m] += field.values[j * n + i];
                count[m] += 1;
            }
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralCheck {
    /// `sum u h^2` over `Omega`.
    pub lhs: f64,
    /// `(1/|Y|) sum T^eps u * eps^2 h_y^2`.
    pub rhs: f64,
    pub discrepancy: f64,
    /// `rhs` multiplied by `eps |Y|`, the alternative scaling some
    /// statements of the identity carry; reported for comparison only.
    pub rhs_scaled_by_eps: f64,
}

pub fn integral_identity_check(field: &ScalarField, k: usize) -> Result<IntegralCheck> {
    let t = unfold(field, k)?;
    let lhs = field.integral();
    let rhs = t.integral();
    Ok(IntegralCheck {
        lhs,
        rhs,
        discrepancy: (lhs - rhs).abs(),
        rhs_scaled_by_eps: t.eps() * rhs,
    })
}

/// Discrete `L2(Omega x Y)` distance between two unfolded fields.
pub fn two_scale_error(unfolded: &UnfoldedField, limit: &UnfoldedField) -> Result<f64> {
    unfolded.check_same_shape(limit)?;
    let ss: f64 = unfolded
        .values
        .iter()
        .zip(&limit.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss * unfolded.weight()).sqrt())
}

/// `∫_Omega u(x) phi(x, {x/eps}) dx` with cell-centre quadrature.
pub fn pairing(field: &ScalarField, k: usize, phi: impl Fn([f64; 2], [f64; 2]) -> f64) -> Result<f64> {
    let n = field.n;
    cells_per_eps(n, k)?;
    let h = 1.0 / n as f64;
    let eps = 1.0 / k as f64;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            let y = [
                ((i % (n / k)) as f64 + 0.5) * h / eps,
                ((j % (n / k)) as f64 + 0.5) * h / eps,
            ];
            acc += field.values[j * n + i] * phi(x, y);
        }
    }
    Ok(acc * h * h)
}

/// One eps level of a two-scale comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleRow {
    pub eps: f64,
    pub distance: f64,
    pub pairing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleReport {
    /// Sorted by decreasing eps.
    pub rows: Vec<TwoScaleRow>,
    pub strictly_decreasing: bool,
}

impl TwoScaleReport {
    pub fn new(mut rows: Vec<TwoScaleRow>) -> Self {
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let strictly_decreasing = strictly_decreasing(rows.iter().map(|r| r.distance));
        TwoScaleReport {
            rows,
            strictly_decreasing,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,distance,pairing\n");
        for r in &self.rows {
            s.push_str(&format!("{:e},{:e},{:e}\n", r.eps, r.distance, r.pairing));
        }
        s
    }
}

pub fn strictly_decreasing(values: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.into_iter().collect();
    v.windows(2).all(|w| w[1] < w[0])
}

/// Known-limit experiment: `u^eps(x) = sin(2 pi x1) cos(2 pi x2 / eps)`
/// against its two-scale limit `sin(2 pi x1) cos(2 pi y2)`, one row per
/// `k`. The pairing uses the limit itself as test function (exact value
/// 1/4).
pub fn manufactured_two_scale(levels: &[usize], n_cell: usize) -> Result<TwoScaleReport> {
    use std::f64::consts::PI;
    let profile = |x: [f64; 2], y: [f64; 2]| (2.0 * PI * x[0]).sin() * (2.0 * PI * y[1]).cos();
    let mut rows = Vec::with_capacity(levels.len());
    for &k in levels {
        let n = k * n_cell;
        let u = ScalarField::from_fn(&Mask::full(n), |x1, x2| {
            (2.0 * PI * x1).sin() * (2.0 * PI * x2 * k as f64).cos()
        });
        let limit = UnfoldedField::from_fn(k, n_cell, profile);
        rows.push(TwoScaleRow {
            eps: 1.0 / k as f64,
            distance: two_scale_error(&unfold(&u, k)?, &limit)?,
            pairing: pairing(&u, k, profile)?,
        });
    }
    Ok(TwoScaleReport::new(rows))
}
