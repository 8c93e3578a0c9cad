//! Dense discrete fractional Laplacian on a truncated box.
//!
//! Functions are expanded in nodal hat functions on the whole line with zero
//! coefficients outside the box. The hypersingular integral is integrated
//! exactly against the hat expansion away from the diagonal cell; the
//! diagonal cell uses the second-difference regularization that is exact for
//! locally quadratic data. The far-field tail is summed in closed form, which
//! makes every row strictly diagonally dominant.

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Normalization making the Fourier symbol exactly `|xi|^{2s}` in 1D.
pub fn c1s(s: f64) -> f64 {
    4f64.powf(s) * s * libm::tgamma(s + 0.5) / (std::f64::consts::PI.sqrt() * libm::tgamma(1.0 - s))
}

fn antiderivative(s: f64, y: f64) -> f64 {
    if (s - 0.5).abs() < 1e-14 {
        -y.ln()
    } else {
        -y.powf(1.0 - 2.0 * s) / (2.0 * s * (1.0 - 2.0 * s))
    }
}

const SERIES_FROM: usize = 32;

/// Dimensionless interaction weight between nodes `k` cells apart.
///
/// For `k >= 2` this is the central second difference of the double
/// antiderivative of `|y|^{-1-2s}`; large `k` use the Euler-Maclaurin
/// expansion of that difference to avoid cancellation.
pub fn offdiag_weight(s: f64, k: usize) -> f64 {
    assert!(k >= 1);
    let f = |y: f64| antiderivative(s, y);
    if k == 1 {
        let alpha = 1.0 / (2.0 - 2.0 * s);
        let dfdy1 = -1.0 / (2.0 * s);
        return alpha + f(2.0) - f(1.0) - dfdy1;
    }
    if k < SERIES_FROM {
        let y = k as f64;
        return f(y + 1.0) - 2.0 * f(y) + f(y - 1.0);
    }
    let a = 1.0 + 2.0 * s;
    let y = k as f64;
    let d2 = y.powf(-a);
    let d4 = a * (a + 1.0) * y.powf(-a - 2.0);
    let d6 = a * (a + 1.0) * (a + 2.0) * (a + 3.0) * y.powf(-a - 4.0);
    let d8 = a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) * (a + 5.0) * y.powf(-a - 6.0);
    d2 + d4 / 12.0 + d6 / 360.0 + d8 / 20160.0
}

/// Dimensionless diagonal weight: twice the sum of all off-diagonal weights
/// over the infinite line.
pub fn diag_weight(s: f64) -> f64 {
    2.0 * (1.0 / (2.0 - 2.0 * s) + 1.0 / (2.0 * s))
}

/// Terms summed explicitly by [`stencil_symbol`] before the integral tail.
const SYMBOL_TERMS: usize = 200_000;

/// Fourier symbol of the infinite-grid stencil at wavenumber `xi`, the
/// discrete counterpart of `|xi|^{2s}`.
///
/// Uses `2 sum_k b_k (1 - cos(k xi h))`, valid because the diagonal weight
/// equals `2 sum_k b_k`. Beyond the explicit terms the weights follow
/// `|y|^{-1-2s}` and the oscillating part is negligible, so the tail is the
/// midpoint integral of that power.
pub fn stencil_symbol(s: f64, h: f64, xi: f64) -> f64 {
    let theta = xi * h;
    let mut acc = 0.0;
    for k in (1..=SYMBOL_TERMS).rev() {
        acc += offdiag_weight(s, k) * (1.0 - (k as f64 * theta).cos());
    }
    acc += (SYMBOL_TERMS as f64 + 0.5).powf(-2.0 * s) / (2.0 * s);
    2.0 * c1s(s) * h.powf(-2.0 * s) * acc
}

#[derive(Debug)]
pub struct FracLapOperator {
    pub s: f64,
    pub matrix: DMatrix<f64>,
    pub grid: Arc<Grid>,
    omega_chol: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl Clone for FracLapOperator {
    fn clone(&self) -> Self {
        Self {
            s: self.s,
            matrix: self.matrix.clone(),
            grid: Arc::clone(&self.grid),
            omega_chol: OnceLock::new(),
        }
    }
}

pub fn assemble_fraclap(grid: Arc<Grid>, s: f64) -> Result<FracLapOperator> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::UnsupportedOrder(s));
    }
    let n = grid.n_nodes;
    let scale = c1s(s) * grid.h.powf(-2.0 * s);
    let weights: Vec<f64> = std::iter::once(diag_weight(s))
        .chain((1..n).map(|k| -offdiag_weight(s, k)))
        .map(|w| scale * w)
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| weights[i.abs_diff(j)]);
    Ok(FracLapOperator {
        s,
        matrix,
        grid,
        omega_chol: OnceLock::new(),
    })
}

impl FracLapOperator {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (&self.matrix * v).as_slice().to_vec()
    }

    /// Block of `L` restricted to `rows x cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            self.matrix[(rows[a], cols[b])]
        })
    }

    pub fn omega_block(&self) -> DMatrix<f64> {
        self.block(&self.grid.omega, &self.grid.omega)
    }

    /// `h v^T L w`.
    pub fn form(&self, v: &[f64], w: &[f64]) -> f64 {
        let n = self.n_nodes();
        let mut acc = 0.0;
        for i in 0..n {
            if v[i] == 0.0 {
                continue;
            }
            let row = self.matrix.row(i);
            let mut r = 0.0;
            for j in 0..n {
                r += row[j] * w[j];
            }
            acc += v[i] * r;
        }
        self.h() * acc
    }

    fn omega_cholesky(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.omega_chol
            .get_or_init(|| Cholesky::new(self.omega_block()))
            .as_ref()
    }

    /// Eigenvalues of the omega block in increasing order.
    pub fn omega_spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.omega_block())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Smallest `c` with `h v^T v <= c h v^T L v` for omega-supported `v`.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.omega_spectrum()[0]
    }

    /// Writes one matrix row per line with round-trip precision.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n_nodes() {
            let row: Vec<String> = (0..self.n_nodes())
                .map(|j| format!("{:e}", self.matrix[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Parses a matrix written by [`FracLapOperator::write_text`].
pub fn read_text_matrix<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Domain(format!("bad matrix entry {t:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("matrix dump is not square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn norm_l2(grid: &Grid, v: &[f64]) -> f64 {
    (grid.h * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

pub fn seminorm_hs(op: &FracLapOperator, v: &[f64]) -> f64 {
    op.form(v, v).max(0.0).sqrt()
}

/// Dual norm of an omega-supported functional, `sqrt(h g^T L_OO^{-1} g)`.
pub fn dualnorm_hminus(op: &FracLapOperator, g: &[f64]) -> Result<f64> {
    let grid = &op.grid;
    if let Some(i) = (0..grid.n_nodes).find(|&i| g[i] != 0.0 && !grid.is_omega(i)) {
        return Err(Error::Domain(format!(
            "functional is not supported in omega (node {i} = {:e})",
            g[i]
        )));
    }
    let chol = op
        .omega_cholesky()
        .ok_or_else(|| Error::Domain("omega block is not positive definite".into()))?;
    let go = DVector::from_iterator(grid.omega.len(), grid.omega.iter().map(|&i| g[i]));
    let y = chol.solve(&go);
    Ok((grid.h * go.dot(&y)).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Interval};

    fn grid61() -> Arc<Grid> {
        Arc::new(
            build_grid(
                -1.0,
                2.0,
                61,
                0.0,
                1.0,
                Interval::new(-0.8, -0.2),
                Interval::new(1.2, 1.8),
            )
            .unwrap(),
        )
    }

    #[test]
    fn normalization_constant() {
        // s = 1/2 gives 1/pi; independent closed form 2^{2s} s Gamma(s+1/2) / (sqrt(pi) Gamma(1-s))
        assert!((c1s(0.5) - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        // s = 1/4: Gamma(3/4)/Gamma(3/4) cancels to sqrt(2)/4 / sqrt(pi)
        let expect = 2f64.sqrt() * 0.25 / std::f64::consts::PI.sqrt();
        assert!((c1s(0.25) - expect).abs() < 1e-14);
    }

    #[test]
    fn weights_match_adaptive_quadrature() {
        // b_k = integral over hat(0) x hat(k) convolution of |y|^{-1-2s}:
        // int_{-1}^{1} (1 - |t|) |k + t|^{-1-2s} dt by composite Simpson.
        for &s in &[0.2, 0.5, 0.8] {
            for k in [2usize, 3, 7, 40, 100] {
                let m = 20_000;
                let hq = 2.0 / m as f64;
                let g = |t: f64| (1.0 - t.abs()) * (k as f64 + t).powf(-1.0 - 2.0 * s);
                let mut acc = g(-1.0) + g(1.0);
                for i in 1..m {
                    let t = -1.0 + i as f64 * hq;
                    acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(t);
                }
                let quad = acc * hq / 3.0;
                let b = offdiag_weight(s, k);
                assert!(
                    (b - quad).abs() / quad < 1e-9,
                    "s={s} k={k} b={b} quad={quad}"
                );
            }
        }
    }

    #[test]
    fn series_and_direct_agree_near_switch() {
        for &s in &[0.1, 0.3, 0.5, 0.7, 0.95] {
            let y = SERIES_FROM as f64;
            let f = |x: f64| antiderivative(s, x);
            let direct = f(y + 1.0) - 2.0 * f(y) + f(y - 1.0);
            let series = offdiag_weight(s, SERIES_FROM);
            assert!((direct - series).abs() / series < 1e-11);
        }
    }

    #[test]
    fn exact_symmetry_and_sign() {
        for &s in &[0.1, 0.3, 0.5, 0.8, 0.95] {
            let op = assemble_fraclap(grid61(), s).unwrap();
            let l = &op.matrix;
            for i in 0..61 {
                for j in 0..61 {
                    assert_eq!(l[(i, j)], l[(j, i)]);
                    if i != j {
                        assert!(l[(i, j)] < 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn rows_strictly_dominant() {
        let op = assemble_fraclap(grid61(), 0.4).unwrap();
        for i in 0..61 {
            let off: f64 = (0..61)
                .filter(|&j| j != i)
                .map(|j| op.matrix[(i, j)].abs())
                .sum();
            assert!(op.matrix[(i, i)] > off);
        }
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(
            assemble_fraclap(grid61(), 1.2),
            Err(Error::UnsupportedOrder(_))
        ));
        assert!(assemble_fraclap(grid61(), 0.0).is_err());
    }

    #[test]
    fn zero_field_norms() {
        let op = assemble_fraclap(grid61(), 0.5).unwrap();
        let z = vec![0.0; 61];
        assert_eq!(norm_l2(&op.grid, &z), 0.0);
        assert_eq!(seminorm_hs(&op, &z), 0.0);
        assert_eq!(dualnorm_hminus(&op, &z).unwrap(), 0.0);
    }

    #[test]
    fn dual_norm_rejects_exterior_support() {
        let op = assemble_fraclap(grid61(), 0.5).unwrap();
        let mut g = vec![0.0; 61];
        g[2] = 1.0;
        assert!(matches!(dualnorm_hminus(&op, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn dual_norm_is_sup_of_pairing() {
        // sup_v h g.v / |v|_Hs is attained at v = L_OO^{-1} g
        let op = assemble_fraclap(grid61(), 0.6).unwrap();
        let g: Vec<f64> = (0..61)
            .map(|i| {
                if op.grid.is_omega(i) {
                    (i as f64 * 0.37).sin()
                } else {
                    0.0
                }
            })
            .collect();
        let dual = dualnorm_hminus(&op, &g).unwrap();
        let lo = op.omega_block();
        let go = DVector::from_iterator(19, op.grid.omega.iter().map(|&i| g[i]));
        let vo = lo.lu().solve(&go).unwrap();
        let mut v = vec![0.0; 61];
        for (k, &i) in op.grid.omega.iter().enumerate() {
            v[i] = vo[k];
        }
        let pairing: f64 = op.h() * g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        assert!((pairing / seminorm_hs(&op, &v) - dual).abs() < 1e-10 * dual);
    }

    #[test]
    fn text_dump_round_trip() {
        let op = assemble_fraclap(grid61(), 0.3).unwrap();
        let mut buf = Vec::new();
        op.write_text(&mut buf).unwrap();
        let m = read_text_matrix(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(m, op.matrix);
    }

    #[test]
    fn stencil_symbol_tracks_power_law() {
        for s in [0.3, 0.5, 0.8] {
            for ppw in [10.0, 20.0, 40.0, 80.0] {
                let h = 0.05;
                let xi = 2.0 * std::f64::consts::PI / (ppw * h);
                let rel = stencil_symbol(s, h, xi) / xi.powf(2.0 * s) - 1.0;
                eprintln!("s {s} points/wavelength {ppw} rel {rel:e}");
                assert!(rel.abs() < 0.05);
            }
        }
    }
}
