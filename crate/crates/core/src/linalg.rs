//! Householder QR with column pivoting by remaining column norm.

use nalgebra::{DMatrix, DVector};

/// Relative cut-off on `|R_jj| / |R_00|` below which columns count as
/// linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Householder vectors; `reflectors[j]` acts on rows `j..`.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// Upper-trapezoidal factor, `rank × cols`, in pivoted column order.
    r: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let steps = rows.min(cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::with_capacity(steps);
        let mut lead = 0.0;
        let mut rank = 0;
        for j in 0..steps {
            let norms: Vec<f64> = (j..cols).map(|c| a.view((j, c), (rows - j, 1)).norm_squared()).collect();
            let (best, &best_norm) = norms
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .unwrap();
            if best != 0 {
                a.swap_columns(j, j + best);
                perm.swap(j, j + best);
            }
            let norm = best_norm.sqrt();
            if j == 0 {
                lead = norm;
            }
            if norm == 0.0 || norm <= RANK_TOL * lead {
                break;
            }
            let x0 = a[(j, j)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (j..rows).map(|r| a[(r, j)]).collect();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let beta = if vv == 0.0 { 0.0 } else { 2.0 / vv };
            for c in j..cols {
                let dot: f64 = v.iter().zip(j..rows).map(|(vi, r)| vi * a[(r, c)]).sum();
                let s = beta * dot;
                for (vi, r) in v.iter().zip(j..rows) {
                    a[(r, c)] -= s * vi;
                }
            }
            reflectors.push((v, beta));
            rank += 1;
        }
        let r = DMatrix::from_fn(rank, cols, |i, c| if c >= i { a[(i, c)] } else { 0.0 });
        Self {
            rows,
            cols,
            reflectors,
            r,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn apply_qt(&self, b: &mut [f64]) {
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let dot: f64 = v.iter().zip(&b[j..]).map(|(x, y)| x * y).sum();
            let s = beta * dot;
            for (bi, vi) in b[j..].iter_mut().zip(v) {
                *bi -= s * vi;
            }
        }
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.rows);
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let c = DVector::from_column_slice(&qtb[..self.rank]);
        let y = if self.rank == 0 {
            DVector::zeros(self.cols)
        } else if self.rank == self.cols {
            back_substitute(&self.r, &c)
        } else {
            // Underdetermined [R11 R12] y = c: y = Q̂ R̂^{-T} c with Rᵀ = Q̂ R̂.
            let qr = self.r.transpose().qr();
            let rhat = qr.r();
            let w = forward_substitute_transposed(&rhat, &c);
            qr.q() * w
        };
        let mut x = vec![0.0; self.cols];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

fn back_substitute(r: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut acc = c[i];
        for k in i + 1..n {
            acc -= r[(i, k)] * x[k];
        }
        x[i] = acc / r[(i, i)];
    }
    x
}

/// Solves `Rᵀ w = c` for upper-triangular square `R`.
fn forward_substitute_transposed(r: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let mut acc = c[i];
        for k in 0..i {
            acc -= r[(k, i)] * w[k];
        }
        w[i] = acc / r[(i, i)];
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_system_is_solved() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let x = [1.0, -2.0, 0.5];
        let b = &a * DVector::from_column_slice(&x);
        let got = PivotedQr::new(a).solve(b.as_slice());
        for (g, w) in got.iter().zip(x) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_gives_minimum_norm() {
        // Second column duplicates the first: pseudo-inverse splits evenly.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = [1.0, 2.0, 2.0];
        let qr = PivotedQr::new(a);
        assert_eq!(qr.rank(), 1);
        let x = qr.solve(&b);
        let want = (1.0 + 4.0 + 6.0) / (2.0 * 14.0);
        assert!((x[0] - want).abs() < 1e-14 && (x[1] - want).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let qr = PivotedQr::new(DMatrix::zeros(4, 2));
        assert_eq!(qr.rank(), 0);
        assert_eq!(qr.solve(&[1.0; 4]), vec![0.0, 0.0]);
    }
}
