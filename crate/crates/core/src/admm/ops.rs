//! The elementary operators of one block-splitting iteration.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// prox of cᵀx + I₊(x): componentwise max(0, v − c/ρ).
pub fn prox_cost_nonneg(v: &[f64], c: &[f64], rho: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    prox_cost_nonneg_into(v, c, rho, &mut out);
    out
}

pub(crate) fn prox_cost_nonneg_into(v: &[f64], c: &[f64], rho: f64, out: &mut [f64]) {
    debug_assert_eq!(v.len(), c.len());
    for ((o, &vi), &ci) in out.iter_mut().zip(v).zip(c) {
        *o = (vi - ci / rho).max(0.0);
    }
}

/// Projection onto {(u, {u_j}) : u = Σ_j u_j} of the point (c, {c_j}).
pub fn exchange(c: &[f64], parts: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if parts.is_empty() {
        return Err(Error::Dimension("exchange needs at least one part".into()));
    }
    if parts.iter().any(|p| p.len() != c.len()) {
        return Err(Error::Dimension("exchange parts differ in length".into()));
    }
    let lambda = exchange_multiplier(c, parts.iter().map(|p| p.as_slice()));
    let y = c.iter().zip(&lambda).map(|(a, l)| a + l).collect();
    let ys = parts.iter().map(|p| p.iter().zip(&lambda).map(|(a, l)| a - l).collect()).collect();
    Ok((y, ys))
}

/// λ = (Σ_j c_j − c) / (M + 1), summed in iteration order.
pub(crate) fn exchange_multiplier<'a>(c: &[f64], parts: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut m = 0usize;
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        m += 1;
    }
    let denom = (m + 1) as f64;
    for a in &mut acc {
        *a /= denom;
    }
    acc
}

/// Elementwise mean of `x_half` and the copies.
pub fn average(x_half: &[f64], copies: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = x_half.to_vec();
    for c in copies {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let denom = (copies.len() + 1) as f64;
    acc.iter_mut().for_each(|a| *a /= denom);
    acc
}

/// Cached Euclidean projection onto the graph {(x, y) : y = A x}.
///
/// Only rows and columns of A with a nonzero take part in the factorization;
/// on zero rows the projection gives y′ = 0 and on zero columns x′ = x.
/// Whichever of I + ÂÂᵀ and I + ÂᵀÂ is smaller is factored once.
#[derive(Clone, Debug)]
pub struct GraphProjector {
    rows: usize,
    cols: usize,
    active_rows: Vec<usize>,
    active_cols: Vec<usize>,
    sub: CsrMatrix,
    chol: Option<Cholesky<f64, Dyn>>,
    wide: bool,
}

impl GraphProjector {
    pub fn new(a: &CsrMatrix) -> Self {
        let (active_rows, active_cols) = a.active_rows_cols();
        let mut col_pos = vec![usize::MAX; a.ncols()];
        for (k, &c) in active_cols.iter().enumerate() {
            col_pos[c] = k;
        }
        let mut trip = Vec::with_capacity(a.nnz());
        for (k, &r) in active_rows.iter().enumerate() {
            for (c, v) in a.row(r) {
                trip.push((k, col_pos[c], v));
            }
        }
        let (nr, nc) = (active_rows.len(), active_cols.len());
        let sub = CsrMatrix::from_triplets(nr, nc, trip);
        let wide = nr <= nc;
        let chol = if nr == 0 {
            None
        } else {
            let dim = if wide { nr } else { nc };
            let mut g = DMatrix::<f64>::identity(dim, dim);
            if wide {
                // I + ÂÂᵀ, accumulated column by column
                let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
                for (r, c, v) in sub.triplets() {
                    by_col[c].push((r, v));
                }
                for entries in &by_col {
                    for &(r1, v1) in entries {
                        for &(r2, v2) in entries {
                            g[(r1, r2)] += v1 * v2;
                        }
                    }
                }
            } else {
                for r in 0..nr {
                    let entries: Vec<(usize, f64)> = sub.row(r).collect();
                    for &(c1, v1) in &entries {
                        for &(c2, v2) in &entries {
                            g[(c1, c2)] += v1 * v2;
                        }
                    }
                }
            }
            Some(Cholesky::new(g).expect("identity plus a Gram matrix is positive definite"))
        };
        GraphProjector { rows: a.nrows(), cols: a.ncols(), active_rows, active_cols, sub, chol, wide }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn project(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.cols || y.len() != self.rows {
            return Err(Error::Dimension(format!(
                "projection input is ({}, {}), block is {}x{}",
                x.len(),
                y.len(),
                self.rows,
                self.cols
            )));
        }
        let mut xo = vec![0.0; self.cols];
        let mut yo = vec![0.0; self.rows];
        self.project_into(x, y, &mut xo, &mut yo);
        Ok((xo, yo))
    }

    pub(crate) fn project_into(&self, x: &[f64], y: &[f64], x_out: &mut [f64], y_out: &mut [f64]) {
        x_out.copy_from_slice(x);
        y_out.iter_mut().for_each(|v| *v = 0.0);
        let Some(chol) = &self.chol else { return };
        let xs: Vec<f64> = self.active_cols.iter().map(|&c| x[c]).collect();
        let ys: Vec<f64> = self.active_rows.iter().map(|&r| y[r]).collect();
        let xp = if self.wide {
            // x′ = x + Âᵀ(I + ÂÂᵀ)⁻¹(y − Âx)
            let ax = self.sub.mul_vec(&xs);
            let rhs = DVector::from_iterator(ys.len(), ys.iter().zip(&ax).map(|(a, b)| a - b));
            let w = chol.solve(&rhs);
            let mut xp = xs;
            self.sub.mul_t_vec_add(w.as_slice(), &mut xp);
            xp
        } else {
            // x′ = (I + ÂᵀÂ)⁻¹(x + Âᵀy)
            let mut rhs = xs;
            self.sub.mul_t_vec_add(&ys, &mut rhs);
            chol.solve(&DVector::from_vec(rhs)).data.into()
        };
        let yp = self.sub.mul_vec(&xp);
        for (k, &c) in self.active_cols.iter().enumerate() {
            x_out[c] = xp[k];
        }
        for (k, &r) in self.active_rows.iter().enumerate() {
            y_out[r] = yp[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prox_examples() {
        assert_eq!(prox_cost_nonneg(&[0.0, 0.0], &[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(prox_cost_nonneg(&[2.0, 0.5], &[1.0, 1.0], 1.0), vec![1.0, 0.0]);
    }

    #[test]
    fn prox_minimizes_each_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (v, c, rho): (f64, f64, f64) =
                (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.1..10.0));
            let p = prox_cost_nonneg(&[v], &[c], rho)[0];
            let obj = |x: f64| c * x + rho / 2.0 * (x - v).powi(2);
            assert!(p >= 0.0);
            for k in 0..=400 {
                let t = k as f64 * 0.025;
                assert!(obj(p) <= obj(t) + 1e-12);
            }
        }
    }

    #[test]
    fn scalar_and_zero_projection() {
        let p = GraphProjector::new(&CsrMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]));
        let (x, y) = p.project(&[0.0], &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (y[0] - 1.0).abs() < 1e-15);
        let z = GraphProjector::new(&CsrMatrix::zeros(2, 3));
        let (x, y) = z.project(&[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        assert_eq!(y, vec![0.0, 0.0]);
        assert!(z.project(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn wide_and_tall_agree_with_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (r, c) in [(5, 7), (7, 5), (3, 3), (1, 6), (6, 1)] {
            let mut trip = Vec::new();
            for i in 0..r {
                for j in 0..c {
                    if rng.gen_bool(0.5) {
                        trip.push((i, j, rng.gen_range(-2.0..2.0)));
                    }
                }
            }
            let a = CsrMatrix::from_triplets(r, c, trip);
            let p = GraphProjector::new(&a);
            let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..r).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (xp, yp) = p.project(&x, &y).unwrap();
            let ad = a.to_dense();
            let lhs = DMatrix::identity(c, c) + ad.transpose() * &ad;
            let rhs = DVector::from_column_slice(&x) + ad.transpose() * DVector::from_column_slice(&y);
            let want = lhs.lu().solve(&rhs).unwrap();
            for k in 0..c {
                assert!((xp[k] - want[k]).abs() < 1e-10);
            }
            let ax = a.mul_vec(&xp);
            for k in 0..r {
                assert!((yp[k] - ax[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exchange_examples() {
        let (y, ys) = exchange(&[0.0], &[vec![2.0]]).unwrap();
        assert_eq!(y, vec![1.0]);
        assert_eq!(ys, vec![vec![1.0]]);
        let (y, ys) = exchange(&[3.0], &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(y, vec![3.0]);
        assert_eq!(ys, vec![vec![1.0], vec![2.0]]);
        assert!(exchange(&[1.0], &[]).is_err());
    }

    #[test]
    fn average_examples() {
        assert_eq!(average(&[1.0, 2.0], &[]), vec![1.0, 2.0]);
        assert_eq!(average(&[1.0, 2.0], &[vec![1.0, 2.0], vec![1.0, 2.0]]), vec![1.0, 2.0]);
        assert_eq!(average(&[0.0], &[vec![3.0]]), vec![1.5]);
    }
}
