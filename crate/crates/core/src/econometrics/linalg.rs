//! Householder QR with column pivoting (largest remaining column norm first).

use nalgebra::{DMatrix, DVector};

/// Relative tolerance on |R_jj| / |R_00| below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Householder vectors (v[0] = 1 implied) with their scale factors.
    reflectors: Vec<(DVector<f64>, f64)>,
    /// Upper-triangular factor in pivoted column order.
    r: DMatrix<f64>,
    /// `perm[j]` is the original column sitting at pivoted position `j`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (n, k) = a.shape();
        let steps = n.min(k);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut reflectors = Vec::with_capacity(steps);
        for j in 0..steps {
            let pivot = (j..k)
                .map(|c| (c, a.view((j, c), (n - j, 1)).norm_squared()))
                .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            if pivot != j {
                a.swap_columns(j, pivot);
                perm.swap(j, pivot);
            }
            let x = a.view((j, j), (n - j, 1)).clone_owned();
            let norm = x.norm();
            if norm == 0.0 {
                reflectors.push((DVector::zeros(n - j), 0.0));
                continue;
            }
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = DVector::from_iterator(n - j, x.iter().copied());
            v[0] -= alpha;
            let vtv = v.norm_squared();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
            // apply H = I - beta v v^T to the trailing block
            for c in j..k {
                let mut col = a.view((j, c), (n - j, 1)).column(0).clone_owned();
                let s = beta * v.dot(&col);
                col.axpy(-s, &v, 1.0);
                a.view_mut((j, c), (n - j, 1)).copy_from(&col);
            }
            reflectors.push((v, beta));
        }
        let mut r = DMatrix::zeros(k, k);
        for i in 0..steps {
            for c in i..k {
                r[(i, c)] = a[(i, c)];
            }
        }
        let scale = if steps > 0 { r[(0, 0)].abs() } else { 0.0 };
        let rank = (0..steps).take_while(|&i| scale > 0.0 && r[(i, i)].abs() > RANK_TOL * scale).count();
        Self { reflectors, r, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// Original indices of the columns found dependent on the others.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// `Q^T y`.
    pub fn qt_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut z = y.clone();
        let n = z.len();
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let mut tail = z.rows_mut(j, n - j);
            let s = beta * v.dot(&tail);
            tail.axpy(-s, v, 1.0);
        }
        z
    }

    fn r_inverse(&self) -> DMatrix<f64> {
        let k = self.ncols();
        let mut inv = DMatrix::zeros(k, k);
        for col in 0..k {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for m in i + 1..=col {
                    s -= self.r[(i, m)] * inv[(m, col)];
                }
                inv[(i, col)] = s / self.r[(i, i)];
            }
        }
        inv
    }

    /// Least-squares solution; only meaningful at full column rank.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = self.ncols();
        let z = self.qt_mul(y);
        let mut b = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = z[i];
            for m in i + 1..k {
                s -= self.r[(i, m)] * b[m];
            }
            b[i] = s / self.r[(i, i)];
        }
        let mut out = DVector::zeros(k);
        for (pos, &orig) in self.perm.iter().enumerate() {
            out[orig] = b[pos];
        }
        out
    }

    /// `(X^T X)^{-1}` in original column order.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.ncols();
        let ri = self.r_inverse();
        let piv = &ri * ri.transpose();
        let mut out = DMatrix::zeros(k, k);
        for (a, &oa) in self.perm.iter().enumerate() {
            for (b, &ob) in self.perm.iter().enumerate() {
                out[(oa, ob)] = piv[(a, b)];
            }
        }
        out
    }
}
