//! Dense complex matrices used as exact oracles.
//!
//! Everything here is deliberately simple: row-major storage, O(n^3)
//! products and a cyclic Jacobi eigensolver for Hermitian matrices.  The
//! dense path is guarded to small site counts, so robustness beats speed.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest site count admitted by the dense oracles (2^14 x 2^14 matrices).
pub const DENSE_GUARD: usize = 14;

/// A labeled 2^N x 2^N complex matrix, row-major.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    dim: usize,
    label: String,
    data: Vec<Complex64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize, label: impl Into<String>) -> Self {
        Self {
            dim,
            label: label.into(),
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, "I");
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(label: impl Into<String>, rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim, label);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "ragged matrix");
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    #[inline]
    pub fn add_assign_at(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] += value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n, format!("{}*{}", self.label, other.label));
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = &self.data[i * n..(i + 1) * n];
            for (a, x) in row.iter().zip(v) {
                acc += a * x;
            }
            out[i] = acc;
        }
        out
    }

    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n, format!("{}^dag", self.label));
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Max |a_ij - conj(a_ji)| over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.data[i * n + j] - self.data[j * n + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Quadratic form <v|A|v>.
    pub fn quadratic_form(&self, v: &[Complex64]) -> Complex64 {
        let av = self.matvec(v);
        v.iter().zip(&av).map(|(x, y)| x.conj() * y).sum()
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the unitary of eigenvectors
    /// (stored column-wise: column k belongs to eigenvalue k).
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, DenseOperator)> {
        if !self.is_hermitian(1e-10) {
            return Err(Error::InvalidObservable(format!(
                "matrix '{}' is not Hermitian (defect {:.3e})",
                self.label,
                self.hermiticity_defect()
            )));
        }
        let n = self.dim;
        let mut a = self.data.clone();
        let mut v = DenseOperator::identity(n).data;

        // Force exact Hermiticity so rotations stay well conditioned.
        for i in 0..n {
            a[i * n + i] = Complex64::new(a[i * n + i].re, 0.0);
            for j in (i + 1)..n {
                let avg = 0.5 * (a[i * n + j] + a[j * n + i].conj());
                a[i * n + j] = avg;
                a[j * n + i] = avg.conj();
            }
        }

        let frob: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let stop = (1e-14 * frob.max(1e-300)).powi(2);

        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q].norm_sqr();
                }
            }
            if off <= stop {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    let b = apq.norm();
                    if b == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p].re;
                    let aqq = a[q * n + q].re;
                    let phase = apq / b;
                    let tau = (app - aqq) / (2.0 * b);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let spe = s * phase; // s * e^{i phi}
                    let spe_c = spe.conj();

                    // A <- U^dag A U with U mixing columns p and q.
                    for i in 0..n {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip + spe_c * aiq;
                        a[i * n + q] = -spe * aip + c * aiq;
                    }
                    for j in 0..n {
                        let apj = a[p * n + j];
                        let aqj = a[q * n + j];
                        a[p * n + j] = c * apj + spe * aqj;
                        a[q * n + j] = -spe_c * apj + c * aqj;
                    }
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip + spe_c * viq;
                        v[i * n + q] = -spe * vip + c * viq;
                    }
                }
            }
        }

        let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a[i * n + i].re, i)).collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

        let values: Vec<f64> = pairs.iter().map(|(val, _)| *val).collect();
        let mut vectors = DenseOperator::zeros(n, format!("eigvecs({})", self.label));
        for (new_col, (_, old_col)) in pairs.iter().enumerate() {
            for i in 0..n {
                vectors.data[i * n + new_col] = v[i * n + old_col];
            }
        }
        Ok((values, vectors))
    }

    /// Largest |eigenvalue| of a Hermitian matrix.
    pub fn operator_norm_hermitian(&self) -> Result<f64> {
        let (vals, _) = self.hermitian_eigen()?;
        Ok(vals.iter().fold(0.0f64, |m, &x| m.max(x.abs())))
    }

    /// f(A) for Hermitian A through the eigendecomposition.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64, label: &str) -> Result<Self> {
        let n = self.dim;
        let (vals, vecs) = self.hermitian_eigen()?;
        let mut out = Self::zeros(n, label);
        for k in 0..n {
            let w = f(vals[k]);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = vecs.get(i, k);
                if vik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += w * vik * vecs.get(j, k).conj();
                }
            }
        }
        Ok(out)
    }
}

/// Kronecker product, with `a` on the high-order index bits.
pub fn kron(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = DenseOperator::zeros(n, format!("{}(x){}", a.label, b.label));
    for ia in 0..na {
        for ja in 0..na {
            let f = a.get(ia, ja);
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for ib in 0..nb {
                for jb in 0..nb {
                    out.set(ia * nb + ib, ja * nb + jb, f * b.get(ib, jb));
                }
            }
        }
    }
    out
}
