use crate::error::{Error, Result};

use super::linalg::dot;

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix. Every write goes to both `(i, j)` and `(j, i)`,
/// so the stored entries are always exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        Self { order, data: vec![0.0; order * order] }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from the upper triangle of `f`; `f(i, j)` is only called for `i <= j`.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in i..order {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] = v;
        self.data[j * self.order + i] = v;
    }

    /// `self += weight * v v^T`
    pub fn add_outer(&mut self, weight: f64, v: &[f64]) {
        assert_eq!(v.len(), self.order);
        let d = self.order;
        for i in 0..d {
            let wi = weight * v[i];
            for (dst, &vj) in self.data[i * d + i..(i + 1) * d].iter_mut().zip(&v[i..]) {
                *dst += wi * vj;
            }
        }
        self.mirror_upper();
    }

    /// `self += other * scale`
    pub fn add_scaled(&mut self, scale: f64, other: &SymMatrix) {
        assert_eq!(self.order, other.order);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.order);
        (0..self.order).map(|i| dot(&self.data[i * self.order..(i + 1) * self.order], v)).collect()
    }

    pub fn rayleigh_quotient(&self, u: &[f64]) -> f64 {
        dot(u, &self.mul_vec(u)) / dot(u, u)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn mirror_upper(&mut self) {
        let d = self.order;
        for i in 0..d {
            for j in (i + 1)..d {
                self.data[j * d + i] = self.data[i * d + j];
            }
        }
    }

    /// Accumulates `sum_i w_i a_i a_i^T` over the rows of a row-major buffer
    /// with `order` columns. Only the upper triangle is touched in the loop.
    pub(crate) fn accumulate_rows<'a>(&mut self, rows: impl IntoIterator<Item = (f64, &'a [f64])>) {
        let d = self.order;
        for (w, row) in rows {
            debug_assert_eq!(row.len(), d);
            for i in 0..d {
                let wi = w * row[i];
                let dst = &mut self.data[i * d + i..(i + 1) * d];
                for (out, &rj) in dst.iter_mut().zip(&row[i..]) {
                    *out += wi * rj;
                }
            }
        }
        self.mirror_upper();
    }
}

/// Full eigendecomposition, eigenvalues sorted in decreasing (algebraic)
/// order. `vectors[k]` is the unit eigenvector for `values[k]`, with its
/// largest-magnitude entry made positive (lowest index wins ties).
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-12` times
/// the Frobenius norm of the input (at most 100 sweeps). Works for
/// indefinite matrices.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let d = m.order();
    if d == 0 {
        return Err(Error::Dimension("eigendecomposition of an order-0 matrix".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }

    let mut a = m.data.clone();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale = m.frobenius_norm();
    let threshold = OFF_DIAGONAL_TOL * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, d);
        if off <= threshold {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, d, p, q, c, s);
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps lower original index first among equal eigenvalues.
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let values = order.iter().map(|&k| a[k * d + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..d).map(|i| v[i * d + k]).collect();
            normalize(&mut col);
            fix_sign(&mut col);
            col
        })
        .collect();
    Ok(SymEigen { values, vectors, sweeps })
}

/// Eigenpair of the algebraically largest eigenvalue (not the one largest
/// in magnitude).
pub fn top_eigenpair(m: &SymMatrix) -> Result<(f64, Vec<f64>)> {
    let mut eig = sym_eigen(m)?;
    let vector = eig.vectors.swap_remove(0);
    Ok((eig.values[0], vector))
}

fn off_diagonal_norm(a: &[f64], d: usize) -> f64 {
    let mut sum = 0.0;
    for p in 0..d {
        for q in 0..d {
            if p != q {
                sum += a[p * d + q] * a[p * d + q];
            }
        }
    }
    sum.sqrt()
}

/// `A <- J^T A J` for the plane rotation in `(p, q)`; zeroes `A[p][q]`.
fn rotate(a: &mut [f64], d: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..d {
        let akp = a[k * d + p];
        let akq = a[k * d + q];
        a[k * d + p] = c * akp - s * akq;
        a[k * d + q] = s * akp + c * akq;
    }
    for k in 0..d {
        let apk = a[p * d + k];
        let aqk = a[q * d + k];
        a[p * d + k] = c * apk - s * aqk;
        a[q * d + k] = s * apk + c * aqk;
    }
    a[p * d + q] = 0.0;
    a[q * d + p] = 0.0;
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random_sym(d: usize, seed: u64) -> SymMatrix {
        let mut rng = RngStream::new(seed);
        SymMatrix::from_fn(d, |_, _| rng.standard_normal())
    }

    fn residual(m: &SymMatrix, lambda: f64, v: &[f64]) -> f64 {
        let mv = m.mul_vec(v);
        mv.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn identity() {
        let (l, v) = top_eigenpair(&SymMatrix::identity(3)).unwrap();
        assert_eq!(l, 1.0);
        assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
        assert!(residual(&SymMatrix::identity(3), l, &v) < 1e-14);
    }

    #[test]
    fn algebraic_not_magnitude_largest() {
        let (l, v) = top_eigenpair(&SymMatrix::from_diagonal(&[2.0, -5.0])).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(v, vec![1.0, 0.0]);
        let (l, v) = top_eigenpair(&SymMatrix::from_diagonal(&[-5.0, 2.0])).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(v, vec![0.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(top_eigenpair(&SymMatrix::zeros(0)), Err(Error::Dimension(_))));
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(top_eigenpair(&m), Err(Error::NonFinite)));
        m.set(0, 1, f64::INFINITY);
        assert!(matches!(top_eigenpair(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn zero_matrix() {
        let (l, v) = top_eigenpair(&SymMatrix::zeros(4)).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sign_convention() {
        // Eigenvector of [[0,1],[1,0]] for eigenvalue 1 is (1,1)/sqrt2: tie, index 0 positive.
        let mut m = SymMatrix::zeros(2);
        m.set(0, 1, 1.0);
        let (l, v) = top_eigenpair(&m).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        assert!(v[0] > 0.0 && v[1] > 0.0);
        for seed in 0..20 {
            let (_, v) = top_eigenpair(&random_sym(6, seed)).unwrap();
            let max = v.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            let first = v.iter().position(|x| x.abs() == max).unwrap();
            assert!(v[first] > 0.0);
        }
    }

    #[test]
    fn postconditions_on_random_indefinite() {
        for seed in 0..30 {
            let d = 1 + (seed as usize % 12);
            let m = random_sym(d, seed);
            let eig = sym_eigen(&m).unwrap();
            let f = m.frobenius_norm();
            for (l, v) in eig.values.iter().zip(&eig.vectors) {
                assert!((dot(v, v).sqrt() - 1.0).abs() <= 1e-12);
                assert!(residual(&m, *l, v) <= 1e-8 * (1.0 + f));
            }
            for w in eig.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            // Trace is preserved.
            let trace: f64 = (0..d).map(|i| m.get(i, i)).sum();
            assert!((trace - eig.values.iter().sum::<f64>()).abs() < 1e-10);
        }
    }

    #[test]
    fn rayleigh_probes_never_exceed_top() {
        let mut rng = RngStream::new(99);
        for seed in 0..10 {
            let m = random_sym(8, 1000 + seed);
            let (l, _) = top_eigenpair(&m).unwrap();
            for _ in 0..100 {
                let u = rng.sample_standard_normal(8);
                assert!(m.rayleigh_quotient(&u) <= l + 1e-8);
            }
        }
    }

    #[test]
    fn outer_product_accumulation() {
        let mut m = SymMatrix::zeros(3);
        m.add_outer(2.0, &[1.0, 2.0, 3.0]);
        assert_eq!(m.get(1, 2), 12.0);
        assert_eq!(m.get(2, 1), 12.0);
        let mut n = SymMatrix::zeros(3);
        let row = [1.0, 2.0, 3.0];
        n.accumulate_rows([(2.0, &row[..])]);
        assert_eq!(m, n);
    }
}
