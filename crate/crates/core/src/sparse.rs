//! Compressed sparse row matrices, incomplete Cholesky IC(0) and
//! preconditioned conjugate gradients for symmetric positive definite systems.

#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    /// Builds an `n × n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *val.last_mut().expect("entry exists") += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().position(|&j| j == i).map_or(0.0, |k| v[k])
            })
            .collect()
    }
}

/// Zero-fill incomplete Cholesky factor `L` (lower triangle, rows sorted,
/// diagonal last in each row).
#[derive(Debug, Clone)]
pub struct Ic0 {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Ic0 {
    /// Factorises `a`. On a non-positive pivot the diagonal is shifted by a
    /// growing multiple of its largest entry and the factorisation restarted.
    pub fn new(a: &Csr) -> Self {
        let n = a.n();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::new();
        let mut base = Vec::new();
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if j <= i {
                    col.push(j);
                    base.push(x);
                }
            }
            row_ptr[i + 1] = col.len();
        }
        let dmax = a.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        loop {
            let mut f = Self { n, row_ptr: row_ptr.clone(), col: col.clone(), val: base.clone() };
            if f.factor(shift) {
                return f;
            }
            shift = if shift == 0.0 { 1e-6 * dmax } else { 10.0 * shift };
        }
    }

    fn factor(&mut self, shift: f64) -> bool {
        for i in 0..self.n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for kk in s..e {
                let k = self.col[kk];
                if k == i {
                    let sq: f64 = self.val[s..kk].iter().map(|x| x * x).sum();
                    let d = self.val[kk] + shift - sq;
                    if !(d > 0.0) || !d.is_finite() {
                        return false;
                    }
                    self.val[kk] = d.sqrt();
                } else {
                    // sparse dot of row i and row k over columns < k
                    let (ks, ke) = (self.row_ptr[k], self.row_ptr[k + 1]);
                    let (mut a, mut b, mut dot) = (s, ks, 0.0);
                    while a < kk && b < ke - 1 {
                        match self.col[a].cmp(&self.col[b]) {
                            std::cmp::Ordering::Less => a += 1,
                            std::cmp::Ordering::Greater => b += 1,
                            std::cmp::Ordering::Equal => {
                                dot += self.val[a] * self.val[b];
                                a += 1;
                                b += 1;
                            }
                        }
                    }
                    self.val[kk] = (self.val[kk] - dot) / self.val[ke - 1];
                }
            }
            if self.col[e - 1] != i {
                return false;
            }
        }
        true
    }

    /// Solves `L Lᵀ z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for i in 0..self.n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = z[i];
            for kk in s..e - 1 {
                acc -= self.val[kk] * z[self.col[kk]];
            }
            z[i] = acc / self.val[e - 1];
        }
        for i in (0..self.n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            z[i] /= self.val[e - 1];
            let zi = z[i];
            for kk in s..e - 1 {
                z[self.col[kk]] -= self.val[kk] * zi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// IC(0)-preconditioned conjugate gradients for `a x = b`, starting from the
/// contents of `x`.
pub fn pcg(a: &Csr, pre: &Ic0, b: &[f64], x: &mut [f64], rel_tol: f64, max_iters: usize) -> CgOutcome {
    let n = a.n();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iters {
        let rel = norm(&r) / bnorm;
        if rel <= rel_tol {
            return CgOutcome { iterations: it, relative_residual: rel, converged: true };
        }
        a.matvec(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) {
            return CgOutcome { iterations: it, relative_residual: rel, converged: false };
        }
        let alpha = rz / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    let rel = norm(&r) / bnorm;
    CgOutcome { iterations: max_iters, relative_residual: rel, converged: rel <= rel_tol }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(k: usize) -> Csr {
        let idx = |i: usize, j: usize| i * k + j;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < k {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < k {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        Csr::from_triplets(k * k, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (0, 1, 1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.diagonal(), vec![4.0, 2.0]);
    }

    #[test]
    fn ic0_exact_on_tridiagonal() {
        // IC(0) is the exact Cholesky factor when there is no fill-in
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, t);
        let pre = Ic0::new(&a);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut z = vec![0.0; n];
        pre.apply(&b, &mut z);
        let mut back = vec![0.0; n];
        a.matvec(&z, &mut back);
        for i in 0..n {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_solves_poisson() {
        let a = laplacian_2d(30);
        let pre = Ic0::new(&a);
        let b = vec![1.0; a.n()];
        let mut x = vec![0.0; a.n()];
        let out = pcg(&a, &pre, &b, &mut x, 1e-12, 500);
        assert!(out.converged, "{out:?}");
        let mut ax = vec![0.0; a.n()];
        a.matvec(&x, &mut ax);
        let err = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
