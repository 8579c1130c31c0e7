//! Small dense kernels shared by the solvers: dot products, norms, axpy,
//! column-major matrices for Hessenberg/projection blocks, modified
//! Gram-Schmidt QR, and triangular back-substitution.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Column-major dense matrix for the small solver blocks (Hessenberg,
/// projection coefficients, triangular factors). Never used for the
/// system matrix itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMat {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
}

impl SmallMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SmallMat {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.a[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.a[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.a[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.a[c * self.rows..(c + 1) * self.rows]
    }

    /// y = A x (x has `cols` entries, y has `rows`).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for c in 0..self.cols {
            axpy(x[c], self.col(c), &mut y);
        }
        y
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.a)
    }
}

/// Solve R y = g for upper-triangular R (leading k x k block of `r`),
/// overwriting nothing. Diagonal entries must be nonzero.
pub fn back_substitute(r: &SmallMat, g: &[f64], k: usize) -> Vec<f64> {
    debug_assert!(k <= r.rows() && k <= r.cols() && g.len() >= k);
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in (i + 1)..k {
            s -= r.get(i, j) * y[j];
        }
        y[i] = s / r.get(i, i);
    }
    y
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass when
/// a column loses more than a safeguard fraction of its norm. Returns the
/// orthonormal columns and the square upper-triangular factor.
pub fn thin_qr_mgs(cols: &[Vec<f64>]) -> (Vec<Vec<f64>>, SmallMat) {
    let k = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = SmallMat::zeros(k, k);
    for (j, col) in cols.iter().enumerate() {
        let mut w = col.clone();
        let before = norm2(&w);
        for (l, ql) in q.iter().enumerate() {
            let h = dot(ql, &w);
            r.set(l, j, r.get(l, j) + h);
            axpy(-h, ql, &mut w);
        }
        if norm2(&w) < 0.7 * before {
            for (l, ql) in q.iter().enumerate() {
                let h = dot(ql, &w);
                r.set(l, j, r.get(l, j) + h);
                axpy(-h, ql, &mut w);
            }
        }
        let nrm = norm2(&w);
        r.set(j, j, nrm);
        if nrm > 0.0 {
            scale(1.0 / nrm, &mut w);
        }
        q.push(w);
    }
    (q, r)
}

/// Plane rotation eliminating `b` against `a`: returns (c, s) with
/// c*a + s*b = r and -s*a + c*b = 0.
pub fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0);
    }
    let r = a.hypot(b);
    (a / r, b / r)
}
