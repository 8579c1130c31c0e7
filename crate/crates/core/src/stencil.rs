//! Structured-grid sparse matrices in diagonal (banded) storage.
//!
//! Each stencil offset owns one contiguous coefficient array of length N
//! (struct-of-arrays). Coefficients whose neighbor falls outside the grid
//! are stored but must be exactly zero; the matvec kernel skips them, so
//! there is never any index wraparound. Periodic couplings are expressed
//! by the generators as extra long-range offsets whose coefficients are
//! nonzero only on the wrapping boundary layer.

use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Default cap on the unknown count for dense expansion, which exists only
/// to back test oracles.
pub const DENSE_ORACLE_CAP: usize = 4096;

const ALLOWED_OFFSET_COUNTS: [usize; 4] = [5, 7, 9, 19];

#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    shape: GridShape,
    offsets: Vec<(i32, i32, i32)>,
    /// bands[d][row]: coefficient of unknown `neighbor(row, offsets[d])`.
    bands: Vec<Vec<f64>>,
    diag: usize,
}

impl StencilMatrix {
    /// Validates the banded structure: offset count in {5, 7, 9, 19} (the
    /// 9 covers a 7-point stencil plus two periodic wrap bands), exactly one
    /// zero offset with a nowhere-zero coefficient array, and exact zeros on
    /// every out-of-grid coefficient.
    pub fn new(shape: GridShape, offsets: Vec<(i32, i32, i32)>, bands: Vec<Vec<f64>>) -> Result<Self> {
        if !ALLOWED_OFFSET_COUNTS.contains(&offsets.len()) {
            return Err(Error::InvalidStencil(format!(
                "offset count must be one of {ALLOWED_OFFSET_COUNTS:?}, got {}",
                offsets.len()
            )));
        }
        if bands.len() != offsets.len() {
            return Err(Error::InvalidStencil(format!(
                "{} offsets but {} bands",
                offsets.len(),
                bands.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for off in &offsets {
            if !seen.insert(*off) {
                return Err(Error::InvalidStencil(format!("duplicate offset {off:?}")));
            }
        }
        let diag = offsets
            .iter()
            .position(|&o| o == (0, 0, 0))
            .ok_or_else(|| Error::InvalidStencil("missing (0,0,0) diagonal offset".into()))?;
        let n = shape.n();
        for (d, band) in bands.iter().enumerate() {
            if band.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: band.len(),
                });
            }
            for (row, &v) in band.iter().enumerate() {
                if d == diag {
                    if v == 0.0 {
                        return Err(Error::InvalidStencil(format!(
                            "zero diagonal coefficient at row {row}"
                        )));
                    }
                } else if shape.neighbor(row, offsets[d]).is_none() && v != 0.0 {
                    return Err(Error::InvalidStencil(format!(
                        "nonzero out-of-grid coefficient at row {row}, offset {:?}",
                        offsets[d]
                    )));
                }
            }
        }
        Ok(StencilMatrix {
            shape,
            offsets,
            bands,
            diag,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.n()
    }

    pub fn offsets(&self) -> &[(i32, i32, i32)] {
        &self.offsets
    }

    pub fn band(&self, d: usize) -> &[f64] {
        &self.bands[d]
    }

    pub fn diag_band(&self) -> &[f64] {
        &self.bands[self.diag]
    }

    pub fn diag_index(&self) -> usize {
        self.diag
    }

    /// Raw kernel y = A x. Callers go through [`crate::operator`] when the
    /// application must be counted.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n());
        debug_assert_eq!(y.len(), self.n());
        let n = self.n();
        for (yi, (xi, di)) in y.iter_mut().zip(x.iter().zip(self.bands[self.diag].iter())) {
            *yi = di * xi;
        }
        for (d, band) in self.bands.iter().enumerate() {
            if d == self.diag {
                continue;
            }
            let off = self.offsets[d];
            for row in 0..n {
                let c = band[row];
                if c != 0.0 {
                    // validated: nonzero coefficients always have an in-grid neighbor
                    let nb = self.shape.neighbor(row, off).expect("in-grid neighbor");
                    y[row] += c * x[nb];
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// r = b - A x.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.check_len(b)?;
        let mut r = self.matvec(x)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(r)
    }

    /// Stencil dot product of one row with x: (A x)[row].
    pub fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (d, band) in self.bands.iter().enumerate() {
            let c = band[row];
            if c != 0.0 {
                if let Some(nb) = self.shape.neighbor(row, self.offsets[d]) {
                    s += c * x[nb];
                }
            }
        }
        s
    }

    /// Value of entry (row, col), reading through the bands.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        for (d, off) in self.offsets.iter().enumerate() {
            if self.shape.neighbor(row, *off) == Some(col) {
                let v = self.bands[d][row];
                if v != 0.0 {
                    return v;
                }
            }
        }
        0.0
    }

    /// Max absolute row sum; cheap operator-norm estimate for tolerances.
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|row| self.bands.iter().map(|band| band[row].abs()).sum())
            .fold(0.0, f64::max)
    }

    /// Dense expansion for test oracles, refused above [`DENSE_ORACLE_CAP`].
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        self.to_dense_with_cap(DENSE_ORACLE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DenseMatrix> {
        let n = self.n();
        if n > cap {
            return Err(Error::DenseCapExceeded { n, cap });
        }
        let mut dense = DenseMatrix::zeros(n);
        for (d, band) in self.bands.iter().enumerate() {
            let off = self.offsets[d];
            for row in 0..n {
                if let Some(col) = self.shape.neighbor(row, off) {
                    dense.add(row, col, band[row]);
                }
            }
        }
        Ok(dense)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Identity stencil on `shape` with the requested cross offsets; used by
/// tests and as the base for the generators.
pub fn identity_stencil(shape: GridShape) -> StencilMatrix {
    let offsets = cross_offsets(shape);
    let n = shape.n();
    let mut bands = vec![vec![0.0; n]; offsets.len()];
    let diag = offsets.iter().position(|&o| o == (0, 0, 0)).unwrap();
    bands[diag] = vec![1.0; n];
    StencilMatrix::new(shape, offsets, bands).expect("identity stencil is valid")
}

/// The 5-point (2D) or 7-point (3D) cross: diagonal first, then +-x, +-y, +-z.
pub fn cross_offsets(shape: GridShape) -> Vec<(i32, i32, i32)> {
    let mut offs = vec![(0, 0, 0), (-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0)];
    if !shape.is_two_d() {
        offs.push((0, 0, -1));
        offs.push((0, 0, 1));
    }
    offs
}

/// Row-major dense matrix; the expansion target of [`StencilMatrix::to_dense`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| crate::linalg::dot(self.row(r), x))
            .collect()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.n {
            for c in 0..self.n {
                let d = self.get(r, c) - self.get(c, r);
                s += d * d;
            }
        }
        s.sqrt()
    }
}
