use crate::error::{Error, Result};

/// Cell counts of a structured grid. `nz = 1` gives a 2D grid.
///
/// Cells are ordered lexicographically with x fastest:
/// `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidShape(format!(
                "cell counts must be positive, got {nx} x {ny} x {nz}"
            )));
        }
        Ok(GridShape { nx, ny, nz })
    }

    pub fn two_d(nx: usize, ny: usize) -> Result<Self> {
        GridShape::new(nx, ny, 1)
    }

    /// Total number of unknowns.
    pub fn n(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_two_d(&self) -> bool {
        self.nz == 1
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        debug_assert!(i < self.n());
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let z = i / (self.nx * self.ny);
        (x, y, z)
    }

    /// Linear index of the cell at `offset` from cell `i`, or `None` when the
    /// neighbor falls outside the grid. No wraparound: periodic couplings are
    /// expressed as extra long-range offsets by the generators.
    pub fn neighbor(&self, i: usize, offset: (i32, i32, i32)) -> Option<usize> {
        let (x, y, z) = self.coords(i);
        let nx = checked_add(x, offset.0, self.nx)?;
        let ny = checked_add(y, offset.1, self.ny)?;
        let nz = checked_add(z, offset.2, self.nz)?;
        Some(self.index(nx, ny, nz))
    }
}

fn checked_add(base: usize, delta: i32, limit: usize) -> Option<usize> {
    let v = base as i64 + delta as i64;
    if v < 0 || v >= limit as i64 {
        None
    } else {
        Some(v as usize)
    }
}

impl std::fmt::Display for GridShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let g = GridShape::new(3, 4, 2).unwrap();
        assert_eq!(g.n(), 24);
        assert_eq!(g.index(0, 0, 0), 0);
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        for i in 0..g.n() {
            let (x, y, z) = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn neighbor_rejects_out_of_grid() {
        let g = GridShape::two_d(3, 3).unwrap();
        assert_eq!(g.neighbor(0, (-1, 0, 0)), None);
        assert_eq!(g.neighbor(0, (1, 0, 0)), Some(1));
        assert_eq!(g.neighbor(2, (1, 0, 0)), None);
        assert_eq!(g.neighbor(4, (0, 1, 0)), Some(7));
        assert_eq!(g.neighbor(8, (0, 0, 1)), None);
        // long-range periodic-style offset stays in-grid only at the far edge
        assert_eq!(g.neighbor(0, (2, 0, 0)), Some(2));
        assert_eq!(g.neighbor(1, (2, 0, 0)), None);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(GridShape::new(0, 1, 1).is_err());
        assert!(GridShape::new(4, 0, 1).is_err());
    }
}
