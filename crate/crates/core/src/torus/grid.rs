use crate::error::{GpxError, Result};
use crate::scalar::Scalar;

/// Uniform periodic lattice on the flat 3-torus `[0,L1) x [0,L2) x [0,L3)`.
///
/// Nodes are stored row-major with axis 1 fastest:
/// `index = i + n1 * (j + n2 * k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid<S = f64> {
    n: [usize; 3],
    len: [S; 3],
}

/// A point of the torus, stored by its canonical representative in `[0, L_i)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point<S = f64>(pub [S; 3]);

impl<S: Scalar> Point<S> {
    pub fn new(x1: S, x2: S, x3: S) -> Self {
        Point([x1, x2, x3])
    }

    pub fn coords(&self) -> [S; 3] {
        self.0
    }
}

impl<S: Scalar> TorusGrid<S> {
    /// Every count must be even and at least 16; every side positive.
    pub fn new(n: [usize; 3], len: [S; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] < 16 || n[a] % 2 != 0 {
                return Err(GpxError::InvalidGrid(format!(
                    "n{} = {} must be even and >= 16",
                    a + 1,
                    n[a]
                )));
            }
            if !(len[a] > S::zero()) || !len[a].is_finite() {
                return Err(GpxError::InvalidGrid(format!("L{} = {} must be positive", a + 1, len[a])));
            }
        }
        Ok(TorusGrid { n, len })
    }

    pub fn cubic(n: usize, len: S) -> Result<Self> {
        Self::new([n; 3], [len; 3])
    }

    #[inline]
    pub fn counts(&self) -> [usize; 3] {
        self.n
    }

    #[inline]
    pub fn lengths(&self) -> [S; 3] {
        self.len
    }

    #[inline]
    pub fn spacing(&self) -> [S; 3] {
        [
            self.len[0] / S::from_usize_lossy(self.n[0]),
            self.len[1] / S::from_usize_lossy(self.n[1]),
            self.len[2] / S::from_usize_lossy(self.n[2]),
        ]
    }

    pub fn max_spacing(&self) -> S {
        let h = self.spacing();
        h[0].max(h[1]).max(h[2])
    }

    pub fn min_length(&self) -> S {
        self.len[0].min(self.len[1]).min(self.len[2])
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn cell_volume(&self) -> S {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn volume(&self) -> S {
        self.len[0] * self.len[1] * self.len[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    /// Index of an arbitrary (possibly negative or out of range) lattice triple.
    #[inline]
    pub fn index_wrapped(&self, i: isize, j: isize, k: isize) -> usize {
        let w = |v: isize, n: usize| v.rem_euclid(n as isize) as usize;
        self.index(w(i, self.n[0]), w(j, self.n[1]), w(k, self.n[2]))
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let rest = idx / self.n[0];
        [i, rest % self.n[1], rest / self.n[1]]
    }

    pub fn node_point(&self, idx: usize) -> Point<S> {
        let [i, j, k] = self.ijk(idx);
        let h = self.spacing();
        Point([
            S::from_usize_lossy(i) * h[0],
            S::from_usize_lossy(j) * h[1],
            S::from_usize_lossy(k) * h[2],
        ])
    }

    /// Canonical representative of `x` in `[0, L)`.
    pub fn wrap(&self, x: [S; 3]) -> Point<S> {
        let mut out = [S::zero(); 3];
        for a in 0..3 {
            let l = self.len[a];
            let mut v = x[a] - (x[a] / l).floor() * l;
            if v >= l {
                v = v - l;
            }
            if v < S::zero() {
                v = S::zero();
            }
            out[a] = v;
        }
        Point(out)
    }

    /// Minimum-image displacement `b - a`, each component in `[-L/2, L/2)`,
    /// together with its Euclidean length.
    pub fn min_image(&self, a: &Point<S>, b: &Point<S>) -> ([S; 3], S) {
        let half = S::lit(0.5);
        let mut d = [S::zero(); 3];
        for ax in 0..3 {
            let l = self.len[ax];
            let raw = b.0[ax] - a.0[ax];
            let mut v = raw - ((raw / l) + half).floor() * l;
            if v >= half * l {
                v = v - l;
            }
            if v < -half * l {
                v = v + l;
            }
            d[ax] = v;
        }
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        (d, dist)
    }

    pub fn distance(&self, a: &Point<S>, b: &Point<S>) -> S {
        self.min_image(a, b).1
    }

    /// Coarser or finer grid on the same torus.
    pub fn with_counts(&self, n: [usize; 3]) -> Result<Self> {
        Self::new(n, self.len)
    }
}
