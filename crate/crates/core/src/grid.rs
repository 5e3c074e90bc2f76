//! Periodic box descriptor and wavenumber tables.
//!
//! Points are `x_j = j h` with `h = L / n`, `j = 0..n`; the box center
//! `x_c = L / 2` is itself a grid point (`j = n / 2`). Fourier modes use the
//! FFT ordering: storage index `j` carries integer frequency `j` for
//! `j < n/2` and `j - n` otherwise, so each axis holds `{-n/2, ..., n/2-1}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug)]
struct Tables {
    /// Integer frequencies per storage index.
    freq: Vec<i64>,
    /// Physical wavenumbers `freq * 2 pi / L`.
    k: Vec<f64>,
    /// Wavenumbers for odd symbols (derivatives): Nyquist entry set to zero.
    k_odd: Vec<f64>,
    /// |k| over the full flattened mode array.
    kmag: Vec<f64>,
}

/// A uniform periodic grid in 1, 2 or 3 dimensions.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    box_length: f64,
    tables: Arc<Tables>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.box_length == other.box_length
    }
}

/// Construct a grid; see [`Grid::new`].
pub fn make_grid(dim: usize, n: usize, box_length: f64) -> Result<Grid> {
    Grid::new(dim, n, box_length)
}

impl Grid {
    pub fn new(dim: usize, n: usize, box_length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even, got {n}")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("n must be at least 4, got {n}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {box_length}"
            )));
        }
        let scale = 2.0 * PI / box_length;
        let freq: Vec<i64> = (0..n)
            .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect();
        let k: Vec<f64> = freq.iter().map(|&m| m as f64 * scale).collect();
        let k_odd: Vec<f64> = freq
            .iter()
            .map(|&m| if m == -(n as i64) / 2 { 0.0 } else { m as f64 * scale })
            .collect();
        let total = n.pow(dim as u32);
        let mut kmag = vec![0.0; total];
        for (flat, out) in kmag.iter_mut().enumerate() {
            let mut s = 0.0;
            let mut rem = flat;
            for _ in 0..dim {
                let j = rem % n;
                rem /= n;
                s += k[j] * k[j];
            }
            *out = s.sqrt();
        }
        Ok(Self {
            dim,
            n,
            box_length,
            tables: Arc::new(Tables {
                freq,
                k,
                k_odd,
                kmag,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Number of grid points (equivalently, Fourier modes).
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = L / n`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Volume element `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Box volume `L^dim`.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Fundamental wavenumber `2 pi / L`.
    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    /// Integer frequency table of one axis, in storage order.
    pub fn axis_frequencies(&self) -> &[i64] {
        &self.tables.freq
    }

    /// Physical wavenumber table of one axis, in storage order.
    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.tables.k
    }

    /// Wavenumbers used by odd symbols; the unpaired Nyquist entry is zero.
    pub fn axis_wavenumbers_odd(&self) -> &[f64] {
        &self.tables.k_odd
    }

    /// |k| for every mode of the flattened array.
    pub fn kmag(&self) -> &[f64] {
        &self.tables.kmag
    }

    /// Storage indices of a flattened mode or point index, axis 0 first.
    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    #[inline]
    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + idx[a])
    }

    /// Physical wavenumber vector of a flattened mode.
    #[inline]
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = self.tables.k[idx[a]];
        }
        k
    }

    /// Wavevector with Nyquist components zeroed, for odd symbols.
    #[inline]
    pub fn wavevector_odd(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = self.tables.k_odd[idx[a]];
        }
        k
    }

    /// Integer frequency vector of a flattened mode.
    #[inline]
    pub fn frequency(&self, flat: usize) -> [i64; 3] {
        let idx = self.unflatten(flat);
        let mut m = [0i64; 3];
        for a in 0..self.dim {
            m[a] = self.tables.freq[idx[a]];
        }
        m
    }

    /// Flattened index of the mode `-k` (mod n).
    #[inline]
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut c = [0usize; 3];
        for a in 0..self.dim {
            c[a] = (self.n - idx[a]) % self.n;
        }
        self.flatten(c)
    }

    /// Centered coordinate `x_j - L/2` along one axis, in `[-L/2, L/2)`.
    #[inline]
    pub fn centered_coordinate(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.spacing()
    }

    /// Centered position vector of a flattened grid point.
    #[inline]
    pub fn centered_position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.centered_coordinate(idx[a]);
        }
        x
    }

    /// Distance of a grid point from the box center.
    #[inline]
    pub fn radius(&self, flat: usize) -> f64 {
        let x = self.centered_position(flat);
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    /// Largest |k| on the grid (corner mode).
    pub fn max_wavenumber(&self) -> f64 {
        self.fundamental() * (self.n / 2) as f64 * (self.dim as f64).sqrt()
    }

    /// Largest per-axis integer frequency kept by the 2/3 rule.
    pub fn dealias_limit(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Same grid shape with `n` multiplied by `factor` (same box).
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dim, self.n * factor, self.box_length)
    }
}
