//! Spatial dilation `I_lambda[f](x) = f(lambda x)` about the box center.
//!
//! The operator is separable, so it is applied as an `n x n`
//! coefficient-to-coefficient matrix along each axis. For `lambda <= 1`
//! (stretching) the trigonometric interpolant is sampled at `lambda x_j` and
//! re-analysed; this is exact at grid points. For `lambda > 1` (compression)
//! sampling would alias, so the matrix holds the exact Fourier coefficients of
//! the compressed field, taken to vanish outside the image of the box.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

/// A precomputed dilation on one grid.
#[derive(Debug, Clone)]
pub struct Dilation {
    grid: Grid,
    lambda: f64,
    /// Row-major `matrix[k * n + m]`: output mode `k` from input mode `m`.
    matrix: Vec<Complex64>,
}

impl Dilation {
    pub fn new(grid: &Grid, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("dilation factor must be positive, got {lambda}")));
        }
        let n = grid.n();
        let freq = grid.axis_frequencies();
        let kf = grid.fundamental();
        let l = grid.box_length();
        let nyq = -(n as i64) / 2;
        // Input modes as (column, frequency, weight); the unpaired Nyquist
        // coefficient is split evenly between +-n/2 so the interpolant is real.
        let mut inputs: Vec<(usize, i64, f64)> = Vec::with_capacity(n + 1);
        for (m, &fm) in freq.iter().enumerate() {
            if fm == nyq {
                inputs.push((m, fm, 0.5));
                inputs.push((m, -fm, 0.5));
            } else {
                inputs.push((m, fm, 1.0));
            }
        }
        let sign = |f: i64| if f.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let mut matrix = vec![Complex64::default(); n * n];
        if lambda <= 1.0 {
            // Values at y_j = lambda (x_j - L/2), then forward DFT.
            let mut sample = vec![Complex64::default(); n * n];
            for j in 0..n {
                let y = lambda * grid.centered_coordinate(j);
                for &(m, fm, w) in &inputs {
                    // e^{i k (y + L/2)} = (-1)^m e^{i k y}
                    let k = fm as f64 * kf;
                    sample[j * n + m] += Complex64::from_polar(w * sign(fm), k * y);
                }
            }
            for (k, &fk) in freq.iter().enumerate() {
                for j in 0..n {
                    let x = j as f64 * grid.spacing();
                    let e = Complex64::from_polar(1.0 / n as f64, -(fk as f64) * kf * x);
                    for m in 0..n {
                        matrix[k * n + m] += e * sample[j * n + m];
                    }
                }
            }
        } else {
            // c'_k = (1/L) int_{-L/2}^{L/2} f(lambda y) e^{-i k y} dy in centered
            // coordinates; f vanishes outside |lambda y| <= L/2.
            let a = 0.5 * l / lambda;
            for (k, &fk) in freq.iter().enumerate() {
                for &(m, fm, w) in &inputs {
                    let dk = lambda * fm as f64 * kf - fk as f64 * kf;
                    let v = w * sign(fm) * sign(fk) * (2.0 * a / l) * sinc(dk * a);
                    matrix[k * n + m] += Complex64::new(v, 0.0);
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            lambda,
            matrix,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Apply to every component of `f`.
    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n();
        let dim = self.grid.dim();
        let coeffs: Vec<Vec<Complex64>> = f
            .coeffs()
            .iter()
            .map(|comp| {
                let mut data = comp.clone();
                for axis in 0..dim {
                    data = self.apply_axis(&data, n, dim, axis);
                }
                data
            })
            .collect();
        let out = SpectralField::from_coeffs(&self.grid, f.rank(), coeffs, f.is_real())?;
        Ok(if f.is_real() { out.symmetrized() } else { out })
    }

    fn apply_axis(&self, data: &[Complex64], n: usize, dim: usize, axis: usize) -> Vec<Complex64> {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = n * stride;
        let mut out = vec![Complex64::default(); data.len()];
        let mat = &self.matrix;
        out.par_chunks_mut(block).zip(data.par_chunks(block)).for_each(|(ob, ib)| {
            let mut line = vec![Complex64::default(); n];
            for s in 0..stride {
                for (m, v) in line.iter_mut().enumerate() {
                    *v = ib[m * stride + s];
                }
                let nonzero: Vec<usize> = (0..n).filter(|&m| line[m] != Complex64::default()).collect();
                if nonzero.is_empty() {
                    continue;
                }
                for k in 0..n {
                    let row = &mat[k * n..(k + 1) * n];
                    let mut acc = Complex64::default();
                    for &m in &nonzero {
                        acc += row[m] * line[m];
                    }
                    ob[k * stride + s] = acc;
                }
            }
        });
        out
    }
}

/// `f(lambda x)` about the box center; see [`Dilation`].
pub fn dilate(f: &SpectralField, lambda: f64) -> Result<SpectralField> {
    Dilation::new(f.grid(), lambda)?.apply(f)
}

/// Fraction of the grid `L^2` mass of `f` inside the ball of given radius.
pub fn mass_fraction_within(f: &SpectralField, radius: f64) -> f64 {
    let mag = f.magnitude();
    let grid = f.grid();
    let mut inside = 0.0;
    let mut total = 0.0;
    for (i, m) in mag.iter().enumerate() {
        let e = m * m;
        total += e;
        if grid.radius(i) <= radius {
            inside += e;
        }
    }
    if total == 0.0 {
        1.0
    } else {
        inside / total
    }
}

/// Fail with `DilationNotRepresentable` unless `min_fraction` of the mass of
/// `f` lies within `radius_fraction * L` of the center.
pub fn require_concentrated(f: &SpectralField, radius_fraction: f64, min_fraction: f64) -> Result<f64> {
    let radius = radius_fraction * f.grid().box_length();
    let fraction = mass_fraction_within(f, radius);
    if fraction < min_fraction {
        return Err(Error::DilationNotRepresentable { fraction, radius });
    }
    Ok(fraction)
}
