//! Fields stored as Fourier coefficients on a periodic [`Grid`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;

/// Tensor rank of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Rank {
    Scalar,
    Vector,
    /// `dim x dim` tensor; component `(a, b)` is stored at `a * dim + b`.
    Tensor,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Tensor => dim * dim,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector => "vector",
            Rank::Tensor => "tensor",
        }
    }
}

/// A scalar, vector or tensor field held as Fourier-series coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    rank: Rank,
    coeffs: Vec<Vec<Complex64>>,
    real: bool,
}

pub(crate) fn require_rank(f: &SpectralField, rank: Rank) -> Result<()> {
    if f.rank != rank {
        return Err(Error::RankMismatch {
            expected: rank.name().into(),
            found: f.rank.name().into(),
        });
    }
    Ok(())
}

pub(crate) fn require_same_grid(a: &SpectralField, b: &SpectralField) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

impl SpectralField {
    pub fn zeros(grid: &Grid, rank: Rank) -> Self {
        let nc = rank.components(grid.dim());
        Self {
            grid: grid.clone(),
            rank,
            coeffs: vec![vec![Complex64::default(); grid.len()]; nc],
            real: true,
        }
    }

    /// Build from raw coefficients. `real` asserts conjugate symmetry.
    pub fn from_coeffs(grid: &Grid, rank: Rank, coeffs: Vec<Vec<Complex64>>, real: bool) -> Result<Self> {
        let nc = rank.components(grid.dim());
        if coeffs.len() != nc || coeffs.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument(format!(
                "expected {nc} components of length {}",
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            rank,
            coeffs,
            real,
        })
    }

    /// Transform physical-space samples (one `Vec` per component).
    pub fn from_physical(grid: &Grid, rank: Rank, values: &[Vec<f64>]) -> Result<Self> {
        let nc = rank.components(grid.dim());
        if values.len() != nc || values.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument(format!(
                "expected {nc} physical components of length {}",
                grid.len()
            )));
        }
        let coeffs = values
            .iter()
            .map(|comp| {
                let mut data: Vec<Complex64> = comp.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft::forward(&mut data, grid.n(), grid.dim());
                data
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            rank,
            coeffs,
            real: true,
        })
    }

    /// Sample a function of the centered position `x - x_c`.
    pub fn from_fn<F>(grid: &Grid, rank: Rank, f: F) -> Self
    where
        F: Fn([f64; 3], &mut [f64]) + Sync,
    {
        let nc = rank.components(grid.dim());
        let mut flat = vec![0.0; grid.len() * nc];
        flat.par_chunks_mut(nc).enumerate().for_each(|(i, out)| {
            f(grid.centered_position(i), out);
        });
        let values: Vec<Vec<f64>> = (0..nc)
            .map(|c| flat.iter().skip(c).step_by(nc).copied().collect())
            .collect();
        Self::from_physical(grid, rank, &values).expect("component layout is consistent")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn num_components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.coeffs[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.coeffs[c]
    }

    pub fn into_coeffs(self) -> Vec<Vec<Complex64>> {
        self.coeffs
    }

    /// Extract one component as a scalar field.
    pub fn scalar_component(&self, c: usize) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            rank: Rank::Scalar,
            coeffs: vec![self.coeffs[c].clone()],
            real: self.real,
        }
    }

    /// Assemble a vector field from scalar components.
    pub fn from_components(parts: &[SpectralField], rank: Rank) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?
            .grid
            .clone();
        let coeffs: Vec<Vec<Complex64>> = parts.iter().flat_map(|p| p.coeffs.iter().cloned()).collect();
        let real = parts.iter().all(|p| p.real);
        Self::from_coeffs(&grid, rank, coeffs, real)
    }

    /// Physical-space values, real part of the synthesis.
    pub fn physical(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| {
                let mut data = c.clone();
                fft::inverse(&mut data, self.grid.n(), self.grid.dim());
                data.into_iter().map(|z| z.re).collect()
            })
            .collect()
    }

    /// Physical-space values including the imaginary part.
    pub fn physical_complex(&self) -> Vec<Vec<Complex64>> {
        self.coeffs
            .iter()
            .map(|c| {
                let mut data = c.clone();
                fft::inverse(&mut data, self.grid.n(), self.grid.dim());
                data
            })
            .collect()
    }

    /// Pointwise Euclidean magnitude over components.
    pub fn magnitude(&self) -> Vec<f64> {
        magnitude_of(&self.physical())
    }

    /// Apply a per-mode map `(flat index, component, coefficient) -> coefficient`.
    pub fn map_modes<F>(&self, f: F) -> SpectralField
    where
        F: Fn(usize, usize, Complex64) -> Complex64 + Sync,
    {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(c, comp)| comp.par_iter().enumerate().map(|(i, &z)| f(i, c, z)).collect())
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            rank: self.rank,
            coeffs,
            real: self.real,
        }
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        self.map_modes(|_, _, z| z * s)
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &SpectralField, b: f64) -> Result<SpectralField> {
        require_same_grid(self, other)?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch {
                expected: self.rank.name().into(),
                found: other.rank.name().into(),
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x.par_iter().zip(y.par_iter()).map(|(&p, &q)| p * a + q * b).collect())
            .collect();
        Ok(SpectralField {
            grid: self.grid.clone(),
            rank: self.rank,
            coeffs,
            real: self.real && other.real,
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.lincomb(1.0, other, -1.0)
    }

    /// Zero-mode coefficient of each component (the spatial mean).
    pub fn mean(&self) -> Vec<Complex64> {
        self.coeffs.iter().map(|c| c[0]).collect()
    }

    /// Remove the spatial mean.
    pub fn without_mean(&self) -> SpectralField {
        self.map_modes(|i, _, z| if i == 0 { Complex64::default() } else { z })
    }

    /// Sum of squared coefficient magnitudes over all components.
    pub fn coeff_energy(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// `L^2` norm over the box via Parseval: `sqrt(L^d sum |c_k|^2)`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.volume() * self.coeff_energy()).sqrt()
    }

    /// Grid `L^p` norm of the pointwise magnitude; `p = inf` is the grid max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.magnitude(), p, self.grid.cell_volume())
    }

    /// Relative zero-mode size `|c_0| / sqrt(sum |c|^2)` (0 for the zero field).
    pub fn relative_mean(&self) -> f64 {
        let e = self.coeff_energy().sqrt();
        if e == 0.0 {
            return 0.0;
        }
        self.mean().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / e
    }

    /// Largest relative violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self
            .coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, z| m.max(z.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for comp in &self.coeffs {
            for (i, &z) in comp.iter().enumerate() {
                let j = self.grid.conjugate_index(i);
                worst = worst.max((z - comp[j].conj()).norm());
            }
        }
        worst / scale
    }

    /// Zero every mode with some `|m_axis| > n/3` (2/3 rule).
    pub fn dealias(&self) -> SpectralField {
        let lim = self.grid.dealias_limit();
        let grid = self.grid.clone();
        self.map_modes(move |i, _, z| {
            let m = grid.frequency(i);
            if m.iter().any(|&x| x.abs() > lim) {
                Complex64::default()
            } else {
                z
            }
        })
    }

    /// The same trigonometric interpolant on a grid `factor` times finer.
    ///
    /// Nyquist coefficients are split evenly between `+-n/2` so real fields
    /// stay real.
    pub fn upsampled(&self, factor: usize) -> Result<SpectralField> {
        let fine = self.grid.refined(factor)?;
        let n = self.grid.n() as i64;
        let dim = self.grid.dim();
        let coeffs = self
            .coeffs
            .iter()
            .map(|src| {
                let mut out = vec![Complex64::default(); fine.len()];
                for (i, z) in out.iter_mut().enumerate() {
                    let m = fine.frequency(i);
                    let mut idx = [0usize; 3];
                    let mut w = 1.0;
                    for a in 0..dim {
                        let ma = m[a];
                        if ma.abs() > n / 2 {
                            w = 0.0;
                            break;
                        }
                        if ma.abs() == n / 2 {
                            w *= 0.5;
                        }
                        idx[a] = ma.rem_euclid(n) as usize;
                    }
                    if w > 0.0 {
                        *z = src[self.grid.flatten(idx)] * w;
                    }
                }
                out
            })
            .collect();
        SpectralField::from_coeffs(&fine, self.rank, coeffs, self.real)
    }

    /// Keep only modes with `|m| <= band` (integer-frequency Euclidean norm).
    pub fn band_limit(&self, band: f64) -> SpectralField {
        let grid = self.grid.clone();
        self.map_modes(move |i, _, z| {
            let m = grid.frequency(i);
            let r = ((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).sqrt();
            if r > band {
                Complex64::default()
            } else {
                z
            }
        })
    }

    /// Seeded random real field with Gaussian, conjugate-symmetric coefficients
    /// band-limited to `|m| <= n/4` and with zero mean.
    pub fn random(grid: &Grid, rank: Rank, seed: u64) -> SpectralField {
        Self::random_band(grid, rank, seed, grid.n() as f64 / 4.0)
    }

    /// Like [`SpectralField::random`] with an explicit integer-frequency band.
    pub fn random_band(grid: &Grid, rank: Rank, seed: u64, band: f64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = rank.components(grid.dim());
        let values: Vec<Vec<f64>> = (0..nc)
            .map(|_| (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let f = Self::from_physical(grid, rank, &values).expect("layout is consistent");
        // Unit-variance coefficients regardless of grid size.
        f.scale((grid.len() as f64).sqrt()).band_limit(band).without_mean()
    }

    /// Physical values restricted to the ball `|x - x_c| <= radius`.
    pub fn window_mask(grid: &Grid, radius: f64) -> Vec<bool> {
        (0..grid.len()).map(|i| grid.radius(i) <= radius).collect()
    }

    /// `L^2` norm of the pointwise magnitude over the ball `|x - x_c| <= radius`.
    pub fn l2_norm_within(&self, radius: f64) -> f64 {
        let mag = self.magnitude();
        let dv = self.grid.cell_volume();
        let s: f64 = (0..self.grid.len())
            .filter(|&i| self.grid.radius(i) <= radius)
            .map(|i| mag[i] * mag[i])
            .sum();
        (s * dv).sqrt()
    }

    /// Mark the field as real-valued after symmetrizing its coefficients.
    pub fn symmetrized(&self) -> SpectralField {
        let grid = self.grid.clone();
        let mut out = self.clone();
        for (c, comp) in out.coeffs.iter_mut().enumerate() {
            let src = &self.coeffs[c];
            for (i, z) in comp.iter_mut().enumerate() {
                let j = grid.conjugate_index(i);
                *z = 0.5 * (src[i] + src[j].conj());
            }
        }
        out.real = true;
        out
    }
}

/// Pointwise Euclidean magnitude of component-major physical values.
pub fn magnitude_of(values: &[Vec<f64>]) -> Vec<f64> {
    let len = values[0].len();
    (0..len)
        .map(|i| values.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .collect()
}

/// Grid `L^p` norm of nonnegative samples with cell volume `dv`.
pub fn lp_norm_of(mag: &[f64], p: f64, dv: f64) -> f64 {
    if p.is_infinite() {
        return mag.iter().fold(0.0f64, |m, &v| m.max(v));
    }
    let s: f64 = mag.iter().map(|&v| v.powf(p)).sum();
    (s * dv).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_all_ranks_and_dims() {
        for dim in 1..=3 {
            let g = Grid::new(dim, 16, 2.0 * PI).unwrap();
            for rank in [Rank::Scalar, Rank::Vector, Rank::Tensor] {
                let f = SpectralField::random(&g, rank, 3);
                let back = SpectralField::from_physical(&g, rank, &f.physical()).unwrap();
                let err = back.sub(&f).unwrap().coeff_energy().sqrt();
                assert!(err <= 1e-13 * f.coeff_energy().sqrt(), "dim {dim} rank {rank:?}: {err}");
            }
        }
    }

    #[test]
    fn parseval_matches_grid_sum() {
        let g = Grid::new(3, 16, 3.0).unwrap();
        let f = SpectralField::random(&g, Rank::Vector, 9);
        let grid_l2 = f.lp_norm(2.0);
        assert!((grid_l2 - f.l2_norm()).abs() <= 1e-12 * grid_l2);
    }

    #[test]
    fn random_fields_are_hermitian_band_limited_and_mean_zero() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let f = SpectralField::random(&g, Rank::Scalar, 1);
        assert!(f.hermitian_defect() < 1e-13);
        assert_eq!(f.mean()[0], Complex64::default());
        for (i, z) in f.component(0).iter().enumerate() {
            let m = g.frequency(i);
            if ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt() > 8.0 {
                assert_eq!(*z, Complex64::default());
            }
        }
        let again = SpectralField::random(&g, Rank::Scalar, 1);
        assert_eq!(f, again);
    }

    #[test]
    fn lp_norms_of_constant() {
        let g = Grid::new(2, 8, 2.0).unwrap();
        let f = SpectralField::from_fn(&g, Rank::Scalar, |_, out| out[0] = 3.0);
        assert!((f.lp_norm(f64::INFINITY) - 3.0).abs() < 1e-14);
        assert!((f.lp_norm(2.0) - 3.0 * 2.0).abs() < 1e-13);
        assert!((f.lp_norm(1.0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn upsampling_keeps_values_at_coarse_points() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let f = SpectralField::from_physical(
            &g,
            Rank::Scalar,
            &[(0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect()],
        )
        .unwrap();
        let up = f.upsampled(2).unwrap();
        assert_eq!(up.grid().n(), 16);
        let (a, b) = (f.physical(), up.physical());
        for i in 0..g.len() {
            let [x, y, _] = g.unflatten(i);
            let j = up.grid().flatten([2 * x, 2 * y, 0]);
            assert!((a[0][i] - b[0][j]).abs() < 1e-13);
        }
        assert!(up.hermitian_defect() < 1e-14);
    }
}
