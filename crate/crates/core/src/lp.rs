//! Littlewood-Paley analysis on the periodic grid: dyadic blocks, Besov and
//! weighted Sobolev norms, Bony paraproducts and the `[block, x]` commutator.
//!
//! The cutoff `h(r) = chi(r)` equals 1 on `[0, 3/4]` and vanishes on
//! `[4/3, inf)`; `phi(r) = chi(r/2) - chi(r)` lives in the annulus
//! `(3/4, 8/3)`. Block `q` multiplies by `phi(2^-q |k|)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{lp_norm_of, magnitude_of, Rank, SpectralField};
use crate::grid::Grid;

const I: Complex64 = Complex64::new(0.0, 1.0);

const INNER: f64 = 0.75;
const OUTER: f64 = 4.0 / 3.0;

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn dpsi(t: f64) -> f64 {
    if t > 0.0 {
        psi(t) / (t * t)
    } else {
        0.0
    }
}

/// Smooth monotone step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = psi(x);
        a / (a + psi(1.0 - x))
    }
}

fn smooth_step_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let a = psi(x);
    let b = psi(1.0 - x);
    (dpsi(x) * b + a * dpsi(1.0 - x)) / ((a + b) * (a + b))
}

/// Radial profile of `h`: 1 on `[0, 3/4]`, 0 on `[4/3, inf)`, C-infinity.
pub fn chi(r: f64) -> f64 {
    1.0 - smooth_step((r - INNER) / (OUTER - INNER))
}

pub fn chi_derivative(r: f64) -> f64 {
    -smooth_step_derivative((r - INNER) / (OUTER - INNER)) / (OUTER - INNER)
}

/// Radial profile of `phi = h(./2) - h`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

pub fn phi_derivative(r: f64) -> f64 {
    0.5 * chi_derivative(0.5 * r) - chi_derivative(r)
}

/// Which dyadic operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    /// Homogeneous block, symbol `phi(2^-q k)`.
    HomogBlock,
    /// Homogeneous low-pass `S_q = sum_{j < q} block_j`, symbol `chi(2^-q k)`, zero mode removed.
    HomogLowpass,
    /// Inhomogeneous block: `h(k)` for `q = -1`, the homogeneous block for `q >= 0`.
    InhomogBlock,
}

/// The cutoff pair together with the block range the grid can resolve.
#[derive(Debug, Clone)]
pub struct DyadicFamily {
    grid: Grid,
    q_min: i32,
    q_max: i32,
    q_max_interior: i32,
}

/// Construct the dyadic family adapted to `grid`.
pub fn build_dyadic_family(grid: &Grid) -> DyadicFamily {
    DyadicFamily::new(grid)
}

impl DyadicFamily {
    pub fn new(grid: &Grid) -> Self {
        let kf = grid.fundamental();
        // Lowest block whose annulus reaches the fundamental mode, so every
        // nonzero mode is covered from below.
        let q_min = (OUTER.recip() * kf).log2().floor() as i32;
        let q_min = q_min.max(i32::MIN + 2);
        // Smallest q whose low-pass chi(2^-(q+1) k) is identically 1 on the grid.
        let mut q_max = q_min;
        while 2f64.powi(q_max + 1) * INNER < grid.max_wavenumber() {
            q_max += 1;
        }
        // Blocks whose full annulus fits under the 2/3 cutoff.
        let q_max_interior = (kf * grid.n() as f64 / 8.0).log2().floor() as i32;
        Self {
            grid: grid.clone(),
            q_min,
            q_max,
            q_max_interior,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Lowest homogeneous block index with support on the grid.
    pub fn q_min(&self) -> i32 {
        self.q_min
    }

    /// Highest block index needed to cover every grid mode.
    pub fn q_max(&self) -> i32 {
        self.q_max
    }

    /// Highest block whose annulus lies inside the dealiased spectrum.
    pub fn q_max_interior(&self) -> i32 {
        self.q_max_interior
    }

    pub fn h_hat(&self, r: f64) -> f64 {
        chi(r)
    }

    pub fn phi_hat(&self, r: f64) -> f64 {
        phi(r)
    }

    /// Symbol of the requested operator at `|k| = r` (`r = 0` is the zero mode).
    pub fn symbol(&self, q: i32, kind: BlockKind, r: f64) -> f64 {
        let scale = 2f64.powi(-q);
        match kind {
            BlockKind::HomogBlock => {
                if r == 0.0 {
                    0.0
                } else {
                    phi(scale * r)
                }
            }
            BlockKind::HomogLowpass => {
                if r == 0.0 {
                    0.0
                } else {
                    chi(scale * r)
                }
            }
            BlockKind::InhomogBlock => match q {
                q if q < -1 => 0.0,
                -1 => chi(r),
                _ => phi(scale * r),
            },
        }
    }

    fn check_range(&self, q: i32, kind: BlockKind) -> Result<()> {
        let lo = match kind {
            BlockKind::InhomogBlock => -1,
            _ => self.q_min - 1,
        };
        let hi = self.q_max + 1;
        if q < lo || q > hi {
            return Err(Error::BlockOutOfRange { q, lo, hi });
        }
        Ok(())
    }

    /// Apply a dyadic operator to every component of `f`.
    pub fn block(&self, f: &SpectralField, q: i32, kind: BlockKind) -> Result<SpectralField> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        self.check_range(q, kind)?;
        let kmag = self.grid.kmag();
        Ok(f.map_modes(|i, _, z| z * self.symbol(q, kind, kmag[i])))
    }

    /// `block_{q-1} + block_q + block_{q+1}` (homogeneous).
    pub fn widened_block(&self, f: &SpectralField, q: i32) -> Result<SpectralField> {
        self.check_range(q, BlockKind::HomogBlock)?;
        let kmag = self.grid.kmag();
        Ok(f.map_modes(|i, _, z| {
            let r = kmag[i];
            if r == 0.0 {
                return Complex64::default();
            }
            let s: f64 = (q - 1..=q + 1).map(|j| phi(2f64.powi(-j) * r)).sum();
            z * s
        }))
    }

    /// Indices of the blocks used by norms of the given kind.
    pub fn norm_range(&self, homogeneous: bool) -> std::ops::RangeInclusive<i32> {
        if homogeneous {
            self.q_min..=self.q_max
        } else {
            -1..=self.q_max.max(-1)
        }
    }
}

/// Apply a dyadic operator; see [`DyadicFamily::block`].
pub fn dyadic_block(f: &SpectralField, q: i32, kind: BlockKind) -> Result<SpectralField> {
    DyadicFamily::new(f.grid()).block(f, q, kind)
}

/// Besov norm parameters `(s, p, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesovSpec {
    pub s: f64,
    pub p: f64,
    pub r: f64,
    pub homogeneous: bool,
}

impl BesovSpec {
    pub fn homogeneous(s: f64, p: f64, r: f64) -> Self {
        Self { s, p, r, homogeneous: true }
    }

    pub fn inhomogeneous(s: f64, p: f64, r: f64) -> Self {
        Self { s, p, r, homogeneous: false }
    }
}

/// A Besov norm together with its per-block terms and truncation estimate.
#[derive(Debug, Clone, Serialize)]
pub struct BesovNorm {
    pub value: f64,
    pub q_lo: i32,
    pub q_hi: i32,
    /// `2^{qs} ||block_q f||_p` for `q = q_lo..=q_hi`.
    pub terms: Vec<f64>,
    /// Relative `L^2` size of the part of `f` not seen by the summed blocks.
    pub truncation: f64,
}

fn block_lp(f: &SpectralField, p: f64) -> f64 {
    lp_norm_of(&magnitude_of(&f.physical()), p, f.grid().cell_volume())
}

fn lr_sum(terms: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        terms.iter().fold(0.0f64, |m, &t| m.max(t))
    } else {
        terms.iter().map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// Besov norm with per-block detail.
pub fn besov_norm_report(f: &SpectralField, spec: &BesovSpec) -> Result<BesovNorm> {
    if !(spec.p >= 1.0 && spec.r >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Besov indices need p, r >= 1 (got p = {}, r = {})",
            spec.p, spec.r
        )));
    }
    if spec.homogeneous && f.relative_mean() > 1e-12 {
        return Err(Error::NonzeroMean);
    }
    let fam = DyadicFamily::new(f.grid());
    let kind = if spec.homogeneous { BlockKind::HomogBlock } else { BlockKind::InhomogBlock };
    let range = fam.norm_range(spec.homogeneous);
    let (q_lo, q_hi) = (*range.start(), *range.end());
    let mut terms = Vec::new();
    let mut covered = SpectralField::zeros(f.grid(), f.rank());
    for q in range {
        let b = fam.block(f, q, kind)?;
        terms.push(2f64.powf(q as f64 * spec.s) * block_lp(&b, spec.p));
        covered = covered.add(&b)?;
    }
    let total = if spec.homogeneous { f.without_mean() } else { f.clone() };
    let norm = total.l2_norm();
    let truncation = if norm == 0.0 { 0.0 } else { total.sub(&covered)?.l2_norm() / norm };
    Ok(BesovNorm {
        value: lr_sum(&terms, spec.r),
        q_lo,
        q_hi,
        terms,
        truncation,
    })
}

/// `|| (2^{qs} ||block_q f||_p)_q ||_{l^r}` over the representable block range.
pub fn besov_norm(f: &SpectralField, spec: &BesovSpec) -> Result<f64> {
    Ok(besov_norm_report(f, spec)?.value)
}

/// Polynomial weight `<x - c>^{2 beta}` with `<x> = (e + |x|^2)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSpec {
    pub beta: f64,
    /// Weight center as an absolute position; `None` means the box center.
    pub center: Option<[f64; 3]>,
}

impl WeightSpec {
    pub fn centered(beta: f64) -> Self {
        Self { beta, center: None }
    }

    /// `<x - c>` at every grid point, using the nearest periodic image.
    pub fn bracket(&self, grid: &Grid) -> Vec<f64> {
        bracket_values(grid, self.center)
    }

    /// `w = <x - c>^{2 beta}` at every grid point.
    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        self.bracket(grid).iter().map(|b| b.powf(2.0 * self.beta)).collect()
    }
}

/// Japanese bracket `(e + |x - c|^2)^{1/2}` on grid points.
pub fn bracket_values(grid: &Grid, center: Option<[f64; 3]>) -> Vec<f64> {
    let l = grid.box_length();
    let h = grid.spacing();
    let c = center.unwrap_or([0.5 * l; 3]);
    (0..grid.len())
        .map(|i| {
            let idx = grid.unflatten(i);
            let mut r2 = 0.0;
            for a in 0..grid.dim() {
                let mut d = idx[a] as f64 * h - c[a];
                d -= l * (d / l).round();
                r2 += d * d;
            }
            (std::f64::consts::E + r2).sqrt()
        })
        .collect()
}

/// `(int |f|^2 w)^{1/2} + (int |Lambda^s f|^2 w)^{1/2}`.
pub fn weighted_sobolev_norm(f: &SpectralField, s: f64, w: &WeightSpec) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidArgument(format!("weighted Sobolev order must be >= 0, got {s}")));
    }
    let weight = w.values(f.grid());
    let dv = f.grid().cell_volume();
    let weighted = |g: &SpectralField| -> f64 {
        let mag = g.magnitude();
        (mag.iter().zip(&weight).map(|(m, w)| m * m * w).sum::<f64>() * dv).sqrt()
    };
    let ls = crate::spectral::fractional_laplacian(f, s)?;
    Ok(weighted(f) + weighted(&ls))
}

/// The three pieces of Bony's decomposition `fg = T_f g + T_g f + R(f, g)`.
#[derive(Debug, Clone)]
pub struct Paraproduct {
    /// `T_f g = sum_q S_{q-1} f * block_q g`.
    pub low_high: SpectralField,
    /// `T_g f = sum_q S_{q-1} g * block_q f`.
    pub high_low: SpectralField,
    /// `R(f, g) = sum_q widened_q f * block_q g`.
    pub remainder: SpectralField,
}

/// Homogeneous Bony decomposition of the dealiased product of two scalars.
pub fn paraproduct(f: &SpectralField, g: &SpectralField) -> Result<Paraproduct> {
    crate::field::require_rank(f, Rank::Scalar)?;
    crate::field::require_rank(g, Rank::Scalar)?;
    crate::field::require_same_grid(f, g)?;
    let grid = f.grid().clone();
    let fam = DyadicFamily::new(&grid);
    let fd = f.dealias();
    let gd = g.dealias();
    let len = grid.len();
    let mut acc = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    for q in fam.q_min()..=fam.q_max() {
        let fq = fam.block(&fd, q, BlockKind::HomogBlock)?.physical().remove(0);
        let gq = fam.block(&gd, q, BlockKind::HomogBlock)?.physical().remove(0);
        let f_low = fam.block(&fd, q - 1, BlockKind::HomogLowpass)?.physical().remove(0);
        let g_low = fam.block(&gd, q - 1, BlockKind::HomogLowpass)?.physical().remove(0);
        let f_wide = fam.widened_block(&fd, q)?.physical().remove(0);
        for i in 0..len {
            acc[0][i] += f_low[i] * gq[i];
            acc[1][i] += g_low[i] * fq[i];
            acc[2][i] += f_wide[i] * gq[i];
        }
    }
    let [a, b, c] = acc;
    let to_field = |v: Vec<f64>| -> Result<SpectralField> {
        Ok(SpectralField::from_physical(&grid, Rank::Scalar, &[v])?.dealias())
    };
    Ok(Paraproduct {
        low_high: to_field(a)?,
        high_low: to_field(b)?,
        remainder: to_field(c)?,
    })
}

/// `[block_q, x (x)] v` computed two ways.
///
/// `direct` is `block_q(x_a v_c) - x_a block_q(v_c)` with the centered
/// sawtooth coordinate `x - x_c`; `via_identity` applies the symbol
/// `-i 2^-q (d_a phi)(2^-q k)` to `v_c`. Component `(a, c)` is stored at
/// `a * ncomp + c`; a scalar `v` gives a vector, a vector `v` a tensor.
pub fn commutator_x_block(v: &SpectralField, q: i32) -> Result<(SpectralField, SpectralField)> {
    let grid = v.grid().clone();
    let dim = grid.dim();
    let out_rank = match v.rank() {
        Rank::Scalar => Rank::Vector,
        Rank::Vector => Rank::Tensor,
        Rank::Tensor => {
            return Err(Error::RankMismatch {
                expected: "scalar or vector".into(),
                found: "tensor".into(),
            })
        }
    };
    let fam = DyadicFamily::new(&grid);
    fam.check_range(q, BlockKind::HomogBlock)?;
    let nc = v.num_components();
    let coords: Vec<Vec<f64>> = (0..dim)
        .map(|a| (0..grid.len()).map(|i| grid.centered_position(i)[a]).collect())
        .collect();
    let vp = v.physical();
    let vq = fam.block(v, q, BlockKind::HomogBlock)?.physical();

    let mut direct = Vec::with_capacity(dim * nc);
    for x in &coords {
        for c in 0..nc {
            let xv: Vec<f64> = x.iter().zip(&vp[c]).map(|(a, b)| a * b).collect();
            let xv = SpectralField::from_physical(&grid, Rank::Scalar, &[xv])?;
            let bx = fam.block(&xv, q, BlockKind::HomogBlock)?.physical().remove(0);
            direct.push(bx.iter().zip(x).zip(&vq[c]).map(|((b, x), w)| b - x * w).collect());
        }
    }
    let direct = SpectralField::from_physical(&grid, out_rank, &direct)?;

    let scale = 2f64.powi(-q);
    let kmag = grid.kmag();
    let mut via = Vec::with_capacity(dim * nc);
    for a in 0..dim {
        for c in 0..nc {
            let coeffs: Vec<Complex64> = v
                .component(c)
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    let r = kmag[i];
                    if r == 0.0 {
                        return Complex64::default();
                    }
                    let ka = grid.wavevector_odd(i)[a];
                    z * (-I * scale * phi_derivative(scale * r) * scale * ka / (scale * r))
                })
                .collect();
            via.push(coeffs);
        }
    }
    let via = SpectralField::from_coeffs(&grid, out_rank, via, v.is_real())?;
    Ok((direct, via))
}
