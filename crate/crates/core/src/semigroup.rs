//! Fractional heat semigroup `exp(-t (-Delta)^alpha)`, the Oseen-type
//! composite `P exp(-t A) div`, and the self-similar Duhamel map
//!
//! `D[G] = int_0^1 exp(-(1-s) A) P div( s^{1/alpha - 2} G(. / s^{1/(2 alpha)}) ) ds`.

use serde::Serialize;

use crate::dilation::{require_concentrated, Dilation};
use crate::error::{Error, Result};
use crate::field::{require_rank, Rank, SpectralField};
use crate::grid::Grid;
use crate::lp::{BlockKind, DyadicFamily};
use crate::quadrature::gauss_legendre_on;
use crate::report::VerificationReport;
use crate::spectral::{apply_radial, divergence_tensor, leray_project, tensor_square};

/// Dissipation order and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupParams {
    pub alpha: f64,
    pub t: f64,
}

impl SemigroupParams {
    pub fn new(alpha: f64, t: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_time(t)?;
        Ok(Self { alpha, t })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Multiplier `exp(-t |k|^{2 alpha})`; the zero mode is unchanged.
pub fn heat_step(f: &SpectralField, t: f64, alpha: f64) -> Result<SpectralField> {
    check_alpha(alpha)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_radial(f, 1.0, |k| (-t * k.powf(2.0 * alpha)).exp()))
}

/// `P exp(-t A) div T` for a tensor `T`.
pub fn oseen_apply(t_field: &SpectralField, t: f64, alpha: f64) -> Result<SpectralField> {
    require_rank(t_field, Rank::Tensor)?;
    let d = divergence_tensor(t_field)?;
    leray_project(&heat_step(&d, t, alpha)?)
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Fit the decay rate of `t -> ||block_q P exp(-t A) f||_p` for a seeded
/// random vector field and compare it with `2^{2 q alpha}`.
///
/// The measured constant `slope / (-2^{2 q alpha})` must fall in
/// `[(3/4)^{2 alpha} - delta, (8/3)^{2 alpha} + delta]`, with `delta = 0.1`
/// for `p <= 2` and `0.2` otherwise.
/// Eight probe times `t = tau 2^{-2 q alpha}`, `tau` in [0.05, 0.4]: every block is
/// sampled at the same point of its own decay, so slopes of different `q` compare directly.
pub fn scaled_probe_times(q: i32, alpha: f64) -> Vec<f64> {
    let scale = 2f64.powf(-2.0 * q as f64 * alpha);
    (0..8).map(|i| (0.05 + 0.05 * i as f64) * scale).collect()
}

pub fn kernel_annulus_decay_probe(
    grid: &Grid,
    q: i32,
    alpha: f64,
    t_list: &[f64],
    p: f64,
    seed: u64,
) -> Result<VerificationReport> {
    check_alpha(alpha)?;
    if t_list.len() < 2 || t_list.windows(2).any(|w| w[1] <= w[0]) || t_list[0] <= 0.0 {
        return Err(Error::InvalidArgument("t_list must be increasing, positive, length >= 2".into()));
    }
    let fam = DyadicFamily::new(grid);
    if q < fam.q_min() || q > fam.q_max_interior() {
        return Err(Error::BlockOutOfRange {
            q,
            lo: fam.q_min(),
            hi: fam.q_max_interior(),
        });
    }
    let f = SpectralField::random(grid, Rank::Vector, seed);
    let fq = leray_project(&fam.block(&f, q, BlockKind::HomogBlock)?)?;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut dropped = 0;
    for &t in t_list {
        let v = heat_step(&fq, t, alpha)?;
        let norm = if p == 2.0 { v.l2_norm() } else { v.lp_norm(p) };
        if norm < 1e-280 || !norm.is_finite() {
            dropped += 1;
            continue;
        }
        ts.push(t);
        logs.push(norm.ln());
    }
    let delta = if p <= 2.0 { 0.1 } else { 0.2 };
    let lo = 0.75f64.powf(2.0 * alpha) - delta;
    let hi = (8.0f64 / 3.0).powf(2.0 * alpha) + delta;
    let mut rep = VerificationReport::new(
        "kernel_decay",
        format!("slope / -2^(2 q alpha) in [(3/4)^(2a) - {delta}, (8/3)^(2a) + {delta}]"),
    )
    .param("q", q as f64)
    .param("alpha", alpha)
    .param("p", p)
    .param("seed", seed as f64);
    if dropped > 0 {
        rep.note(format!("{dropped} time(s) dropped by the underflow guard"));
    }
    if ts.len() < 2 {
        rep.note("fewer than two usable times; slope undefined");
        rep.measure("slope_ratio", f64::NAN, lo, hi);
        return Ok(rep);
    }
    let slope = ls_slope(&ts, &logs);
    rep.set_param("slope", slope);
    rep.measure("slope_ratio", slope / -2f64.powf(2.0 * q as f64 * alpha), lo, hi);
    Ok(rep)
}

/// Quadrature controls for the Duhamel integral over `s in (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuhamelQuadrature {
    /// Lower cutoff; the neglected piece `(0, s_min)` is estimated, not added.
    pub s_min: f64,
    /// Gauss-Legendre nodes per dyadic level.
    pub nodes: usize,
    /// Exponent `g` of the substitution `1 - s = tau_0 u^g` in the cell next to `s = 1`.
    pub grading: f64,
}

impl Default for DuhamelQuadrature {
    fn default() -> Self {
        Self {
            s_min: 1e-2,
            nodes: 6,
            grading: 2.0,
        }
    }
}

impl DuhamelQuadrature {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 1e-4 && self.s_min < 0.5) {
            return Err(Error::InvalidArgument(format!("s_min must lie in (1e-4, 0.5), got {}", self.s_min)));
        }
        if self.nodes < 4 {
            return Err(Error::InvalidArgument(format!("need at least 4 nodes per level, got {}", self.nodes)));
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return Err(Error::InvalidArgument(format!("grading must be >= 1, got {}", self.grading)));
        }
        Ok(())
    }

    /// `(s, weight)` pairs in increasing `s`. `k_max` is the largest active
    /// wavenumber; the mesh near `s = 1` resolves `exp(-(1-s) k_max^{2 alpha})`.
    pub fn rule(&self, alpha: f64, k_max: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let e = 2.0 * alpha;
        // [s_min, 1/2]: dyadic levels, s = sigma^{2 alpha} inside each.
        let mut a = self.s_min;
        while a < 0.5 {
            let b = (2.0 * a).min(0.5);
            for (sig, w) in gauss_legendre_on(self.nodes, a.powf(1.0 / e), b.powf(1.0 / e)) {
                out.push((sig.powf(e), w * e * sig.powf(e - 1.0)));
            }
            a = b;
        }
        // [1/2, 1]: dyadic levels in tau = 1 - s down to tau * k_max^{2 alpha}
        // ~ 1/20, then a last cell [0, tau_0] with tau = tau_0 u^g.
        let g = self.grading;
        let stiff = k_max.powf(e).max(1.0);
        let mut near_one = Vec::new();
        let mut hi = 0.5;
        while hi * stiff > 0.05 && hi > 1e-12 {
            for (tau, w) in gauss_legendre_on(self.nodes, 0.5 * hi, hi) {
                near_one.push((1.0 - tau, w));
            }
            hi *= 0.5;
        }
        for (u, w) in gauss_legendre_on(self.nodes, 0.0, 1.0) {
            near_one.push((1.0 - hi * u.powf(g), w * hi * g * u.powf(g - 1.0)));
        }
        near_one.sort_by(|x, y| x.0.total_cmp(&y.0));
        out.extend(near_one);
        out
    }
}

/// Output of the Duhamel map with its quadrature metadata.
#[derive(Debug, Clone)]
pub struct DuhamelResult {
    pub field: SpectralField,
    /// Estimated `L^2` size of the neglected piece over `(0, s_min)`.
    pub tail_estimate: f64,
    /// `tail_estimate / ||field||` (0 for a zero field).
    pub tail_relative: f64,
    /// Fraction of the input mass inside the representability radius.
    pub mass_fraction: f64,
    pub nodes: usize,
}

/// Representability radius, as a fraction of the box length.
pub const MASS_RADIUS: f64 = 0.45;
/// Required mass fraction inside [`MASS_RADIUS`].
pub const MASS_FRACTION: f64 = 0.999;

fn check_duhamel_alpha(alpha: f64) -> Result<()> {
    if !(5.0 / 6.0 - 1e-3..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("Duhamel map needs alpha in [5/6, 1], got {alpha}")));
    }
    Ok(())
}

fn duhamel_with<F>(grid: &Grid, alpha: f64, quad: &DuhamelQuadrature, mass_fraction: f64, integrand: F) -> Result<DuhamelResult>
where
    F: Fn(f64, &Dilation) -> Result<SpectralField>,
{
    check_duhamel_alpha(alpha)?;
    quad.validate()?;
    let k_max = grid.fundamental() * grid.dealias_limit() as f64 * (grid.dim() as f64).sqrt();
    let rule = quad.rule(alpha, k_max);
    let mut acc = SpectralField::zeros(grid, Rank::Vector);
    let mut first = Vec::new();
    for (idx, &(s, w)) in rule.iter().enumerate() {
        let lambda = s.powf(-1.0 / (2.0 * alpha));
        let dil = Dilation::new(grid, lambda)?;
        let g_s = integrand(s, &dil)?;
        let term = oseen_apply(&g_s, 1.0 - s, alpha)?;
        if idx < 2 {
            first.push((s, term.l2_norm()));
        }
        acc = acc.lincomb(1.0, &term, w)?;
    }
    let norm = acc.l2_norm();
    // Power-law extrapolation ||F(s)|| ~ c s^gamma below s_min.
    let tail_estimate = match first.as_slice() {
        [(s1, f1), (s2, f2)] if *f1 > 0.0 && *f2 > 0.0 => {
            let gamma = (f2 / f1).ln() / (s2 / s1).ln();
            if gamma > -1.0 {
                f1 * s1.powf(-gamma) * quad.s_min.powf(gamma + 1.0) / (gamma + 1.0)
            } else {
                f64::INFINITY
            }
        }
        _ => 0.0,
    };
    Ok(DuhamelResult {
        tail_relative: if norm > 0.0 { tail_estimate / norm } else { 0.0 },
        field: acc,
        tail_estimate,
        mass_fraction,
        nodes: rule.len(),
    })
}

/// Duhamel map of a tensor field `G`.
///
/// Fails with `DilationNotRepresentable` unless 99.9% of the `L^2` mass of `G`
/// lies within `0.45 L` of the center.
pub fn duhamel_map(g: &SpectralField, alpha: f64, quad: &DuhamelQuadrature) -> Result<DuhamelResult> {
    require_rank(g, Rank::Tensor)?;
    let mass = require_concentrated(g, MASS_RADIUS, MASS_FRACTION)?;
    duhamel_with(g.grid(), alpha, quad, mass, |s, d| Ok(d.apply(g)?.scale(s.powf(1.0 / alpha - 2.0))))
}

/// Duhamel map of `G = -w (x) w`, dilating `w` before forming the product.
///
/// Equivalent to `duhamel_map(-w (x) w)` up to dealiasing, at a third of the
/// cost in 3D.
pub fn duhamel_map_quadratic(w: &SpectralField, alpha: f64, quad: &DuhamelQuadrature) -> Result<DuhamelResult> {
    require_rank(w, Rank::Vector)?;
    let g = tensor_square(w)?;
    let mass = require_concentrated(&g, MASS_RADIUS, MASS_FRACTION)?;
    duhamel_with(w.grid(), alpha, quad, mass, |s, d| {
        let wd = d.apply(w)?;
        Ok(tensor_square(&wd)?.scale(-s.powf(1.0 / alpha - 2.0)))
    })
}

/// Duhamel map of `G = -U (x) U` for the profile `U = exp(-A) U0 + v`, with
/// the data part evolved by the semigroup instead of dilated.
///
/// For homogeneous `U0` the self-similar velocity at time `s` is
/// `exp(-sA) U0 + s^{-(2a-1)/(2a)} v(. / s^{1/(2a)})`, so the integrand is
/// `-u(s) (x) u(s)` in physical variables. Only `v` has to be representable
/// under compression; a windowed `U0` keeps its window at every `s`.
///
/// The mass condition is applied to `G` at `s = 1`, as for [`duhamel_map`].
pub fn duhamel_map_profile(
    data: &SpectralField,
    v: &SpectralField,
    alpha: f64,
    quad: &DuhamelQuadrature,
) -> Result<DuhamelResult> {
    require_rank(data, Rank::Vector)?;
    require_rank(v, Rank::Vector)?;
    if data.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let g1 = tensor_square(&heat_step(data, 1.0, alpha)?.add(v)?)?;
    let mass = require_concentrated(&g1, MASS_RADIUS, MASS_FRACTION)?;
    let beta = (2.0 * alpha - 1.0) / (2.0 * alpha);
    duhamel_with(v.grid(), alpha, quad, mass, |s, d| {
        let u = heat_step(data, s, alpha)?.lincomb(1.0, &d.apply(v)?, s.powf(-beta))?;
        Ok(tensor_square(&u)?.scale(-1.0))
    })
}
