//! Damped Picard iteration for the profile `v` on top of mollified data
//! `u0 = exp(-A) U0`.
//!
//! The fixed point satisfies `v = D(-(u0 + v) (x) (u0 + v) + f)` where `D` is
//! the Duhamel map over `s in (0, 1)`; see [`duhamel_map_profile`] for how the
//! data part is carried.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{require_rank, Rank, SpectralField};
use crate::semigroup::{duhamel_map, duhamel_map_profile, heat_step, DuhamelQuadrature};
use crate::solver::{check_profile_alpha, HistoryRecord};
use crate::spectral::{leray_project, pressure_from_tensor, relative_divergence, tensor_square};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions {
    /// Stop when `||v_{n+1} - v_n|| / ||v_{n+1}||` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping `theta` in `(0, 1]`.
    pub damping: f64,
    pub quad: DuhamelQuadrature,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 40,
            damping: 1.0,
            quad: DuhamelQuadrature::default(),
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        self.quad.validate()
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub v: SpectralField,
    pub pressure: SpectralField,
    /// One row per iteration; `time` is the profile time 1.
    pub history: Vec<HistoryRecord>,
    /// Largest relative Duhamel tail estimate seen.
    pub tail_relative: f64,
}

/// Consecutive growing updates that trigger an abort.
const GROWTH_LIMIT: usize = 3;

/// Solve the profile system by damped Picard iteration from `v = 0`.
///
/// `data` is the homogeneous (windowed, divergence-free) `U0`. `force` is a tensor `f` entering as `div f`. Fails with
/// `AmplitudeTooLarge` when the update grows for three consecutive
/// iterations, blows up, or pushes the iterate out of the representable
/// ball; `NotConverged` after `max_iter`.
pub fn picard_profile_solve(
    data: &SpectralField,
    force: Option<&SpectralField>,
    alpha: f64,
    opts: &PicardOptions,
) -> Result<PicardResult> {
    require_rank(data, Rank::Vector)?;
    check_profile_alpha(alpha)?;
    opts.validate()?;
    if let Some(f) = force {
        require_rank(f, Rank::Tensor)?;
        if f.grid() != data.grid() {
            return Err(Error::GridMismatch);
        }
    }
    let grid = data.grid().clone();
    let u0 = heat_step(data, 1.0, alpha)?;
    // The force contribution does not change between iterations.
    let forced = match force {
        Some(f) if f.l2_norm() > 0.0 => Some(duhamel_map(f, alpha, &opts.quad)?),
        _ => None,
    };
    let mut tail = forced.as_ref().map_or(0.0, |d| d.tail_relative);
    let mut v = SpectralField::zeros(&grid, Rank::Vector);
    let mut history = Vec::new();
    let mut updates: Vec<f64> = Vec::new();
    let mut growing = 0usize;
    for iter in 1..=opts.max_iter {
        let mut image = if u0.l2_norm() > 0.0 || v.l2_norm() > 0.0 {
            // An iterate that spreads out of the representable ball is diverging.
            let d = match duhamel_map_profile(data, &v, alpha, &opts.quad) {
                Err(Error::DilationNotRepresentable { .. }) if iter > 1 => {
                    return Err(Error::AmplitudeTooLarge { history: updates });
                }
                other => other?,
            };
            tail = tail.max(d.tail_relative);
            d.field
        } else {
            SpectralField::zeros(&grid, Rank::Vector)
        };
        if let Some(d) = &forced {
            image = image.add(&d.field)?;
        }
        let next = leray_project(&v.lincomb(1.0 - opts.damping, &image, opts.damping)?)?;
        let step = next.sub(&v)?.l2_norm();
        let norm = next.l2_norm();
        let rel = if norm > 0.0 { step / norm } else { step };
        history.push(HistoryRecord {
            iter_or_step: iter,
            time: 1.0,
            l2_update: rel,
            div_residual: relative_divergence(&next)?,
            max_velocity: next.lp_norm(f64::INFINITY),
        });
        if !step.is_finite() || !norm.is_finite() {
            updates.push(step);
            return Err(Error::AmplitudeTooLarge { history: updates });
        }
        if updates.last().is_some_and(|&prev| step > prev) {
            growing += 1;
        } else {
            growing = 0;
        }
        updates.push(step);
        v = next;
        log::debug!("picard iteration {iter}: relative update {rel:.3e}");
        if growing >= GROWTH_LIMIT {
            return Err(Error::AmplitudeTooLarge { history: updates });
        }
        if rel < opts.tol {
            let u = u0.add(&v)?;
            let mut g = tensor_square(&u)?.scale(-1.0);
            if let Some(f) = force {
                g = g.add(f)?;
            }
            return Ok(PicardResult {
                pressure: pressure_from_tensor(&g)?,
                v,
                history,
                tail_relative: tail,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        last: history.last().map_or(f64::NAN, |h| h.l2_update),
        history: history.iter().map(|h| h.l2_update).collect(),
    })
}
