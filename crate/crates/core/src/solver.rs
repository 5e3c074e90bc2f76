//! Self-similar initial data, time stepping of the fractional Navier-Stokes
//! system, and profile extraction at `t = 1`.

use serde::{Deserialize, Serialize};

use crate::dilation::dilate;
use crate::error::{Error, Result};
use crate::field::{require_rank, Rank, SpectralField};
use crate::grid::Grid;
use crate::lp::smooth_step;
use crate::semigroup::heat_step;
use crate::spectral::{
    apply_radial, divergence_tensor, fractional_laplacian, gradient, leray_project, pressure_from_tensor,
    relative_divergence, tensor_square, x_dot_grad,
};

/// Inner and outer radii of the smooth data window, as fractions of `L`.
pub const WINDOW_INNER: f64 = 0.35;
pub const WINDOW_OUTER: f64 = 0.45;

/// Divergence tolerance every stored velocity must meet.
pub const DIV_TOL: f64 = 1e-10;

/// Smooth radial cutoff: 1 for `r <= 0.35 L`, 0 for `r >= 0.45 L`.
pub fn window(r: f64, box_length: f64) -> f64 {
    let a = WINDOW_INNER * box_length;
    let b = WINDOW_OUTER * box_length;
    1.0 - smooth_step((r - a) / (b - a))
}

/// Values of `sigma` on a latitude-longitude mesh of the unit sphere.
///
/// Node `(i, j)` sits at polar angle `pi i / (n_theta - 1)` and azimuth
/// `2 pi j / n_phi`; `values[i * n_phi + j]` is the vector there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereTable {
    pub n_theta: usize,
    pub n_phi: usize,
    pub values: Vec<[f64; 3]>,
}

impl SphereTable {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_phi < 3 || self.values.len() != self.n_theta * self.n_phi {
            return Err(Error::InvalidArgument(format!(
                "sphere table needs n_theta >= 2, n_phi >= 3 and {} values",
                self.n_theta * self.n_phi
            )));
        }
        Ok(())
    }

    /// Bilinear interpolation in `(theta, phi)`.
    pub fn eval(&self, omega: [f64; 3]) -> [f64; 3] {
        use std::f64::consts::PI;
        let theta = omega[2].clamp(-1.0, 1.0).acos();
        let phi = omega[1].atan2(omega[0]).rem_euclid(2.0 * PI);
        let ti = theta / PI * (self.n_theta - 1) as f64;
        let pj = phi / (2.0 * PI) * self.n_phi as f64;
        let i0 = (ti.floor() as usize).min(self.n_theta - 2);
        let j0 = pj.floor() as usize % self.n_phi;
        let j1 = (j0 + 1) % self.n_phi;
        let (a, b) = (ti - i0 as f64, pj - pj.floor());
        let v = |i: usize, j: usize| self.values[i * self.n_phi + j];
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = (1.0 - a) * ((1.0 - b) * v(i0, j0)[c] + b * v(i0, j1)[c])
                + a * ((1.0 - b) * v(i0 + 1, j0)[c] + b * v(i0 + 1, j1)[c]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// `sigma(w) = (-w_2, w_1, 0)`.
    RotationalCanonical,
    UserTable(SphereTable),
}

/// Angular profile `sigma` of the homogeneous data `U0 = sigma(x/|x|) / |x|^{2 alpha - 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    pub amplitude: f64,
}

impl SigmaSpec {
    pub fn canonical(amplitude: f64) -> Self {
        Self {
            kind: SigmaKind::RotationalCanonical,
            amplitude,
        }
    }

    pub fn user_table(amplitude: f64, table: SphereTable) -> Result<Self> {
        table.validate()?;
        Ok(Self {
            kind: SigmaKind::UserTable(table),
            amplitude,
        })
    }

    /// `sigma` at a unit vector (components beyond `dim` are ignored by callers).
    pub fn eval(&self, omega: [f64; 3]) -> [f64; 3] {
        let v = match &self.kind {
            SigmaKind::RotationalCanonical => [-omega[1], omega[0], 0.0],
            SigmaKind::UserTable(t) => t.eval(omega),
        };
        v.map(|c| self.amplitude * c)
    }
}

pub(crate) fn check_profile_alpha(alpha: f64) -> Result<()> {
    if !(5.0 / 6.0 - 1e-3..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [5/6, 1], got {alpha}")));
    }
    Ok(())
}

/// Homogeneous data on the grid.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub alpha: f64,
    /// Windowed pointwise samples of `U0` (origin value 0).
    pub sampled: SpectralField,
    /// `sampled` after Leray projection: the data that is evolved.
    pub data: SpectralField,
    /// Mollified data `u0 = exp(-A) U0`.
    pub u0: SpectralField,
}

/// Sample `U0 = sigma(x/|x|) / |x|^{2 alpha - 1}` about the box center,
/// window it, project it and mollify it with the semigroup at `t = 1`.
pub fn make_initial_data(sigma: &SigmaSpec, alpha: f64, grid: &Grid) -> Result<InitialData> {
    check_profile_alpha(alpha)?;
    if grid.dim() < 2 {
        return Err(Error::InvalidGrid("self-similar data needs dim 2 or 3".into()));
    }
    if let SigmaKind::UserTable(t) = &sigma.kind {
        t.validate()?;
    }
    let dim = grid.dim();
    let l = grid.box_length();
    let sampled = SpectralField::from_fn(grid, Rank::Vector, |x, out| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let s = sigma.eval([x[0] / r, x[1] / r, x[2] / r]);
        let scale = window(r, l) / r.powf(2.0 * alpha - 1.0);
        for c in 0..dim {
            out[c] = s[c] * scale;
        }
    });
    let data = leray_project(&sampled)?;
    let u0 = heat_step(&data, 1.0, alpha)?;
    Ok(InitialData {
        alpha,
        sampled,
        data,
        u0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IntegratingFactorRk2,
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepper {
    pub dt: f64,
    pub scheme: Scheme,
    /// Abort when `max|u| dt / h` exceeds this.
    pub cfl_safety: f64,
}

impl Default for TimeStepper {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            scheme: Scheme::IntegratingFactorRk2,
            cfl_safety: 0.5,
        }
    }
}

impl TimeStepper {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        Ok(())
    }
}

/// Run-time switches for [`evolve_fns`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Times at which to store the velocity; `t_end` is always stored.
    pub snapshot_times: Vec<f64>,
    /// Disable the quadratic term (pure dissipation, diagnostic use).
    pub nonlinear: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            snapshot_times: vec![0.25, 0.5, 1.0],
            nonlinear: true,
        }
    }
}

/// One row of a residual history (time step or Picard iteration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub iter_or_step: usize,
    pub time: f64,
    pub l2_update: f64,
    pub div_residual: f64,
    pub max_velocity: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub velocity: SpectralField,
}

/// Profile `v` and pressure `P` at `t = 1`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub v: SpectralField,
    pub pressure: SpectralField,
}

/// State and diagnostics of one solver configuration.
#[derive(Debug, Clone)]
pub struct ProfileRun {
    pub alpha: f64,
    pub grid: Grid,
    pub sigma: Option<SigmaSpec>,
    /// Data the trajectory started from (`U0`), if known.
    pub initial: Option<SpectralField>,
    pub snapshots: Vec<Snapshot>,
    pub history: Vec<HistoryRecord>,
    pub profile: Option<Profile>,
}

impl ProfileRun {
    /// A run holding only the given snapshots, e.g. synthetic data.
    pub fn from_snapshots(alpha: f64, snapshots: Vec<Snapshot>) -> Result<Self> {
        let grid = snapshots
            .first()
            .map(|s| s.velocity.grid().clone())
            .ok_or_else(|| Error::InvalidArgument("at least one snapshot required".into()))?;
        Ok(Self {
            alpha,
            grid,
            sigma: None,
            initial: None,
            snapshots,
            history: Vec::new(),
            profile: None,
        })
    }

    /// Snapshot at time `t` (to within `1e-9`).
    pub fn snapshot(&self, t: f64) -> Result<&SpectralField> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9)
            .map(|s| &s.velocity)
            .ok_or(Error::MissingSnapshot(t))
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

/// `-P div(u (x) u)` and the grid max of `|u|` (of the dealiased field).
fn transport(u: &SpectralField) -> Result<(SpectralField, f64)> {
    let t = tensor_square(u)?;
    let max = u.dealias().lp_norm(f64::INFINITY);
    Ok((leray_project(&divergence_tensor(&t)?)?.scale(-1.0), max))
}

fn check_finite(f: &SpectralField, time: f64) -> Result<()> {
    if f.coeffs().iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotFinite { time });
    }
    Ok(())
}

/// Integrate `u_t + P div(u (x) u) + (-Delta)^alpha u = 0` from `u_init` to `t_end`.
///
/// The dissipation is treated exactly (integrating factor) or implicitly
/// (IMEX Euler); the nonlinearity is explicit and dealiased, and every stage
/// is Leray-projected. Steps are shortened to land on snapshot times.
pub fn evolve_fns(
    u_init: &SpectralField,
    alpha: f64,
    t_end: f64,
    ts: &TimeStepper,
    opts: &EvolveOptions,
) -> Result<ProfileRun> {
    require_rank(u_init, Rank::Vector)?;
    ts.validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    let div0 = relative_divergence(u_init)?;
    if div0 > 1e-8 {
        return Err(Error::InvalidArgument(format!("initial data is not divergence-free (relative {div0:.2e})")));
    }
    let grid = u_init.grid().clone();
    let h = grid.spacing();
    let mut targets: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= t_end + 1e-12)
        .chain(std::iter::once(t_end))
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let mut run = ProfileRun {
        alpha,
        grid: grid.clone(),
        sigma: None,
        initial: Some(u_init.clone()),
        snapshots: Vec::new(),
        history: Vec::new(),
        profile: None,
    };
    let mut u = leray_project(u_init)?;
    let mut t = 0.0;
    let mut step = 0usize;
    let e = 2.0 * alpha;
    for &target in &targets {
        while target - t > 1e-12 {
            let dt = ts.dt.min(target - t);
            let (n0, umax) = if opts.nonlinear {
                transport(&u)?
            } else {
                (SpectralField::zeros(&grid, Rank::Vector), u.lp_norm(f64::INFINITY))
            };
            let cfl = umax * dt / h;
            if cfl > ts.cfl_safety {
                return Err(Error::Cfl {
                    time: t,
                    cfl,
                    limit: ts.cfl_safety,
                });
            }
            let next = match ts.scheme {
                Scheme::IntegratingFactorRk2 => {
                    let decay = |f: &SpectralField| apply_radial(f, 1.0, |k| (-dt * k.powf(e)).exp());
                    let eu = decay(&u);
                    if opts.nonlinear {
                        let en0 = decay(&n0);
                        let a = eu.lincomb(1.0, &en0, dt)?;
                        let (n1, _) = transport(&a)?;
                        eu.add(&en0.add(&n1)?.scale(0.5 * dt))?
                    } else {
                        eu
                    }
                }
                Scheme::ImexEuler => {
                    let rhs = u.lincomb(1.0, &n0, dt)?;
                    apply_radial(&rhs, 1.0, |k| 1.0 / (1.0 + dt * k.powf(e)))
                }
            };
            let mut next = leray_project(&next)?;
            t = if target - (t + dt) <= 1e-12 { target } else { t + dt };
            check_finite(&next, t)?;
            let mut div = relative_divergence(&next)?;
            if div > DIV_TOL {
                next = leray_project(&next)?;
                div = relative_divergence(&next)?;
            }
            step += 1;
            run.history.push(HistoryRecord {
                iter_or_step: step,
                time: t,
                l2_update: next.sub(&u)?.l2_norm(),
                div_residual: div,
                max_velocity: umax,
            });
            u = next;
        }
        if opts.snapshot_times.iter().any(|&s| (s - target).abs() <= 1e-12) || (target - t_end).abs() <= 1e-12 {
            run.snapshots.push(Snapshot {
                time: target,
                velocity: u.clone(),
            });
        }
    }
    Ok(run)
}

/// Evolve homogeneous data built from `sigma` and record it in the run.
pub fn evolve_from_sigma(
    sigma: &SigmaSpec,
    alpha: f64,
    grid: &Grid,
    t_end: f64,
    ts: &TimeStepper,
    opts: &EvolveOptions,
) -> Result<(InitialData, ProfileRun)> {
    let init = make_initial_data(sigma, alpha, grid)?;
    let mut run = evolve_fns(&init.data, alpha, t_end, ts, opts)?;
    run.sigma = Some(sigma.clone());
    Ok((init, run))
}

/// `||lambda^{2 alpha - 1} I_lambda[u(t1)] - u(t2)|| / ||u(t2)||` over the
/// window `r <= 0.35 L`, with `lambda = (t1 / t2)^{1 / (2 alpha)}`.
///
/// For an exactly self-similar `u(x, t) = t^{-(2a-1)/(2a)} U(x / t^{1/(2a)})`
/// the dilated early snapshot reproduces the late one.
pub fn self_similarity_residual(run: &ProfileRun, t1: f64, t2: f64, alpha: f64) -> Result<f64> {
    let u1 = run.snapshot(t1)?;
    let u2 = run.snapshot(t2)?;
    if t1 == t2 {
        return Ok(0.0);
    }
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::InvalidArgument("snapshot times must be positive".into()));
    }
    let lambda = (t1 / t2).powf(1.0 / (2.0 * alpha));
    let predicted = dilate(u1, lambda)?.scale(lambda.powf(2.0 * alpha - 1.0));
    let radius = WINDOW_INNER * run.grid.box_length();
    let den = u2.l2_norm_within(radius);
    if den == 0.0 {
        return Ok(if predicted.l2_norm_within(radius) == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(predicted.sub(u2)?.l2_norm_within(radius) / den)
}

/// Mean-zero pressure of a velocity: `Delta P = -div div(u (x) u)`.
pub fn pressure_of(u: &SpectralField) -> Result<SpectralField> {
    pressure_from_tensor(&tensor_square(u)?.scale(-1.0))
}

/// `v = u(., 1) - exp(-A) U0` and the pressure of `u(., 1)`.
pub fn profile_extract(run: &ProfileRun) -> Result<Profile> {
    let u1 = run.snapshot(1.0)?;
    let initial = run
        .initial
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("run does not record its initial data".into()))?;
    let v = u1.sub(&heat_step(initial, 1.0, run.alpha)?)?;
    Ok(Profile {
        v,
        pressure: pressure_of(u1)?,
    })
}

/// Relative residual of the profile system for `v` on top of `u0 = exp(-A) U0`:
/// `A v - (2a-1)/(2a) v - (1/(2a)) x.grad v + div(U (x) U) + grad P = div f`
/// with `U = u0 + v` and a tensor force `f`, in `L^2` over the window.
///
/// The linear terms of `u0` are left out: they cancel exactly for homogeneous
/// `U0`, and numerically they only measure the data window. The denominator
/// is the sum of the window norms of the individual terms.
pub fn profile_residual(
    v: &SpectralField,
    pressure: &SpectralField,
    u0: &SpectralField,
    alpha: f64,
    force: Option<&SpectralField>,
) -> Result<f64> {
    let u = u0.add(v)?;
    let c1 = (2.0 * alpha - 1.0) / (2.0 * alpha);
    let c2 = 1.0 / (2.0 * alpha);
    let terms = [
        fractional_laplacian(v, 2.0 * alpha)?,
        v.scale(-c1),
        x_dot_grad(v)?.scale(-c2),
        divergence_tensor(&tensor_square(&u)?)?,
        gradient(pressure)?,
    ];
    let radius = WINDOW_INNER * u.grid().box_length();
    let mut total = SpectralField::zeros(u.grid(), Rank::Vector);
    let mut scale = 0.0;
    for term in &terms {
        total = total.add(term)?;
        scale += term.l2_norm_within(radius);
    }
    if let Some(f) = force {
        let df = divergence_tensor(f)?;
        total = total.sub(&df)?;
        scale += df.l2_norm_within(radius);
    }
    Ok(if scale == 0.0 { 0.0 } else { total.l2_norm_within(radius) / scale })
}
