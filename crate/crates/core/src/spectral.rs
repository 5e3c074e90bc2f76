//! Fourier multipliers and the differential operators built from them:
//! fractional Laplacian, Riesz transforms, Leray projection, dealiased
//! products and the quadratic transport term.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{require_rank, require_same_grid, Rank, SpectralField};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Wavenumber data handed to multiplier symbols.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub k: [f64; 3],
    /// `k` with unpaired Nyquist components zeroed; use for odd symbols.
    pub k_odd: [f64; 3],
    pub kmag: f64,
}

type Symbol = dyn Fn(&Mode) -> Complex64 + Sync;

/// A scalar Fourier multiplier with an explicit value at `k = 0`.
pub struct MultiplierSpec {
    pub symbol: Box<Symbol>,
    pub zero_mode_value: Complex64,
}

impl MultiplierSpec {
    pub fn new<F>(symbol: F, zero_mode_value: Complex64) -> Self
    where
        F: Fn(&Mode) -> Complex64 + Sync + 'static,
    {
        Self {
            symbol: Box::new(symbol),
            zero_mode_value,
        }
    }
}

/// Multiply every component by the symbol.
pub fn apply_multiplier(f: &SpectralField, spec: &MultiplierSpec) -> SpectralField {
    let grid = f.grid().clone();
    let kmag = grid.kmag();
    f.map_modes(|i, _, z| {
        if i == 0 {
            return z * spec.zero_mode_value;
        }
        let mode = Mode {
            k: grid.wavevector(i),
            k_odd: grid.wavevector_odd(i),
            kmag: kmag[i],
        };
        z * (spec.symbol)(&mode)
    })
}

/// Apply a real radial symbol `m(|k|)` with `m(0)` given by `zero`.
pub fn apply_radial<F>(f: &SpectralField, zero: f64, m: F) -> SpectralField
where
    F: Fn(f64) -> f64 + Sync,
{
    let kmag = f.grid().kmag().to_vec();
    f.map_modes(|i, _, z| if i == 0 { z * zero } else { z * m(kmag[i]) })
}

/// `Lambda^s f = (-Delta)^{s/2} f`, symbol `|k|^s`.
///
/// For `s > 0` the zero mode is mapped to zero; `s = 0` returns `f` unchanged;
/// `s < 0` requires a mean-zero field.
pub fn fractional_laplacian(f: &SpectralField, s: f64) -> Result<SpectralField> {
    if !(-4.0..=4.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("order s = {s} outside [-4, 4]")));
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    if s < 0.0 && f.relative_mean() > 1e-12 {
        return Err(Error::NonintegrableZeroMode);
    }
    Ok(apply_radial(f, 0.0, |k| k.powf(s)))
}

/// Leray projection, symbol `I - k k^T / |k|^2`; the zero mode is kept.
pub fn leray_project(f: &SpectralField) -> Result<SpectralField> {
    require_rank(f, Rank::Vector)?;
    let grid = f.grid().clone();
    let dim = grid.dim();
    let mut out = f.clone();
    let src = f.coeffs();
    let n = grid.len();
    let mut comps: Vec<Vec<Complex64>> = (0..dim).map(|_| vec![Complex64::default(); n]).collect();
    let projected: Vec<[Complex64; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = [Complex64::default(); 3];
            for a in 0..dim {
                v[a] = src[a][i];
            }
            if i == 0 {
                return v;
            }
            let k = grid.wavevector_odd(i);
            let k2: f64 = k.iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                return v;
            }
            if dim == 1 {
                // Solenoidal fields in 1D are constants.
                return [Complex64::default(); 3];
            }
            let kv: Complex64 = (0..dim).map(|a| v[a] * k[a]).sum();
            for a in 0..dim {
                v[a] -= kv * (k[a] / k2);
            }
            v
        })
        .collect();
    for (i, v) in projected.iter().enumerate() {
        for a in 0..dim {
            comps[a][i] = v[a];
        }
    }
    for (a, c) in comps.into_iter().enumerate() {
        out.component_mut(a).copy_from_slice(&c);
    }
    Ok(out)
}

/// Riesz transform `R_i`, symbol `-i k_i / |k|`, zero mode to zero.
///
/// With this sign, `sum_i R_i d_i f = Lambda f` for mean-zero `f`.
pub fn riesz_transform(f: &SpectralField, axis: usize) -> Result<SpectralField> {
    require_rank(f, Rank::Scalar)?;
    check_axis(f, axis)?;
    let spec = MultiplierSpec::new(move |m: &Mode| -I * (m.k_odd[axis] / m.kmag), Complex64::default());
    Ok(apply_multiplier(f, &spec))
}

fn check_axis(f: &SpectralField, axis: usize) -> Result<()> {
    if axis >= f.grid().dim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for dim {}",
            f.grid().dim()
        )));
    }
    Ok(())
}

/// Partial derivative along `axis`, applied to every component.
pub fn partial(f: &SpectralField, axis: usize) -> Result<SpectralField> {
    check_axis(f, axis)?;
    let grid = f.grid().clone();
    Ok(f.map_modes(|i, _, z| z * (I * grid.wavevector_odd(i)[axis])))
}

/// Gradient of a scalar field.
pub fn gradient(f: &SpectralField) -> Result<SpectralField> {
    require_rank(f, Rank::Scalar)?;
    let parts: Result<Vec<_>> = (0..f.grid().dim()).map(|a| partial(f, a)).collect();
    SpectralField::from_components(&parts?, Rank::Vector)
}

/// Divergence of a vector field.
pub fn divergence(f: &SpectralField) -> Result<SpectralField> {
    require_rank(f, Rank::Vector)?;
    let grid = f.grid().clone();
    let dim = grid.dim();
    let src = f.coeffs();
    let c: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let k = grid.wavevector_odd(i);
            (0..dim).map(|a| src[a][i] * (I * k[a])).sum()
        })
        .collect();
    SpectralField::from_coeffs(&grid, Rank::Scalar, vec![c], f.is_real())
}

/// Row divergence of a tensor: `(div T)_b = sum_a d_a T_ab`.
pub fn divergence_tensor(t: &SpectralField) -> Result<SpectralField> {
    require_rank(t, Rank::Tensor)?;
    let grid = t.grid().clone();
    let dim = grid.dim();
    let src = t.coeffs();
    let comps: Vec<Vec<Complex64>> = (0..dim)
        .map(|b| {
            (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let k = grid.wavevector_odd(i);
                    (0..dim).map(|a| src[a * dim + b][i] * (I * k[a])).sum()
                })
                .collect()
        })
        .collect();
    SpectralField::from_coeffs(&grid, Rank::Vector, comps, t.is_real())
}

/// Divergence relative to the full gradient size, `|k.u| / |k||u|` in `l^2`.
pub fn relative_divergence(u: &SpectralField) -> Result<f64> {
    require_rank(u, Rank::Vector)?;
    let grid = u.grid();
    let dim = grid.dim();
    let src = u.coeffs();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.len() {
        let k = grid.wavevector_odd(i);
        let kv: Complex64 = (0..dim).map(|a| src[a][i] * k[a]).sum();
        num += kv.norm_sqr();
        let k2 = grid.kmag()[i].powi(2);
        den += k2 * (0..dim).map(|a| src[a][i].norm_sqr()).sum::<f64>();
    }
    Ok(if den == 0.0 { 0.0 } else { (num / den).sqrt() })
}

/// Multiply pointwise by a physical-space function given on grid points.
pub fn multiply_physical(f: &SpectralField, weight: &[f64]) -> Result<SpectralField> {
    if weight.len() != f.grid().len() {
        return Err(Error::InvalidArgument("weight length does not match grid".into()));
    }
    let vals: Vec<Vec<f64>> = f
        .physical()
        .into_iter()
        .map(|c| c.iter().zip(weight).map(|(a, b)| a * b).collect())
        .collect();
    SpectralField::from_physical(f.grid(), f.rank(), &vals)
}

/// Dealiased outer product `T_ab = u_a v_b` of two vector fields.
pub fn tensor_product(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    require_rank(u, Rank::Vector)?;
    require_rank(v, Rank::Vector)?;
    require_same_grid(u, v)?;
    let dim = u.grid().dim();
    let up = u.dealias().physical();
    let vp = v.dealias().physical();
    let mut vals = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            vals.push(up[a].iter().zip(&vp[b]).map(|(x, y)| x * y).collect::<Vec<f64>>());
        }
    }
    Ok(SpectralField::from_physical(u.grid(), Rank::Tensor, &vals)?.dealias())
}

/// Dealiased symmetric square `T_ab = u_a u_b`, transforming each distinct
/// component once.
pub fn tensor_square(u: &SpectralField) -> Result<SpectralField> {
    require_rank(u, Rank::Vector)?;
    let grid = u.grid();
    let dim = grid.dim();
    let up = u.dealias().physical();
    let mut comps: Vec<Vec<Complex64>> = vec![Vec::new(); dim * dim];
    for a in 0..dim {
        for b in a..dim {
            let prod: Vec<f64> = up[a].iter().zip(&up[b]).map(|(x, y)| x * y).collect();
            let c = SpectralField::from_physical(grid, Rank::Scalar, &[prod])?.dealias().into_coeffs().remove(0);
            if a != b {
                comps[b * dim + a] = c.clone();
            }
            comps[a * dim + b] = c;
        }
    }
    SpectralField::from_coeffs(grid, Rank::Tensor, comps, true)
}

/// Dealiased pointwise product of two scalar fields.
pub fn scalar_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    require_rank(f, Rank::Scalar)?;
    require_rank(g, Rank::Scalar)?;
    require_same_grid(f, g)?;
    let fp = f.dealias().physical();
    let gp = g.dealias().physical();
    let prod: Vec<f64> = fp[0].iter().zip(&gp[0]).map(|(a, b)| a * b).collect();
    Ok(SpectralField::from_physical(f.grid(), Rank::Scalar, &[prod])?.dealias())
}

/// Threshold above which `nonlinear_term` warns about a compressible `u`.
pub const DIVERGENCE_WARN: f64 = 1e-8;

/// Transport term `u.grad v` in conservative form `div(u (x) v)`, dealiased.
pub fn nonlinear_term(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let div = relative_divergence(u)?;
    if div > DIVERGENCE_WARN {
        log::warn!("nonlinear_term: relative divergence of u is {div:.3e}");
    }
    divergence_tensor(&tensor_product(u, v)?)
}

/// Transport term `u.grad v` in advective form, dealiased.
pub fn advective_term(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    require_rank(u, Rank::Vector)?;
    require_rank(v, Rank::Vector)?;
    require_same_grid(u, v)?;
    let grid = u.grid();
    let dim = grid.dim();
    let up = u.dealias().physical();
    let vd = v.dealias();
    let grads: Vec<Vec<Vec<f64>>> = (0..dim)
        .map(|a| partial(&vd, a).map(|d| d.physical()))
        .collect::<Result<_>>()?;
    let vals: Vec<Vec<f64>> = (0..dim)
        .map(|b| {
            (0..grid.len())
                .map(|i| (0..dim).map(|a| up[a][i] * grads[a][b][i]).sum())
                .collect()
        })
        .collect();
    Ok(SpectralField::from_physical(grid, Rank::Vector, &vals)?.dealias())
}

/// `(x - x_c) . grad v` with the centered sawtooth coordinate, per component.
///
/// Only meaningful for fields concentrated away from the box faces, where the
/// sawtooth agrees with the whole-space coordinate.
pub fn x_dot_grad(v: &SpectralField) -> Result<SpectralField> {
    let grid = v.grid();
    let dim = grid.dim();
    let coords: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.centered_position(i)).collect();
    let mut acc = vec![vec![0.0; grid.len()]; v.num_components()];
    for a in 0..dim {
        let d = partial(v, a)?.physical();
        for (out, comp) in acc.iter_mut().zip(&d) {
            for (i, o) in out.iter_mut().enumerate() {
                *o += coords[i][a] * comp[i];
            }
        }
    }
    SpectralField::from_physical(grid, v.rank(), &acc)
}

/// Mean-zero solution of `Delta P = div div G`.
pub fn pressure_from_tensor(g: &SpectralField) -> Result<SpectralField> {
    require_rank(g, Rank::Tensor)?;
    let grid = g.grid().clone();
    let dim = grid.dim();
    let src = g.coeffs();
    let c: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                return Complex64::default();
            }
            let k = grid.wavevector_odd(i);
            let k2: f64 = k.iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                return Complex64::default();
            }
            let mut s = Complex64::default();
            for a in 0..dim {
                for b in 0..dim {
                    s += src[a * dim + b][i] * (k[a] * k[b]);
                }
            }
            s / k2
        })
        .collect();
    SpectralField::from_coeffs(&grid, Rank::Scalar, vec![c], g.is_real())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn plane_wave(g: &Grid, m: [i64; 3]) -> SpectralField {
        let kf = g.fundamental();
        SpectralField::from_fn(g, Rank::Scalar, move |x, out| {
            let ph: f64 = (0..3).map(|a| m[a] as f64 * kf * x[a]).sum();
            out[0] = ph.cos();
        })
    }

    #[test]
    fn fractional_laplacian_on_plane_wave() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let f = plane_wave(&g, [1, 2, 2]);
        let alpha = 5.0 / 6.0;
        let out = fractional_laplacian(&f, 2.0 * alpha).unwrap();
        let expected = f.scale(3f64.powf(2.0 * alpha));
        assert!(out.sub(&expected).unwrap().l2_norm() < 1e-12 * expected.l2_norm());
    }

    #[test]
    fn fractional_laplacian_identity_and_errors() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let f = SpectralField::random(&g, Rank::Scalar, 5);
        assert_eq!(fractional_laplacian(&f, 0.0).unwrap(), f);
        let with_mean = f.map_modes(|i, _, z| if i == 0 { Complex64::new(1.0, 0.0) } else { z });
        assert_eq!(
            fractional_laplacian(&with_mean, -1.0).unwrap_err(),
            Error::NonintegrableZeroMode
        );
        assert!(fractional_laplacian(&f, 4.5).is_err());
        // Positive orders kill the mean.
        let out = fractional_laplacian(&with_mean, 0.5).unwrap();
        assert_eq!(out.mean()[0], Complex64::default());
    }

    #[test]
    fn leray_kills_gradients_and_keeps_curls() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let phi = SpectralField::random(&g, Rank::Scalar, 11);
        let grad = gradient(&phi).unwrap();
        let p = leray_project(&grad).unwrap();
        assert!(p.l2_norm() <= 1e-13 * grad.l2_norm());

        let a = SpectralField::random(&g, Rank::Vector, 12);
        // curl A is divergence free.
        let d = |f: &SpectralField, c: usize, ax: usize| partial(&f.scalar_component(c), ax).unwrap();
        let cx = d(&a, 2, 1).sub(&d(&a, 1, 2)).unwrap();
        let cy = d(&a, 0, 2).sub(&d(&a, 2, 0)).unwrap();
        let cz = d(&a, 1, 0).sub(&d(&a, 0, 1)).unwrap();
        let curl = SpectralField::from_components(&[cx, cy, cz], Rank::Vector).unwrap();
        let pc = leray_project(&curl).unwrap();
        assert!(pc.sub(&curl).unwrap().l2_norm() <= 1e-13 * curl.l2_norm());
    }

    #[test]
    fn leray_output_is_solenoidal_and_idempotent() {
        for dim in 1..=3 {
            let g = Grid::new(dim, 16, 5.0).unwrap();
            let f = SpectralField::random(&g, Rank::Vector, 40 + dim as u64);
            let p = leray_project(&f).unwrap();
            let d = relative_divergence(&p).unwrap();
            assert!(d <= 1e-12, "dim {dim}: {d}");
            let pp = leray_project(&p).unwrap();
            assert!(pp.sub(&p).unwrap().l2_norm() <= 1e-13 * p.l2_norm().max(1e-300));
        }
    }

    #[test]
    fn riesz_on_plane_wave_and_constant() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        // e^{i k.x} with k = (3, 4).
        let mut c = vec![Complex64::default(); g.len()];
        let idx = g.flatten([3, 4, 0]);
        c[idx] = Complex64::new(1.0, 0.0);
        let f = SpectralField::from_coeffs(&g, Rank::Scalar, vec![c], false).unwrap();
        let r = riesz_transform(&f, 0).unwrap();
        assert!((r.component(0)[idx] - Complex64::new(0.0, -0.6)).norm() < 1e-15);

        let one = SpectralField::from_fn(&g, Rank::Scalar, |_, o| o[0] = 2.0);
        assert_eq!(riesz_transform(&one, 1).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn riesz_identity_reconstructs_lambda() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let f = SpectralField::random(&g, Rank::Scalar, 7);
        let mut acc = SpectralField::zeros(&g, Rank::Scalar);
        for i in 0..3 {
            let term = riesz_transform(&partial(&f, i).unwrap(), i).unwrap();
            acc = acc.add(&term).unwrap();
        }
        let lam = fractional_laplacian(&f, 1.0).unwrap();
        assert!(acc.sub(&lam).unwrap().l2_norm() <= 1e-12 * lam.l2_norm());
    }

    #[test]
    fn conservative_and_advective_forms_agree() {
        let g = Grid::new(3, 16, 2.0 * PI).unwrap();
        let u = leray_project(&SpectralField::random(&g, Rank::Vector, 1)).unwrap();
        let v = SpectralField::random(&g, Rank::Vector, 2);
        let c = nonlinear_term(&u, &v).unwrap();
        let a = advective_term(&u, &v).unwrap();
        assert!(c.sub(&a).unwrap().l2_norm() <= 1e-10 * c.l2_norm());
        let zero = SpectralField::zeros(&g, Rank::Vector);
        assert_eq!(nonlinear_term(&zero, &v).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn tensor_square_matches_outer_product() {
        let g = Grid::new(3, 12, 2.0 * PI).unwrap();
        let u = SpectralField::random(&g, Rank::Vector, 3);
        let a = tensor_square(&u).unwrap();
        let b = tensor_product(&u, &u).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() <= 1e-14 * b.l2_norm());
    }

    #[test]
    fn transport_of_single_modes_matches_convolution() {
        // u = (0, sin x1), v = (cos x2, 0) in 2D: u.grad v = (-sin x1 sin x2, 0).
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let u = SpectralField::from_fn(&g, Rank::Vector, |x, o| {
            o[0] = 0.0;
            o[1] = x[0].sin();
        });
        let v = SpectralField::from_fn(&g, Rank::Vector, |x, o| {
            o[0] = x[1].cos();
            o[1] = 0.0;
        });
        let got = nonlinear_term(&u, &v).unwrap();
        let want = SpectralField::from_fn(&g, Rank::Vector, |x, o| {
            o[0] = -x[0].sin() * x[1].sin();
            o[1] = 0.0;
        });
        assert!(got.sub(&want).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn pressure_solves_div_div_equation() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let u = leray_project(&SpectralField::random(&g, Rank::Vector, 4)).unwrap();
        let t = tensor_product(&u, &u).unwrap();
        let p = pressure_from_tensor(&t).unwrap();
        assert_eq!(p.mean()[0], Complex64::default());
        let lap = fractional_laplacian(&p, 2.0).unwrap().scale(-1.0);
        let divdiv = divergence(&divergence_tensor(&t).unwrap()).unwrap();
        assert!(lap.sub(&divdiv).unwrap().l2_norm() <= 1e-12 * divdiv.l2_norm());
    }
}
