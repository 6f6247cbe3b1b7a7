//! Levi-Civita connections in the three representations, exterior covariant
//! derivatives, divergences, Lie derivatives of forms, and material time derivatives.

use std::sync::Arc;

use crate::config::{numeric_gradient, Configuration, MotionCurve};
use crate::error::{Error, Result};
use crate::forms::{alternate, exterior_derivative, interior_product, BundleValuedForm, ValueKind};
use crate::geometry::{ambient_christoffel, christoffel, MetricField, MetricRole};
use crate::grid::Grid;
use crate::tensor::{Base, Leg, Representation, Sampling, TensorField, Variance, M3, V3};

/// Connection coefficients `A[node][c](a, k)`: `∇_c T^a = ∂_c T^a + A_c(a, k) T^k`.
pub type ConnectionCoefficients = Vec<[M3; 3]>;

/// Reorder Christoffel symbols `Γ^a_{ck}` into connection coefficients `A_c(a, k)`.
fn from_christoffel(gam: &[M3; 3]) -> [M3; 3] {
    std::array::from_fn(|c| M3::from_fn(|a, k| gam[a][(c, k)]))
}

/// Everything needed to differentiate fields of one representation covariantly.
///
/// Derivative directions are spatial for the spatial representation and body
/// directions otherwise. Legs on the ambient space use the ambient Levi-Civita
/// connection (composed with `φ` and contracted with `F` in the material case);
/// body legs use `ĝ` (convective) or the reference metric `G` (material).
#[derive(Clone, Debug)]
pub struct ConnectionContext {
    pub repr: Representation,
    /// Frame in which stored samples are differentiated.
    pub sampling: Sampling,
    /// `g`, `ĝ`, or `g̃` according to the representation.
    pub metric: MetricField,
    pub config: Option<Arc<Configuration>>,
    /// Reference metric `G` (material contexts only).
    pub reference: Option<MetricField>,
    spatial_legs: Option<ConnectionCoefficients>,
    body_legs: Option<ConnectionCoefficients>,
}

impl ConnectionContext {
    /// Spatial connection of an arbitrary spatial metric, Christoffels by finite differences.
    pub fn spatial(grid: &Grid, metric: &MetricField) -> Result<Self> {
        if metric.role != MetricRole::Spatial {
            return Err(Error::Representation(format!("spatial context needs a spatial metric, got {:?}", metric.role)));
        }
        let conn = christoffel(metric, grid)?.iter().map(from_christoffel).collect();
        Ok(Self {
            repr: Representation::Spatial,
            sampling: metric.sampling.clone(),
            metric: metric.clone(),
            config: None,
            reference: None,
            spatial_legs: Some(conn),
            body_legs: None,
        })
    }

    /// Spatial connection over a configuration, with the exact ambient Christoffels at `φ(X)`.
    pub fn spatial_over(config: &Arc<Configuration>) -> Result<Self> {
        let conn = config.phi.iter().map(|p| from_christoffel(&ambient_christoffel(config.coords, [p[0], p[1], p[2]]))).collect();
        Ok(Self {
            repr: Representation::Spatial,
            sampling: config.sampling(),
            metric: config.spatial_metric()?,
            config: Some(config.clone()),
            reference: None,
            spatial_legs: Some(conn),
            body_legs: None,
        })
    }

    /// Convective connection `∇̂` of `ĝ`.
    pub fn convective(grid: &Grid, g_hat: &MetricField) -> Result<Self> {
        if g_hat.base() != Base::Body || g_hat.sampling.is_pulled_back() {
            return Err(Error::Representation("convective context needs a body metric".into()));
        }
        let conn = christoffel(g_hat, grid)?.iter().map(from_christoffel).collect();
        let mut metric = g_hat.clone();
        metric.role = MetricRole::Convective;
        Ok(Self {
            repr: Representation::Convective,
            sampling: Sampling::Body,
            metric,
            config: None,
            reference: None,
            spatial_legs: None,
            body_legs: Some(conn),
        })
    }

    /// Material connection `∇̃`: spatial legs by `F^j_C (Γ^a_{jk}∘φ)`, body legs by `G`.
    pub fn material(grid: &Grid, config: &Arc<Configuration>, reference: &MetricField) -> Result<Self> {
        if config.len() != grid.len() {
            return Err(Error::Shape("configuration does not match grid".into()));
        }
        let spatial = config
            .phi
            .iter()
            .zip(&config.f)
            .map(|(p, f)| {
                let gam = ambient_christoffel(config.coords, [p[0], p[1], p[2]]);
                let a = from_christoffel(&gam);
                std::array::from_fn(|c| (0..3).map(|j| f[(j, c)] * a[j]).sum())
            })
            .collect();
        let body = christoffel(reference, grid)?.iter().map(from_christoffel).collect();
        let (_, g_tilde) = config.induced_metrics()?;
        Ok(Self {
            repr: Representation::Material,
            sampling: Sampling::Body,
            metric: g_tilde,
            config: Some(config.clone()),
            reference: Some(reference.clone()),
            spatial_legs: Some(spatial),
            body_legs: Some(body),
        })
    }

    /// Base of the derivative index.
    pub fn derivative_base(&self) -> Base {
        self.repr.form_base()
    }

    fn coefficients(&self, base: Base) -> Result<&ConnectionCoefficients> {
        match base {
            Base::Spatial => self.spatial_legs.as_ref(),
            Base::Body => self.body_legs.as_ref(),
        }
        .ok_or_else(|| Error::Representation(format!("{:?} context cannot differentiate {:?} legs", self.repr, base)))
    }

    /// Connection coefficients for legs on `base`.
    pub fn connection(&self, base: Base) -> Result<&ConnectionCoefficients> {
        self.coefficients(base)
    }
}

/// `∇T` with the derivative index placed first.
pub fn covariant_derivative(grid: &Grid, t: &TensorField, ctx: &ConnectionContext) -> Result<TensorField> {
    if t.repr != ctx.repr {
        return Err(Error::Representation(format!("{:?} field in a {:?} context", t.repr, ctx.repr)));
    }
    t.data.check_grid(grid)?;
    let rank = t.rank();
    let nc = t.data.ncomp();
    let conns: Vec<&ConnectionCoefficients> = t.legs.iter().map(|l| ctx.coefficients(l.base)).collect::<Result<_>>()?;
    let d = ctx.sampling.gradient(grid, &t.data.values, nc);
    let mut legs = vec![Leg::down(ctx.derivative_base())];
    legs.extend_from_slice(&t.legs);
    let mut out = TensorField::zeros(grid, legs, t.repr);
    for node in 0..grid.len() {
        let src = t.data.node(node);
        let dst = out.data.node_mut(node);
        for c in 0..3 {
            for idx in 0..nc {
                let mut s = d[c][node * nc + idx];
                for (l, leg) in t.legs.iter().enumerate() {
                    let stride = 3usize.pow((rank - 1 - l) as u32);
                    let a = (idx / stride) % 3;
                    let base = idx - a * stride;
                    let m = &conns[l][node][c];
                    s += match leg.var {
                        Variance::Up => (0..3).map(|k| m[(a, k)] * src[base + k * stride]).sum::<f64>(),
                        Variance::Down => -(0..3).map(|k| m[(k, a)] * src[base + k * stride]).sum::<f64>(),
                    };
                }
                dst[c * nc + idx] = s;
            }
        }
    }
    Ok(out)
}

/// `d_∇α`: value leg differentiated covariantly, form indices antisymmetrized.
pub fn exterior_covariant_derivative(grid: &Grid, alpha: &BundleValuedForm, ctx: &ConnectionContext) -> Result<BundleValuedForm> {
    if alpha.degree >= 3 {
        return Err(Error::Degree("d_∇ of a top-degree form".into()));
    }
    if alpha.value == ValueKind::Scalar {
        return exterior_derivative(grid, alpha);
    }
    if alpha.repr != ctx.repr {
        return Err(Error::Representation(format!("{:?} form in a {:?} context", alpha.repr, ctx.repr)));
    }
    alpha.comps.check_grid(grid)?;
    let conn = ctx.coefficients(alpha.repr.value_base())?;
    let nc = alpha.comps.ncomp();
    let s = alpha.slots();
    let mut d = ctx.sampling.gradient(grid, &alpha.comps.values, nc);
    for node in 0..grid.len() {
        for (c, dc) in d.iter_mut().enumerate() {
            let m = &conn[node][c];
            for slot in 0..s {
                let comp = |v: usize| alpha.get(node, v, slot);
                for a in 0..3 {
                    let corr: f64 = match alpha.value {
                        ValueKind::Vector => (0..3).map(|k| m[(a, k)] * comp(k)).sum(),
                        _ => -(0..3).map(|k| m[(k, a)] * comp(k)).sum::<f64>(),
                    };
                    dc[(node * 3 + a) * s + slot] += corr;
                }
            }
        }
    }
    Ok(alternate(alpha, &d))
}

/// Contract the derivative index of `∇T` with contravariant leg `leg` of `T`.
pub fn divergence(grid: &Grid, t: &TensorField, ctx: &ConnectionContext, leg: usize) -> Result<TensorField> {
    let l = *t.legs.get(leg).ok_or_else(|| Error::Shape(format!("tensor has no leg {}", leg)))?;
    if l.var != Variance::Up {
        return Err(Error::Shape("divergence needs a contravariant leg".into()));
    }
    if l.base != ctx.derivative_base() {
        return Err(Error::Representation("contracted leg and derivative live on different manifolds".into()));
    }
    let dt = covariant_derivative(grid, t, ctx)?;
    let rank = t.rank();
    let nc = t.data.ncomp();
    let stride = 3usize.pow((rank - 1 - leg) as u32);
    let mut legs = t.legs.clone();
    legs.remove(leg);
    let mut out = TensorField::zeros(grid, legs, t.repr);
    let nout = out.data.ncomp();
    for node in 0..grid.len() {
        let src = dt.data.node(node);
        let dst = out.data.node_mut(node);
        for (o, d) in dst.iter_mut().enumerate().take(nout) {
            // Reinsert the contracted index into the flat component index.
            let hi = o / stride;
            let lo = o % stride;
            *d = (0..3).map(|c| src[c * nc + (hi * 3 + c) * stride + lo]).sum();
        }
    }
    Ok(out)
}

/// `L_v α = d ι_v α + ι_v dα` for scalar-valued forms.
pub fn lie_derivative_form(grid: &Grid, v: &TensorField, alpha: &BundleValuedForm) -> Result<BundleValuedForm> {
    if alpha.value != ValueKind::Scalar {
        return Err(Error::Representation("Lie derivative is implemented for scalar-valued forms".into()));
    }
    if v.repr != alpha.repr {
        return Err(Error::Representation("vector field and form in different representations".into()));
    }
    let first = if alpha.degree > 0 { Some(exterior_derivative(grid, &interior_product(v, alpha)?)?) } else { None };
    let second = if alpha.degree < 3 { Some(interior_product(v, &exterior_derivative(grid, alpha)?)?) } else { None };
    match (first, second) {
        (Some(a), Some(b)) => a.axpby(1.0, &b, 1.0),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => unreachable!(),
    }
}

/// Two-point fields over `φ_t` whose material time derivative can be taken.
pub enum MaterialFamily<'a> {
    /// The material velocity `ṽ_t` of the motion.
    Velocity,
    /// The deformation gradient `F_t`, differentiated column by column.
    DeformationGradient,
    /// Any vector field over `φ_t`, given per node for a requested time.
    Custom(&'a dyn Fn(f64) -> Result<Vec<V3>>),
}

/// Time derivative at fixed `X` of a per-node family: snapshot spacing for snapshot
/// curves, step `fd_dt` otherwise; central in the interior, one-sided at the ends.
pub(crate) fn time_derivative(curve: &MotionCurve, t: f64, fd_dt: f64, eval: &dyn Fn(f64) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let comb = |ts: [f64; 3], w: [f64; 3], dt: f64| -> Result<Vec<f64>> {
        let vals: Vec<Vec<f64>> = ts.iter().map(|&s| eval(s)).collect::<Result<_>>()?;
        Ok((0..vals[0].len()).map(|p| (w[0] * vals[0][p] + w[1] * vals[1][p] + w[2] * vals[2][p]) / (2.0 * dt)).collect())
    };
    match curve {
        MotionCurve::Snapshots { t0, dt, phis, .. } => {
            if phis.len() < 3 {
                return Err(Error::Snapshots("need at least 3 snapshots".into()));
            }
            let i = ((t - t0) / dt).round();
            if ((t - t0) / dt - i).abs() > 1e-9 || i < 0.0 || i as usize >= phis.len() {
                return Err(Error::Snapshots(format!("no snapshot at t = {}", t)));
            }
            let (i, last) = (i as usize, phis.len() - 1);
            let at = |k: usize| t0 + k as f64 * dt;
            if i == 0 {
                comb([at(0), at(1), at(2)], [-3.0, 4.0, -1.0], *dt)
            } else if i == last {
                comb([at(last), at(last - 1), at(last - 2)], [3.0, -4.0, 1.0], *dt)
            } else {
                comb([at(i - 1), at(i), at(i + 1)], [-1.0, 0.0, 1.0], *dt)
            }
        }
        MotionCurve::Analytic { .. } => comb([t - fd_dt, t, t + fd_dt], [-1.0, 0.0, 1.0], fd_dt),
    }
}

pub(crate) fn flatten(v: &[V3]) -> Vec<f64> {
    v.iter().flat_map(|x| [x[0], x[1], x[2]]).collect()
}

fn flatten_m(m: &[M3]) -> Vec<f64> {
    m.iter().flat_map(|x| (0..9).map(move |p| x[(p / 3, p % 3)])).collect()
}

/// `∂_tṽ` at fixed `X`: exact for analytic motions, differenced otherwise.
fn velocity_rate(grid: &Grid, curve: &MotionCurve, t: f64) -> Result<Vec<V3>> {
    match curve {
        MotionCurve::Analytic { motion, coords } => Ok(grid.nodes().iter().map(|&x| motion.at(*coords, x, t).acceleration).collect()),
        _ => {
            let d = time_derivative(curve, t, 0.0, &|s| Ok(flatten(&curve.velocity(grid, s)?)))?;
            Ok(d.chunks(3).map(V3::from_column_slice).collect())
        }
    }
}

fn gradient_rate(grid: &Grid, curve: &MotionCurve, t: f64) -> Result<Vec<M3>> {
    match curve {
        MotionCurve::Analytic { motion, coords } => Ok(grid.nodes().iter().map(|&x| motion.at(*coords, x, t).f_rate).collect()),
        _ => {
            let d = time_derivative(curve, t, 0.0, &|s| Ok(flatten_m(&numeric_gradient(grid, &curve.positions(grid, s)?))))?;
            Ok(d.chunks(9).map(M3::from_row_slice).collect())
        }
    }
}

pub(crate) fn is_analytic(curve: &MotionCurve) -> bool {
    matches!(curve, MotionCurve::Analytic { .. })
}

/// `D_tζ̃^j = ∂_tζ̃^j + (Γ^j_{ik}∘φ_t) ṽ^i ζ̃^k`, applied column-wise for `F`.
///
/// `fd_dt` is the time step used for custom families of analytic motions.
pub fn material_time_derivative(grid: &Grid, curve: &MotionCurve, t: f64, family: MaterialFamily, fd_dt: f64) -> Result<TensorField> {
    let phi = curve.positions(grid, t)?;
    let v = curve.velocity(grid, t)?;
    let coords = curve.coords();
    let gamma_vv = |node: usize, z: V3| -> V3 {
        let p = phi[node];
        let gam = ambient_christoffel(coords, [p[0], p[1], p[2]]);
        V3::from_fn(|j, _| v[node].dot(&(gam[j] * z)))
    };
    match family {
        MaterialFamily::DeformationGradient => {
            let f = if is_analytic(curve) {
                curve.configuration(grid, t, true, None)?.f
            } else {
                numeric_gradient(grid, &phi)
            };
            let rate = gradient_rate(grid, curve, t)?;
            let out: Vec<M3> = (0..grid.len())
                .map(|n| {
                    let mut m = rate[n];
                    for col in 0..3 {
                        let g = gamma_vv(n, f[n].column(col).into_owned());
                        for j in 0..3 {
                            m[(j, col)] += g[j];
                        }
                    }
                    m
                })
                .collect();
            Ok(TensorField::matrix(grid, [Leg::up(Base::Spatial), Leg::down(Base::Body)], Representation::Material, &out))
        }
        MaterialFamily::Velocity => {
            let rate = velocity_rate(grid, curve, t)?;
            let out: Vec<V3> = (0..grid.len()).map(|n| rate[n] + gamma_vv(n, v[n])).collect();
            Ok(TensorField::vector(grid, Representation::Material, Base::Spatial, &out))
        }
        MaterialFamily::Custom(zeta) => {
            let z = zeta(t)?;
            let rate = time_derivative(curve, t, fd_dt, &|s| Ok(flatten(&zeta(s)?)))?;
            let out: Vec<V3> = (0..grid.len()).map(|n| V3::from_column_slice(&rate[3 * n..3 * n + 3]) + gamma_vv(n, z[n])).collect();
            Ok(TensorField::vector(grid, Representation::Material, Base::Spatial, &out))
        }
    }
}

/// Accelerations in the three representations plus their mutual consistency.
#[derive(Clone, Debug)]
pub struct AccelerationTriplet {
    /// `ã = D_tṽ`.
    pub material: TensorField,
    /// `a = ∂_tv + ∇_v v` in pulled-back sampling.
    pub spatial: TensorField,
    /// `â = ∂_tv̂ + ∇̂_{v̂}v̂`.
    pub convective: TensorField,
    /// `max |ã − a|` (the form-leg pullback of a vector 0-form is the identity on components).
    pub material_spatial_gap: f64,
    /// `max |â − F⁻¹ã|`.
    pub convective_material_gap: f64,
}

/// Contract the derivative index of `∇w` (legs `[c, a]`) with `u`: `(∇_u w)^a = u^c ∇_c w^a`.
fn directional(grad: &TensorField, u: &[V3]) -> Vec<V3> {
    grad.as_matrices().iter().zip(u).map(|(m, un)| m.transpose() * un).collect()
}

pub fn acceleration_triplet(grid: &Grid, curve: &MotionCurve, t: f64) -> Result<AccelerationTriplet> {
    let analytic = is_analytic(curve);
    let config = Arc::new(curve.configuration(grid, t, analytic, None)?);
    let v = curve.velocity(grid, t)?;
    let material = material_time_derivative(grid, curve, t, MaterialFamily::Velocity, 0.0)?;
    let rate = velocity_rate(grid, curve, t)?;

    // Spatial: ∂_t|_x v = ∂_t|_X ṽ − v^i ∂_{x^i} v, then ∇_v v with Christoffels of g∘φ.
    let spatial_metric = config.spatial_metric()?;
    let sctx = ConnectionContext::spatial(grid, &spatial_metric)?;
    let vs = TensorField::vector(grid, Representation::Spatial, Base::Spatial, &v);
    let dv = config.sampling().gradient(grid, &vs.data.values, 3);
    let grad = covariant_derivative(grid, &vs, &sctx)?;
    let nabla_vv = directional(&grad, &v);
    let a: Vec<V3> = (0..grid.len())
        .map(|n| {
            let advect = V3::from_fn(|j, _| (0..3).map(|i| v[n][i] * dv[i][3 * n + j]).sum());
            rate[n] - advect + nabla_vv[n]
        })
        .collect();

    // Convective: v̂ = F⁻¹ṽ and ∇̂ of ĝ = FᵀgF.
    let vh: Vec<V3> = v.iter().zip(config.f_inv.iter()).map(|(x, fi)| fi * x).collect();
    let vh_rate: Vec<V3> = if analytic {
        let f_rate = gradient_rate(grid, curve, t)?;
        (0..grid.len()).map(|n| config.f_inv[n] * (rate[n] - f_rate[n] * vh[n])).collect()
    } else {
        let eval = |s: f64| -> Result<Vec<f64>> {
            let c = curve.configuration(grid, s, false, None)?;
            let vv = curve.velocity(grid, s)?;
            Ok(flatten(&vv.iter().zip(c.f_inv.iter()).map(|(x, fi)| fi * x).collect::<Vec<_>>()))
        };
        time_derivative(curve, t, 0.0, &eval)?.chunks(3).map(V3::from_column_slice).collect()
    };
    let (g_hat, _) = config.induced_metrics()?;
    let cctx = ConnectionContext::convective(grid, &g_hat)?;
    let vhf = TensorField::vector(grid, Representation::Convective, Base::Body, &vh);
    let nabla_hat = directional(&covariant_derivative(grid, &vhf, &cctx)?, &vh);
    let ah: Vec<V3> = (0..grid.len()).map(|n| vh_rate[n] + nabla_hat[n]).collect();

    let at = material.as_vectors();
    let material_spatial_gap = at.iter().zip(&a).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    let convective_material_gap = (0..grid.len()).map(|n| (ah[n] - config.f_inv[n] * at[n]).amax()).fold(0.0, f64::max);
    Ok(AccelerationTriplet {
        material,
        spatial: TensorField::vector(grid, Representation::Spatial, Base::Spatial, &a),
        convective: TensorField::vector(grid, Representation::Convective, Base::Body, &ah),
        material_spatial_gap,
        convective_material_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Motion;
    use crate::forms::Parity;
    use crate::geometry::{volume_form, MetricField};
    use crate::grid::{rms_norm, Chart, CoordSystem};

    fn cube(n: usize) -> Grid {
        Grid::cube(Chart::unit_cube(), n).unwrap()
    }

    fn cyl(n: usize) -> (Grid, ConnectionContext) {
        let g = Grid::cube(Chart::cylindrical_sector(), n).unwrap();
        let m = MetricField::chart(&g).unwrap();
        let ctx = ConnectionContext::spatial(&g, &m).unwrap();
        (g, ctx)
    }

    fn vfield(g: &Grid, f: impl Fn([f64; 3]) -> V3) -> TensorField {
        TensorField::vector(g, Representation::Spatial, Base::Spatial, &g.nodes().into_iter().map(f).collect::<Vec<_>>())
    }

    #[test]
    fn cartesian_gradient_of_linear_field() {
        let g = cube(5);
        let ctx = ConnectionContext::spatial(&g, &MetricField::chart(&g).unwrap()).unwrap();
        let grad = covariant_derivative(&g, &vfield(&g, |x| V3::new(x[0], 0.0, 0.0)), &ctx).unwrap();
        let want = M3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(grad.as_matrices().iter().all(|m| (m - want).abs().max() < 1e-12));
        assert_eq!(grad.legs[0], Leg::down(Base::Spatial));
        let div = divergence(&g, &vfield(&g, |x| V3::new(x[0], 0.0, 0.0)), &ctx, 0).unwrap();
        assert!(div.data.values.iter().all(|d| (d - 1.0).abs() < 1e-12));
        let rot = divergence(&g, &vfield(&g, |x| V3::new(-x[1], x[0], 0.0)), &ctx, 0).unwrap();
        assert!(rot.data.max_abs() < 1e-12);
    }

    #[test]
    fn cylindrical_gradient_and_divergence() {
        let (g, ctx) = cyl(9);
        let grad = covariant_derivative(&g, &vfield(&g, |_| V3::new(0.0, 1.0, 0.0)), &ctx).unwrap().as_matrices();
        let div = divergence(&g, &vfield(&g, |_| V3::new(1.0, 0.0, 0.0)), &ctx, 0).unwrap();
        for n in 0..g.len() {
            let r = g.coord(n)[0];
            // Christoffel contraction by hand: ∇_r v^θ = Γ^θ_{rθ} = 1/r, ∇_θ v^r = Γ^r_{θθ} = −r.
            assert!((grad[n][(0, 1)] - 1.0 / r).abs() < 5e-3);
            assert!((grad[n][(1, 0)] + r).abs() < 5e-3);
            assert!((div.data.values[n] - 1.0 / r).abs() < 5e-3);
        }
    }

    #[test]
    fn metric_compatibility_converges() {
        let err = |n| {
            let (g, ctx) = cyl(n);
            covariant_derivative(&g, &ctx.metric.as_tensor(&g, Representation::Spatial), &ctx).unwrap().data.max_abs()
        };
        // The Christoffels come from the same stencil as ∂g, so compatibility holds to roundoff.
        assert!(err(9) < 1e-10 && err(17) < 1e-10);
    }

    #[test]
    fn exterior_covariant_derivative_examples() {
        let g = cube(5);
        let ctx = ConnectionContext::spatial(&g, &MetricField::chart(&g).unwrap()).unwrap();
        let v = BundleValuedForm::from_fn(&g, 0, ValueKind::Vector, Representation::Spatial, Parity::True, None, |_, x, o| o[0] = x[0] * x[0]).unwrap();
        let d = exterior_covariant_derivative(&g, &v, &ctx).unwrap();
        for n in 0..g.len() {
            let x = g.coord(n);
            assert!((d.get(n, 0, 0) - 2.0 * x[0]).abs() < 1e-12);
            assert!(d.comps.node(n).iter().enumerate().all(|(p, c)| p == 0 || c.abs() < 1e-12));
        }
        let cov = BundleValuedForm::from_fn(&g, 1, ValueKind::Covector, Representation::Spatial, Parity::True, None, |_, _, o| o[0] = 1.0).unwrap();
        assert_eq!(exterior_covariant_derivative(&g, &cov, &ctx).unwrap().max_abs(), 0.0);
        let top = cov.zeros_like(3, ValueKind::Vector, Parity::True);
        assert!(matches!(exterior_covariant_derivative(&g, &top, &ctx), Err(Error::Degree(_))));
    }

    #[test]
    fn d_nabla_squared_vanishes_in_flat_charts() {
        let cart = |n| {
            let g = cube(n);
            let ctx = ConnectionContext::spatial(&g, &MetricField::chart(&g).unwrap()).unwrap();
            let v = BundleValuedForm::from_fn(&g, 0, ValueKind::Vector, Representation::Spatial, Parity::True, None, |_, x, o| {
                o[0] = (x[0] * x[1]).sin();
                o[1] = x[2].exp() * x[0];
                o[2] = (x[1] + x[2]).cos();
            })
            .unwrap();
            let dv = exterior_covariant_derivative(&g, &v, &ctx).unwrap();
            exterior_covariant_derivative(&g, &dv, &ctx).unwrap().max_abs()
        };
        assert!(cart(9) < 1e-10);
        let curv = |n| {
            let (g, ctx) = cyl(n);
            let v = BundleValuedForm::from_fn(&g, 0, ValueKind::Vector, Representation::Spatial, Parity::True, None, |_, x, o| {
                o[0] = (x[1] * x[2]).sin();
                o[1] = x[0] * x[2];
                o[2] = x[1].cos();
            })
            .unwrap();
            let dv = exterior_covariant_derivative(&g, &v, &ctx).unwrap();
            rms_norm(&g, &exterior_covariant_derivative(&g, &dv, &ctx).unwrap().comps)
        };
        let (e1, e2) = (curv(9), curv(17));
        assert!((e1 / e2).log2() > 1.9, "{} {}", e1, e2);
    }

    #[test]
    fn lie_derivative_examples() {
        let g = cube(5);
        let a = BundleValuedForm::from_fn(&g, 1, ValueKind::Scalar, Representation::Spatial, Parity::True, None, |_, x, o| o[1] = x[0]).unwrap();
        let l = lie_derivative_form(&g, &vfield(&g, |_| V3::x()), &a).unwrap();
        assert!((0..g.len()).all(|n| (l.get(n, 0, 1) - 1.0).abs() < 1e-12 && l.get(n, 0, 0).abs() < 1e-12 && l.get(n, 0, 2).abs() < 1e-12));
        let m = MetricField::chart(&g).unwrap();
        let vol = volume_form(&m, &g);
        let mut w = BundleValuedForm::zeros(&g, 3, ValueKind::Scalar, Representation::Spatial, Parity::Pseudo, None).unwrap();
        w.comps.values = vol.density.values.clone();
        let lw = lie_derivative_form(&g, &vfield(&g, |x| V3::new(-x[1], x[0], 0.0)), &w).unwrap();
        assert!(lw.max_abs() < 1e-12);
    }

    #[test]
    fn material_time_derivative_examples() {
        let g = cube(5);
        let tr = MotionCurve::analytic(Motion::Rigid { omega: 0.0, axis: [0.0, 0.0, 1.0], velocity: [1.0, 0.5, 0.0] }, CoordSystem::Cartesian);
        let a = material_time_derivative(&g, &tr, 0.3, MaterialFamily::Velocity, 0.0).unwrap();
        assert_eq!(a.data.max_abs(), 0.0);
        let dil = MotionCurve::analytic(Motion::Dilation { rate: 1.0 }, CoordSystem::Cartesian);
        let df = material_time_derivative(&g, &dil, 0.5, MaterialFamily::DeformationGradient, 0.0).unwrap();
        assert!(df.as_matrices().iter().all(|m| (m - M3::identity()).abs().max() < 1e-12));
        let id = |_t: f64| Ok(vec![V3::new(1.0, 2.0, 3.0); g.len()]);
        let dc = material_time_derivative(&g, &dil, 0.5, MaterialFamily::Custom(&id), 1e-3).unwrap();
        assert!(dc.data.max_abs() < 1e-12);
    }

    #[test]
    fn rotation_acceleration_from_snapshots() {
        let g = cube(5);
        let omega = 2.0;
        let m = Motion::Rigid { omega, axis: [0.0, 0.0, 1.0], velocity: [0.0; 3] };
        let err = |dt: f64| {
            let exact = MotionCurve::analytic(m.clone(), CoordSystem::Cartesian);
            let phis = (0..5).map(|i| exact.positions(&g, i as f64 * dt).unwrap()).collect();
            let snap = MotionCurve::Snapshots { t0: 0.0, dt, coords: CoordSystem::Cartesian, phis };
            let a = material_time_derivative(&g, &snap, 2.0 * dt, MaterialFamily::Velocity, 0.0).unwrap().as_vectors();
            let p = exact.positions(&g, 2.0 * dt).unwrap();
            a.iter().zip(&p).map(|(a, p)| (a + omega * omega * V3::new(p[0], p[1], 0.0)).norm()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e2 < 1e-3 && (e1 / e2).log2() > 1.9, "{} {}", e1, e2);
    }

    #[test]
    fn acceleration_triplet_examples() {
        let g = cube(7);
        let tr = MotionCurve::analytic(Motion::Rigid { omega: 0.0, axis: [0.0, 0.0, 1.0], velocity: [1.0, 0.5, 0.0] }, CoordSystem::Cartesian);
        let t = acceleration_triplet(&g, &tr, 0.3).unwrap();
        assert!(t.material.data.max_abs() < 1e-12 && t.spatial.data.max_abs() < 1e-12 && t.convective.data.max_abs() < 1e-12);
        // Dilation at t = 0: ∂_tv = −x and ∇_v v = x cancel.
        let dil = MotionCurve::analytic(Motion::Dilation { rate: 1.0 }, CoordSystem::Cartesian);
        let t = acceleration_triplet(&g, &dil, 0.0).unwrap();
        assert!(t.material.data.max_abs() < 1e-12 && t.spatial.data.max_abs() < 1e-12 && t.convective.data.max_abs() < 1e-12);
        let rot = MotionCurve::analytic(Motion::Rigid { omega: 1.5, axis: [0.0, 0.0, 1.0], velocity: [0.0; 3] }, CoordSystem::Cartesian);
        let t = acceleration_triplet(&g, &rot, 0.4).unwrap();
        let p = rot.positions(&g, 0.4).unwrap();
        for (a, p) in t.spatial.as_vectors().iter().zip(&p) {
            assert!((a.norm() - 2.25 * (p[0] * p[0] + p[1] * p[1]).sqrt()).abs() < 1e-10);
        }
        assert!(t.material_spatial_gap < 1e-10 && t.convective_material_gap < 1e-10);
    }

    #[test]
    fn cylindrical_rotation_is_centripetal() {
        let g = Grid::cube(Chart::cylindrical_sector(), 9).unwrap();
        let rot = MotionCurve::analytic(Motion::Rigid { omega: 2.0, axis: [0.0, 0.0, 1.0], velocity: [0.0; 3] }, CoordSystem::Cylindrical);
        let t = acceleration_triplet(&g, &rot, 0.2).unwrap();
        for (n, a) in t.material.as_vectors().iter().enumerate() {
            assert!((a[0] + 4.0 * g.coord(n)[0]).abs() < 1e-12 && a[1].abs() < 1e-12);
        }
        assert!(t.material_spatial_gap < 1e-2 && t.convective_material_gap < 1e-2);
    }

    #[test]
    fn material_context_requires_matching_grid() {
        let g = cube(5);
        let c = Arc::new(Configuration::identity(&cube(6)).unwrap());
        let gm = MetricField::chart(&g).unwrap();
        assert!(ConnectionContext::material(&g, &c, &gm).is_err());
        let sctx = ConnectionContext::spatial(&g, &gm).unwrap();
        let conv = TensorField::vector(&g, Representation::Convective, Base::Body, &vec![V3::x(); g.len()]);
        assert!(covariant_derivative(&g, &conv, &sctx).is_err());
    }
}
