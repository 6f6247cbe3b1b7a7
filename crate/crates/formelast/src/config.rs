//! Embeddings of the body, deformation gradients, induced metrics, per-leg
//! pullbacks between representations, and the built-in motion library.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{BundleValuedForm, ValueKind};
use crate::geometry::{ambient_metric, MetricField, MetricRole};
use crate::grid::{CoordSystem, Grid};
use crate::tensor::{compound, form_slots, Base, Representation, Sampling, TensorField, M3, V3};

pub use crate::tensor::Representation as RepresentationTag;

/// An orientation-preserving embedding sampled at the body nodes.
#[derive(Clone, Debug)]
pub struct Configuration {
    pub t: f64,
    /// Ambient coordinate system of `φ`'s components.
    pub coords: CoordSystem,
    /// `φ^i(X)` per node.
    pub phi: Vec<V3>,
    /// Deformation gradient `F^i_I`, entry `(i, I)`.
    pub f: Vec<M3>,
    /// `(F⁻¹)^I_i`, entry `(I, i)`; shared with pulled-back samplings.
    pub f_inv: Arc<Vec<M3>>,
    /// Jacobian `J = det F · √det(g∘φ) / √det G`.
    pub j: Vec<f64>,
}

/// Deformation gradient of node positions by finite differences in `X`.
pub fn numeric_gradient(grid: &Grid, phi: &[V3]) -> Vec<M3> {
    let flat: Vec<f64> = phi.iter().flat_map(|p| [p[0], p[1], p[2]]).collect();
    let d = Sampling::Body.gradient(grid, &flat, 3);
    (0..grid.len()).map(|n| M3::from_fn(|i, a| d[a][3 * n + i])).collect()
}

impl Configuration {
    /// Build from positions; `F` by finite differences.
    pub fn from_phi(grid: &Grid, coords: CoordSystem, phi: Vec<V3>, t: f64, reference: Option<&MetricField>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::Shape("one position per node required".into()));
        }
        let f = numeric_gradient(grid, &phi);
        Self::with_gradient(grid, coords, phi, f, t, reference)
    }

    /// Build from positions and an externally supplied (e.g. analytic) `F`.
    ///
    /// Without a reference metric, `G` is the ambient metric evaluated at the body
    /// coordinates, i.e. the convective metric of the identity placement.
    pub fn with_gradient(
        grid: &Grid,
        coords: CoordSystem,
        phi: Vec<V3>,
        f: Vec<M3>,
        t: f64,
        reference: Option<&MetricField>,
    ) -> Result<Self> {
        let mut f_inv = Vec::with_capacity(f.len());
        let mut j = Vec::with_capacity(f.len());
        for (node, fm) in f.iter().enumerate() {
            let det = fm.determinant();
            if !(det > 0.0) {
                return Err(Error::Orientation { node, det });
            }
            f_inv.push(fm.try_inverse().ok_or(Error::Orientation { node, det })?);
            let p = phi[node];
            let det_g = ambient_metric(coords, [p[0], p[1], p[2]]).determinant();
            let det_ref = match reference {
                Some(r) => r.g[node].determinant(),
                None => ambient_metric(coords, grid.coord(node)).determinant(),
            };
            j.push(det * (det_g / det_ref).sqrt());
        }
        Ok(Self { t, coords, phi, f, f_inv: Arc::new(f_inv), j })
    }

    /// The identity placement of the chart.
    pub fn identity(grid: &Grid) -> Result<Self> {
        let phi = grid.nodes().into_iter().map(V3::from).collect();
        Self::with_gradient(grid, grid.chart.coords, phi, vec![M3::identity(); grid.len()], 0.0, None)
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Pulled-back sampling for spatial fields over this configuration.
    pub fn sampling(&self) -> Sampling {
        Sampling::PulledBack(self.f_inv.clone())
    }

    /// Ambient metric at the image points, `g∘φ`, tagged spatial and sampled over `φ`.
    pub fn spatial_metric(&self) -> Result<MetricField> {
        let pts: Vec<[f64; 3]> = self.phi.iter().map(|p| [p[0], p[1], p[2]]).collect();
        MetricField::ambient(self.coords, &pts, MetricRole::Spatial, self.sampling())
    }

    /// `(ĝ, g̃)` with `g̃ = g∘φ` and `ĝ = Fᵀ g̃ F`.
    pub fn induced_metrics(&self) -> Result<(MetricField, MetricField)> {
        let mut g_tilde = self.spatial_metric()?;
        g_tilde.role = MetricRole::Material;
        let g_hat = self.f.iter().zip(&g_tilde.g).map(|(f, g)| f.transpose() * g * f).collect();
        Ok((MetricField::new(MetricRole::Convective, Sampling::Body, g_hat)?, g_tilde))
    }

    pub fn min_det_f(&self) -> f64 {
        self.f.iter().map(|f| f.determinant()).fold(f64::INFINITY, f64::min)
    }
}

fn check_over(alpha: &BundleValuedForm, c: &Arc<Configuration>) -> Result<()> {
    if let Some(m) = &alpha.over_map {
        if !(Arc::ptr_eq(m, c) || (m.t == c.t && m.phi == c.phi)) {
            return Err(Error::Representation("form is sampled over a different map".into()));
        }
    }
    if alpha.nodes() != c.len() {
        return Err(Error::Shape("form and configuration differ in size".into()));
    }
    Ok(())
}

/// Contract every form index with `m`: `out_A = Σ_C compound(m)_{C,A} α_C`.
fn transform_form_leg(alpha: &BundleValuedForm, mats: &[M3], out: &mut BundleValuedForm) {
    let k = alpha.degree;
    let n = form_slots(k);
    for node in 0..alpha.nodes() {
        let c = compound(&mats[node], k);
        for v in 0..alpha.vdim() {
            for a in 0..n {
                out.set(node, v, a, (0..n).map(|r| c[r * n + a] * alpha.get(node, v, r)).sum());
            }
        }
    }
}

/// `φ*_f`: spatial form to material form, form legs contracted with `F`.
pub fn pull_form_leg(alpha: &BundleValuedForm, c: &Arc<Configuration>) -> Result<BundleValuedForm> {
    if alpha.repr != Representation::Spatial {
        return Err(Error::Representation("pull_form_leg expects a spatial form".into()));
    }
    check_over(alpha, c)?;
    let mut out = alpha.clone();
    out.repr = Representation::Material;
    out.over_map = Some(c.clone());
    transform_form_leg(alpha, &c.f, &mut out);
    Ok(out)
}

/// Inverse of [`pull_form_leg`]; the result is sampled over the same map.
pub fn push_form_leg(alpha: &BundleValuedForm) -> Result<BundleValuedForm> {
    if alpha.repr != Representation::Material {
        return Err(Error::Representation("push_form_leg expects a material form".into()));
    }
    let c = alpha.over_map.clone().expect("material forms carry their map");
    let mut out = alpha.clone();
    out.repr = Representation::Spatial;
    transform_form_leg(alpha, &c.f_inv, &mut out);
    Ok(out)
}

/// Transform the value leg: vectors with `vec_m`, covectors with `covec_m` (transposed action).
fn transform_value_leg(alpha: &BundleValuedForm, vec_m: &[M3], covec_m: &[M3], out: &mut BundleValuedForm) {
    let n = alpha.slots();
    for node in 0..alpha.nodes() {
        for s in 0..n {
            let src = V3::from_fn(|v, _| alpha.get(node, v, s));
            let dst = match alpha.value {
                ValueKind::Vector => vec_m[node] * src,
                ValueKind::Covector => covec_m[node].transpose() * src,
                ValueKind::Scalar => return,
            };
            for v in 0..3 {
                out.set(node, v, s, dst[v]);
            }
        }
    }
}

/// `φ*_v`: material form to convective form; vectors by `F⁻¹`, covectors by `F`.
pub fn pull_value_leg(alpha: &BundleValuedForm) -> Result<BundleValuedForm> {
    if alpha.repr != Representation::Material {
        return Err(Error::Representation("pull_value_leg expects a material form".into()));
    }
    let c = alpha.over_map.clone().expect("material forms carry their map");
    let mut out = alpha.clone();
    out.repr = Representation::Convective;
    out.over_map = None;
    transform_value_leg(alpha, &c.f_inv, &c.f, &mut out);
    Ok(out)
}

/// Inverse of [`pull_value_leg`].
pub fn push_value_leg(alpha: &BundleValuedForm, c: &Arc<Configuration>) -> Result<BundleValuedForm> {
    if alpha.repr != Representation::Convective {
        return Err(Error::Representation("push_value_leg expects a convective form".into()));
    }
    if alpha.nodes() != c.len() {
        return Err(Error::Shape("form and configuration differ in size".into()));
    }
    let mut out = alpha.clone();
    out.repr = Representation::Material;
    out.over_map = Some(c.clone());
    transform_value_leg(alpha, &c.f, &c.f_inv, &mut out);
    Ok(out)
}

/// Full pullback `φ* = φ*_v ∘ φ*_f`.
pub fn pullback(alpha: &BundleValuedForm, c: &Arc<Configuration>) -> Result<BundleValuedForm> {
    pull_value_leg(&pull_form_leg(alpha, c)?)
}

/// Built-in motions `φ_t(X)`, written in the ambient chart's coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "motion", content = "params", rename_all = "snake_case")]
pub enum Motion {
    /// `φ = X`.
    Static,
    /// Rotation with angular rate `omega` about `axis` through the origin plus
    /// translation `velocity·t`. In cylindrical charts: `θ ↦ θ + ωt`, `z ↦ z + v₃t`.
    Rigid { omega: f64, axis: [f64; 3], velocity: [f64; 3] },
    /// `φ = (1 + rate·t) X`.
    Dilation { rate: f64 },
    /// `φ = (X¹ + rate·t·X², X², X³)`.
    Shear { rate: f64 },
    /// `φ = X + amplitude·sin(omega·t)·b(X)` with a fixed smooth field `b`.
    Bump { amplitude: f64, omega: f64 },
}

fn cross_matrix(a: V3) -> M3 {
    M3::new(0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0)
}

fn bump(x: V3) -> (V3, M3) {
    let (s, c) = (x.map(f64::sin), x.map(f64::cos));
    let b = V3::new(s[1] * c[2] + 0.5 * s[0], s[2] * c[0] + 0.5 * s[1], s[0] * c[1] + 0.5 * s[2]);
    let db = M3::new(
        0.5 * c[0],
        c[1] * c[2],
        -s[1] * s[2],
        -s[2] * s[0],
        0.5 * c[1],
        c[2] * c[0],
        c[0] * c[1],
        -s[0] * s[1],
        0.5 * c[2],
    );
    (b, db)
}

/// Kinematic data of a motion at one point: position, velocity, acceleration, `F`, `∂_tF`.
#[derive(Clone, Copy, Debug)]
pub struct PointKinematics {
    pub position: V3,
    pub velocity: V3,
    pub acceleration: V3,
    pub f: M3,
    pub f_rate: M3,
}

impl Motion {
    /// Analytic kinematics at body point `x` and time `t` (chart second time derivative as `acceleration`).
    pub fn at(&self, coords: CoordSystem, x: [f64; 3], t: f64) -> PointKinematics {
        let x = V3::from(x);
        let id = M3::identity();
        match *self {
            Motion::Static => PointKinematics { position: x, velocity: V3::zeros(), acceleration: V3::zeros(), f: id, f_rate: M3::zeros() },
            Motion::Rigid { omega, axis, velocity } => match coords {
                CoordSystem::Cartesian => {
                    let a = V3::from(axis);
                    let k = cross_matrix(if a.norm() > 0.0 { a.normalize() } else { V3::z() });
                    let th = omega * t;
                    let r = id + th.sin() * k + (1.0 - th.cos()) * k * k;
                    let b = V3::from(velocity);
                    PointKinematics {
                        position: r * x + b * t,
                        velocity: omega * k * r * x + b,
                        acceleration: omega * omega * k * k * r * x,
                        f: r,
                        f_rate: omega * k * r,
                    }
                }
                CoordSystem::Cylindrical => {
                    let v = V3::new(0.0, omega, velocity[2]);
                    PointKinematics { position: x + v * t, velocity: v, acceleration: V3::zeros(), f: id, f_rate: M3::zeros() }
                }
            },
            Motion::Dilation { rate } => PointKinematics {
                position: (1.0 + rate * t) * x,
                velocity: rate * x,
                acceleration: V3::zeros(),
                f: (1.0 + rate * t) * id,
                f_rate: rate * id,
            },
            Motion::Shear { rate } => {
                let mut f = id;
                f[(0, 1)] = rate * t;
                let mut fr = M3::zeros();
                fr[(0, 1)] = rate;
                PointKinematics { position: f * x, velocity: fr * x, acceleration: V3::zeros(), f, f_rate: fr }
            }
            Motion::Bump { amplitude, omega } => {
                let (b, db) = bump(x);
                let (s, c) = ((omega * t).sin(), (omega * t).cos());
                PointKinematics {
                    position: x + amplitude * s * b,
                    velocity: amplitude * omega * c * b,
                    acceleration: -amplitude * omega * omega * s * b,
                    f: id + amplitude * s * db,
                    f_rate: amplitude * omega * c * db,
                }
            }
        }
    }
}

/// A time-parametrized family of configurations.
#[derive(Clone, Debug)]
pub enum MotionCurve {
    /// Closed-form motion; time derivatives are exact.
    Analytic { motion: Motion, coords: CoordSystem },
    /// Positions at `t0 + i·dt`; time derivatives by 2nd-order differences.
    Snapshots { t0: f64, dt: f64, coords: CoordSystem, phis: Vec<Vec<V3>> },
}

impl MotionCurve {
    pub fn analytic(motion: Motion, coords: CoordSystem) -> Self {
        MotionCurve::Analytic { motion, coords }
    }

    pub fn coords(&self) -> CoordSystem {
        match self {
            MotionCurve::Analytic { coords, .. } | MotionCurve::Snapshots { coords, .. } => *coords,
        }
    }

    fn snapshot_index(&self, t: f64) -> Result<usize> {
        match self {
            MotionCurve::Snapshots { t0, dt, phis, .. } => {
                let s = (t - t0) / dt;
                let i = s.round();
                if (s - i).abs() > 1e-9 || i < 0.0 || i as usize >= phis.len() {
                    return Err(Error::Snapshots(format!("no snapshot at t = {}", t)));
                }
                Ok(i as usize)
            }
            _ => unreachable!(),
        }
    }

    /// Positions `φ_t(X)` at every node.
    pub fn positions(&self, grid: &Grid, t: f64) -> Result<Vec<V3>> {
        match self {
            MotionCurve::Analytic { motion, coords } => Ok(grid.nodes().iter().map(|&x| motion.at(*coords, x, t).position).collect()),
            MotionCurve::Snapshots { phis, .. } => Ok(phis[self.snapshot_index(t)?].clone()),
        }
    }

    /// Material velocity `ṽ = ∂_tφ` at every node.
    pub fn velocity(&self, grid: &Grid, t: f64) -> Result<Vec<V3>> {
        match self {
            MotionCurve::Analytic { motion, coords } => Ok(grid.nodes().iter().map(|&x| motion.at(*coords, x, t).velocity).collect()),
            MotionCurve::Snapshots { dt, phis, .. } => {
                if phis.len() < 3 {
                    return Err(Error::Snapshots("need at least 3 snapshots".into()));
                }
                let i = self.snapshot_index(t)?;
                let last = phis.len() - 1;
                let p = |k: usize| &phis[k];
                Ok((0..grid.len())
                    .map(|n| {
                        if i == 0 {
                            (-3.0 * p(0)[n] + 4.0 * p(1)[n] - p(2)[n]) / (2.0 * dt)
                        } else if i == last {
                            (3.0 * p(last)[n] - 4.0 * p(last - 1)[n] + p(last - 2)[n]) / (2.0 * dt)
                        } else {
                            (p(i + 1)[n] - p(i - 1)[n]) / (2.0 * dt)
                        }
                    })
                    .collect())
            }
        }
    }

    /// Configuration at `t`; `analytic_f` uses the closed-form `F` when available.
    pub fn configuration(&self, grid: &Grid, t: f64, analytic_f: bool, reference: Option<&MetricField>) -> Result<Configuration> {
        let phi = self.positions(grid, t)?;
        match self {
            MotionCurve::Analytic { motion, coords } if analytic_f => {
                let f = grid.nodes().iter().map(|&x| motion.at(*coords, x, t).f).collect();
                Configuration::with_gradient(grid, *coords, phi, f, t, reference)
            }
            _ => Configuration::from_phi(grid, self.coords(), phi, t, reference),
        }
    }

    /// Default reference metric `G = ĝ` at `t0`.
    pub fn reference_metric(&self, grid: &Grid, t0: f64) -> Result<MetricField> {
        let c = self.configuration(grid, t0, true, None)?;
        let (mut g_hat, _) = c.induced_metrics()?;
        g_hat.role = MetricRole::Reference;
        Ok(g_hat)
    }
}

/// Velocity in the three representations at one instant.
#[derive(Clone, Debug)]
pub struct VelocityTriplet {
    /// `ṽ = ∂_tφ`, a vector field over `φ`.
    pub material: TensorField,
    /// `v = ṽ∘φ⁻¹`, stored in pulled-back sampling (same components as `ṽ`).
    pub spatial: TensorField,
    /// `v̂ = F⁻¹ṽ` on the body.
    pub convective: TensorField,
}

pub fn velocity_triplet(grid: &Grid, curve: &MotionCurve, c: &Configuration) -> Result<VelocityTriplet> {
    let vt = curve.velocity(grid, c.t)?;
    let vh: Vec<V3> = vt.iter().zip(c.f_inv.iter()).map(|(v, fi)| fi * v).collect();
    Ok(VelocityTriplet {
        material: TensorField::vector(grid, Representation::Material, Base::Spatial, &vt),
        spatial: TensorField::vector(grid, Representation::Spatial, Base::Spatial, &vt),
        convective: TensorField::vector(grid, Representation::Convective, Base::Body, &vh),
    })
}

/// `max |g̃(ṽ, ṽ) − ĝ(v̂, v̂)|` over the nodes.
pub fn metric_norm_equality_residual(grid: &Grid, curve: &MotionCurve, c: &Configuration) -> Result<f64> {
    let tri = velocity_triplet(grid, curve, c)?;
    let (g_hat, g_tilde) = c.induced_metrics()?;
    let vt = tri.material.as_vectors();
    let vh = tri.convective.as_vectors();
    Ok((0..grid.len())
        .map(|n| (vt[n].dot(&(g_tilde.g[n] * vt[n])) - vh[n].dot(&(g_hat.g[n] * vh[n]))).abs())
        .fold(0.0, f64::max))
}

/// Motion scenario as read from JSON: `{motion, params, t0, t1, dt}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionScenario {
    #[serde(flatten)]
    pub motion: Motion,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}
