//! Identity-verification suite, simulation runner, and stress-field conversion.
//!
//! Every identity is a residual function evaluated on two grid resolutions. The
//! tolerance of a convergent identity is `C·h^p` with a declared order `p`; besides
//! staying under the tolerance, the empirical order between the two resolutions must
//! reach `p − 0.1` unless the finer residual is already at roundoff level.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    covariant_derivative, exterior_covariant_derivative, flatten, lie_derivative_form, material_time_derivative, ConnectionContext,
    MaterialFamily,
};
use crate::config::{metric_norm_equality_residual, pull_form_leg, pullback, Configuration, Motion, MotionCurve};
use crate::dynamics::{
    classical_equivalence_residual, convective_momentum_rate_residual, interior_bump, lie_identity_sides, simulate, BoundaryCondition,
    ElasticBody, MotionState,
};
use crate::error::{Error, Result};
use crate::forms::{
    exterior_derivative, hodge_flat, hodge_sharp, inner_product, integrate_top, wedge_dot, BundleValuedForm, MassForm, Parity, Star,
    ValueKind,
};
use crate::geometry::{killing_residual, lie_derivative_metric, MetricField, MetricRole};
use crate::grid::{integrate_boundary, rms_norm, BoundaryForm, Chart, CoordSystem, Grid, MIN_NODES};
use crate::masskinetics::{mass_conservation_residual, MassStructure};
use crate::stress::{
    energy_gradient_fd, rougee_stress, stress_power_pairings, stress_web_convert, ConstitutiveModel, ModelKind, StressPayload, StressState,
    StressWeight, WebContext, WebTag,
};
use crate::tensor::{form_slots, Base, Leg, Representation, Sampling, TensorField, M3, V3};

/// Residuals below this level are treated as roundoff: no order is required of them.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

/// Slack allowed between the declared and the measured convergence order.
pub const ORDER_SLACK: f64 = 0.1;

pub use crate::dynamics::ENERGY_FLOOR;

// ---------------------------------------------------------------------------
// Charts and random smooth fields
// ---------------------------------------------------------------------------

/// Built-in body charts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    /// Unit cube in Cartesian coordinates.
    #[serde(alias = "unit_cube")]
    Cartesian,
    /// Shell sector `r ∈ [1,2], θ ∈ [0,1], z ∈ [0,1]` in cylindrical coordinates.
    #[serde(alias = "cyl_sector")]
    Cylindrical,
}

impl ChartKind {
    pub fn chart(self) -> Chart {
        match self {
            ChartKind::Cartesian => Chart::unit_cube(),
            ChartKind::Cylindrical => Chart::cylindrical_sector(),
        }
    }

    pub fn grid(self, n: usize) -> Result<Grid> {
        Grid::cube(self.chart(), n)
    }

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::Cartesian => "cartesian",
            ChartKind::Cylindrical => "cylindrical",
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Mode {
    amp: f64,
    k: [f64; 3],
    phase: f64,
}

/// A smooth random field: each component is a constant plus three random plane waves.
#[derive(Clone, Debug)]
pub struct SmoothField {
    offsets: Vec<f64>,
    modes: Vec<[Mode; 3]>,
}

impl SmoothField {
    pub fn random(rng: &mut impl Rng, ncomp: usize) -> Self {
        let mode = |rng: &mut dyn rand::RngCore| Mode {
            amp: rng.random_range(-1.0..1.0),
            k: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
            phase: rng.random_range(0.0..TAU),
        };
        let offsets = (0..ncomp).map(|_| rng.random_range(-1.0..1.0)).collect();
        let modes = (0..ncomp).map(|_| [mode(rng), mode(rng), mode(rng)]).collect();
        Self { offsets, modes }
    }

    pub fn ncomp(&self) -> usize {
        self.offsets.len()
    }

    pub fn eval(&self, x: [f64; 3], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.offsets[c]
                + self.modes[c].iter().map(|m| m.amp * (m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2] + m.phase).sin()).sum::<f64>();
        }
    }

    pub fn value(&self, x: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp()];
        self.eval(x, &mut out);
        out
    }

    /// Sample a 3-component field as vectors.
    pub fn vectors(&self, pts: &[[f64; 3]]) -> Vec<V3> {
        pts.iter().map(|&x| V3::from_vec(self.value(x))).collect()
    }

    /// Sample a 9-component field as symmetrized matrices.
    pub fn symmetric_matrices(&self, pts: &[[f64; 3]]) -> Vec<M3> {
        pts.iter()
            .map(|&x| {
                let m = M3::from_row_slice(&self.value(x));
                0.5 * (m + m.transpose())
            })
            .collect()
    }
}

/// Stable 64-bit FNV-1a hash, used to give every check its own random stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Deterministic generator for one named check: same fields at every resolution.
pub fn check_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name))
}

fn points(c: &Configuration) -> Vec<[f64; 3]> {
    c.phi.iter().map(|p| [p[0], p[1], p[2]]).collect()
}

/// Random form with components drawn from a fresh smooth field at `pts`.
#[allow(clippy::too_many_arguments)]
fn random_form(
    grid: &Grid,
    rng: &mut ChaCha8Rng,
    degree: usize,
    value: ValueKind,
    repr: Representation,
    parity: Parity,
    over_map: Option<Arc<Configuration>>,
    pts: &[[f64; 3]],
) -> Result<BundleValuedForm> {
    let f = SmoothField::random(rng, value.dim() * form_slots(degree));
    BundleValuedForm::from_fn(grid, degree, value, repr, parity, over_map, |node, _, out| f.eval(pts[node], out))
}

/// Reference metric `G`: the chart metric, tagged as the reference.
pub fn chart_reference(grid: &Grid) -> Result<MetricField> {
    MetricField::ambient(grid.chart.coords, &grid.nodes(), MetricRole::Reference, Sampling::Body)
}

/// Smooth finite-strain motion used by the stress and kernel checks.
fn bump_curve(coords: CoordSystem) -> MotionCurve {
    MotionCurve::analytic(Motion::Bump { amplitude: 0.1, omega: 1.0 }, coords)
}

fn bump_config(grid: &Grid, reference: &MetricField) -> Result<Arc<Configuration>> {
    Ok(Arc::new(bump_curve(grid.chart.coords).configuration(grid, 0.7, true, Some(reference))?))
}

fn rigid_motion() -> Motion {
    Motion::Rigid { omega: 0.8, axis: [0.0, 0.0, 1.0], velocity: [0.1, 0.2, 0.3] }
}

// ---------------------------------------------------------------------------
// Identity registry
// ---------------------------------------------------------------------------

/// How the tolerance of an identity depends on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rate {
    /// Tolerance `constant·h^order`; the empirical order is expected to reach `min_order`.
    Convergent { order: f64, constant: f64, min_order: f64 },
    /// Resolution-independent tolerance.
    Exact { tolerance: f64 },
}

impl Rate {
    pub fn tolerance(self, h: f64) -> f64 {
        match self {
            Rate::Convergent { order, constant, .. } => constant * h.powf(order),
            Rate::Exact { tolerance } => tolerance,
        }
    }
}

/// Input of one residual evaluation.
pub struct Probe<'a> {
    pub grid: &'a Grid,
    pub variant: &'a str,
    /// Swap the leg order of `∇v♭` (derivative index second): a deliberately broken convention.
    pub leg_swap: bool,
}

type Residual = fn(&Probe, &mut ChaCha8Rng) -> Result<f64>;

/// One registered identity.
pub struct Identity {
    pub name: &'static str,
    /// Coverage topic; see [`COVERAGE`].
    pub topic: &'static str,
    pub statement: &'static str,
    pub variants: &'static [&'static str],
    pub charts: &'static [ChartKind],
    pub rate: Rate,
    residual: Residual,
}

/// Topics of the formulation the suite must cover, each by at least one identity.
pub const COVERAGE: &[(&str, &str)] = &[
    ("kinematics", "velocities, deformation gradient rate, and induced metrics"),
    ("connection", "covariant differentiation: symmetric/skew split, musical commutation, naturality"),
    ("forms", "wedge-dot, Cartan formula, integration by parts, Hodge duality"),
    ("mass", "mass conservation in the three representations"),
    ("stress_web", "stress conversions and the metric-gradient stress formula"),
    ("motion", "momentum balance identities and stress power"),
    ("equivalence", "exterior versus classical force kernels"),
    ("rigid", "Killing residuals and rigid-motion invariance"),
    ("complex", "flat-space de Rham complex property d_∇∘d_∇ = 0"),
];

const BOTH: &[ChartKind] = &[ChartKind::Cartesian, ChartKind::Cylindrical];
const CARTESIAN: &[ChartKind] = &[ChartKind::Cartesian];

/// Second-order tolerance `constant·h²`, measured order at least `2 − ORDER_SLACK`.
const fn conv(constant: f64) -> Rate {
    Rate::Convergent { order: 2.0, constant, min_order: 2.0 - ORDER_SLACK }
}

/// Every identity checked by the suite, each registered exactly once.
pub fn registry() -> Vec<Identity> {
    vec![
        Identity {
            name: "symmetric_skew_split",
            topic: "connection",
            statement: "∇v♭ = ½ L_v g + ½ dv♭",
            variants: &["spatial", "convective"],
            charts: BOTH,
            rate: conv(25.0),
            residual: split_residual,
        },
        Identity {
            name: "split_corollary",
            topic: "connection",
            statement: "∇_v v♭ = L_v v♭ − ½ d(ι_v v♭)",
            variants: &["spatial", "convective"],
            charts: BOTH,
            rate: conv(80.0),
            residual: corollary_residual,
        },
        Identity {
            name: "musical_commutes",
            topic: "connection",
            statement: "(∇v)♭ = ∇(v♭)",
            variants: &["spatial", "convective"],
            charts: BOTH,
            rate: conv(30.0),
            residual: musical_residual,
        },
        Identity {
            name: "pullback_naturality",
            topic: "connection",
            statement: "d_∇∘φ*_f = φ*_f∘d_∇, d̂_∇∘φ* = φ*∘d_∇, ∇̂∘φ* = φ*∘∇",
            variants: &["form_leg/dilation", "form_leg/shear", "full/dilation", "full/shear", "nabla/dilation", "nabla/shear"],
            charts: BOTH,
            rate: conv(8.0),
            residual: naturality_residual,
        },
        Identity {
            name: "cartan_formula",
            topic: "forms",
            statement: "L_u = d∘ι_u + ι_u∘d",
            variants: &["one_form", "two_form"],
            charts: BOTH,
            rate: conv(50.0),
            residual: cartan_residual,
        },
        Identity {
            name: "integration_by_parts",
            topic: "forms",
            statement: "∫d_∇ζ ∧̇ 𝒳 + (−1)^k ∫ζ ∧̇ d_∇𝒳 = ∮ i*ζ ∧̇ i*𝒳",
            variants: &["degree0", "degree1"],
            charts: BOTH,
            rate: conv(20.0),
            residual: ibp_residual,
        },
        Identity {
            name: "hodge_duality",
            topic: "forms",
            statement: "⋆♯⋆♭ = id and ζ ∧̇ ⋆♭ξ = ⟨ζ, ξ⟩ μ",
            variants: &["degree0", "degree1", "degree2", "degree3"],
            charts: BOTH,
            rate: Rate::Exact { tolerance: 1e-12 },
            residual: hodge_residual,
        },
        Identity {
            name: "flat_complex",
            topic: "complex",
            statement: "d_∇∘d_∇ = 0 in flat space (RMS norm)",
            variants: &["degree0", "degree1"],
            charts: BOTH,
            rate: conv(8.0),
            residual: complex_residual,
        },
        Identity {
            name: "kinetic_metric",
            topic: "kinematics",
            statement: "ĝ(v̂, v̂) = g̃(ṽ, ṽ)",
            variants: &["analytic", "numeric"],
            charts: BOTH,
            rate: Rate::Exact { tolerance: 1e-10 },
            residual: kinetic_metric_residual,
        },
        Identity {
            name: "velocity_gradient_rate",
            topic: "kinematics",
            statement: "D_t F = ∇̃ṽ",
            variants: &[
                "analytic/dilation",
                "analytic/shear",
                "analytic/rigid",
                "analytic/bump",
                "snapshots/dilation",
                "snapshots/shear",
                "snapshots/rigid",
                "snapshots/bump",
            ],
            charts: BOTH,
            rate: conv(8.0),
            residual: velocity_gradient_residual,
        },
        Identity {
            name: "rigid_factorization",
            topic: "rigid",
            statement: "L_v g = 0 and ∂_t ĝ = 0 for rigid motions",
            variants: &["killing", "metric_rate"],
            charts: BOTH,
            rate: conv(8.0),
            residual: rigid_residual,
        },
        Identity {
            name: "mass_conservation",
            topic: "mass",
            statement: "∂_t ρ̂ + ρ̂ div̂ v̂ = 0, ∂_t μ + L_v μ = 0, ∂_t μ̃ = 0",
            variants: &["spatial", "material", "convective"],
            charts: BOTH,
            rate: conv(8.0),
            residual: mass_residual,
        },
        Identity {
            name: "lie_flux_identity",
            topic: "motion",
            statement: "L_u(ω⊗α) = d_∇(ι_uω⊗α) + ω⊗(∇u ∧̇ α)",
            variants: &["spatial"],
            charts: BOTH,
            rate: conv(8.0),
            residual: lie_flux_residual,
        },
        Identity {
            name: "convective_momentum_rate",
            topic: "motion",
            statement: "∂_t(ĝv̂) = ĝ∂_tv̂ + ∇̂_{v̂}v̂♭ + ½ d ĝ(v̂, v̂)",
            variants: &["bump"],
            charts: BOTH,
            rate: conv(8.0),
            residual: convective_momentum_residual,
        },
        Identity {
            name: "stress_power",
            topic: "motion",
            statement: "∫∇̂v̂ ∧̇ 𝒯̂ = ∫ε̂ ∧̇ 𝒯̂ for symmetric 𝒯̂",
            variants: &["svk", "neo_hookean"],
            charts: BOTH,
            rate: conv(8.0),
            residual: stress_power_residual,
        },
        Identity {
            name: "classical_equivalence",
            topic: "equivalence",
            statement: "⋆♯d_∇⋆♭τ = (1/ρ) div σ",
            variants: &["spatial", "material", "convective"],
            charts: BOTH,
            rate: conv(50.0),
            residual: kernel_residual,
        },
        Identity {
            name: "stress_web_closure",
            topic: "stress_web",
            statement: "cyclic conversions through all nine stress entries return to the start",
            variants: &["forward", "reverse"],
            charts: BOTH,
            rate: conv(8.0),
            residual: closure_residual,
        },
        Identity {
            name: "metric_gradient_stress",
            topic: "stress_web",
            statement: "analytic ∂ê/∂ĝ equals its central finite difference (relative)",
            variants: &["svk", "neo_hookean"],
            charts: CARTESIAN,
            rate: Rate::Exact { tolerance: 1e-6 },
            residual: metric_gradient_residual,
        },
    ]
}

// ---------------------------------------------------------------------------
// Residual functions
// ---------------------------------------------------------------------------

/// Metric, connection, and representation of the frame a connection check runs in:
/// the chart metric (spatial) or the convective metric of a smooth motion.
fn frame(p: &Probe) -> Result<(MetricField, ConnectionContext, Representation)> {
    match p.variant {
        "spatial" => {
            let m = MetricField::chart(p.grid)?;
            let ctx = ConnectionContext::spatial(p.grid, &m)?;
            Ok((m, ctx, Representation::Spatial))
        }
        "convective" => {
            let c = bump_config(p.grid, &chart_reference(p.grid)?)?;
            let (g_hat, _) = c.induced_metrics()?;
            let ctx = ConnectionContext::convective(p.grid, &g_hat)?;
            Ok((g_hat, ctx, Representation::Convective))
        }
        v => Err(Error::Config(format!("unknown variant '{}'", v))),
    }
}

fn unknown(v: &str) -> Error {
    Error::Config(format!("unknown variant '{}'", v))
}

/// Scalar 1-form with components `w_i`.
fn scalar_one_form(grid: &Grid, repr: Representation, w: &[V3]) -> Result<BundleValuedForm> {
    BundleValuedForm::from_fn(grid, 1, ValueKind::Scalar, repr, Parity::True, None, |n, _, o| o.copy_from_slice(w[n].as_slice()))
}

/// Antisymmetric matrix of a 2-form stored in `[12, 13, 23]` slots.
fn two_form_matrix(s: &[f64]) -> M3 {
    M3::new(0.0, s[0], s[1], -s[0], 0.0, s[2], -s[1], -s[2], 0.0)
}

fn max_matrix_diff(a: &[M3], b: &[M3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs().max()).fold(0.0, f64::max)
}

fn split_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (metric, ctx, repr) = frame(p)?;
    let g = p.grid;
    let base = metric.base();
    let v = SmoothField::random(rng, 3).vectors(&g.nodes());
    let v_flat: Vec<V3> = v.iter().zip(&metric.g).map(|(v, m)| m * v).collect();
    let nabla = covariant_derivative(g, &TensorField::covector(g, repr, base, &v_flat), &ctx)?.as_matrices();
    let lie = lie_derivative_metric(g, &TensorField::vector(g, repr, base, &v), &metric)?.as_matrices();
    let dv = exterior_derivative(g, &scalar_one_form(g, repr, &v_flat)?)?;
    let mut worst: f64 = 0.0;
    for n in 0..g.len() {
        // Derivative index first: N_ij = ∇_i v_j.
        let nab = if p.leg_swap { nabla[n].transpose() } else { nabla[n] };
        let skew = two_form_matrix(dv.comps.node(n));
        worst = worst.max((nab - 0.5 * lie[n] - 0.5 * skew).abs().max());
    }
    Ok(worst)
}

fn corollary_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (metric, ctx, repr) = frame(p)?;
    let g = p.grid;
    let base = metric.base();
    let v = SmoothField::random(rng, 3).vectors(&g.nodes());
    let v_flat: Vec<V3> = v.iter().zip(&metric.g).map(|(v, m)| m * v).collect();
    let vt = TensorField::vector(g, repr, base, &v);
    let nabla = covariant_derivative(g, &TensorField::covector(g, repr, base, &v_flat), &ctx)?.as_matrices();
    let lie = lie_derivative_form(g, &vt, &scalar_one_form(g, repr, &v_flat)?)?;
    let kin = BundleValuedForm::from_fn(g, 0, ValueKind::Scalar, repr, Parity::True, None, |n, _, o| o[0] = v[n].dot(&v_flat[n]))?;
    let dkin = exterior_derivative(g, &kin)?;
    let mut worst: f64 = 0.0;
    for n in 0..g.len() {
        let along = nabla[n].transpose() * v[n];
        for j in 0..3 {
            worst = worst.max((along[j] - lie.get(n, 0, j) + 0.5 * dkin.get(n, 0, j)).abs());
        }
    }
    Ok(worst)
}

fn musical_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (metric, ctx, repr) = frame(p)?;
    let g = p.grid;
    let base = metric.base();
    let v = SmoothField::random(rng, 3).vectors(&g.nodes());
    let v_flat: Vec<V3> = v.iter().zip(&metric.g).map(|(v, m)| m * v).collect();
    let grad = covariant_derivative(g, &TensorField::vector(g, repr, base, &v), &ctx)?.as_matrices();
    let lowered: Vec<M3> = grad.iter().zip(&metric.g).map(|(d, m)| d * m).collect();
    let nabla = covariant_derivative(g, &TensorField::covector(g, repr, base, &v_flat), &ctx)?.as_matrices();
    Ok(max_matrix_diff(&lowered, &nabla))
}

fn naturality_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let (kind, motion) = p.variant.split_once('/').ok_or_else(|| unknown(p.variant))?;
    let motion = match motion {
        "dilation" => Motion::Dilation { rate: 0.5 },
        "shear" => Motion::Shear { rate: 0.5 },
        _ => return Err(unknown(p.variant)),
    };
    let reference = chart_reference(g)?;
    let c = Arc::new(MotionCurve::analytic(motion, g.chart.coords).configuration(g, 1.0, true, Some(&reference))?);
    let degree = if kind == "nabla" { 0 } else { 1 };
    let alpha = random_form(g, rng, degree, ValueKind::Vector, Representation::Spatial, Parity::True, Some(c.clone()), &points(&c))?;
    let d_alpha = exterior_covariant_derivative(g, &alpha, &ConnectionContext::spatial_over(&c)?)?;
    let (lhs, rhs) = match kind {
        "form_leg" => {
            let mctx = ConnectionContext::material(g, &c, &reference)?;
            (exterior_covariant_derivative(g, &pull_form_leg(&alpha, &c)?, &mctx)?, pull_form_leg(&d_alpha, &c)?)
        }
        "full" | "nabla" => {
            let (g_hat, _) = c.induced_metrics()?;
            let cctx = ConnectionContext::convective(g, &g_hat)?;
            (exterior_covariant_derivative(g, &pullback(&alpha, &c)?, &cctx)?, pullback(&d_alpha, &c)?)
        }
        _ => return Err(unknown(p.variant)),
    };
    Ok(lhs.max_diff(&rhs))
}

fn cartan_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let pts = g.nodes();
    let v = SmoothField::random(rng, 3).vectors(&pts);
    let vt = TensorField::vector(g, Representation::Spatial, Base::Spatial, &v);
    // dv[i][3n + k] = ∂_i v^k
    let dv = Sampling::Body.gradient(g, &flatten(&v), 3);
    let degree = match p.variant {
        "one_form" => 1,
        "two_form" => 2,
        _ => return Err(unknown(p.variant)),
    };
    let alpha = random_form(g, rng, degree, ValueKind::Scalar, Representation::Spatial, Parity::True, None, &pts)?;
    let lie = lie_derivative_form(g, &vt, &alpha)?;
    let da = Sampling::Body.gradient(g, &alpha.comps.values, 3);
    let jac = |n: usize| M3::from_fn(|k, i| dv[i][3 * n + k]);
    let mut worst: f64 = 0.0;
    for n in 0..g.len() {
        let j = jac(n);
        // Coordinate formula, independent of ι and d.
        let coord: Vec<f64> = if degree == 1 {
            (0..3)
                .map(|i| (0..3).map(|k| v[n][k] * da[k][3 * n + i] + alpha.get(n, 0, k) * j[(k, i)]).sum())
                .collect()
        } else {
            let b = two_form_matrix(alpha.comps.node(n));
            let db: Vec<M3> = (0..3).map(|k| two_form_matrix(&da[k][3 * n..3 * n + 3])).collect();
            let full = (0..3).fold(M3::zeros(), |acc, k| acc + v[n][k] * db[k]) + j.transpose() * b + b * j;
            vec![full[(0, 1)], full[(0, 2)], full[(1, 2)]]
        };
        for (s, c) in coord.iter().enumerate() {
            worst = worst.max((lie.get(n, 0, s) - c).abs());
        }
    }
    Ok(worst)
}

fn ibp_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let pts = g.nodes();
    let ctx = ConnectionContext::spatial(g, &MetricField::chart(g)?)?;
    let k = match p.variant {
        "degree0" => 0,
        "degree1" => 1,
        _ => return Err(unknown(p.variant)),
    };
    let zeta = random_form(g, rng, k, ValueKind::Vector, Representation::Spatial, Parity::True, None, &pts)?;
    let chi = random_form(g, rng, 2 - k, ValueKind::Covector, Representation::Spatial, Parity::Pseudo, None, &pts)?;
    let a = integrate_top(g, &wedge_dot(&exterior_covariant_derivative(g, &zeta, &ctx)?, &chi)?)?;
    let b = integrate_top(g, &wedge_dot(&zeta, &exterior_covariant_derivative(g, &chi, &ctx)?)?)?;
    let flux = wedge_dot(&zeta, &chi)?;
    let boundary = integrate_boundary(g, &BoundaryForm::restrict(g, &flux.comps.values)?)?;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok((a + sign * b - boundary).abs())
}

fn degree_of(v: &str) -> Result<usize> {
    v.strip_prefix("degree").and_then(|d| d.parse().ok()).filter(|&d| d <= 3).ok_or_else(|| unknown(v))
}

fn hodge_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let pts = g.nodes();
    let k = degree_of(p.variant)?;
    let metric = MetricField::chart(g)?;
    let dens = SmoothField::random(rng, 1);
    let mu = MassForm::new(g, Representation::Spatial, None, pts.iter().map(|&x| 1.0 + 0.2 * dens.value(x)[0]).collect())?;
    let star = Star::new(Representation::Spatial, &metric, &mu);
    let xi = random_form(g, rng, k, ValueKind::Vector, Representation::Spatial, Parity::True, None, &pts)?;
    let zeta = random_form(g, rng, k, ValueKind::Vector, Representation::Spatial, Parity::True, None, &pts)?;
    let flat = hodge_flat(&xi, &star)?;
    let roundtrip = hodge_sharp(&flat, &star)?.max_diff(&xi);
    let lhs = wedge_dot(&zeta, &flat)?;
    let ip = inner_product(&zeta, &xi, &star)?;
    let defining = (0..g.len()).map(|n| (lhs.get(n, 0, 0) - ip[n] * mu.density()[n]).abs()).fold(0.0, f64::max);
    Ok(roundtrip.max(defining))
}

fn complex_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let k = degree_of(p.variant)?;
    let ctx = ConnectionContext::spatial(g, &MetricField::chart(g)?)?;
    let alpha = random_form(g, rng, k, ValueKind::Vector, Representation::Spatial, Parity::True, None, &g.nodes())?;
    let dd = exterior_covariant_derivative(g, &exterior_covariant_derivative(g, &alpha, &ctx)?, &ctx)?;
    Ok(rms_norm(g, &dd.comps))
}

fn kinetic_metric_residual(p: &Probe, _: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let analytic = match p.variant {
        "analytic" => true,
        "numeric" => false,
        _ => return Err(unknown(p.variant)),
    };
    let curve = bump_curve(g.chart.coords);
    let c = curve.configuration(g, 0.7, analytic, None)?;
    metric_norm_equality_residual(g, &curve, &c)
}

fn motion_named(name: &str) -> Option<Motion> {
    match name {
        "dilation" => Some(Motion::Dilation { rate: 0.5 }),
        "shear" => Some(Motion::Shear { rate: 0.5 }),
        "rigid" => Some(rigid_motion()),
        "bump" => Some(Motion::Bump { amplitude: 0.1, omega: 1.0 }),
        _ => None,
    }
}

/// Three snapshots of `motion` centred on `t` with spacing `dt`.
fn snapshots(grid: &Grid, motion: Motion, t: f64, dt: f64) -> Result<MotionCurve> {
    let analytic = MotionCurve::analytic(motion, grid.chart.coords);
    let phis = [t - dt, t, t + dt].iter().map(|&s| analytic.positions(grid, s)).collect::<Result<_>>()?;
    Ok(MotionCurve::Snapshots { t0: t - dt, dt, coords: grid.chart.coords, phis })
}

fn velocity_gradient_residual(p: &Probe, _: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let (mode, name) = p.variant.split_once('/').ok_or_else(|| unknown(p.variant))?;
    let motion = motion_named(name).ok_or_else(|| unknown(p.variant))?;
    let t = 0.6;
    let dt = 0.5 * g.h_max();
    let (curve, analytic) = match mode {
        "analytic" => (MotionCurve::analytic(motion, g.chart.coords), true),
        "snapshots" => (snapshots(g, motion, t, dt)?, false),
        _ => return Err(unknown(p.variant)),
    };
    let reference = chart_reference(g)?;
    let c = Arc::new(curve.configuration(g, t, analytic, Some(&reference))?);
    let dtf = material_time_derivative(g, &curve, t, MaterialFamily::DeformationGradient, dt)?.as_matrices();
    let v = curve.velocity(g, t)?;
    let mctx = ConnectionContext::material(g, &c, &reference)?;
    // ∇̃ṽ has legs [body derivative, spatial value]; D_tF has legs [spatial, body].
    let grad: Vec<M3> =
        covariant_derivative(g, &TensorField::vector(g, Representation::Material, Base::Spatial, &v), &mctx)?.as_matrices().iter().map(|m| m.transpose()).collect();
    Ok(max_matrix_diff(&dtf, &grad))
}

fn rigid_residual(p: &Probe, _: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let curve = MotionCurve::analytic(rigid_motion(), g.chart.coords);
    let t = 0.6;
    match p.variant {
        "killing" => {
            let c = curve.configuration(g, t, true, None)?;
            let v = curve.velocity(g, t)?;
            killing_residual(g, &TensorField::vector(g, Representation::Spatial, Base::Spatial, &v), &c.spatial_metric()?)
        }
        "metric_rate" => {
            let dt = 0.5 * g.h_max();
            let g_hat = |s: f64| -> Result<Vec<M3>> { Ok(curve.configuration(g, s, false, None)?.induced_metrics()?.0.g) };
            let (a, b) = (g_hat(t + dt)?, g_hat(t - dt)?);
            Ok(a.iter().zip(&b).map(|(x, y)| ((x - y) / (2.0 * dt)).abs().max()).fold(0.0, f64::max))
        }
        _ => Err(unknown(p.variant)),
    }
}

fn repr_named(v: &str) -> Result<Representation> {
    match v {
        "spatial" => Ok(Representation::Spatial),
        "material" => Ok(Representation::Material),
        "convective" => Ok(Representation::Convective),
        _ => Err(unknown(v)),
    }
}

fn mass_residual(p: &Probe, _: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let repr = repr_named(p.variant)?;
    let curve = MotionCurve::analytic(Motion::Dilation { rate: 0.5 }, g.chart.coords);
    let mass = MassStructure::uniform(g, curve.reference_metric(g, 0.0)?, 1.0)?;
    mass_conservation_residual(g, &curve, &mass, 0.5, repr, 0.5 * g.h_max())
}

fn lie_flux_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let pts = g.nodes();
    let ctx = ConnectionContext::spatial(g, &MetricField::chart(g)?)?;
    let u = TensorField::vector(g, Representation::Spatial, Base::Spatial, &SmoothField::random(rng, 3).vectors(&pts));
    let dens = SmoothField::random(rng, 1);
    let omega = MassForm::new(g, Representation::Spatial, None, pts.iter().map(|&x| 1.0 + 0.2 * dens.value(x)[0]).collect())?;
    let alpha = SmoothField::random(rng, 3).vectors(&pts);
    let (l, r) = lie_identity_sides(g, &u, &omega.0, &alpha, &ctx)?;
    Ok(l.max_diff(&r))
}

fn convective_momentum_residual(p: &Probe, _: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    convective_momentum_rate_residual(g, &bump_curve(g.chart.coords), 0.4, 0.5 * g.h_max())
}

fn model_named(v: &str) -> Result<ConstitutiveModel> {
    match v {
        "svk" => ConstitutiveModel::new(ModelKind::Svk, 1.3, 0.7),
        "neo_hookean" => ConstitutiveModel::new(ModelKind::NeoHookean, 1.3, 0.7),
        _ => Err(unknown(v)),
    }
}

fn stress_power_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let model = model_named(p.variant)?;
    let reference = chart_reference(g)?;
    let c = bump_config(g, &reference)?;
    let (g_hat, _) = c.induced_metrics()?;
    let mass = MassStructure::uniform(g, reference, 1.0)?;
    let t_hat = rougee_stress(g, &model, &g_hat, &mass)?;
    let v_hat = TensorField::vector(g, Representation::Convective, Base::Body, &SmoothField::random(rng, 3).vectors(&g.nodes()));
    let (a, b) = stress_power_pairings(g, &v_hat, &g_hat, &t_hat)?;
    Ok((a - b).abs())
}

/// Web context over the smooth test motion, unit density.
fn web_context(grid: &Grid) -> Result<WebContext> {
    let reference = chart_reference(grid)?;
    let c = bump_config(grid, &reference)?;
    WebContext::new(grid, c, MassStructure::uniform(grid, reference, 1.0)?)
}

fn random_sigma(grid: &Grid, rng: &mut ChaCha8Rng, repr: Representation) -> Result<StressState> {
    let m = SmoothField::random(rng, 9).symmetric_matrices(&grid.nodes());
    let t = TensorField::matrix(grid, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, &m);
    StressState::new(WebTag::new(repr, StressWeight::Sigma), StressPayload::Tensor(t))
}

fn kernel_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let repr = repr_named(p.variant)?;
    let ctx = web_context(g)?;
    classical_equivalence_residual(g, &random_sigma(g, rng, repr)?, &ctx)
}

fn closure_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let g = p.grid;
    let ctx = web_context(g)?;
    let start = random_sigma(g, rng, Representation::Spatial)?;
    let mut path: Vec<WebTag> = WebTag::all().into_iter().filter(|t| *t != start.tag).collect();
    match p.variant {
        "forward" => {}
        "reverse" => path.reverse(),
        _ => return Err(unknown(p.variant)),
    }
    path.push(start.tag);
    let mut s = start.clone();
    for tag in path {
        s = stress_web_convert(g, &s, tag, &ctx)?;
    }
    Ok(s.max_diff(&start)? / start.max_abs())
}

/// Random SPD matrix `(I + A)ᵀ(I + A)` with entries of `A` in `±scale`.
pub fn random_spd(rng: &mut impl Rng, scale: f64) -> M3 {
    let a = M3::from_fn(|_, _| rng.random_range(-scale..scale));
    let f = M3::identity() + a;
    let m = f.transpose() * f;
    if SymmetricEigen::new(m).eigenvalues.min() > 1e-3 {
        m
    } else {
        M3::identity() + 0.5 * (m + m.transpose()) * 0.1
    }
}

fn metric_gradient_residual(p: &Probe, rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = model_named(p.variant)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = random_spd(rng, 0.3);
        let big_g = random_spd(rng, 0.2);
        let rho = rng.random_range(0.5..2.0);
        let exact = model.energy_gradient(&g, &big_g, rho)?;
        let fd = energy_gradient_fd(&model, &g, &big_g, rho, 1e-5)?;
        worst = worst.max((exact - fd).norm() / exact.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

fn default_resolutions() -> [usize; 2] {
    [9, 17]
}

fn default_charts() -> Vec<ChartKind> {
    BOTH.to_vec()
}

/// Configuration of the identity suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Coarse and fine nodes per axis.
    #[serde(default = "default_resolutions")]
    pub resolutions: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_charts")]
    pub charts: Vec<ChartKind>,
    /// Deliberately break the leg-order convention of `∇v♭` (regression guard).
    #[serde(default)]
    pub leg_swap: bool,
    /// Restrict the run to these identities (empty: all).
    #[serde(default)]
    pub identities: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { resolutions: default_resolutions(), seed: 0, charts: default_charts(), leg_swap: false, identities: Vec::new() }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.resolutions;
        if a < MIN_NODES || b <= a {
            return Err(Error::Config(format!("resolutions must increase from at least {}: {:?}", MIN_NODES, self.resolutions)));
        }
        if self.charts.is_empty() {
            return Err(Error::Config("no charts selected".into()));
        }
        let names: HashSet<&str> = registry().iter().map(|i| i.name).collect();
        if let Some(bad) = self.identities.iter().find(|n| !names.contains(n.as_str())) {
            return Err(Error::Config(format!("unknown identity '{}'", bad)));
        }
        Ok(())
    }
}

/// Outcome of one identity on one chart and variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    /// `identity/variant/chart`.
    pub name: String,
    pub identity: String,
    pub topic: String,
    pub variant: String,
    pub chart: ChartKind,
    pub resolutions: [usize; 2],
    pub h: [f64; 2],
    pub residuals: Vec<f64>,
    pub tolerances: [f64; 2],
    /// Declared order `p` of the tolerance `C·h^p`.
    pub declared_order: Option<f64>,
    /// Smallest accepted measured order (unless the fine residual is at roundoff).
    pub min_order: Option<f64>,
    /// Measured order `log(r₁/r₂) / log(h₁/h₂)`.
    pub order: Option<f64>,
    /// Whether the measured order reaches `min_order` (always true at roundoff).
    /// Diagnostic only: two-grid orders of random fields are pre-asymptotic at desk
    /// resolutions, so `pass` depends on the tolerances alone.
    pub order_ok: Option<bool>,
    /// Residual within tolerance at every resolution.
    pub pass: bool,
    pub message: Option<String>,
}

/// Report of a suite run, as written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub leg_swap: bool,
    pub resolutions: [usize; 2],
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    /// Reports whose name starts with `prefix` (e.g. an identity name).
    pub fn matching<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a CheckReport> + 'a {
        self.checks.iter().filter(move |c| c.name.starts_with(prefix))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

struct Job<'a> {
    identity: &'a Identity,
    variant: &'static str,
    chart: ChartKind,
}

fn run_job(job: &Job, cfg: &SuiteConfig) -> CheckReport {
    let id = job.identity;
    let name = format!("{}/{}/{}", id.name, job.variant, job.chart.name());
    let mut residuals = Vec::new();
    let mut h = [0.0; 2];
    let mut message = None;
    for (r, &n) in cfg.resolutions.iter().enumerate() {
        let out = job.chart.grid(n).and_then(|grid| {
            h[r] = grid.h_max();
            let probe = Probe { grid: &grid, variant: job.variant, leg_swap: cfg.leg_swap };
            (id.residual)(&probe, &mut check_rng(cfg.seed, &name))
        });
        match out {
            Ok(v) if v.is_finite() => residuals.push(v),
            Ok(v) => {
                message = Some(format!("non-finite residual {} at n = {}", v, n));
                break;
            }
            Err(e) => {
                message = Some(format!("n = {}: {}", n, e));
                break;
            }
        }
    }
    let tolerances = [id.rate.tolerance(h[0]), id.rate.tolerance(h[1])];
    let measured = (residuals.len() == 2 && residuals.iter().all(|&r| r > 0.0)).then(|| (residuals[0] / residuals[1]).ln() / (h[0] / h[1]).ln());
    let (declared_order, min_order, order) = match id.rate {
        Rate::Convergent { order, min_order, .. } => (Some(order), Some(min_order), measured),
        Rate::Exact { .. } => (None, None, None),
    };
    let pass = message.is_none() && residuals.iter().zip(&tolerances).all(|(r, t)| r <= t);
    if !pass && message.is_none() {
        message = Some(match order {
            Some(o) => format!("residual above tolerance; measured order {:.3}", o),
            None => "residual above tolerance".into(),
        });
    }
    let order_ok = match (min_order, residuals.get(1)) {
        (Some(m), Some(&fine)) => Some(fine <= ROUNDOFF_FLOOR || order.is_some_and(|o| o >= m)),
        _ => None,
    };
    CheckReport {
        name,
        identity: id.name.into(),
        topic: id.topic.into(),
        variant: job.variant.into(),
        chart: job.chart,
        resolutions: cfg.resolutions,
        h,
        residuals,
        tolerances,
        declared_order,
        min_order,
        order,
        order_ok,
        pass,
        message,
    }
}

/// Evaluate every selected identity at both resolutions.
///
/// Checks run on scoped worker threads; the report keeps registry order. A check that
/// errors is reported as failed with its message and the suite continues.
pub fn run_identity_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let reg = registry();
    let jobs: Vec<Job> = reg
        .iter()
        .filter(|i| cfg.identities.is_empty() || cfg.identities.iter().any(|n| n == i.name))
        .flat_map(|i| {
            i.variants.iter().flat_map(move |&v| {
                i.charts.iter().filter(|c| cfg.charts.contains(c)).map(move |&chart| Job { identity: i, variant: v, chart })
            })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len().max(1));
    let mut results: Vec<(usize, CheckReport)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= jobs.len() {
                            break done;
                        }
                        done.push((k, run_job(&jobs[k], cfg)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("check worker panicked")).collect()
    });
    results.sort_by_key(|(k, _)| *k);
    let checks: Vec<CheckReport> = results.into_iter().map(|(_, c)| c).collect();
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(SuiteReport { seed: cfg.seed, leg_swap: cfg.leg_swap, resolutions: cfg.resolutions, passed, failed: checks.len() - passed, checks })
}

// ---------------------------------------------------------------------------
// Simulation scenarios
// ---------------------------------------------------------------------------

fn default_direction() -> [f64; 3] {
    [1.0, 0.5, -0.3]
}

/// Initial state of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Reference placement at rest.
    Rest,
    /// Reference placement with velocity `amplitude · b(X) · direction`, `b` an interior bump.
    Bump {
        amplitude: f64,
        #[serde(default = "default_direction")]
        direction: [f64; 3],
    },
    /// Reference placement with a seeded random smooth velocity times the interior bump.
    Random { amplitude: f64 },
    /// Placement and velocity of a built-in motion at time `t0`.
    Motion {
        motion: Motion,
        #[serde(default)]
        t0: f64,
    },
}

fn default_scenario_chart() -> ChartKind {
    ChartKind::Cartesian
}

fn default_resolution() -> usize {
    9
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::ZeroTraction
}

fn default_density() -> f64 {
    1.0
}

fn default_representation() -> Representation {
    Representation::Material
}

fn default_energy_tolerance() -> f64 {
    1e-3
}

/// Output file names, relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "Outputs::default_trajectory")]
    pub trajectory: String,
    #[serde(default = "Outputs::default_report")]
    pub report: String,
}

impl Outputs {
    fn default_trajectory() -> String {
        "trajectory.csv".into()
    }
    fn default_report() -> String {
        "report.json".into()
    }
}

impl Default for Outputs {
    fn default() -> Self {
        Self { trajectory: Self::default_trajectory(), report: Self::default_report() }
    }
}

/// A simulation scenario as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_scenario_chart")]
    pub chart: ChartKind,
    /// Nodes per axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub initial: InitialState,
    pub model: ConstitutiveModel,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    /// Uniform reference mass density `ρ̃`.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Representation the equations are integrated in: `material` or `convective`.
    #[serde(default = "default_representation")]
    pub representation: Representation,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
    /// Largest accepted `max_t |dE/dt − P_st| / E_total(0)`.
    #[serde(default = "default_energy_tolerance")]
    pub energy_tolerance: f64,
}

impl ScenarioConfig {
    /// Number of RK4 steps; `t_end` must be a whole number of steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config("dt and t_end must be positive".into()));
        }
        let s = (self.t_end / self.dt).round();
        if ((s * self.dt) - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt)));
        }
        Ok(s as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.steps()?;
        if self.resolution < MIN_NODES {
            return Err(Error::Config(format!("resolution must be at least {}", MIN_NODES)));
        }
        if !(self.density > 0.0) {
            return Err(Error::Config("density must be positive".into()));
        }
        if self.representation == Representation::Spatial {
            return Err(Error::Config("integrate in the material or convective representation".into()));
        }
        Ok(())
    }

    pub fn body(&self) -> Result<ElasticBody> {
        let grid = self.chart.grid(self.resolution)?;
        let mass = MassStructure::uniform(&grid, chart_reference(&grid)?, self.density)?;
        ElasticBody::new(grid, self.model, mass, self.bc)
    }

    /// Initial state in the configured representation.
    pub fn initial_state(&self, body: &ElasticBody) -> Result<MotionState> {
        let g = &body.grid;
        let pts = g.nodes();
        let rest: Vec<V3> = pts.iter().map(|&x| V3::from(x)).collect();
        let (t0, phi, v) = match &self.initial {
            InitialState::Rest => (0.0, rest, vec![V3::zeros(); g.len()]),
            InitialState::Bump { amplitude, direction } => {
                let d = V3::from(*direction);
                (0.0, rest, pts.iter().map(|&x| *amplitude * interior_bump(g, x) * d).collect())
            }
            InitialState::Random { amplitude } => {
                let f = SmoothField::random(&mut check_rng(self.seed, "initial_velocity"), 3);
                (0.0, rest, pts.iter().map(|&x| *amplitude * interior_bump(g, x) * V3::from_vec(f.value(x))).collect())
            }
            InitialState::Motion { motion, t0 } => {
                let curve = MotionCurve::analytic(motion.clone(), g.chart.coords);
                (*t0, curve.positions(g, *t0)?, curve.velocity(g, *t0)?)
            }
        };
        let s = body.material_state(t0, phi, &v)?;
        Ok(match self.representation {
            Representation::Convective => MotionState::Convective(body.to_convective(&s)?),
            _ => MotionState::Material(s),
        })
    }
}

/// Summary of a simulation run, written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
    pub resolution: usize,
    pub representation: Representation,
    pub e_total_initial: f64,
    pub e_total_final: f64,
    /// `max_t |dE/dt − P_st| / max(E_total(0), ENERGY_FLOOR)`.
    pub max_relative_energy_residual: f64,
    pub max_mass_residual: f64,
    pub min_det_f: f64,
    /// `max_t max_X |∂_tĝ|`.
    pub max_metric_rate: f64,
    pub energy_tolerance: f64,
    pub within_tolerance: bool,
    pub trajectory: PathBuf,
}

/// Run a scenario, writing the trajectory CSV and the summary JSON into `out`.
///
/// Inversion and blow-up surface as errors carrying the step index.
pub fn run_simulation(cfg: &ScenarioConfig, out: &Path) -> Result<SimulationSummary> {
    cfg.validate()?;
    let body = cfg.body()?;
    let initial = cfg.initial_state(&body)?;
    let steps = cfg.steps()?;
    let traj = simulate(&body, initial, cfg.dt, steps, false)?;
    fs::create_dir_all(out)?;
    let csv_path = out.join(&cfg.outputs.trajectory);
    traj.write_csv(fs::File::create(&csv_path)?)?;
    let rel = traj.max_relative_energy_residual();
    let fold = |f: fn(&crate::dynamics::TrajectoryRow) -> f64| traj.rows.iter().map(f).fold(0.0, f64::max);
    let summary = SimulationSummary {
        steps,
        dt: cfg.dt,
        t_end: cfg.t_end,
        resolution: cfg.resolution,
        representation: cfg.representation,
        e_total_initial: traj.snapshots[0].total(),
        e_total_final: traj.snapshots.last().map(|s| s.total()).unwrap_or(0.0),
        max_relative_energy_residual: rel,
        max_mass_residual: fold(|r| r.mass_residual),
        min_det_f: traj.rows.iter().map(|r| r.min_det_f).fold(f64::INFINITY, f64::min),
        max_metric_rate: fold(|r| r.metric_rate),
        energy_tolerance: cfg.energy_tolerance,
        within_tolerance: rel <= cfg.energy_tolerance,
        trajectory: csv_path,
    };
    fs::write(out.join(&cfg.outputs.report), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Field conversion
// ---------------------------------------------------------------------------

/// A stress field on disk.
///
/// `components[node]` is a 3×3 block: `σ^{ij}` (row = form index) for σ-type entries,
/// `[value][form slot]` for τ (1-form slots `1,2,3`) and 𝒯 (2-form slots `12,13,23`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub tag: String,
    pub chart: ChartKind,
    pub resolution: usize,
    pub components: Vec<[[f64; 3]; 3]>,
}

/// The configuration a conversion happens at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub chart: ChartKind,
    pub resolution: usize,
    /// Built-in motion; absent means the identity placement.
    #[serde(default)]
    pub motion: Option<Motion>,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_density")]
    pub density: f64,
}

impl ContextSpec {
    pub fn build(&self) -> Result<(Grid, WebContext)> {
        let grid = self.chart.grid(self.resolution)?;
        let reference = chart_reference(&grid)?;
        let config = match &self.motion {
            Some(m) => MotionCurve::analytic(m.clone(), grid.chart.coords).configuration(&grid, self.t, true, Some(&reference))?,
            None => Configuration::from_phi(&grid, grid.chart.coords, grid.nodes().into_iter().map(V3::from).collect(), self.t, Some(&reference))?,
        };
        let mass = MassStructure::uniform(&grid, reference, self.density)?;
        let ctx = WebContext::new(&grid, Arc::new(config), mass)?;
        Ok((grid, ctx))
    }
}

/// Conversion request: input field, tags, and context file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertRequest {
    pub input: PathBuf,
    pub from: String,
    pub to: String,
    pub context: PathBuf,
    #[serde(default)]
    pub output: Option<String>,
}

/// Interpret a field file as a stress-web entry.
pub fn field_to_state(grid: &Grid, field: &FieldFile, ctx: &WebContext) -> Result<StressState> {
    let tag: WebTag = field.tag.parse()?;
    if field.components.len() != grid.len() {
        return Err(Error::Shape(format!("{} nodes in the field, {} in the grid", field.components.len(), grid.len())));
    }
    let repr = tag.repr;
    let payload = match tag.weight {
        StressWeight::Sigma => {
            let m: Vec<M3> = field.components.iter().map(|c| M3::from_fn(|i, j| c[i][j])).collect();
            StressPayload::Tensor(TensorField::matrix(grid, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, &m))
        }
        w => {
            let (degree, value, parity) = match w {
                StressWeight::Tau => (1, ValueKind::Vector, Parity::True),
                _ => (2, ValueKind::Covector, Parity::Pseudo),
            };
            let mut f = BundleValuedForm::zeros(grid, degree, value, repr, parity, ctx.over_map(repr))?;
            for (n, c) in field.components.iter().enumerate() {
                for (v, row) in c.iter().enumerate() {
                    for (s, x) in row.iter().enumerate() {
                        f.set(n, v, s, *x);
                    }
                }
            }
            StressPayload::Form(f)
        }
    };
    StressState::new(tag, payload)
}

/// Serialize a stress-web entry in the field-file layout.
pub fn state_to_field(state: &StressState, chart: ChartKind, resolution: usize) -> FieldFile {
    let components = match &state.payload {
        StressPayload::Tensor(t) => t.as_matrices().iter().map(|m| std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))).collect(),
        StressPayload::Form(f) => (0..f.nodes()).map(|n| std::array::from_fn(|v| std::array::from_fn(|s| f.get(n, v, s)))).collect(),
    };
    FieldFile { tag: state.tag.to_string(), chart, resolution, components }
}

/// Convert a field from tag `from` to tag `to` at the given context.
pub fn convert_fields(field: &FieldFile, from: &str, to: &str, spec: &ContextSpec) -> Result<FieldFile> {
    let from_tag: WebTag = from.parse()?;
    let to_tag: WebTag = to.parse()?;
    let file_tag: WebTag = field.tag.parse()?;
    if file_tag != from_tag {
        return Err(Error::Config(format!("tag mismatch: file holds {}, conversion expects {}", file_tag, from_tag)));
    }
    if field.chart != spec.chart || field.resolution != spec.resolution {
        return Err(Error::Shape("field and context differ in chart or resolution".into()));
    }
    let (grid, ctx) = spec.build()?;
    let state = field_to_state(&grid, field, &ctx)?;
    let out = stress_web_convert(&grid, &state, to_tag, &ctx)?;
    Ok(state_to_field(&out, spec.chart, spec.resolution))
}

/// File-level conversion; returns the path written (default `<to>.json` in `out`).
pub fn convert_files(req: &ConvertRequest, out: &Path) -> Result<PathBuf> {
    req.from.parse::<WebTag>()?;
    req.to.parse::<WebTag>()?;
    let field: FieldFile = serde_json::from_str(&fs::read_to_string(&req.input)?)?;
    let spec: ContextSpec = serde_json::from_str(&fs::read_to_string(&req.context)?)?;
    let converted = convert_fields(&field, &req.from, &req.to, &spec)?;
    fs::create_dir_all(out)?;
    let path = out.join(req.output.clone().unwrap_or_else(|| format!("{}.json", req.to)));
    fs::write(&path, serde_json::to_string_pretty(&converted)?)?;
    Ok(path)
}
