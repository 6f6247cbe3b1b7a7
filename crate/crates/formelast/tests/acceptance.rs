//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the per-criterion lines are always
//! printed; the process exits non-zero if any criterion fails. Criteria run
//! concurrently and are reported in order.

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use formelast::calculus::{exterior_covariant_derivative, ConnectionContext};
use formelast::config::{Configuration, Motion, MotionCurve};
use formelast::forms::{hodge_flat, hodge_sharp, inner_product, wedge_dot, BundleValuedForm, Parity, ValueKind};
use formelast::geometry::{killing_residual, MetricField, MetricRole};
use formelast::grid::Grid;
use formelast::harness::{
    convert_fields, run_identity_suite, run_simulation, ChartKind, ContextSpec, FieldFile, ScenarioConfig, SuiteConfig,
    SuiteReport, ROUNDOFF_FLOOR,
};
use formelast::masskinetics::MassStructure;
use formelast::stress::{
    rougee_stress, stress_power_pairings, stress_web_convert, ConstitutiveModel, ModelKind, StressPayload, StressState, StressWeight,
    WebContext, WebTag,
};
use formelast::tensor::{Base, Leg, Representation, Sampling, TensorField, M3, V3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (&'static str, fn() -> Outcome);

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn suite(identities: &[&str]) -> SuiteReport {
    let cfg = SuiteConfig { identities: identities.iter().map(|s| s.to_string()).collect(), ..SuiteConfig::default() };
    run_identity_suite(&cfg).expect("suite runs")
}

/// Pass iff every check passed; detail lists the worst residual/tolerance ratio
/// and the smallest measured order above the roundoff floor.
fn suite_outcome(report: &SuiteReport, min_order: Option<f64>) -> Outcome {
    let worst = report.checks.iter().map(|c| c.residuals[1] / c.tolerances[1]).fold(0.0, f64::max);
    let orders: Vec<f64> = report.checks.iter().filter(|c| c.residuals[1] > ROUNDOFF_FLOOR).filter_map(|c| c.order).collect();
    let lowest = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let order_ok = min_order.is_none_or(|m| orders.iter().all(|&o| o >= m));
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let order_text = if orders.is_empty() { "all at roundoff".to_string() } else { format!("min order {:.2}", lowest) };
    let mut detail = format!("{} checks, max residual/tol {:.2e}, {}", report.checks.len(), worst, order_text);
    if !failed.is_empty() {
        detail += &format!(", failed: {}", failed.join(", "));
    }
    Outcome::new(report.all_passed() && order_ok && !report.checks.is_empty(), detail)
}

fn grid(kind: ChartKind, n: usize) -> Grid {
    kind.grid(n).expect("grid")
}

fn reference(g: &Grid) -> MetricField {
    MetricField::ambient(g.chart.coords, &g.nodes(), MetricRole::Reference, Sampling::Body).expect("reference metric")
}

fn bump_configuration(g: &Grid, reference: &MetricField) -> Arc<Configuration> {
    let curve = MotionCurve::analytic(Motion::Bump { amplitude: 0.1, omega: 1.0 }, g.chart.coords);
    Arc::new(curve.configuration(g, 0.7, true, Some(reference)).expect("configuration"))
}

/// Smooth random form: each component is `a + b·sin(k·x + c)` with random coefficients.
#[allow(clippy::too_many_arguments)]
fn smooth_form(
    g: &Grid,
    rng: &mut ChaCha8Rng,
    degree: usize,
    value: ValueKind,
    repr: Representation,
    parity: Parity,
    over: Option<Arc<Configuration>>,
) -> BundleValuedForm {
    let slots = [1, 3, 3, 1][degree];
    let n = value.dim() * slots;
    let coef: Vec<([f64; 3], f64, f64, f64)> = (0..n)
        .map(|_| {
            let k = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            (k, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..6.0))
        })
        .collect();
    BundleValuedForm::from_fn(g, degree, value, repr, parity, over, |_, x, out| {
        for (o, (k, a, b, c)) in out.iter_mut().zip(&coef) {
            *o = a + b * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + c).sin();
        }
    })
    .expect("form")
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

/// Symmetric/skew split of the velocity gradient, both representations and charts;
/// the broken leg convention must be caught.
fn split_identity() -> Outcome {
    let start = Instant::now();
    let report = suite(&["symmetric_skew_split"]);
    let elapsed = start.elapsed().as_secs_f64();
    let mut out = suite_outcome(&report, Some(1.9));
    let swapped = run_identity_suite(&SuiteConfig { identities: vec!["symmetric_skew_split".into()], leg_swap: true, ..SuiteConfig::default() })
        .expect("suite runs");
    let caught = swapped.failed > 0;
    out.pass &= elapsed < 10.0 && caught;
    out.detail += &format!(", {:.2} s, swapped legs caught: {} of {} checks fail", elapsed, swapped.failed, swapped.checks.len());
    out
}

/// `g̃(ṽ, ṽ) = ĝ(v̂, v̂)` for several motions: exact with analytic `F`, roundoff with numeric `F`.
fn kinetic_metric() -> Outcome {
    let motions = [
        Motion::Bump { amplitude: 0.1, omega: 1.0 },
        Motion::Shear { rate: 0.5 },
        Motion::Dilation { rate: 0.3 },
        Motion::Rigid { omega: 0.8, axis: [0.0, 0.0, 1.0], velocity: [0.1, 0.2, 0.3] },
    ];
    let (mut analytic, mut numeric, mut numeric_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for kind in [ChartKind::Cartesian, ChartKind::Cylindrical] {
        for n in [9, 17] {
            let g = grid(kind, n);
            let h = g.h_max();
            for m in &motions {
                let curve = MotionCurve::analytic(m.clone(), g.chart.coords);
                for (exact_f, slot) in [(true, &mut analytic), (false, &mut numeric)] {
                    let c = curve.configuration(&g, 0.7, exact_f, None).expect("configuration");
                    let tri = formelast::config::velocity_triplet(&g, &curve, &c).expect("velocities");
                    let (g_hat, g_tilde) = c.induced_metrics().expect("metrics");
                    // Independent evaluation: ĝ(v̂, v̂) with v̂ = F⁻¹ṽ from a fresh inverse.
                    let vt = tri.material.as_vectors();
                    let r = (0..g.len())
                        .map(|i| {
                            let vh = c.f[i].try_inverse().expect("invertible F") * vt[i];
                            (vt[i].dot(&(g_tilde.g[i] * vt[i])) - vh.dot(&(g_hat.g[i] * vh))).abs()
                        })
                        .fold(0.0, f64::max);
                    *slot = slot.max(r);
                    if !exact_f {
                        numeric_ratio = numeric_ratio.max(r / (h * h));
                    }
                }
            }
        }
    }
    Outcome::new(
        analytic <= 1e-10 && numeric_ratio <= 8.0,
        format!("analytic F max {:.2e} (≤ 1e-10), numeric F max {:.2e} (residual/h² ≤ {:.2e}, C = 8)", analytic, numeric, numeric_ratio),
    )
}

/// `⋆♯⋆♭ = id` and `ζ ∧̇ ⋆♭ξ = ⟨ζ, ξ⟩μ` for degrees 0–3 in all three representations.
fn hodge_star() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut roundtrip, mut defining) = (0.0f64, 0.0f64);
    for kind in [ChartKind::Cartesian, ChartKind::Cylindrical] {
        let g = grid(kind, 7);
        let big_g = reference(&g);
        let c = bump_configuration(&g, &big_g);
        let mass = MassStructure::uniform(&g, big_g.clone(), 1.3).expect("mass");
        let ctx = WebContext::new(&g, c.clone(), mass).expect("context");
        for repr in [Representation::Spatial, Representation::Material, Representation::Convective] {
            let star = ctx.star(repr);
            let over = ctx.over_map(repr);
            let mu = ctx.mass_form(repr);
            for k in 0..=3 {
                let xi = smooth_form(&g, &mut rng, k, ValueKind::Vector, repr, Parity::True, over.clone());
                let zeta = smooth_form(&g, &mut rng, k, ValueKind::Vector, repr, Parity::True, over.clone());
                let flat = hodge_flat(&xi, &star).expect("flat");
                roundtrip = roundtrip.max(hodge_sharp(&flat, &star).expect("sharp").max_diff(&xi));
                let lhs = wedge_dot(&zeta, &flat).expect("wedge");
                let ip = inner_product(&zeta, &xi, &star).expect("inner product");
                for (n, (p, m)) in ip.iter().zip(mu.density()).enumerate() {
                    defining = defining.max((lhs.get(n, 0, 0) - p * m).abs());
                }
            }
        }
    }
    Outcome::new(
        roundtrip <= 1e-12 && defining <= 1e-12,
        format!("roundtrip {:.2e}, defining identity {:.2e} (≤ 1e-12), k = 0..3, 3 representations, 2 charts", roundtrip, defining),
    )
}

/// `d_∇ ∘ d_∇ = 0`: exact on quadratic fields in Cartesian coordinates, second order otherwise.
fn flat_complex() -> Outcome {
    let g = grid(ChartKind::Cartesian, 9);
    let ctx = ConnectionContext::spatial(&g, &MetricField::chart(&g).expect("metric")).expect("connection");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut poly = 0.0f64;
    for degree in 0..=1 {
        let slots = [1, 3][degree];
        let coef: Vec<[f64; 10]> = (0..3 * slots).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let alpha = BundleValuedForm::from_fn(&g, degree, ValueKind::Vector, Representation::Spatial, Parity::True, None, |_, x, out| {
            for (o, c) in out.iter_mut().zip(&coef) {
                let [a, b, z] = x;
                *o = c[0] + c[1] * a + c[2] * b + c[3] * z + c[4] * a * a + c[5] * b * b + c[6] * z * z + c[7] * a * b + c[8] * a * z + c[9] * b * z;
            }
        })
        .expect("form");
        let d1 = exterior_covariant_derivative(&g, &alpha, &ctx).expect("d");
        let dd = exterior_covariant_derivative(&g, &d1, &ctx).expect("dd");
        poly = poly.max(dd.max_abs());
    }
    let mut out = suite_outcome(&suite(&["flat_complex"]), Some(1.9));
    out.pass &= poly <= 1e-10;
    out.detail = format!("quadratic fields {:.2e} (≤ 1e-10); random fields: {}", poly, out.detail);
    out
}

fn pullback_naturality() -> Outcome {
    suite_outcome(&suite(&["pullback_naturality"]), None)
}

fn integration_by_parts() -> Outcome {
    suite_outcome(&suite(&["integration_by_parts"]), None)
}

/// Analytic `∂ê/∂ĝ` against an independent central difference along the six symmetric
/// basis directions, 100 random SPD samples per model.
fn metric_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let spd = |rng: &mut ChaCha8Rng, s: f64| {
        let a = M3::from_fn(|_, _| rng.random_range(-s..s));
        (M3::identity() + a).transpose() * (M3::identity() + a) + 0.2 * M3::identity()
    };
    for kind in [ModelKind::Svk, ModelKind::NeoHookean] {
        let model = ConstitutiveModel::new(kind, 1.3, 0.7).expect("model");
        for _ in 0..100 {
            let g = spd(&mut rng, 0.3);
            let big_g = spd(&mut rng, 0.2);
            let rho = rng.random_range(0.5..2.0);
            let exact = model.energy_gradient(&g, &big_g, rho).expect("gradient");
            let eps = 1e-6;
            let mut fd = M3::zeros();
            for i in 0..3 {
                for j in i..3 {
                    // Direction E = e_i e_jᵀ + e_j e_iᵀ (halved on the diagonal).
                    let mut e = M3::zeros();
                    e[(i, j)] = if i == j { 1.0 } else { 0.5 };
                    e[(j, i)] = e[(i, j)];
                    let d = (model.energy_density(&(g + eps * e), &big_g, rho).unwrap() - model.energy_density(&(g - eps * e), &big_g, rho).unwrap()) / (2.0 * eps);
                    // dê[E] = Σ ∂ê/∂g_ab E_ab: diagonal gives D_ii, off-diagonal D_ij.
                    fd[(i, j)] = d;
                    fd[(j, i)] = d;
                }
            }
            worst = worst.max((exact - fd).norm() / exact.norm());
        }
    }
    let mut out = suite_outcome(&suite(&["metric_gradient_stress"]), None);
    out.pass &= worst < 1e-6;
    out.detail = format!("independent difference quotient: max rel err {:.2e} (< 1e-6); library check: {}", worst, out.detail);
    out
}

fn classical_equivalence() -> Outcome {
    suite_outcome(&suite(&["classical_equivalence"]), Some(1.9))
}

/// Web closure plus exact Piola relations on homogeneous motions, through the file layer.
fn stress_web() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut piola = 0.0f64;
    let cases = [
        (ChartKind::Cartesian, Motion::Dilation { rate: 1.0 }),
        (ChartKind::Cartesian, Motion::Shear { rate: 0.5 }),
        (ChartKind::Cylindrical, Motion::Dilation { rate: 1.0 }),
    ];
    for (chart, motion) in cases {
        let spec = ContextSpec { chart, resolution: 5, motion: Some(motion.clone()), t: 1.0, density: 1.0 };
        let g = grid(chart, 5);
        let sigma: Vec<M3> = (0..g.len()).map(|_| M3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let field = FieldFile {
            tag: "sigma_spatial".into(),
            chart,
            resolution: 5,
            components: sigma.iter().map(|m| std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))).collect(),
        };
        let material = convert_fields(&field, "sigma_spatial", "sigma_material", &spec).expect("convert");
        let convective = convert_fields(&field, "sigma_spatial", "sigma_convective", &spec).expect("convert");
        for (n, x) in g.nodes().iter().enumerate() {
            let k = motion.at(g.chart.coords, *x, 1.0);
            let fi = k.f.try_inverse().expect("invertible");
            // J = det F · √det g(φ) / √det G; in cylindrical coordinates √det g = r.
            let j = match chart {
                ChartKind::Cartesian => k.f.determinant(),
                ChartKind::Cylindrical => k.f.determinant() * k.position[0] / x[0],
            };
            let want_material = j * fi * sigma[n];
            let want_convective = fi * sigma[n] * fi.transpose();
            let got = |f: &FieldFile| M3::from_fn(|a, b| f.components[n][a][b]);
            let scale = sigma[n].norm().max(1.0) * j.max(1.0);
            piola = piola.max((got(&material) - want_material).norm() / scale).max((got(&convective) - want_convective).norm() / scale);
        }
    }
    let mut out = suite_outcome(&suite(&["stress_web_closure"]), None);
    out.pass &= piola <= 1e-12;
    out.detail = format!("Piola σ̃ = J F⁻¹σ and σ̂ = F⁻¹σF⁻ᵀ: {:.2e} (≤ 1e-12); closure: {}", piola, out.detail);
    out
}

fn velocity_gradient_rate() -> Outcome {
    suite_outcome(&suite(&["velocity_gradient_rate"]), None)
}

/// Mass conservation per representation; the material mass form is bitwise constant.
fn mass_conservation() -> Outcome {
    let mut drift = 0.0f64;
    for kind in [ChartKind::Cartesian, ChartKind::Cylindrical] {
        let g = grid(kind, 9);
        let curve = MotionCurve::analytic(Motion::Dilation { rate: 0.5 }, g.chart.coords);
        let mass = MassStructure::uniform(&g, curve.reference_metric(&g, 0.0).unwrap(), 1.0).unwrap();
        let at = |t: f64| mass.material(&g, &Arc::new(curve.configuration(&g, t, false, None).unwrap())).unwrap().density().to_vec();
        let first = at(0.0);
        for t in [0.25, 0.5, 1.0, 2.0] {
            drift = drift.max(at(t).iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    let mut out = suite_outcome(&suite(&["mass_conservation"]), None);
    out.pass &= drift == 0.0;
    out.detail = format!("material mass form drift {:e} (exactly 0); rates: {}", drift, out.detail);
    out
}

fn free_vibration_run(resolution: usize, dt: f64, dir: &str) -> (f64, f64) {
    let cfg: ScenarioConfig = serde_json::from_value(serde_json::json!({
        "chart": "cartesian",
        "resolution": resolution,
        "initial": { "kind": "bump", "amplitude": 0.01, "direction": [1.0, 0.5, -0.3] },
        "model": { "model": "svk", "lambda": 1.0, "mu": 1.0 },
        "bc": "zero_traction",
        "dt": dt,
        "t_end": 2.0,
    }))
    .expect("scenario");
    let out: PathBuf = std::env::temp_dir().join(format!("formelast-acceptance-{}-{}", std::process::id(), dir));
    let start = Instant::now();
    let summary = run_simulation(&cfg, &out).expect("simulation");
    let _ = std::fs::remove_dir_all(&out);
    (summary.max_relative_energy_residual, start.elapsed().as_secs_f64())
}

/// Free vibration: energy balance within 1e-3 and at least 3× better on the refined run.
fn free_vibration() -> Outcome {
    let fine = thread::spawn(|| free_vibration_run(17, 0.005, "fine"));
    let (coarse, t_coarse) = free_vibration_run(9, 0.01, "coarse");
    let (fine, t_fine) = fine.join().expect("fine run");
    let ratio = coarse / fine;
    Outcome::new(
        coarse <= 1e-3 && fine <= 1e-3 && ratio >= 3.0 && t_coarse.max(t_fine) < 120.0,
        format!("9³/200 steps {:.3e}, 17³/400 steps {:.3e} (≤ 1e-3), decrease {:.1}× (≥ 3), wall {:.0} s", coarse, fine, ratio, t_coarse.max(t_fine)),
    )
}

/// Rigid motion: metric rate and Killing residual vanish; a dilation is not Killing.
fn rigid_motion() -> Outcome {
    let mut killing = 0.0f64;
    let mut dilation = f64::INFINITY;
    for kind in [ChartKind::Cartesian, ChartKind::Cylindrical] {
        let g = grid(kind, 9);
        let m = MetricField::chart(&g).unwrap();
        let rigid: Vec<V3> = match kind {
            ChartKind::Cartesian => g.nodes().iter().map(|x| V3::new(0.3, -0.2, 0.8).cross(&V3::from(*x)) + V3::new(0.1, 0.2, 0.3)).collect(),
            ChartKind::Cylindrical => vec![V3::new(0.0, 0.8, 0.3); g.len()],
        };
        let v = TensorField::vector(&g, Representation::Spatial, Base::Spatial, &rigid);
        killing = killing.max(killing_residual(&g, &v, &m).unwrap());
        let radial: Vec<V3> = g.nodes().iter().map(|x| V3::new(x[0], 0.0, 0.0)).collect();
        let v = TensorField::vector(&g, Representation::Spatial, Base::Spatial, &radial);
        dilation = dilation.min(killing_residual(&g, &v, &m).unwrap());
    }
    let mut out = suite_outcome(&suite(&["rigid_factorization"]), None);
    out.pass &= killing <= 1e-10 && dilation > 0.1;
    out.detail = format!("Killing residual {:.2e}, non-Killing control {:.2}; {}", killing, dilation, out.detail);
    out
}

/// Stress power: the skew part of the gradient does no work on a symmetric stress,
/// but does on a non-symmetric one.
fn stress_power() -> Outcome {
    let g = grid(ChartKind::Cartesian, 9);
    let big_g = reference(&g);
    let c = bump_configuration(&g, &big_g);
    let (g_hat, _) = c.induced_metrics().unwrap();
    let mass = MassStructure::uniform(&g, big_g, 1.0).unwrap();
    let ctx = WebContext::new(&g, c, mass.clone()).unwrap();
    let spin: Vec<V3> = g.nodes().iter().map(|x| V3::new(x[1].sin(), -x[0].cos() + x[2], (x[0] * x[1]).sin())).collect();
    let v_hat = TensorField::vector(&g, Representation::Convective, Base::Body, &spin);
    let sym = rougee_stress(&g, &ConstitutiveModel::new(ModelKind::Svk, 1.3, 0.7).unwrap(), &g_hat, &mass).unwrap();
    let (a, b) = stress_power_pairings(&g, &v_hat, &g_hat, &sym).unwrap();
    let skew: Vec<M3> = g.nodes().iter().map(|x| M3::new(0.0, 1.0 + x[2], x[0], -1.0 - x[2], 0.0, 0.5, -x[0], -0.5, 0.0)).collect();
    let repr = Representation::Convective;
    let t = TensorField::matrix(&g, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, &skew);
    let sigma = StressState::new(WebTag::new(repr, StressWeight::Sigma), StressPayload::Tensor(t)).unwrap();
    let t_hat = stress_web_convert(&g, &sigma, WebTag::new(repr, StressWeight::Extensive), &ctx).unwrap();
    let (sa, sb) = stress_power_pairings(&g, &v_hat, &g_hat, &t_hat).unwrap();
    let mut out = suite_outcome(&suite(&["stress_power"]), None);
    out.pass &= (a - b).abs() <= 1e-10 * a.abs().max(1.0) && (sa - sb).abs() > 1e-3;
    out.detail = format!("symmetric gap {:.2e}, skew-stress control gap {:.2e}; {}", (a - b).abs(), (sa - sb).abs(), out.detail);
    out
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("symmetric/skew split of the velocity gradient", split_identity),
        ("kinetic metric equality across representations", kinetic_metric),
        ("Hodge star roundtrip and defining identity", hodge_star),
        ("exterior covariant derivative squares to zero (flat)", flat_complex),
        ("pullback commutes with d_∇, ∇ and the form-leg map", pullback_naturality),
        ("integration by parts with boundary term", integration_by_parts),
        ("metric-gradient stress vs difference quotient", metric_gradient),
        ("momentum kernels match the classical forms", classical_equivalence),
        ("stress web closure and Piola relations", stress_web),
        ("material rate of F equals the velocity gradient", velocity_gradient_rate),
        ("mass conservation in each representation", mass_conservation),
        ("free vibration energy balance and refinement", free_vibration),
        ("rigid motion: no metric rate, Killing velocity", rigid_motion),
        ("stress power: symmetric stress ignores spin", stress_power),
    ];
    let start = Instant::now();
    let outcomes: Vec<Outcome> = thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(move || panic::catch_unwind(*f))).collect();
        handles
            .into_iter()
            .map(|h| match h.join().expect("criterion thread") {
                Ok(o) => o,
                Err(e) => {
                    let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                    Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
                }
            })
            .collect()
    });
    let mut failed = 0;
    for (i, ((title, _), o)) in criteria.iter().zip(&outcomes).enumerate() {
        println!("{} {:02} {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, title, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {} failed ({:.1} s)", outcomes.len() - failed, failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
