//! Property-based invariants of the kernel.

use std::sync::Arc;

use formelast::config::{pull_form_leg, pull_value_leg, push_form_leg, push_value_leg, Configuration};
use formelast::forms::{hodge_flat, hodge_sharp, inner_product, BundleValuedForm, MassForm, Parity, Star, ValueKind};
use formelast::geometry::{killing_residual, MetricField, MetricRole};
use formelast::grid::{Chart, CoordSystem, Grid};
use formelast::harness::{ChartKind, SuiteConfig};
use formelast::masskinetics::MassStructure;
use formelast::stress::{stress_web_convert, ConstitutiveModel, ModelKind, StressPayload, StressState, StressWeight, WebContext, WebTag};
use formelast::tensor::{compound, Base, Leg, Representation, Sampling, TensorField, M3, V3};
use proptest::prelude::*;

fn cube(n: usize) -> Grid {
    Grid::cube(Chart::unit_cube(), n).unwrap()
}

/// `I + s·A` with `|A_ij| ≤ 1`, `s` small enough to keep it orientation preserving.
fn near_identity() -> impl Strategy<Value = M3> {
    prop::array::uniform9(-1.0f64..1.0).prop_map(|a| M3::identity() + 0.25 * M3::from_row_slice(&a))
}

fn spd() -> impl Strategy<Value = M3> {
    near_identity().prop_map(|f| f.transpose() * f)
}

/// Homogeneous deformation `φ(X) = F·X` with its exact gradient.
fn linear_config(grid: &Grid, f: M3) -> Arc<Configuration> {
    let phi = grid.nodes().iter().map(|x| f * V3::from(*x)).collect();
    Arc::new(Configuration::with_gradient(grid, CoordSystem::Cartesian, phi, vec![f; grid.len()], 0.0, None).unwrap())
}

fn form_from(grid: &Grid, degree: usize, repr: Representation, over: Option<Arc<Configuration>>, c: &[f64]) -> BundleValuedForm {
    BundleValuedForm::from_fn(grid, degree, ValueKind::Vector, repr, Parity::True, over, |n, x, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = c[i % c.len()] * (1.0 + x[0] * x[1]) + 0.1 * (n % 7) as f64;
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn node_index_roundtrips(n in 5usize..12, i in 0usize..5, j in 0usize..5, k in 0usize..5) {
        let g = cube(n);
        let idx = g.index(i, j, k);
        prop_assert_eq!(g.ijk(idx), [i, j, k]);
    }

    #[test]
    fn compound_matrices_are_multiplicative(a in near_identity(), b in near_identity(), k in 0usize..4) {
        let (ca, cb, cab) = (compound(&a, k), compound(&b, k), compound(&(a * b), k));
        let n = cab.len().isqrt();
        for r in 0..n {
            for c in 0..n {
                let prod: f64 = (0..n).map(|m| ca[r * n + m] * cb[m * n + c]).sum();
                prop_assert!((prod - cab[r * n + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hodge_star_roundtrips_for_any_metric(g in spd(), c in prop::array::uniform9(-1.0f64..1.0), k in 0usize..4, rho in 0.5f64..2.0) {
        let grid = cube(5);
        let metric = MetricField::new(MetricRole::Spatial, Sampling::Body, vec![g; grid.len()]).unwrap();
        let mu = MassForm::new(&grid, Representation::Spatial, None, vec![rho * g.determinant().sqrt(); grid.len()]).unwrap();
        let star = Star::new(Representation::Spatial, &metric, &mu);
        let xi = form_from(&grid, k, Representation::Spatial, None, &c);
        let back = hodge_sharp(&hodge_flat(&xi, &star).unwrap(), &star).unwrap();
        prop_assert!(back.max_diff(&xi) < 1e-12);
    }

    #[test]
    fn inner_product_is_symmetric(g in spd(), a in prop::array::uniform9(-1.0f64..1.0), b in prop::array::uniform9(-1.0f64..1.0), k in 0usize..4) {
        let grid = cube(5);
        let metric = MetricField::new(MetricRole::Spatial, Sampling::Body, vec![g; grid.len()]).unwrap();
        let mu = MassForm::new(&grid, Representation::Spatial, None, vec![1.0; grid.len()]).unwrap();
        let star = Star::new(Representation::Spatial, &metric, &mu);
        let (x, y) = (form_from(&grid, k, Representation::Spatial, None, &a), form_from(&grid, k, Representation::Spatial, None, &b));
        let (xy, yx) = (inner_product(&x, &y, &star).unwrap(), inner_product(&y, &x, &star).unwrap());
        for (p, q) in xy.iter().zip(&yx) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
        let xx = inner_product(&x, &x, &star).unwrap();
        prop_assert!(xx.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn per_leg_pullbacks_invert(f in near_identity(), c in prop::array::uniform9(-1.0f64..1.0), k in 0usize..4) {
        let grid = cube(5);
        let config = linear_config(&grid, f);
        let alpha = form_from(&grid, k, Representation::Spatial, Some(config.clone()), &c);
        let material = pull_form_leg(&alpha, &config).unwrap();
        prop_assert!(push_form_leg(&material).unwrap().max_diff(&alpha) < 1e-12);
        let convective = pull_value_leg(&material).unwrap();
        prop_assert!(push_value_leg(&convective, &config).unwrap().max_diff(&material) < 1e-12);
    }

    #[test]
    fn stress_web_roundtrips_through_any_entry(f in near_identity(), s in prop::array::uniform9(-1.0f64..1.0), via in 0usize..9) {
        let grid = cube(5);
        let reference = MetricField::identity(&grid, MetricRole::Reference);
        let config = linear_config(&grid, f);
        let ctx = WebContext::new(&grid, config, MassStructure::uniform(&grid, reference, 1.0).unwrap()).unwrap();
        let repr = Representation::Spatial;
        let t = TensorField::matrix(&grid, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, &vec![M3::from_row_slice(&s); grid.len()]);
        let start = StressState::new(WebTag::new(repr, StressWeight::Sigma), StressPayload::Tensor(t)).unwrap();
        let mid = stress_web_convert(&grid, &start, WebTag::all()[via], &ctx).unwrap();
        let back = stress_web_convert(&grid, &mid, start.tag, &ctx).unwrap();
        prop_assert!(back.max_diff(&start).unwrap() < 1e-11);
    }

    #[test]
    fn reference_state_is_stress_free(big_g in spd(), lambda in 0.1f64..3.0, mu in 0.1f64..3.0, rho in 0.5f64..2.0) {
        for kind in [ModelKind::Svk, ModelKind::NeoHookean] {
            let model = ConstitutiveModel::new(kind, lambda, mu).unwrap();
            prop_assert!(model.energy_density(&big_g, &big_g, rho).unwrap().abs() < 1e-12);
            prop_assert!(model.energy_gradient(&big_g, &big_g, rho).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn metric_gradient_is_symmetric(g in spd(), big_g in spd()) {
        for kind in [ModelKind::Svk, ModelKind::NeoHookean] {
            let d = ConstitutiveModel::new(kind, 1.0, 1.0).unwrap().energy_gradient(&g, &big_g, 1.0).unwrap();
            prop_assert!((d - d.transpose()).norm() < 1e-14 * d.norm().max(1.0));
        }
    }

    #[test]
    fn rigid_velocities_are_killing(w in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        let grid = cube(7);
        let m = MetricField::chart(&grid).unwrap();
        let v: Vec<V3> = grid.nodes().iter().map(|x| V3::from(w).cross(&V3::from(*x)) + V3::from(b)).collect();
        let field = TensorField::vector(&grid, Representation::Spatial, Base::Spatial, &v);
        prop_assert!(killing_residual(&grid, &field, &m).unwrap() < 1e-12);
    }

    #[test]
    fn suite_config_json_roundtrips(seed in any::<u64>(), leg_swap in any::<bool>(), n in 5usize..20) {
        let cfg = SuiteConfig { resolutions: [n, 2 * n - 1], seed, charts: vec![ChartKind::Cylindrical], leg_swap, identities: vec!["hodge_duality".into()] };
        let back: SuiteConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
