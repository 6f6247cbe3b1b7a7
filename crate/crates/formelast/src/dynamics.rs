//! Time integration of the equations of motion (material and convective
//! representations), residuals of the spatial equations on pushed-forward
//! trajectories, energy balances, and the intensive-variable equivalences.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{covariant_derivative, divergence, exterior_covariant_derivative, is_analytic, time_derivative, ConnectionContext};
use crate::config::{push_form_leg, push_value_leg, Configuration, MotionCurve};
use crate::error::{Error, Result};
use crate::forms::{exterior_derivative, hodge_flat, hodge_sharp, interior_product, BundleValuedForm, MassForm, Parity, ValueKind};
use crate::geometry::{ambient_christoffel, ambient_metric, lie_derivative_metric, min_eigenvalue, MetricField, MetricRole, SPD_THRESHOLD};
use crate::grid::{partial_transpose, quadrature, rms_norm, CoordSystem, Grid, SampledField};
use crate::masskinetics::MassStructure;
use crate::stress::{rougee_stress, strain_energy, tau_from_sigma, boundary_traction_power, ConstitutiveModel, StressPayload, StressState, StressWeight, WebContext, WebTag};
use crate::tensor::{complement, Base, Representation, Sampling, TensorField, M3, V3};

/// Boundary condition on the whole of `∂B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Clamped: `ṽ = 0` on `∂B`.
    ZeroVelocity,
    /// Free: `i*𝒯̃ = 0` on `∂B`.
    ZeroTraction,
}

/// Material state `(φ, ℳ̃)`; `momentum[n]` holds the components `ℳ̃_k` of `ℳ̃ = ℳ̃_k e^k ⊗ dX¹²³`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialState {
    pub t: f64,
    pub phi: Vec<V3>,
    pub momentum: Vec<V3>,
}

/// Convective state `(ĝ, ℳ̂)`; `momentum[n]` holds `ℳ̂_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvectiveState {
    pub t: f64,
    pub g_hat: Vec<M3>,
    pub momentum: Vec<V3>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MotionState {
    Material(MaterialState),
    Convective(ConvectiveState),
}

impl MotionState {
    pub fn t(&self) -> f64 {
        match self {
            MotionState::Material(s) => s.t,
            MotionState::Convective(s) => s.t,
        }
    }

    pub fn representation(&self) -> Representation {
        match self {
            MotionState::Material(_) => Representation::Material,
            MotionState::Convective(_) => Representation::Convective,
        }
    }
}

/// An elastic body: grid, stored-energy model, mass structure (with reference `G`), and boundary condition.
#[derive(Clone, Debug)]
pub struct ElasticBody {
    pub grid: Grid,
    pub model: ConstitutiveModel,
    pub mass: MassStructure,
    pub bc: BoundaryCondition,
}

/// Everything one right-hand-side evaluation of the material equations produces.
#[derive(Clone, Debug)]
pub struct MaterialStage {
    pub config: Arc<Configuration>,
    /// `ṽ = ⋆̃♯ℳ̃` (zeroed on `∂B` for clamped bodies).
    pub velocity: Vec<V3>,
    /// `𝒯̃` with the boundary condition applied.
    pub stress: BundleValuedForm,
    /// Components of `d̃_∇𝒯̃`.
    pub force: Vec<V3>,
    /// `∂_tℳ̃`.
    pub momentum_rate: Vec<V3>,
}

/// One right-hand-side evaluation of the convective equations.
#[derive(Clone, Debug)]
pub struct ConvectiveStage {
    pub g_hat: MetricField,
    pub velocity: Vec<V3>,
    pub stress: BundleValuedForm,
    pub force: Vec<V3>,
    pub metric_rate: Vec<M3>,
    pub momentum_rate: Vec<V3>,
}

fn zero_boundary_traction(grid: &Grid, t: &mut BundleValuedForm) {
    for node in 0..grid.len() {
        for face in grid.boundary_faces(node) {
            let (_, slot) = complement(1, face.axis);
            for v in 0..3 {
                t.set(node, v, slot, 0.0);
            }
        }
    }
}

fn top_components(f: &BundleValuedForm) -> Vec<V3> {
    (0..f.nodes()).map(|n| V3::new(f.get(n, 0, 0), f.get(n, 1, 0), f.get(n, 2, 0))).collect()
}

fn flatten_v(v: &[V3]) -> Vec<f64> {
    v.iter().flat_map(|x| [x[0], x[1], x[2]]).collect()
}

fn unflatten_v(y: &[f64]) -> Vec<V3> {
    y.chunks_exact(3).map(V3::from_column_slice).collect()
}

fn flatten_m(m: &[M3]) -> Vec<f64> {
    m.iter().flat_map(|x| x.as_slice().to_vec()).collect()
}

fn unflatten_m(y: &[f64]) -> Vec<M3> {
    y.chunks_exact(9).map(M3::from_column_slice).collect()
}

/// `𝒯^I_a` as a matrix `(a, I)` from the `[value][2-form slot]` storage.
fn extensive_matrices(t: &BundleValuedForm) -> Vec<M3> {
    (0..t.nodes())
        .map(|p| {
            M3::from_fn(|a, i| {
                let (sign, slot) = complement(1, i);
                sign * t.get(p, a, slot)
            })
        })
        .collect()
}

/// `−W⁻¹ Σ_I D_Iᵀ (W 𝒯^I_a)`: the divergence adjoint to the grid's difference operator.
fn weak_divergence(grid: &Grid, t: &[M3]) -> Vec<V3> {
    let n = grid.len();
    let mut acc = vec![0.0; 3 * n];
    for axis in 0..3 {
        let src: Vec<f64> = (0..n).flat_map(|p| {
            let w = grid.weight(p);
            [w * t[p][(0, axis)], w * t[p][(1, axis)], w * t[p][(2, axis)]]
        }).collect();
        for (a, d) in acc.iter_mut().zip(partial_transpose(grid, &src, 3, axis)) {
            *a += d;
        }
    }
    (0..n).map(|p| -V3::new(acc[3 * p], acc[3 * p + 1], acc[3 * p + 2]) / grid.weight(p)).collect()
}

/// `∂_a g_{bc}` of the ambient metric at a point, from its Christoffel symbols.
fn ambient_metric_gradient(coords: CoordSystem, x: V3) -> [M3; 3] {
    let x = [x[0], x[1], x[2]];
    let g = ambient_metric(coords, x);
    let gam = ambient_christoffel(coords, x);
    std::array::from_fn(|a| M3::from_fn(|b, c| (0..3).map(|d| g[(b, d)] * gam[d][(a, c)] + g[(c, d)] * gam[d][(a, b)]).sum()))
}

/// Classic fourth-order Runge–Kutta step of `ẏ = f(y)`.
fn rk4(y: &[f64], dt: f64, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let add = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, d)| x + s * d).collect() };
    let k1 = f(y)?;
    let k2 = f(&add(y, &k1, 0.5 * dt))?;
    let k3 = f(&add(y, &k2, 0.5 * dt))?;
    let k4 = f(&add(y, &k3, dt))?;
    Ok((0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn map_inversion(e: Error, step: usize) -> Error {
    match e {
        Error::Orientation { node, .. } | Error::NotSpd { node, .. } => Error::Inverted { step, node },
        other => other,
    }
}

impl ElasticBody {
    pub fn new(grid: Grid, model: ConstitutiveModel, mass: MassStructure, bc: BoundaryCondition) -> Result<Self> {
        model.validate()?;
        if mass.mu_hat.density().len() != grid.len() {
            return Err(Error::Shape("mass structure does not match grid".into()));
        }
        if let Some((node, &value)) = mass.mu_hat.density().iter().enumerate().find(|(_, m)| !(**m > 0.0)) {
            return Err(Error::Degenerate { node, value });
        }
        Ok(Self { grid, model, mass, bc })
    }

    pub fn coords(&self) -> CoordSystem {
        self.grid.chart.coords
    }

    fn clamp(&self, v: &mut [V3]) {
        if self.bc == BoundaryCondition::ZeroVelocity {
            for (n, x) in v.iter_mut().enumerate() {
                if self.grid.is_boundary(n) {
                    *x = V3::zeros();
                }
            }
        }
    }

    /// Material state from positions and a material velocity: `ℳ̃_k = m̂ g_{kj}(φ) ṽ^j`.
    pub fn material_state(&self, t: f64, phi: Vec<V3>, velocity: &[V3]) -> Result<MaterialState> {
        if phi.len() != self.grid.len() || velocity.len() != self.grid.len() {
            return Err(Error::Shape("one position and velocity per node required".into()));
        }
        let mut v = velocity.to_vec();
        self.clamp(&mut v);
        let momentum = phi
            .iter()
            .zip(&v)
            .zip(self.mass.mu_hat.density())
            .map(|((p, v), m)| *m * ambient_metric(self.coords(), [p[0], p[1], p[2]]) * v)
            .collect();
        Ok(MaterialState { t, phi, momentum })
    }

    /// Identity placement at rest.
    pub fn rest_state(&self) -> Result<MaterialState> {
        let phi: Vec<V3> = self.grid.nodes().into_iter().map(V3::from).collect();
        self.material_state(0.0, phi, &vec![V3::zeros(); self.grid.len()])
    }

    pub fn configuration(&self, phi: &[V3], t: f64) -> Result<Arc<Configuration>> {
        Ok(Arc::new(Configuration::from_phi(&self.grid, self.coords(), phi.to_vec(), t, Some(&self.mass.reference))?))
    }

    /// Pull a material state to the body: `ĝ = FᵀgF`, `ℳ̂_K = F^k_K ℳ̃_k`.
    pub fn to_convective(&self, s: &MaterialState) -> Result<ConvectiveState> {
        let c = self.configuration(&s.phi, s.t)?;
        let (g_hat, _) = c.induced_metrics()?;
        let momentum = c.f.iter().zip(&s.momentum).map(|(f, m)| f.transpose() * m).collect();
        Ok(ConvectiveState { t: s.t, g_hat: g_hat.g, momentum })
    }

    /// Right-hand side of `∂_tφ = ṽ`, `∂_tℳ̃ = d̃_∇𝒯̃ + Γ^j_{ik}ṽ^iℳ̃_j`.
    ///
    /// `d̃_∇𝒯̃` is assembled in summation-by-parts form, as the exact adjoint of the
    /// discrete internal energy: `f = −W⁻¹ ∂E_h/∂φ` with `W` the quadrature weights.
    /// In the interior this is the central-difference `d̃_∇𝒯̃`; on `∂B` the zero-traction
    /// condition enters as the natural boundary condition, and the semi-discrete total
    /// energy is conserved exactly.
    pub fn material_stage(&self, phi: &[V3], momentum: &[V3], t: f64) -> Result<MaterialStage> {
        let grid = &self.grid;
        let n = grid.len();
        let config = self.configuration(phi, t)?;
        let (g_hat, g_tilde) = config.induced_metrics()?;
        let m_hat = self.mass.mu_hat.density();
        let mut velocity: Vec<V3> = (0..n).map(|p| g_tilde.inv[p] * momentum[p] / m_hat[p]).collect();
        self.clamp(&mut velocity);
        let t_hat = rougee_stress(grid, &self.model, &g_hat, &self.mass)?;
        let mut stress = push_value_leg(t_hat.form()?, &config)?;
        let piola = extensive_matrices(&stress);
        let mut force = weak_divergence(grid, &piola);
        for p in 0..n {
            let dg = ambient_metric_gradient(self.coords(), phi[p]);
            let m = g_tilde.inv[p] * piola[p] * config.f[p].transpose();
            for (a, dga) in dg.iter().enumerate() {
                force[p][a] -= 0.5 * (dga * m).trace();
            }
        }
        if self.bc == BoundaryCondition::ZeroTraction {
            zero_boundary_traction(grid, &mut stress);
        }
        let mut momentum_rate: Vec<V3> = (0..n)
            .map(|p| {
                let x = phi[p];
                let gam = ambient_christoffel(self.coords(), [x[0], x[1], x[2]]);
                let (v, m) = (velocity[p], momentum[p]);
                force[p] + V3::from_fn(|k, _| (0..3).map(|j| (0..3).map(|i| gam[j][(i, k)] * v[i]).sum::<f64>() * m[j]).sum())
            })
            .collect();
        self.clamp(&mut momentum_rate);
        Ok(MaterialStage { config, velocity, stress, force, momentum_rate })
    }

    /// Right-hand side of `∂_tĝ = L_{v̂}ĝ`, `∂_tℳ̂ = ½μ̂⊗d(ĝ(v̂,v̂)) + d̂_∇𝒯̂`.
    ///
    /// `d̂_∇𝒯̂` is the adjoint of the discrete `ĝ ↦ L_{v̂}ĝ` map paired with `∂𝓔̂/∂ĝ`, and
    /// `d(ĝ(v̂,v̂))` is expanded by the product rule, so that the semi-discrete total
    /// energy is conserved exactly (see [`ElasticBody::material_stage`]).
    pub fn convective_stage(&self, g: &[M3], momentum: &[V3]) -> Result<ConvectiveStage> {
        let grid = &self.grid;
        let n = grid.len();
        for (node, gm) in g.iter().enumerate() {
            let min_eig = min_eigenvalue(gm);
            if !(min_eig > SPD_THRESHOLD) {
                return Err(Error::NotSpd { node, min_eig });
            }
        }
        let g_hat = MetricField::new(MetricRole::Convective, Sampling::Body, g.to_vec())?;
        let m_hat = self.mass.mu_hat.density();
        let mut velocity: Vec<V3> = (0..n).map(|p| g_hat.inv[p] * momentum[p] / m_hat[p]).collect();
        self.clamp(&mut velocity);
        let vt = TensorField::vector(grid, Representation::Convective, Base::Body, &velocity);
        let metric_rate = lie_derivative_metric(grid, &vt, &g_hat)?.as_matrices();
        let mut stress = rougee_stress(grid, &self.model, &g_hat, &self.mass)?.form()?.clone();
        let t_mat = extensive_matrices(&stress);
        let mut force = weak_divergence(grid, &t_mat);
        let dg = Sampling::Body.gradient(grid, &flatten_m(g), 9);
        let dv = Sampling::Body.gradient(grid, &flatten_v(&velocity), 3);
        let mut momentum_rate = Vec::with_capacity(n);
        for p in 0..n {
            // ∂𝓔̂/∂ĝ as a chart density: ½ ĝ⁻¹ 𝒯̂.
            let s = 0.5 * g_hat.inv[p] * t_mat[p];
            let v = velocity[p];
            let mut kin = V3::zeros();
            for k in 0..3 {
                let dgk = M3::from_column_slice(&dg[k][9 * p..9 * p + 9]);
                let dvk = V3::new(dv[k][3 * p], dv[k][3 * p + 1], dv[k][3 * p + 2]);
                force[p][k] -= (s.transpose() * dgk).trace();
                kin[k] = m_hat[p] * (0.5 * v.dot(&(dgk * v)) + dvk.dot(&(g[p] * v)));
            }
            momentum_rate.push(force[p] + kin);
        }
        self.clamp(&mut momentum_rate);
        if self.bc == BoundaryCondition::ZeroTraction {
            zero_boundary_traction(grid, &mut stress);
        }
        Ok(ConvectiveStage { g_hat, velocity, stress, force, metric_rate, momentum_rate })
    }

    /// Material-representation energies and powers at one state.
    pub fn material_energies(&self, s: &MaterialState) -> Result<EnergySnapshot> {
        let grid = &self.grid;
        let st = self.material_stage(&s.phi, &s.momentum, s.t)?;
        let (g_hat, _) = st.config.induced_metrics()?;
        let e_kin = 0.5 * quadrature(grid, &(0..grid.len()).map(|n| st.velocity[n].dot(&s.momentum[n])).collect::<Vec<_>>());
        let e_int = strain_energy(grid, &self.model, &g_hat, &self.mass)?.total(grid)?;
        let v = BundleValuedForm::from_fn(grid, 0, ValueKind::Vector, Representation::Material, Parity::True, Some(st.config.clone()), |n, _, o| {
            o.copy_from_slice(st.velocity[n].as_slice())
        })?;
        let t = StressState::new(WebTag::new(Representation::Material, StressWeight::Extensive), StressPayload::Form(st.stress.clone()))?;
        let boundary_power = boundary_traction_power(grid, &t, &v)?;
        let stress_force_power = quadrature(grid, &(0..grid.len()).map(|n| st.velocity[n].dot(&st.force[n])).collect::<Vec<_>>());
        let v_hat: Vec<V3> = st.velocity.iter().zip(st.config.f_inv.iter()).map(|(v, fi)| fi * v).collect();
        let metric_rate = lie_derivative_metric(grid, &TensorField::vector(grid, Representation::Convective, Base::Body, &v_hat), &g_hat)?.data.max_abs();
        let spatial_mass = self.mass.spatial(grid, &st.config)?.total(grid)?;
        Ok(EnergySnapshot {
            t: s.t,
            e_kin,
            e_int,
            boundary_power,
            stress_force_power,
            metric_rate,
            mass: spatial_mass,
            min_det_f: st.config.min_det_f(),
        })
    }

    /// Convective-representation energies and powers at one state.
    pub fn convective_energies(&self, s: &ConvectiveState) -> Result<EnergySnapshot> {
        let grid = &self.grid;
        let st = self.convective_stage(&s.g_hat, &s.momentum)?;
        let e_kin = 0.5 * quadrature(grid, &(0..grid.len()).map(|n| st.velocity[n].dot(&s.momentum[n])).collect::<Vec<_>>());
        let e_int = strain_energy(grid, &self.model, &st.g_hat, &self.mass)?.total(grid)?;
        let v = BundleValuedForm::from_fn(grid, 0, ValueKind::Vector, Representation::Convective, Parity::True, None, |n, _, o| {
            o.copy_from_slice(st.velocity[n].as_slice())
        })?;
        let t = StressState::new(WebTag::new(Representation::Convective, StressWeight::Extensive), StressPayload::Form(st.stress.clone()))?;
        let boundary_power = boundary_traction_power(grid, &t, &v)?;
        let stress_force_power = quadrature(grid, &(0..grid.len()).map(|n| st.velocity[n].dot(&st.force[n])).collect::<Vec<_>>());
        let metric_rate = st.metric_rate.iter().map(|m| m.abs().max()).fold(0.0, f64::max);
        let mass = self.mass.mu_hat.total(grid)?;
        let min_det_f = st.g_hat.g.iter().zip(&self.mass.reference.g).map(|(g, r)| (g.determinant() / r.determinant()).sqrt()).fold(f64::INFINITY, f64::min);
        Ok(EnergySnapshot { t: s.t, e_kin, e_int, boundary_power, stress_force_power, metric_rate, mass, min_det_f })
    }

    pub fn energies(&self, s: &MotionState) -> Result<EnergySnapshot> {
        match s {
            MotionState::Material(m) => self.material_energies(m),
            MotionState::Convective(c) => self.convective_energies(c),
        }
    }
}

/// One RK4 step of the material equations; `step` labels errors.
pub fn step_material(body: &ElasticBody, s: &MaterialState, dt: f64, step: usize) -> Result<MaterialState> {
    let n = body.grid.len();
    let mut y = flatten_v(&s.phi);
    y.extend(flatten_v(&s.momentum));
    let out = rk4(&y, dt, |y| {
        let st = body.material_stage(&unflatten_v(&y[..3 * n]), &unflatten_v(&y[3 * n..]), s.t).map_err(|e| map_inversion(e, step))?;
        let mut r = flatten_v(&st.velocity);
        r.extend(flatten_v(&st.momentum_rate));
        Ok(r)
    })?;
    Ok(MaterialState { t: s.t + dt, phi: unflatten_v(&out[..3 * n]), momentum: unflatten_v(&out[3 * n..]) })
}

/// One RK4 step of the convective equations; Christoffels of `ĝ` are recomputed per stage.
pub fn step_convective(body: &ElasticBody, s: &ConvectiveState, dt: f64, step: usize) -> Result<ConvectiveState> {
    let n = body.grid.len();
    let mut y = flatten_m(&s.g_hat);
    y.extend(flatten_v(&s.momentum));
    let out = rk4(&y, dt, |y| {
        let st = body.convective_stage(&unflatten_m(&y[..9 * n]), &unflatten_v(&y[9 * n..])).map_err(|e| map_inversion(e, step))?;
        let mut r = flatten_m(&st.metric_rate);
        r.extend(flatten_v(&st.momentum_rate));
        Ok(r)
    })?;
    Ok(ConvectiveState { t: s.t + dt, g_hat: unflatten_m(&out[..9 * n]), momentum: unflatten_v(&out[9 * n..]) })
}

pub fn step(body: &ElasticBody, s: &MotionState, dt: f64, step: usize) -> Result<MotionState> {
    Ok(match s {
        MotionState::Material(m) => MotionState::Material(step_material(body, m, dt, step)?),
        MotionState::Convective(c) => MotionState::Convective(step_convective(body, c, dt, step)?),
    })
}

/// Energies and powers of one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySnapshot {
    pub t: f64,
    pub e_kin: f64,
    pub e_int: f64,
    /// `∮ v ∧̇ 𝒯` with the boundary condition applied.
    pub boundary_power: f64,
    /// `∫ v ∧̇ d_∇𝒯`.
    pub stress_force_power: f64,
    /// `max |∂_tĝ|` from `L_{v̂}ĝ`.
    pub metric_rate: f64,
    /// Total mass `∫ μ`.
    pub mass: f64,
    pub min_det_f: f64,
}

impl EnergySnapshot {
    pub fn total(&self) -> f64 {
        self.e_kin + self.e_int
    }
}

/// Energy balance at the middle of a window of consecutive states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e_kin: f64,
    pub e_int: f64,
    pub boundary_power: f64,
    /// `d/dt (E_kin + E_int)` by central difference.
    pub lhs_rate: f64,
    /// `|lhs_rate − boundary_power|`.
    pub residual: f64,
    /// `|dE_kin/dt − ∫ v ∧̇ d_∇𝒯|`.
    pub kinetic_residual: f64,
}

/// Balance of total energy at the middle snapshot of `window` (≥ 3 snapshots, uniform spacing).
pub fn energy_report(window: &[EnergySnapshot]) -> Result<EnergyReport> {
    if window.len() < 3 {
        return Err(Error::Snapshots("energy balance needs at least three consecutive states".into()));
    }
    let mid = window.len() / 2;
    let (a, b, c) = (&window[mid - 1], &window[mid], &window[mid + 1]);
    let span = c.t - a.t;
    if !(span > 0.0) {
        return Err(Error::Snapshots("snapshots are not increasing in time".into()));
    }
    let lhs_rate = (c.total() - a.total()) / span;
    let kin_rate = (c.e_kin - a.e_kin) / span;
    Ok(EnergyReport {
        e_kin: b.e_kin,
        e_int: b.e_int,
        boundary_power: b.boundary_power,
        lhs_rate,
        residual: (lhs_rate - b.boundary_power).abs(),
        kinetic_residual: (kin_rate - b.stress_force_power).abs(),
    })
}

/// One CSV row of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub e_kin: f64,
    pub e_int: f64,
    pub boundary_power: f64,
    pub energy_residual: f64,
    pub mass_residual: f64,
    #[serde(rename = "min_detF")]
    pub min_det_f: f64,
    /// `max |∂_tĝ|`.
    pub metric_rate: f64,
}

/// Result of a simulation run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<EnergySnapshot>,
    pub rows: Vec<TrajectoryRow>,
    pub final_state: MotionState,
    /// Every state, when requested.
    pub states: Vec<MotionState>,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `max_t |d/dt E − P_st| / max(|E_total(0)|, ENERGY_FLOOR)`.
    pub fn max_relative_energy_residual(&self) -> f64 {
        let e0 = self.snapshots[0].total().abs().max(ENERGY_FLOOR);
        self.rows.iter().map(|r| r.energy_residual).fold(0.0, f64::max) / e0
    }

    /// Balance reports at every interior snapshot.
    pub fn energy_reports(&self) -> Result<Vec<EnergyReport>> {
        self.snapshots.windows(3).map(energy_report).collect()
    }
}

/// Time derivative of total energy at every snapshot: central inside, second-order one-sided at the ends.
fn energy_rates(s: &[EnergySnapshot]) -> Vec<f64> {
    let n = s.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let e: Vec<f64> = s.iter().map(|x| x.total()).collect();
    let dt = s[1].t - s[0].t;
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * e[0] + 4.0 * e[1] - e[2]) / (2.0 * dt)
            } else if i == n - 1 {
                (3.0 * e[n - 1] - 4.0 * e[n - 2] + e[n - 3]) / (2.0 * dt)
            } else {
                (e[i + 1] - e[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Integrate `steps` RK4 steps of size `dt` from `initial`, recording energies at every step.
///
/// Fails with [`Error::Inverted`] when `det F ≤ 0` (or `ĝ` loses definiteness) and with
/// [`Error::Instability`] when the total energy exceeds ten times its initial value.
pub fn simulate(body: &ElasticBody, initial: MotionState, dt: f64, steps: usize, keep_states: bool) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Config("time step must be positive".into()));
    }
    let mut state = initial;
    let mut snapshots = vec![body.energies(&state).map_err(|e| map_inversion(e, 0))?];
    let mut states = if keep_states { vec![state.clone()] } else { Vec::new() };
    let e0 = snapshots[0].total();
    for k in 1..=steps {
        state = step(body, &state, dt, k)?;
        let snap = body.energies(&state).map_err(|e| map_inversion(e, k))?;
        if !snap.total().is_finite() || snap.total() > 10.0 * e0.abs() + 1e-9 {
            return Err(Error::Instability { step: k, energy: snap.total(), initial: e0 });
        }
        snapshots.push(snap);
        if keep_states {
            states.push(state.clone());
        }
    }
    let rates = energy_rates(&snapshots);
    let m0 = body.mass.mu_hat.total(&body.grid)?;
    let rows = snapshots
        .iter()
        .zip(&rates)
        .map(|(s, r)| TrajectoryRow {
            t: s.t,
            e_kin: s.e_kin,
            e_int: s.e_int,
            boundary_power: s.boundary_power,
            energy_residual: (r - s.boundary_power).abs(),
            mass_residual: (s.mass - m0).abs(),
            min_det_f: s.min_det_f,
            metric_rate: s.metric_rate,
        })
        .collect();
    Ok(Trajectory { snapshots, rows, final_state: state, states })
}

/// Node layers next to `∂B` on which the summation-by-parts stress divergence differs
/// from the central-difference one.
/// Energies below this are treated as zero when normalizing energy residuals, so a
/// body at rest is judged by its absolute residual.
pub const ENERGY_FLOOR: f64 = 1e-12;

pub const WEAK_LAYERS: usize = 3;

/// Distance of a node from the nearest boundary face, in nodes.
pub fn boundary_depth(grid: &Grid, node: usize) -> usize {
    let ijk = grid.ijk(node);
    (0..3).map(|a| ijk[a].min(grid.n[a] - 1 - ijk[a])).min().unwrap()
}

/// Residuals of the spatial equations at the middle of three material snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpatialResiduals {
    /// `max |∂_tμ + d(ι_vμ)|`.
    pub mass: f64,
    /// `max |∂_tℳ + d_∇(ι_vμ⊗v♭) − d_∇𝒯|` (conservation form).
    pub momentum: f64,
    /// `max |∂_tℳ + L_vℳ − μ⊗½d(ι_v v♭) − d_∇𝒯|` (advection form).
    pub advection: f64,
    /// `max |∂_tℳ|`, the scale of the momentum residuals.
    pub momentum_scale: f64,
    /// `∫ v ∧̇ d_∇(ι_vμ⊗v♭)`: power of the momentum flux.
    pub flux_power: f64,
}

/// Lie derivative of a covector-valued top form `T_k dx¹²³` by the coordinate formula
/// `(L_uT)_k = ∂_i(u^i T_k) + T_i ∂_k u^i` (no connection involved).
pub fn lie_derivative_top_covector(grid: &Grid, u: &TensorField, t: &BundleValuedForm) -> Result<BundleValuedForm> {
    if t.degree != 3 || t.value != ValueKind::Covector {
        return Err(Error::Shape("expected a covector-valued top form".into()));
    }
    if u.rank() != 1 || u.legs[0].base != t.repr.form_base() {
        return Err(Error::Representation("vector field and form live on different manifolds".into()));
    }
    let sampling = t.sampling();
    let n = grid.len();
    let uv = u.as_vectors();
    let flux: Vec<f64> = (0..n).flat_map(|p| (0..3).flat_map(move |k| (0..3).map(move |i| (p, k, i)))).map(|(p, k, i)| uv[p][i] * t.get(p, k, 0)).collect();
    let dflux = sampling.gradient(grid, &flux, 9);
    let du = sampling.gradient(grid, &u.data.values, 3);
    let mut out = t.zeros_like(3, ValueKind::Covector, t.parity);
    for p in 0..n {
        for k in 0..3 {
            let adv: f64 = (0..3).map(|i| dflux[i][9 * p + 3 * k + i]).sum();
            let stretch: f64 = (0..3).map(|i| t.get(p, i, 0) * du[k][3 * p + i]).sum();
            out.set(p, k, 0, adv + stretch);
        }
    }
    Ok(out)
}

/// `ω ⊗ α` for a scalar top form and a covector field.
fn top_times_covector(omega: &BundleValuedForm, alpha: &[V3]) -> BundleValuedForm {
    let mut out = omega.zeros_like(omega.degree, ValueKind::Covector, omega.parity);
    for p in 0..omega.nodes() {
        for slot in 0..out.slots() {
            for k in 0..3 {
                out.set(p, k, slot, omega.get(p, 0, slot) * alpha[p][k]);
            }
        }
    }
    out
}

/// Both sides of `L_u(ω⊗α) = d_∇(ι_uω⊗α) + ω⊗(∇u ∧̇ α)`, returned as `(lhs, rhs)`.
pub fn lie_identity_sides(
    grid: &Grid,
    u: &TensorField,
    omega: &BundleValuedForm,
    alpha: &[V3],
    ctx: &ConnectionContext,
) -> Result<(BundleValuedForm, BundleValuedForm)> {
    if omega.degree != 3 || omega.value != ValueKind::Scalar {
        return Err(Error::Shape("ω must be a scalar top form".into()));
    }
    let lhs = lie_derivative_top_covector(grid, u, &top_times_covector(omega, alpha))?;
    let flux = top_times_covector(&interior_product(u, omega)?, alpha);
    let dflux = exterior_covariant_derivative(grid, &flux, ctx)?;
    // (∇u)[c][a] = ∇_c u^a; contract the value leg with α.
    let grad = covariant_derivative(grid, u, ctx)?.as_matrices();
    let mut rhs = dflux;
    for p in 0..grid.len() {
        let w = omega.get(p, 0, 0);
        for k in 0..3 {
            let s: f64 = (0..3).map(|a| grad[p][(k, a)] * alpha[p][a]).sum();
            rhs.set(p, k, 0, rhs.get(p, k, 0) + w * s);
        }
    }
    Ok((lhs, rhs))
}

/// Residuals of the spatial conservation and advection forms on three equally spaced
/// material snapshots pushed forward to the configuration.
///
/// The mass balance is checked at every node. The momentum balances are checked on
/// nodes at least [`WEAK_LAYERS`] away from `∂B`: closer to the boundary the material
/// stepper's stress divergence carries the weakly imposed boundary condition (and, for
/// clamped bodies, the support reactions), which the strong spatial form does not see.
pub fn spatial_residuals(body: &ElasticBody, states: &[MaterialState]) -> Result<SpatialResiduals> {
    if states.len() != 3 {
        return Err(Error::Snapshots("spatial residuals need exactly three consecutive states".into()));
    }
    let dt = states[1].t - states[0].t;
    if !(dt > 0.0) || ((states[2].t - states[1].t) - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(Error::Snapshots("snapshots must be equally spaced in time".into()));
    }
    let grid = &body.grid;
    let n = grid.len();
    let m_hat = body.mass.mu_hat.density();
    // Spatial components over φ: μ = m̂/detF, ℳ_k = ℳ̃_k/detF.
    let spatial_components = |s: &MaterialState| -> Result<Vec<f64>> {
        let c = body.configuration(&s.phi, s.t)?;
        Ok((0..n).flat_map(|p| {
            let d = c.f[p].determinant();
            [m_hat[p] / d, s.momentum[p][0] / d, s.momentum[p][1] / d, s.momentum[p][2] / d]
        }).collect())
    };
    let before = spatial_components(&states[0])?;
    let after = spatial_components(&states[2])?;
    let mid = &states[1];
    let st = body.material_stage(&mid.phi, &mid.momentum, mid.t)?;
    let c = st.config.clone();
    let sampling = c.sampling();
    let now = spatial_components(mid)?;
    let grad = sampling.gradient(grid, &now, 4);
    let v = &st.velocity;
    // ∂_t at fixed x = d/dt at fixed X − v^i ∂_i.
    let rate: Vec<f64> = (0..4 * n)
        .map(|q| {
            let p = q / 4;
            (after[q] - before[q]) / (2.0 * dt) - (0..3).map(|i| v[p][i] * grad[i][q]).sum::<f64>()
        })
        .collect();

    let mu = MassForm::new(grid, Representation::Spatial, Some(c.clone()), (0..n).map(|p| now[4 * p]).collect())?;
    let vs = TensorField::vector(grid, Representation::Spatial, Base::Spatial, v);
    let mass_flux = interior_product(&vs, &mu.0)?;
    let dmass = exterior_derivative(grid, &mass_flux)?;
    let mass = (0..n).map(|p| (rate[4 * p] + dmass.get(p, 0, 0)).abs()).fold(0.0, f64::max);
    if (0..3).any(|a| grid.n[a] < 2 * WEAK_LAYERS + 1) {
        return Err(Error::Config(format!("spatial momentum residuals need at least {} nodes per axis", 2 * WEAK_LAYERS + 1)));
    }

    let ctx = ConnectionContext::spatial_over(&c)?;
    let g = c.spatial_metric()?;
    let v_flat: Vec<V3> = (0..n).map(|p| g.g[p] * v[p]).collect();
    let dflux = top_components(&exterior_covariant_derivative(grid, &top_times_covector(&mass_flux, &v_flat), &ctx)?);
    let t_spatial = push_form_leg(&st.stress)?;
    let dstress = top_components(&exterior_covariant_derivative(grid, &t_spatial, &ctx)?);
    let m_form = {
        let mut f = BundleValuedForm::zeros(grid, 3, ValueKind::Covector, Representation::Spatial, Parity::Pseudo, Some(c.clone()))?;
        for p in 0..n {
            for k in 0..3 {
                f.set(p, k, 0, now[4 * p + 1 + k]);
            }
        }
        f
    };
    let lie = top_components(&lie_derivative_top_covector(grid, &vs, &m_form)?);
    let kin: Vec<f64> = (0..n).map(|p| v[p].dot(&v_flat[p])).collect();
    let dkin = sampling.gradient(grid, &kin, 1);
    let (mut momentum, mut advection, mut scale): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for p in (0..n).filter(|&p| boundary_depth(grid, p) >= WEAK_LAYERS) {
        for k in 0..3 {
            let dm = rate[4 * p + 1 + k];
            scale = scale.max(dm.abs());
            momentum = momentum.max((dm + dflux[p][k] - dstress[p][k]).abs());
            advection = advection.max((dm + lie[p][k] - 0.5 * now[4 * p] * dkin[k][p] - dstress[p][k]).abs());
        }
    }
    let flux_density: Vec<f64> = (0..n).map(|p| v[p].dot(&dflux[p]) * c.f[p].determinant()).collect();
    Ok(SpatialResiduals { mass, momentum, advection, momentum_scale: scale, flux_power: quadrature(grid, &flux_density) })
}

/// Both sides of the intensive-variable kernel identity `⋆♯d_∇⋆♭τ = (1/ρ) div σ`.
#[derive(Clone, Debug)]
pub struct KernelComparison {
    pub exterior: Vec<V3>,
    pub classical: Vec<V3>,
}

impl KernelComparison {
    fn difference(&self, grid: &Grid) -> SampledField {
        let mut f = SampledField::zeros(grid, &[3]);
        for (p, (a, b)) in self.exterior.iter().zip(&self.classical).enumerate() {
            f.node_mut(p).copy_from_slice((a - b).as_slice());
        }
        f
    }

    pub fn max_residual(&self, grid: &Grid) -> f64 {
        self.difference(grid).max_abs()
    }

    pub fn rms_residual(&self, grid: &Grid) -> f64 {
        rms_norm(grid, &self.difference(grid))
    }
}

/// Evaluate `⋆♯d_∇⋆♭τ` (with `τ` from `σ`) and `(1/ρ) div σ` independently.
pub fn classical_equivalence(grid: &Grid, sigma: &StressState, ctx: &WebContext) -> Result<KernelComparison> {
    if sigma.tag.weight != StressWeight::Sigma {
        return Err(Error::Representation("kernel equivalence takes a σ-type stress".into()));
    }
    let repr = sigma.tag.repr;
    let s = sigma.tensor()?;
    let conn = match repr {
        Representation::Spatial => ConnectionContext::spatial_over(&ctx.config)?,
        Representation::Material => ConnectionContext::material(grid, &ctx.config, &ctx.mass.reference)?,
        Representation::Convective => ConnectionContext::convective(grid, &ctx.g_hat)?,
    };
    let star = ctx.star(repr);
    let tau = tau_from_sigma(grid, s, ctx)?;
    let ext = hodge_flat(&tau, &star)?;
    let force = exterior_covariant_derivative(grid, &ext, &conn)?;
    let exterior = hodge_sharp(&force, &star)?;
    let exterior = (0..grid.len()).map(|p| V3::new(exterior.get(p, 0, 0), exterior.get(p, 1, 0), exterior.get(p, 2, 0))).collect();
    let div = divergence(grid, s, &conn, 0)?.as_vectors();
    let rho = ctx.density(repr);
    let classical = div.iter().zip(rho).map(|(d, r)| d / *r).collect();
    Ok(KernelComparison { exterior, classical })
}

/// Max-norm of `‖⋆♯d_∇⋆♭τ − (1/ρ) div σ‖`.
pub fn classical_equivalence_residual(grid: &Grid, sigma: &StressState, ctx: &WebContext) -> Result<f64> {
    Ok(classical_equivalence(grid, sigma, ctx)?.max_residual(grid))
}

/// Max-norm of `∂_t(ĝ·v̂) − [ĝ·∂_tv̂ + ∇̂_{v̂}v̂♭ + ½ d(ĝ(v̂,v̂))]` along a motion.
pub fn convective_momentum_rate_residual(grid: &Grid, curve: &MotionCurve, t: f64, fd_dt: f64) -> Result<f64> {
    let analytic = is_analytic(curve);
    let reference = curve.reference_metric(grid, t)?;
    let state = |s: f64| -> Result<(Vec<M3>, Vec<V3>)> {
        let c = curve.configuration(grid, s, analytic, Some(&reference))?;
        let v = curve.velocity(grid, s)?;
        let (g, _) = c.induced_metrics()?;
        Ok((g.g, v.iter().zip(c.f_inv.iter()).map(|(v, fi)| fi * v).collect()))
    };
    let lowered = time_derivative(curve, t, fd_dt, &|s| {
        let (g, v) = state(s)?;
        Ok(flatten_v(&g.iter().zip(&v).map(|(g, v)| g * v).collect::<Vec<_>>()))
    })?;
    let dv = unflatten_v(&time_derivative(curve, t, fd_dt, &|s| Ok(flatten_v(&state(s)?.1)))?);
    let (g, v) = state(t)?;
    let g_hat = MetricField::new(MetricRole::Convective, Sampling::Body, g.clone())?;
    let ctx = ConnectionContext::convective(grid, &g_hat)?;
    let v_flat: Vec<V3> = g.iter().zip(&v).map(|(g, v)| g * v).collect();
    let nabla = covariant_derivative(grid, &TensorField::covector(grid, Representation::Convective, Base::Body, &v_flat), &ctx)?.as_matrices();
    let kin: Vec<f64> = v.iter().zip(&v_flat).map(|(a, b)| a.dot(b)).collect();
    let dk = Sampling::Body.gradient(grid, &kin, 1);
    let mut worst: f64 = 0.0;
    for p in 0..grid.len() {
        for k in 0..3 {
            let adv: f64 = (0..3).map(|c| v[p][c] * nabla[p][(c, k)]).sum();
            let rhs = (g[p] * dv[p])[k] + adv + 0.5 * dk[k][p];
            worst = worst.max((lowered[3 * p + k] - rhs).abs());
        }
    }
    Ok(worst)
}

/// Smooth interior bump `sin(πξ¹) sin(πξ²) sin(πξ³)` in normalized chart coordinates.
pub fn interior_bump(grid: &Grid, x: [f64; 3]) -> f64 {
    let r = &grid.chart.ranges;
    (0..3).map(|a| (std::f64::consts::PI * (x[a] - r[a][0]) / (r[a][1] - r[a][0])).sin()).product()
}
