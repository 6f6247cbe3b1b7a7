//! Stored-energy models, the Doyle–Ericksen stress, the nine-entry stress web,
//! symmetry and boundary-power diagnostics, and the logarithmic strain.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::calculus::{covariant_derivative, ConnectionContext};
use crate::config::{pull_form_leg, pull_value_leg, push_form_leg, push_value_leg, Configuration};
use crate::error::{Error, Result};
use crate::forms::{hodge_flat, hodge_sharp, integrate_top, wedge_dot, BundleValuedForm, MassForm, Parity, Star, ValueKind};
use crate::geometry::{lie_derivative_metric, min_eigenvalue, MetricField, SPD_THRESHOLD};
use crate::grid::{integrate_boundary, BoundaryForm, Face, Grid};
use crate::masskinetics::{Densities, MassStructure};
use crate::tensor::{complement, Leg, Representation, TensorField, Variance, M3, V3};

/// Stored-energy family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "saint_venant_kirchhoff")]
    Svk,
    #[serde(alias = "neo_hookean_compressible")]
    NeoHookean,
}

/// Isotropic hyperelastic model with Lamé parameters; energies are per unit mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveModel {
    #[serde(rename = "model")]
    pub kind: ModelKind,
    pub lambda: f64,
    pub mu: f64,
}

fn check_spd(node: usize, g: &M3) -> Result<()> {
    let min_eig = min_eigenvalue(g);
    if !(min_eig > SPD_THRESHOLD) {
        return Err(Error::NotSpd { node, min_eig });
    }
    Ok(())
}

impl ConstitutiveModel {
    pub fn new(kind: ModelKind, lambda: f64, mu: f64) -> Result<Self> {
        let m = Self { kind, lambda, mu };
        m.validate()?;
        Ok(m)
    }

    /// `μ > 0` and `3λ + 2μ > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(3.0 * self.lambda + 2.0 * self.mu > 0.0) {
            return Err(Error::Config(format!("invalid Lamé parameters λ = {}, μ = {}", self.lambda, self.mu)));
        }
        Ok(())
    }

    /// Stored energy per reference volume `W(ĝ; G)`; `ê = W / ρ̃`.
    pub fn energy_per_volume(&self, g: &M3, big_g: &M3) -> f64 {
        let gi = big_g.try_inverse().expect("reference metric is SPD");
        match self.kind {
            ModelKind::Svk => {
                let e = 0.5 * (g - big_g);
                let ge = gi * e;
                0.5 * self.lambda * ge.trace().powi(2) + self.mu * (ge * ge).trace()
            }
            ModelKind::NeoHookean => {
                let c = gi * g;
                let ln_det = c.determinant().ln();
                0.5 * self.mu * (c.trace() - 3.0 - ln_det) + 0.5 * self.lambda * (0.5 * ln_det).powi(2)
            }
        }
    }

    /// `∂W/∂ĝ` as a symmetric contravariant matrix; `∂ê/∂ĝ = (∂W/∂ĝ) / ρ̃`.
    pub fn energy_gradient_per_volume(&self, g: &M3, big_g: &M3) -> M3 {
        let gi = big_g.try_inverse().expect("reference metric is SPD");
        let d = match self.kind {
            ModelKind::Svk => {
                let e = 0.5 * (g - big_g);
                0.5 * (self.lambda * (gi * e).trace() * gi + 2.0 * self.mu * gi * e * gi)
            }
            ModelKind::NeoHookean => {
                let ginv = g.try_inverse().expect("metric is SPD");
                let ln_det = (gi * g).determinant().ln();
                0.5 * self.mu * (gi - ginv) + 0.25 * self.lambda * ln_det * ginv
            }
        };
        0.5 * (d + d.transpose())
    }

    /// Specific energy `ê(ĝ)` at one point.
    pub fn energy_density(&self, g: &M3, big_g: &M3, rho_ref: f64) -> Result<f64> {
        check_spd(0, g)?;
        Ok(self.energy_per_volume(g, big_g) / rho_ref)
    }

    /// `∂ê/∂ĝ` at one point.
    pub fn energy_gradient(&self, g: &M3, big_g: &M3, rho_ref: f64) -> Result<M3> {
        check_spd(0, g)?;
        Ok(self.energy_gradient_per_volume(g, big_g) / rho_ref)
    }
}

/// Central finite-difference gradient of `ê` in the independent components `ĝ_{IJ}`, `I ≤ J`.
///
/// Off-diagonal entries perturb `ĝ_{IJ}` and `ĝ_{JI}` together, which measures
/// `2 ∂ê/∂ĝ_{IJ}`; the result is halved there so it compares with the symmetric gradient.
pub fn energy_gradient_fd(model: &ConstitutiveModel, g: &M3, big_g: &M3, rho_ref: f64, step: f64) -> Result<M3> {
    let mut out = M3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut e = M3::zeros();
            e[(i, j)] = step;
            e[(j, i)] = step;
            let d = (model.energy_density(&(g + e), big_g, rho_ref)? - model.energy_density(&(g - e), big_g, rho_ref)?) / (2.0 * step);
            let v = if i == j { d } else { 0.5 * d };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn reference_densities(mass: &MassStructure) -> Result<Vec<f64>> {
    mass.mu_hat
        .density()
        .iter()
        .zip(&mass.reference.g)
        .enumerate()
        .map(|(node, (m, g))| {
            let r = m / g.determinant().sqrt();
            if r > 0.0 {
                Ok(r)
            } else {
                Err(Error::Degenerate { node, value: r })
            }
        })
        .collect()
}

/// Specific energy per node and the energy 3-pseudo-form `𝓔̂ = ê μ̂`.
#[derive(Clone, Debug)]
pub struct StrainEnergy {
    pub specific: Vec<f64>,
    pub form: BundleValuedForm,
}

impl StrainEnergy {
    /// `E_int = ∫ 𝓔̂`.
    pub fn total(&self, grid: &Grid) -> Result<f64> {
        integrate_top(grid, &self.form)
    }
}

pub fn strain_energy(grid: &Grid, model: &ConstitutiveModel, g_hat: &MetricField, mass: &MassStructure) -> Result<StrainEnergy> {
    if g_hat.len() != grid.len() {
        return Err(Error::Shape("metric does not match grid".into()));
    }
    let rho = reference_densities(mass)?;
    let mut specific = Vec::with_capacity(grid.len());
    for (node, g) in g_hat.g.iter().enumerate() {
        check_spd(node, g)?;
        specific.push(model.energy_per_volume(g, &mass.reference.g[node]) / rho[node]);
    }
    let density = specific.iter().zip(mass.mu_hat.density()).map(|(e, m)| e * m).collect();
    let form = MassForm::new(grid, Representation::Convective, None, density)?.0;
    Ok(StrainEnergy { specific, form })
}

/// `∂ê/∂ĝ` per node (symmetric, contravariant).
pub fn energy_metric_gradient(model: &ConstitutiveModel, g_hat: &MetricField, mass: &MassStructure) -> Result<Vec<M3>> {
    let rho = reference_densities(mass)?;
    g_hat
        .g
        .iter()
        .enumerate()
        .map(|(node, g)| {
            check_spd(node, g)?;
            Ok(model.energy_gradient_per_volume(g, &mass.reference.g[node]) / rho[node])
        })
        .collect()
}

/// Weight of a stress-web entry: extensive `𝒯`, bare `τ = ⋆♯𝒯`, or mass-weighted `σ = ρ G⁻¹·τ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StressWeight {
    Extensive,
    Tau,
    Sigma,
}

/// Position in the nine-entry stress web.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WebTag {
    pub repr: Representation,
    pub weight: StressWeight,
}

impl WebTag {
    pub const fn new(repr: Representation, weight: StressWeight) -> Self {
        Self { repr, weight }
    }

    pub fn all() -> Vec<WebTag> {
        let reprs = [Representation::Convective, Representation::Material, Representation::Spatial];
        let weights = [StressWeight::Extensive, StressWeight::Tau, StressWeight::Sigma];
        reprs.iter().flat_map(|&r| weights.iter().map(move |&w| WebTag::new(r, w))).collect()
    }
}

impl fmt::Display for WebTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = match self.weight {
            StressWeight::Extensive => "extensive",
            StressWeight::Tau => "tau",
            StressWeight::Sigma => "sigma",
        };
        let r = match self.repr {
            Representation::Convective => "convective",
            Representation::Material => "material",
            Representation::Spatial => "spatial",
        };
        write!(f, "{}_{}", w, r)
    }
}

impl FromStr for WebTag {
    type Err = Error;

    /// `<extensive|tau|sigma>_<convective|material|spatial>`.
    fn from_str(s: &str) -> Result<Self> {
        WebTag::all().into_iter().find(|t| t.to_string() == s).ok_or_else(|| Error::Config(format!("unknown stress tag '{}'", s)))
    }
}

/// Components of a stress-web entry.
#[derive(Clone, Debug)]
pub enum StressPayload {
    /// `𝒯` (covector-valued 2-pseudo-form) or `τ` (vector-valued 1-form).
    Form(BundleValuedForm),
    /// `σ` with legs `[form index raised, value index]`.
    Tensor(TensorField),
}

#[derive(Clone, Debug)]
pub struct StressState {
    pub tag: WebTag,
    pub payload: StressPayload,
}

impl StressState {
    pub fn new(tag: WebTag, payload: StressPayload) -> Result<Self> {
        let bad = |m: &str| Err(Error::Representation(format!("{} payload: {}", tag, m)));
        match (&payload, tag.weight) {
            (StressPayload::Form(f), StressWeight::Extensive) => {
                if f.degree != 2 || f.value != ValueKind::Covector || f.parity != Parity::Pseudo {
                    return bad("expected a covector-valued 2-pseudo-form");
                }
                if f.repr != tag.repr {
                    return bad("representation mismatch");
                }
            }
            (StressPayload::Form(f), StressWeight::Tau) => {
                if f.degree != 1 || f.value != ValueKind::Vector {
                    return bad("expected a vector-valued 1-form");
                }
                if f.repr != tag.repr {
                    return bad("representation mismatch");
                }
            }
            (StressPayload::Tensor(t), StressWeight::Sigma) => {
                let want = [Leg::up(tag.repr.form_base()), Leg::up(tag.repr.value_base())];
                if t.legs != want || t.repr != tag.repr {
                    return bad("expected a (2,0) tensor with legs [form, value]");
                }
            }
            _ => return bad("payload kind does not match the weight"),
        }
        Ok(Self { tag, payload })
    }

    pub fn form(&self) -> Result<&BundleValuedForm> {
        match &self.payload {
            StressPayload::Form(f) => Ok(f),
            _ => Err(Error::Representation(format!("{} is not a form", self.tag))),
        }
    }

    pub fn tensor(&self) -> Result<&TensorField> {
        match &self.payload {
            StressPayload::Tensor(t) => Ok(t),
            _ => Err(Error::Representation(format!("{} is not a tensor", self.tag))),
        }
    }

    /// Max component difference between two states with the same tag.
    pub fn max_diff(&self, other: &StressState) -> Result<f64> {
        if self.tag != other.tag {
            return Err(Error::Representation(format!("{} vs {}", self.tag, other.tag)));
        }
        Ok(match (&self.payload, &other.payload) {
            (StressPayload::Form(a), StressPayload::Form(b)) => a.max_diff(b),
            (StressPayload::Tensor(a), StressPayload::Tensor(b)) => a.max_diff(b),
            _ => unreachable!("validated payloads"),
        })
    }

    pub fn max_abs(&self) -> f64 {
        match &self.payload {
            StressPayload::Form(f) => f.max_abs(),
            StressPayload::Tensor(t) => t.data.max_abs(),
        }
    }
}

/// Everything the stress web needs at one configuration: `F`, metrics, mass forms, densities.
#[derive(Clone, Debug)]
pub struct WebContext {
    pub config: Arc<Configuration>,
    pub mass: MassStructure,
    pub g_hat: MetricField,
    pub g_tilde: MetricField,
    pub g_spatial: MetricField,
    pub mu_spatial: MassForm,
    pub mu_material: MassForm,
    pub rho: Densities,
}

impl WebContext {
    pub fn new(grid: &Grid, config: Arc<Configuration>, mass: MassStructure) -> Result<Self> {
        if config.len() != grid.len() || mass.mu_hat.density().len() != grid.len() {
            return Err(Error::Shape("context does not match grid".into()));
        }
        let (g_hat, g_tilde) = config.induced_metrics()?;
        let g_spatial = config.spatial_metric()?;
        let mu_spatial = mass.spatial(grid, &config)?;
        let mu_material = mass.material(grid, &config)?;
        let rho = mass.densities(grid, &config)?;
        Ok(Self { config, mass, g_hat, g_tilde, g_spatial, mu_spatial, mu_material, rho })
    }

    /// Metric on the value leg.
    pub fn value_metric(&self, repr: Representation) -> &MetricField {
        match repr {
            Representation::Spatial => &self.g_spatial,
            Representation::Material => &self.g_tilde,
            Representation::Convective => &self.g_hat,
        }
    }

    /// Metric on the form legs.
    pub fn form_metric(&self, repr: Representation) -> &MetricField {
        match repr {
            Representation::Spatial => &self.g_spatial,
            Representation::Material => &self.mass.reference,
            Representation::Convective => &self.g_hat,
        }
    }

    pub fn mass_form(&self, repr: Representation) -> &MassForm {
        match repr {
            Representation::Spatial => &self.mu_spatial,
            Representation::Material => &self.mu_material,
            Representation::Convective => &self.mass.mu_hat,
        }
    }

    pub fn density(&self, repr: Representation) -> &[f64] {
        match repr {
            Representation::Spatial => &self.rho.spatial,
            Representation::Material => &self.rho.material,
            Representation::Convective => &self.rho.convective,
        }
    }

    pub fn star(&self, repr: Representation) -> Star<'_> {
        Star { repr, value_metric: self.value_metric(repr), form_metric: self.form_metric(repr), mu: self.mass_form(repr) }
    }

    /// Map a form of representation `repr` is sampled over.
    pub fn over_map(&self, repr: Representation) -> Option<Arc<Configuration>> {
        match repr {
            Representation::Convective => None,
            _ => Some(self.config.clone()),
        }
    }
}

/// `σ^{Ij} = ρ G_f^{IK} τ^j_K` with `G_f` the form-leg metric.
pub fn sigma_from_tau(grid: &Grid, tau: &BundleValuedForm, ctx: &WebContext) -> Result<TensorField> {
    let repr = tau.repr;
    let gf = ctx.form_metric(repr);
    let rho = ctx.density(repr);
    let m: Vec<M3> = (0..grid.len()).map(|n| rho[n] * gf.inv[n] * M3::from_fn(|k, j| tau.get(n, j, k))).collect();
    Ok(TensorField::matrix(grid, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, &m))
}

/// Inverse of [`sigma_from_tau`].
pub fn tau_from_sigma(grid: &Grid, sigma: &TensorField, ctx: &WebContext) -> Result<BundleValuedForm> {
    let repr = sigma.repr;
    let gf = ctx.form_metric(repr);
    let rho = ctx.density(repr);
    let mut tau = BundleValuedForm::zeros(grid, 1, ValueKind::Vector, repr, Parity::True, ctx.over_map(repr))?;
    for (n, s) in sigma.as_matrices().iter().enumerate() {
        if !(rho[n] > 0.0) {
            return Err(Error::Degenerate { node: n, value: rho[n] });
        }
        let t = gf.g[n] * s / rho[n];
        for k in 0..3 {
            for j in 0..3 {
                tau.set(n, j, k, t[(k, j)]);
            }
        }
    }
    Ok(tau)
}

fn to_extensive(grid: &Grid, s: &StressState, ctx: &WebContext) -> Result<BundleValuedForm> {
    match s.tag.weight {
        StressWeight::Extensive => Ok(s.form()?.clone()),
        StressWeight::Tau => hodge_flat(s.form()?, &ctx.star(s.tag.repr)),
        StressWeight::Sigma => hodge_flat(&tau_from_sigma(grid, s.tensor()?, ctx)?, &ctx.star(s.tag.repr)),
    }
}

fn move_extensive(t: &BundleValuedForm, to: Representation, ctx: &WebContext) -> Result<BundleValuedForm> {
    use Representation::*;
    let c = &ctx.config;
    match (t.repr, to) {
        (a, b) if a == b => Ok(t.clone()),
        (Spatial, Material) => pull_form_leg(t, c),
        (Material, Convective) => pull_value_leg(t),
        (Spatial, Convective) => pull_value_leg(&pull_form_leg(t, c)?),
        (Convective, Material) => push_value_leg(t, c),
        (Material, Spatial) => push_form_leg(t),
        (Convective, Spatial) => push_form_leg(&push_value_leg(t, c)?),
        _ => unreachable!(),
    }
}

/// Convert between any two web entries: lift to `𝒯`, move by per-leg pullbacks or
/// pushforwards, then descend with `⋆♯` and the mass density.
pub fn stress_web_convert(grid: &Grid, s: &StressState, target: WebTag, ctx: &WebContext) -> Result<StressState> {
    let ext = move_extensive(&to_extensive(grid, s, ctx)?, target.repr, ctx)?;
    let payload = match target.weight {
        StressWeight::Extensive => StressPayload::Form(ext),
        StressWeight::Tau => StressPayload::Form(hodge_sharp(&ext, &ctx.star(target.repr))?),
        StressWeight::Sigma => StressPayload::Tensor(sigma_from_tau(grid, &hodge_sharp(&ext, &ctx.star(target.repr))?, ctx)?),
    };
    StressState::new(target, payload)
}

/// Doyle–Ericksen stress: `σ̂ = 2ρ̂ ∂ê/∂ĝ`, assembled into `𝒯̂_{K,AB} = ĝ_{KM} σ̂^{JM} ω̂_{JAB}`.
pub fn rougee_stress(grid: &Grid, model: &ConstitutiveModel, g_hat: &MetricField, mass: &MassStructure) -> Result<StressState> {
    let de = energy_metric_gradient(model, g_hat, mass)?;
    let mut t = BundleValuedForm::zeros(grid, 2, ValueKind::Covector, Representation::Convective, Parity::Pseudo, None)?;
    for node in 0..grid.len() {
        let g = &g_hat.g[node];
        let vol = g.determinant().sqrt();
        let rho_hat = mass.mu_hat.density()[node] / vol;
        let sigma = 2.0 * rho_hat * de[node];
        let lowered = g * sigma.transpose(); // (K, J) = ĝ_{KM} σ̂^{JM}
        for j in 0..3 {
            let (sign, b) = complement(1, j);
            for k in 0..3 {
                t.set(node, k, b, sign * lowered[(k, j)] * vol);
            }
        }
    }
    StressState::new(WebTag::new(Representation::Convective, StressWeight::Extensive), StressPayload::Form(t))
}

/// Largest antisymmetric part `(α♯⊗β)∧̇𝒯 − (β♯⊗α)∧̇𝒯` over coordinate basis covectors.
pub fn symmetry_residual(grid: &Grid, s: &StressState, ctx: &WebContext) -> Result<f64> {
    if s.tag.repr == Representation::Material {
        return Err(Error::Unsupported("stress symmetry is undefined for two-point (material) stresses".into()));
    }
    let t = to_extensive(grid, s, ctx)?;
    let ginv = &ctx.value_metric(s.tag.repr).inv;
    let basis = |p: usize, q: usize| {
        let mut f = t.zeros_like(1, ValueKind::Vector, Parity::True);
        for n in 0..grid.len() {
            for k in 0..3 {
                f.set(n, k, q, ginv[n][(p, k)]);
            }
        }
        f
    };
    let mut worst: f64 = 0.0;
    for p in 0..3 {
        for q in p + 1..3 {
            let a = wedge_dot(&basis(p, q), &t)?;
            let b = wedge_dot(&basis(q, p), &t)?;
            worst = worst.max(a.max_diff(&b));
        }
    }
    Ok(worst)
}

/// `P_st = ∮ i*v ∧̇ i*𝒯` for an extensive stress and a velocity (vector 0-form) of the same representation.
pub fn boundary_traction_power(grid: &Grid, s: &StressState, v: &BundleValuedForm) -> Result<f64> {
    if s.tag.weight != StressWeight::Extensive {
        return Err(Error::Representation("boundary power needs the extensive stress".into()));
    }
    if v.degree != 0 || v.value != ValueKind::Vector {
        return Err(Error::Shape("velocity must be a vector-valued 0-form".into()));
    }
    let mut w = wedge_dot(v, s.form()?)?;
    if let (Representation::Spatial, Some(c)) = (w.repr, w.over_map.clone()) {
        w = pull_form_leg(&w, &c)?;
    }
    integrate_boundary(grid, &BoundaryForm::restrict(grid, &w.comps.values)?)
}

/// Classical traction power `∮ σ̃^{Ij} g̃_{jk} ṽ^k N_I dA_G` from the first Piola–Kirchhoff stress.
pub fn classical_traction_power(grid: &Grid, piola: &StressState, v_material: &[V3], ctx: &WebContext) -> Result<f64> {
    if piola.tag != WebTag::new(Representation::Material, StressWeight::Sigma) {
        return Err(Error::Representation("classical traction power needs the material σ̃".into()));
    }
    let p = piola.tensor()?.as_matrices();
    let mut total = 0.0;
    for face in Face::ALL {
        let a = face.axis;
        for (&n, w) in grid.face_nodes(face).iter().zip(grid.face_weights(face)) {
            let traction = p[n].row(a) * ctx.g_tilde.g[n] * v_material[n];
            total += face.outward() * w * traction[0] * ctx.mass.reference.g[n].determinant().sqrt();
        }
    }
    Ok(total)
}

/// Pointwise logarithmic strain `δ̂ = ½ ĝ₁ log(ĝ₁⁻¹ ĝ₂) = ½ ĝ₁^{½} log(ĝ₁^{-½} ĝ₂ ĝ₁^{-½}) ĝ₁^{½}`.
pub fn log_strain_point(g1: &M3, g2: &M3) -> M3 {
    let e = SymmetricEigen::new(*g1);
    let sqrt = e.eigenvectors * M3::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose();
    let isqrt = e.eigenvectors * M3::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt())) * e.eigenvectors.transpose();
    let l = isqrt * g2 * isqrt;
    let l = 0.5 * (l + l.transpose());
    let el = SymmetricEigen::new(l);
    let log_l = el.eigenvectors * M3::from_diagonal(&el.eigenvalues.map(f64::ln)) * el.eigenvectors.transpose();
    0.5 * sqrt * log_l * sqrt
}

/// Symmetric `(0,2)` logarithmic strain field.
#[derive(Clone, Debug)]
pub struct LogStrain {
    pub delta_hat: Vec<M3>,
}

pub fn log_strain(g1: &MetricField, g2: &MetricField) -> Result<LogStrain> {
    if g1.len() != g2.len() {
        return Err(Error::Shape("metrics differ in size".into()));
    }
    for (node, (a, b)) in g1.g.iter().zip(&g2.g).enumerate() {
        check_spd(node, a)?;
        check_spd(node, b)?;
    }
    Ok(LogStrain { delta_hat: g1.g.iter().zip(&g2.g).map(|(a, b)| log_strain_point(a, b)).collect() })
}

/// View a `[down, up]` rank-2 field as a vector-valued 1-form (first leg = form index).
pub fn vector_one_form(grid: &Grid, t: &TensorField, over_map: Option<Arc<Configuration>>) -> Result<BundleValuedForm> {
    if t.rank() != 2 || t.legs[0].var != Variance::Down || t.legs[1].var != Variance::Up {
        return Err(Error::Shape("expected legs [covariant form index, vector value]".into()));
    }
    let mut f = BundleValuedForm::zeros(grid, 1, ValueKind::Vector, t.repr, Parity::True, over_map)?;
    for (n, m) in t.as_matrices().iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                f.set(n, j, i, m[(i, j)]);
            }
        }
    }
    Ok(f)
}

/// `(∫∇̂v̂ ∧̇ 𝒯̂, ∫ε̂ ∧̇ 𝒯̂)` with `ε̂ = ½ (L_{v̂}ĝ)♯` (value leg raised).
pub fn stress_power_pairings(grid: &Grid, v_hat: &TensorField, g_hat: &MetricField, t_hat: &StressState) -> Result<(f64, f64)> {
    if t_hat.tag != WebTag::new(Representation::Convective, StressWeight::Extensive) {
        return Err(Error::Representation("stress power pairing needs the convective 𝒯̂".into()));
    }
    let ctx = ConnectionContext::convective(grid, g_hat)?;
    let grad = vector_one_form(grid, &covariant_derivative(grid, v_hat, &ctx)?, None)?;
    let lie = lie_derivative_metric(grid, v_hat, g_hat)?.as_matrices();
    let rate: Vec<M3> = lie.iter().zip(&g_hat.inv).map(|(l, gi)| 0.5 * l * gi).collect();
    let strain_rate = vector_one_form(
        grid,
        &TensorField::matrix(grid, [Leg::down(crate::tensor::Base::Body), Leg::up(crate::tensor::Base::Body)], Representation::Convective, &rate),
        None,
    )?;
    let t = t_hat.form()?;
    Ok((integrate_top(grid, &wedge_dot(&grad, t)?)?, integrate_top(grid, &wedge_dot(&strain_rate, t)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Motion, MotionCurve};
    use crate::geometry::MetricRole;
    use crate::grid::{Chart, CoordSystem};
    use crate::tensor::{Base, Sampling};

    fn cube(n: usize) -> Grid {
        Grid::cube(Chart::unit_cube(), n).unwrap()
    }

    fn unit_mass(g: &Grid) -> MassStructure {
        MassStructure::uniform(g, MetricField::identity(g, MetricRole::Reference), 1.0).unwrap()
    }

    fn metric(g: &Grid, m: M3) -> MetricField {
        MetricField::new(MetricRole::Convective, Sampling::Body, vec![m; g.len()]).unwrap()
    }

    const SVK: ConstitutiveModel = ConstitutiveModel { kind: ModelKind::Svk, lambda: 1.3, mu: 0.7 };
    const NH: ConstitutiveModel = ConstitutiveModel { kind: ModelKind::NeoHookean, lambda: 1.3, mu: 0.7 };

    #[test]
    fn model_validation_and_json() {
        assert!(ConstitutiveModel::new(ModelKind::Svk, 1.0, 0.0).is_err());
        assert!(ConstitutiveModel::new(ModelKind::Svk, -1.0, 1.0).is_err());
        let m: ConstitutiveModel = serde_json::from_str(r#"{"model":"neo_hookean","lambda":2,"mu":1}"#).unwrap();
        assert_eq!(m.kind, ModelKind::NeoHookean);
        let m: ConstitutiveModel = serde_json::from_str(r#"{"model":"saint_venant_kirchhoff","lambda":2,"mu":1}"#).unwrap();
        assert_eq!(m.kind, ModelKind::Svk);
    }

    #[test]
    fn reference_state_is_stress_free() {
        let g = cube(5);
        let mass = unit_mass(&g);
        for m in [SVK, NH] {
            let e = strain_energy(&g, &m, &mass.reference, &mass).unwrap();
            assert!(e.specific.iter().all(|x| x.abs() < 1e-15));
            assert!(energy_metric_gradient(&m, &mass.reference, &mass).unwrap().iter().all(|d| d.abs().max() < 1e-15));
            let t = rougee_stress(&g, &m, &mass.reference, &mass).unwrap();
            assert_eq!(t.max_abs(), 0.0);
        }
    }

    #[test]
    fn svk_isotropic_stretch() {
        let g = cube(5);
        let mass = unit_mass(&g);
        let eps = 1e-3;
        let gh = metric(&g, (1.0 + 2.0 * eps) * M3::identity());
        let e = strain_energy(&g, &SVK, &gh, &mass).unwrap();
        let want = (4.5 * SVK.lambda + 3.0 * SVK.mu) * eps * eps;
        assert!((e.specific[0] - want).abs() < 1e-15);
        // Doyle–Ericksen: σ̂ = ρ̂ (3λ + 2μ) ε G⁻¹ with ρ̂ = (1+2ε)^{-3/2}.
        let d = energy_metric_gradient(&SVK, &gh, &mass).unwrap()[0];
        let rho_hat = (1.0 + 2.0 * eps).powf(-1.5);
        let sigma = 2.0 * rho_hat * d;
        assert!((sigma - rho_hat * (3.0 * SVK.lambda + 2.0 * SVK.mu) * eps * M3::identity()).abs().max() < 1e-15);
        let fd = energy_gradient_fd(&SVK, &gh.g[0], &M3::identity(), 1.0, 1e-5).unwrap();
        assert!((fd - d).abs().max() / d.abs().max() < 1e-6);
    }

    #[test]
    fn gradient_is_symmetric_and_matches_differences() {
        let gm = M3::new(1.2, 0.1, -0.05, 0.1, 0.9, 0.2, -0.05, 0.2, 1.1);
        let big_g = M3::new(1.0, 0.05, 0.0, 0.05, 1.1, 0.0, 0.0, 0.0, 0.95);
        for m in [SVK, NH] {
            let d = m.energy_gradient(&gm, &big_g, 1.3).unwrap();
            assert_eq!(d, d.transpose());
            let fd = energy_gradient_fd(&m, &gm, &big_g, 1.3, 1e-5).unwrap();
            assert!((fd - d).abs().max() / d.abs().max() < 1e-6);
        }
    }

    #[test]
    fn non_spd_metric_is_rejected() {
        assert!(matches!(SVK.energy_density(&M3::from_diagonal(&V3::new(1.0, -1.0, 1.0)), &M3::identity(), 1.0), Err(Error::NotSpd { .. })));
    }

    fn ctx_for(g: &Grid, m: Motion, t: f64) -> WebContext {
        let c = Arc::new(MotionCurve::analytic(m, CoordSystem::Cartesian).configuration(g, t, true, None).unwrap());
        WebContext::new(g, c, unit_mass(g)).unwrap()
    }

    fn sigma_state(g: &Grid, repr: Representation, m: &[M3]) -> StressState {
        let t = TensorField::matrix(g, [Leg::up(repr.form_base()), Leg::up(repr.value_base())], repr, m);
        StressState::new(WebTag::new(repr, StressWeight::Sigma), StressPayload::Tensor(t)).unwrap()
    }

    #[test]
    fn identity_context_aligns_all_entries() {
        let g = cube(5);
        let ctx = ctx_for(&g, Motion::Static, 0.0);
        let s = M3::new(1.0, 0.2, 0.3, 0.2, -0.5, 0.1, 0.3, 0.1, 2.0);
        let start = sigma_state(&g, Representation::Spatial, &vec![s; g.len()]);
        for tag in WebTag::all() {
            let out = stress_web_convert(&g, &start, tag, &ctx).unwrap();
            let comps: Vec<f64> = match &out.payload {
                StressPayload::Tensor(t) => t.data.node(0).to_vec(),
                StressPayload::Form(f) if f.degree == 1 => (0..9).map(|p| f.get(0, p % 3, p / 3)).collect(),
                StressPayload::Form(f) => (0..9).map(|p| {
                    let (sign, b) = complement(1, p / 3);
                    sign * f.get(0, p % 3, b)
                }).collect(),
            };
            let want: Vec<f64> = (0..9).map(|p| s[(p / 3, p % 3)]).collect();
            assert!(comps.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), "{}: {:?}", tag, comps);
        }
    }

    #[test]
    fn piola_on_dilation() {
        let g = cube(5);
        let ctx = ctx_for(&g, Motion::Dilation { rate: 1.0 }, 1.0);
        let start = sigma_state(&g, Representation::Spatial, &vec![M3::identity(); g.len()]);
        let p = stress_web_convert(&g, &start, WebTag::new(Representation::Material, StressWeight::Sigma), &ctx).unwrap();
        assert!(p.tensor().unwrap().as_matrices().iter().all(|m| (m - 4.0 * M3::identity()).abs().max() < 1e-12));
    }

    #[test]
    fn web_formulas_for_analytic_f() {
        let g = cube(5);
        let ctx = ctx_for(&g, Motion::Bump { amplitude: 0.1, omega: 1.0 }, 0.8);
        let s = M3::new(1.0, 0.4, -0.3, 0.4, 0.5, 0.1, -0.3, 0.1, 2.0);
        let start = sigma_state(&g, Representation::Spatial, &vec![s; g.len()]);
        let conv = |tag| stress_web_convert(&g, &start, tag, &ctx).unwrap();
        let piola = conv(WebTag::new(Representation::Material, StressWeight::Sigma)).tensor().unwrap().as_matrices();
        let sig_hat = conv(WebTag::new(Representation::Convective, StressWeight::Sigma)).tensor().unwrap().as_matrices();
        let tau = tau_from_sigma(&g, start.tensor().unwrap(), &ctx).unwrap();
        let tau_hat = conv(WebTag::new(Representation::Convective, StressWeight::Tau));
        let tau_hat = tau_hat.form().unwrap();
        for n in 0..g.len() {
            let (f, fi, j) = (ctx.config.f[n], ctx.config.f_inv[n], ctx.config.j[n]);
            assert!((piola[n] - j * fi * s).abs().max() < 1e-12);
            let d = (sig_hat[n] - fi * s * fi.transpose()).abs().max(); assert!(d < 1e-12, "{} {} {}", n, d, j);
            assert!((sig_hat[n] - piola[n] * fi.transpose() / j).abs().max() < 1e-12);
            // τ̂^J_I = F^i_I (F⁻¹)^J_j τ^j_i, stored as [value J][form I].
            let t = M3::from_fn(|i, jv| tau.get(n, jv, i));
            let th = M3::from_fn(|i, jv| tau_hat.get(n, jv, i));
            assert!((th - f.transpose() * t * fi.transpose()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn web_roundtrips_close() {
        let g = cube(5);
        let ctx = ctx_for(&g, Motion::Shear { rate: 0.5 }, 1.0);
        let s: Vec<M3> = g.nodes().iter().map(|x| M3::new(x[0], 0.1, x[2], 0.3, 1.0, x[1], -0.2, 0.5, x[0] * x[1])).collect();
        let start = sigma_state(&g, Representation::Spatial, &s);
        let mut cur = start.clone();
        for tag in ["tau_material", "extensive_convective", "sigma_material", "tau_convective", "extensive_spatial", "sigma_spatial"] {
            cur = stress_web_convert(&g, &cur, tag.parse().unwrap(), &ctx).unwrap();
        }
        assert!(cur.max_diff(&start).unwrap() < 1e-12);
        assert!("bogus_tag".parse::<WebTag>().is_err());
    }

    #[test]
    fn symmetry_residual_examples() {
        let g = cube(5);
        let mass = unit_mass(&g);
        let ctx = ctx_for(&g, Motion::Static, 0.0);
        let gh = metric(&g, M3::new(1.1, 0.1, 0.0, 0.1, 0.95, 0.05, 0.0, 0.05, 1.05));
        let t = rougee_stress(&g, &NH, &gh, &mass).unwrap();
        let ctx_g = WebContext { g_hat: gh.clone(), ..ctx.clone() };
        assert!(symmetry_residual(&g, &t, &ctx_g).unwrap() < 1e-12);
        let mut e = M3::zeros();
        e[(0, 1)] = 1.0;
        let skew = sigma_state(&g, Representation::Spatial, &vec![e; g.len()]);
        assert!((symmetry_residual(&g, &skew, &ctx).unwrap() - 1.0).abs() < 1e-14);
        let mat = sigma_state(&g, Representation::Material, &vec![e; g.len()]);
        assert!(matches!(symmetry_residual(&g, &mat, &ctx), Err(Error::Unsupported(_))));
    }

    #[test]
    fn boundary_power_examples() {
        let g = cube(5);
        let ctx = ctx_for(&g, Motion::Static, 0.0);
        let vel = |b: [f64; 3]| {
            BundleValuedForm::from_fn(&g, 0, ValueKind::Vector, Representation::Spatial, Parity::True, Some(ctx.config.clone()), |_, _, o| o.copy_from_slice(&b)).unwrap()
        };
        let p = sigma_state(&g, Representation::Spatial, &vec![2.5 * M3::identity(); g.len()]);
        let t = stress_web_convert(&g, &p, WebTag::new(Representation::Spatial, StressWeight::Extensive), &ctx).unwrap();
        assert!(boundary_traction_power(&g, &t, &vel([0.3, -1.0, 0.7])).unwrap().abs() < 1e-14);
        assert_eq!(boundary_traction_power(&g, &t, &vel([0.0; 3])).unwrap(), 0.0);
        let zero = sigma_state(&g, Representation::Spatial, &vec![M3::zeros(); g.len()]);
        let tz = stress_web_convert(&g, &zero, WebTag::new(Representation::Spatial, StressWeight::Extensive), &ctx).unwrap();
        assert_eq!(boundary_traction_power(&g, &tz, &vel([1.0, 2.0, 3.0])).unwrap(), 0.0);
    }

    #[test]
    fn traction_power_matches_classical_form() {
        let g = cube(7);
        let ctx = ctx_for(&g, Motion::Bump { amplitude: 0.1, omega: 1.0 }, 0.6);
        let s: Vec<M3> = g.nodes().iter().map(|x| M3::new(1.0 + x[0], x[1], 0.2, x[1], 0.5, x[2], 0.2, x[2], 2.0 - x[0])).collect();
        let start = sigma_state(&g, Representation::Spatial, &s);
        let v: Vec<V3> = g.nodes().iter().map(|x| V3::new(x[1], -x[0], x[2] * x[2])).collect();
        let vs = BundleValuedForm::from_fn(&g, 0, ValueKind::Vector, Representation::Spatial, Parity::True, Some(ctx.config.clone()), |n, _, o| {
            o.copy_from_slice(v[n].as_slice())
        })
        .unwrap();
        let t = stress_web_convert(&g, &start, WebTag::new(Representation::Spatial, StressWeight::Extensive), &ctx).unwrap();
        let form = boundary_traction_power(&g, &t, &vs).unwrap();
        let piola = stress_web_convert(&g, &start, WebTag::new(Representation::Material, StressWeight::Sigma), &ctx).unwrap();
        let classical = classical_traction_power(&g, &piola, &v, &ctx).unwrap();
        assert!((form - classical).abs() < 1e-12 * classical.abs().max(1.0), "{} {}", form, classical);
    }

    #[test]
    fn log_strain_examples() {
        let g = cube(5);
        let g1 = metric(&g, M3::new(1.2, 0.1, 0.0, 0.1, 0.9, 0.2, 0.0, 0.2, 1.1));
        assert!(log_strain(&g1, &g1).unwrap().delta_hat.iter().all(|d| d.abs().max() < 1e-14));
        let s: f64 = 0.3;
        let g2 = metric(&g, (2.0 * s).exp() * g1.g[0]);
        assert!(log_strain(&g1, &g2).unwrap().delta_hat.iter().all(|d| (d - s * g1.g[0]).abs().max() < 1e-13));
        // Geodesic ĝ(u) = ĝ₁ exp(u ĝ₁⁻¹A); matrix exponential as the oracle.
        let a = M3::new(0.2, -0.1, 0.05, -0.1, 0.3, 0.0, 0.05, 0.0, -0.15);
        let end = g1.g[0] * (g1.inv[0] * a).exp();
        let end = 0.5 * (end + end.transpose());
        assert!((log_strain_point(&g1.g[0], &end) - 0.5 * a).abs().max() < 1e-12);
    }

    #[test]
    fn stress_power_only_sees_the_symmetric_part() {
        let g = cube(9);
        let mass = unit_mass(&g);
        let gh = metric(&g, M3::new(1.1, 0.1, 0.0, 0.1, 0.95, 0.05, 0.0, 0.05, 1.05));
        let t = rougee_stress(&g, &SVK, &gh, &mass).unwrap();
        let v = TensorField::vector(&g, Representation::Convective, Base::Body, &g.nodes().iter().map(|x| V3::new(x[1].sin(), x[0] * x[2], (x[0] + x[1]).cos())).collect::<Vec<_>>());
        let (a, b) = stress_power_pairings(&g, &v, &gh, &t).unwrap();
        assert!((a - b).abs() < 1e-12, "{} {}", a, b);
    }
}
