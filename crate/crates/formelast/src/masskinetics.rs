//! Mass forms and densities in the three representations, conservation and
//! incompressibility diagnostics, momentum, and kinetic energy.

use std::sync::Arc;

use crate::calculus::{divergence, is_analytic, lie_derivative_form, time_derivative, ConnectionContext};
use crate::config::{Configuration, MotionCurve};
use crate::error::{Error, Result};
use crate::forms::{duality_pairing, hodge_flat, hodge_sharp, BundleValuedForm, MassForm, Star};
use crate::geometry::{MetricField, VolumePseudoForm};
use crate::grid::Grid;
use crate::tensor::{Base, Representation, TensorField};

/// Momentum: a covector-valued 3-pseudo-form (`ℳ`, `ℳ̃`, or `ℳ̂`).
pub type Momentum = BundleValuedForm;

/// The primitive mass form `μ̂` on the body together with the reference metric `G`.
#[derive(Clone, Debug)]
pub struct MassStructure {
    /// `μ̂ = μ̃`, time independent.
    pub mu_hat: MassForm,
    pub reference: MetricField,
}

impl MassStructure {
    /// `μ̂ = ρ̃ ω_G` from a material density per node.
    pub fn new(grid: &Grid, reference: MetricField, rho_material: &[f64]) -> Result<Self> {
        if rho_material.len() != grid.len() || reference.len() != grid.len() {
            return Err(Error::Shape("density and reference metric must match the grid".into()));
        }
        if let Some((node, &value)) = rho_material.iter().enumerate().find(|(_, r)| !(**r >= 0.0)) {
            return Err(Error::Degenerate { node, value });
        }
        let density = rho_material.iter().zip(&reference.g).map(|(r, g)| r * g.determinant().sqrt()).collect();
        Ok(Self { mu_hat: MassForm::new(grid, Representation::Convective, None, density)?, reference })
    }

    pub fn uniform(grid: &Grid, reference: MetricField, rho: f64) -> Result<Self> {
        Self::new(grid, reference, &vec![rho; grid.len()])
    }

    /// `μ̃`: the same components, viewed over a configuration.
    pub fn material(&self, grid: &Grid, c: &Arc<Configuration>) -> Result<MassForm> {
        MassForm::new(grid, Representation::Material, Some(c.clone()), self.mu_hat.density().to_vec())
    }

    /// `μ_t = φ_*μ̂` in pulled-back sampling.
    pub fn spatial(&self, grid: &Grid, c: &Arc<Configuration>) -> Result<MassForm> {
        spatial_mass_form(grid, &self.mu_hat, c)
    }

    /// `(ρ∘φ, ρ̂, ρ̃)` at a configuration.
    pub fn densities(&self, grid: &Grid, c: &Arc<Configuration>) -> Result<Densities> {
        let (g_hat, _) = c.induced_metrics()?;
        let spatial_metric = c.spatial_metric()?;
        let mu = self.spatial(grid, c)?;
        let vol = |m: &MetricField| VolumePseudoForm { density: crate::geometry::volume_form(m, grid).density };
        Ok(Densities {
            spatial: density_from_form(&mu, &vol(&spatial_metric))?,
            convective: density_from_form(&self.mu_hat, &vol(&g_hat))?,
            material: density_from_form(&self.mu_hat, &vol(&self.reference))?,
        })
    }
}

/// Mass densities per node in the three representations.
#[derive(Clone, Debug)]
pub struct Densities {
    /// `ρ_t∘φ_t`.
    pub spatial: Vec<f64>,
    pub convective: Vec<f64>,
    pub material: Vec<f64>,
}

/// `μ_t = φ_*μ̂`: chart density divided by `det F`, sampled over `φ`.
pub fn spatial_mass_form(grid: &Grid, mu_hat: &MassForm, c: &Arc<Configuration>) -> Result<MassForm> {
    if mu_hat.0.repr != Representation::Convective {
        return Err(Error::Representation("spatial_mass_form pushes forward a body mass form".into()));
    }
    let density = mu_hat.density().iter().zip(&c.f).map(|(m, f)| m / f.determinant()).collect();
    MassForm::new(grid, Representation::Spatial, Some(c.clone()), density)
}

/// Pointwise `m / ω`.
pub fn density_from_form(m: &MassForm, omega: &VolumePseudoForm) -> Result<Vec<f64>> {
    if omega.density.values.len() != m.density().len() {
        return Err(Error::Shape("mass and volume forms differ in size".into()));
    }
    m.density()
        .iter()
        .zip(&omega.density.values)
        .enumerate()
        .map(|(node, (a, w))| if *w > 0.0 { Ok(a / w) } else { Err(Error::Degenerate { node, value: *w }) })
        .collect()
}

fn config_at(grid: &Grid, curve: &MotionCurve, t: f64, reference: &MetricField) -> Result<Arc<Configuration>> {
    Ok(Arc::new(curve.configuration(grid, t, is_analytic(curve), Some(reference))?))
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Max-norm of the mass conservation law of the given representation at time `t`.
///
/// Convective: `∂_tρ̂ + ρ̂ div̂ v̂`; spatial: the larger of `∂_tμ + L_vμ` and
/// `∂_tρ + L_vρ + ρ div v`; material: `∂_tμ̃`. Time derivatives use the snapshot
/// spacing, or step `fd_dt` for analytic motions.
pub fn mass_conservation_residual(
    grid: &Grid,
    curve: &MotionCurve,
    mass: &MassStructure,
    t: f64,
    repr: Representation,
    fd_dt: f64,
) -> Result<f64> {
    let c = config_at(grid, curve, t, &mass.reference)?;
    let v = curve.velocity(grid, t)?;
    match repr {
        Representation::Material => {
            let rate = time_derivative(curve, t, fd_dt, &|s| Ok(mass.material(grid, &config_at(grid, curve, s, &mass.reference)?)?.density().to_vec()))?;
            Ok(max_abs(rate))
        }
        Representation::Convective => {
            let rho_hat = |s: f64| -> Result<Vec<f64>> { Ok(mass.densities(grid, &config_at(grid, curve, s, &mass.reference)?)?.convective) };
            let rate = time_derivative(curve, t, fd_dt, &rho_hat)?;
            let (g_hat, _) = c.induced_metrics()?;
            let ctx = ConnectionContext::convective(grid, &g_hat)?;
            let vh: Vec<_> = v.iter().zip(c.f_inv.iter()).map(|(x, fi)| fi * x).collect();
            let div = divergence(grid, &TensorField::vector(grid, Representation::Convective, Base::Body, &vh), &ctx, 0)?;
            let rho = rho_hat(t)?;
            Ok(max_abs((0..grid.len()).map(|n| rate[n] + rho[n] * div.data.values[n])))
        }
        Representation::Spatial => {
            let sampling = c.sampling();
            let vs = TensorField::vector(grid, Representation::Spatial, Base::Spatial, &v);
            let advect = |f: &[f64]| -> Vec<f64> {
                let d = sampling.gradient(grid, f, 1);
                (0..grid.len()).map(|n| (0..3).map(|i| v[n][i] * d[i][n]).sum()).collect()
            };
            // Mass form: ∂_t|_x m = d/dt|_X m − v^i ∂_i m.
            let mu = mass.spatial(grid, &c)?;
            let dm = time_derivative(curve, t, fd_dt, &|s| Ok(mass.spatial(grid, &config_at(grid, curve, s, &mass.reference)?)?.density().to_vec()))?;
            let adv_m = advect(mu.density());
            let lie = lie_derivative_form(grid, &vs, &mu.0)?;
            let form_res = max_abs((0..grid.len()).map(|n| dm[n] - adv_m[n] + lie.comps.values[n]));
            // Density: ∂_tρ + L_vρ + ρ div v.
            let rho_of = |s: f64| -> Result<Vec<f64>> { Ok(mass.densities(grid, &config_at(grid, curve, s, &mass.reference)?)?.spatial) };
            let rho = rho_of(t)?;
            let drho = time_derivative(curve, t, fd_dt, &rho_of)?;
            let lie_rho = advect(&rho);
            let ctx = ConnectionContext::spatial_over(&c)?;
            let div = divergence(grid, &vs, &ctx, 0)?;
            let dens_res = max_abs((0..grid.len()).map(|n| {
                let dt_at_x = drho[n] - lie_rho[n];
                dt_at_x + lie_rho[n] + rho[n] * div.data.values[n]
            }));
            Ok(form_res.max(dens_res))
        }
    }
}

/// Max-norms of the three incompressibility diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncompressibilityReport {
    pub div_convective: f64,
    pub dj_dt: f64,
    pub div_spatial: f64,
}

impl IncompressibilityReport {
    pub fn max(&self) -> f64 {
        self.div_convective.max(self.dj_dt).max(self.div_spatial)
    }
}

/// `(div̂ v̂, ∂_tJ, div v)` in max-norm at time `t`.
pub fn incompressibility_residual(grid: &Grid, curve: &MotionCurve, t: f64, fd_dt: f64) -> Result<IncompressibilityReport> {
    let reference = curve.reference_metric(grid, t)?;
    let c = config_at(grid, curve, t, &reference)?;
    let v = curve.velocity(grid, t)?;
    let (g_hat, _) = c.induced_metrics()?;
    let vh: Vec<_> = v.iter().zip(c.f_inv.iter()).map(|(x, fi)| fi * x).collect();
    let div_hat = divergence(grid, &TensorField::vector(grid, Representation::Convective, Base::Body, &vh), &ConnectionContext::convective(grid, &g_hat)?, 0)?;
    let dj = time_derivative(curve, t, fd_dt, &|s| Ok(config_at(grid, curve, s, &reference)?.j.clone()))?;
    let div = divergence(grid, &TensorField::vector(grid, Representation::Spatial, Base::Spatial, &v), &ConnectionContext::spatial_over(&c)?, 0)?;
    Ok(IncompressibilityReport { div_convective: div_hat.data.max_abs(), dj_dt: max_abs(dj), div_spatial: div.data.max_abs() })
}

/// `ℳ = ⋆♭v` for a vector-valued 0-form `v`.
pub fn momentum_from_velocity(v: &BundleValuedForm, star: &Star) -> Result<Momentum> {
    if v.degree != 0 {
        return Err(Error::Degree("velocity is a vector-valued 0-form".into()));
    }
    hodge_flat(v, star)
}

/// `v = ⋆♯ℳ`.
pub fn velocity_from_momentum(m: &Momentum, star: &Star) -> Result<BundleValuedForm> {
    if m.degree != 3 {
        return Err(Error::Degree("momentum is a 3-form".into()));
    }
    hodge_sharp(m, star)
}

/// `E_kin = ½ ∫ v ∧̇ ℳ`.
pub fn kinetic_energy(v: &BundleValuedForm, m: &Momentum, grid: &Grid) -> Result<f64> {
    Ok(0.5 * duality_pairing(m, v, grid)?)
}
