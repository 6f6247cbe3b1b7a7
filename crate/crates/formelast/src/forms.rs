//! Bundle-valued differential forms with an explicit form-leg / value-leg split.
//!
//! Components are stored as `α^v_A` with `v` the value index (absent for scalar
//! forms) and `A` a sorted form multi-index, so antisymmetry holds by storage.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{integrate_interior, Grid, SampledField};
use crate::tensor::{compound, complement, factorial, form_slots, form_tuples, sort_tuple, Leg, Representation, Sampling, TensorField, Variance, M3};

/// Type of the value leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Vector,
    Covector,
    Scalar,
}

impl ValueKind {
    pub fn dim(self) -> usize {
        match self {
            ValueKind::Scalar => 1,
            _ => 3,
        }
    }
}

/// True forms are orientation independent; pseudo-forms flip with the orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    True,
    Pseudo,
}

impl Parity {
    pub fn xor(self, other: Parity) -> Parity {
        if self == other {
            Parity::True
        } else {
            Parity::Pseudo
        }
    }

    pub fn flip(self) -> Parity {
        self.xor(Parity::Pseudo)
    }
}

/// A `k`-form with values in the tangent or cotangent bundle (or scalars).
#[derive(Clone, Debug)]
pub struct BundleValuedForm {
    pub degree: usize,
    pub value: ValueKind,
    pub repr: Representation,
    pub parity: Parity,
    /// Shape `[value dim, C(3, k)]` per node.
    pub comps: SampledField,
    /// Embedding the form is sampled over: required for material forms; for spatial
    /// forms it selects pulled-back sampling (absent means the identity embedding).
    pub over_map: Option<Arc<Configuration>>,
}

impl BundleValuedForm {
    pub fn zeros(
        grid: &Grid,
        degree: usize,
        value: ValueKind,
        repr: Representation,
        parity: Parity,
        over_map: Option<Arc<Configuration>>,
    ) -> Result<Self> {
        if degree > 3 {
            return Err(Error::Degree(format!("degree {} exceeds 3", degree)));
        }
        if repr == Representation::Material && over_map.is_none() {
            return Err(Error::Representation("material forms need the map they live over".into()));
        }
        if repr == Representation::Convective && over_map.is_some() {
            return Err(Error::Representation("convective forms live on the body only".into()));
        }
        let comps = SampledField::zeros(grid, &[value.dim(), form_slots(degree)]);
        Ok(Self { degree, value, repr, parity, comps, over_map })
    }

    /// Build from a closure filling `[value][slot]` components at each chart point.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        grid: &Grid,
        degree: usize,
        value: ValueKind,
        repr: Representation,
        parity: Parity,
        over_map: Option<Arc<Configuration>>,
        f: impl Fn(usize, [f64; 3], &mut [f64]),
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, degree, value, repr, parity, over_map)?;
        for node in 0..grid.len() {
            f(node, grid.coord(node), out.comps.node_mut(node));
        }
        Ok(out)
    }

    pub fn slots(&self) -> usize {
        form_slots(self.degree)
    }

    pub fn vdim(&self) -> usize {
        self.value.dim()
    }

    #[inline]
    pub fn get(&self, node: usize, v: usize, slot: usize) -> f64 {
        self.comps.values[(node * self.vdim() + v) * self.slots() + slot]
    }

    #[inline]
    pub fn set(&mut self, node: usize, v: usize, slot: usize, x: f64) {
        let (vd, s) = (self.vdim(), self.slots());
        self.comps.values[(node * vd + v) * s + slot] = x;
    }

    /// Frame in which the stored samples are differentiated.
    pub fn sampling(&self) -> Sampling {
        match (&self.repr, &self.over_map) {
            (Representation::Spatial, Some(c)) => Sampling::PulledBack(c.f_inv.clone()),
            _ => Sampling::Body,
        }
    }

    /// Same structure with zero components.
    pub fn zeros_like(&self, degree: usize, value: ValueKind, parity: Parity) -> Self {
        let comps = SampledField {
            shape: vec![value.dim(), form_slots(degree)],
            resolution: self.comps.resolution,
            values: vec![0.0; value.dim() * form_slots(degree) * self.comps.nodes()],
        };
        Self { degree, value, repr: self.repr, parity, comps, over_map: self.over_map.clone() }
    }

    pub fn nodes(&self) -> usize {
        self.comps.nodes()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.max_abs()
    }

    pub fn max_diff(&self, other: &BundleValuedForm) -> f64 {
        self.comps.max_diff(&other.comps)
    }

    /// `a·self + b·other` (structures must agree).
    pub fn axpby(&self, a: f64, other: &BundleValuedForm, b: f64) -> Result<Self> {
        check_compatible(self, other)?;
        if self.degree != other.degree || self.value != other.value {
            return Err(Error::Shape("forms differ in degree or value kind".into()));
        }
        let mut out = self.clone();
        out.comps = self.comps.axpby(a, &other.comps, b)?;
        Ok(out)
    }

    /// Multiply every component by a per-node scalar.
    pub fn scale_by(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        let nc = out.comps.ncomp();
        for (node, sn) in s.iter().enumerate() {
            for c in out.comps.node_mut(node).iter_mut().take(nc) {
                *c *= sn;
            }
        }
        out
    }

    /// Zero every component whose form index contains `axis`: the pullback to a face normal to `axis`.
    pub fn tangential_part(&self, axis: usize) -> Self {
        let mut out = self.clone();
        for node in 0..self.nodes() {
            for v in 0..self.vdim() {
                for (slot, t) in form_tuples(self.degree).iter().enumerate() {
                    if t.contains(&axis) {
                        out.set(node, v, slot, 0.0);
                    }
                }
            }
        }
        out
    }

    /// Full antisymmetric component array with legs `[form…, value]`.
    pub fn to_tensor(&self, grid: &Grid) -> TensorField {
        let fb = self.repr.form_base();
        let mut legs = vec![Leg::down(fb); self.degree];
        match self.value {
            ValueKind::Vector => legs.push(Leg::up(self.repr.value_base())),
            ValueKind::Covector => legs.push(Leg::down(self.repr.value_base())),
            ValueKind::Scalar => {}
        }
        let mut t = TensorField::zeros(grid, legs, self.repr);
        let k = self.degree;
        let vd = self.vdim();
        for node in 0..grid.len() {
            let dst = t.data.node_mut(node);
            for flat in 0..3usize.pow(k as u32) {
                let idx: Vec<usize> = (0..k).rev().map(|p| (flat / 3usize.pow(p as u32)) % 3).collect();
                if let Some((sign, slot)) = sort_tuple(&idx) {
                    for v in 0..vd {
                        dst[flat * vd + v] = sign * self.get(node, v, slot);
                    }
                }
            }
        }
        t
    }
}

fn same_map(a: &Option<Arc<Configuration>>, b: &Option<Arc<Configuration>>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => Arc::ptr_eq(x, y) || (x.t == y.t && x.phi == y.phi),
        _ => false,
    }
}

/// Representation and base-map agreement of two forms.
pub fn check_compatible(a: &BundleValuedForm, b: &BundleValuedForm) -> Result<()> {
    if a.repr != b.repr {
        return Err(Error::Representation(format!("{:?} vs {:?}", a.repr, b.repr)));
    }
    if !same_map(&a.over_map, &b.over_map) {
        return Err(Error::Representation("forms live over different maps".into()));
    }
    if a.comps.resolution != b.comps.resolution {
        return Err(Error::Shape("forms live on different grids".into()));
    }
    Ok(())
}

/// Mass form: a scalar-valued 3-pseudo-form `μ = m dX¹∧dX²∧dX³`.
#[derive(Clone, Debug)]
pub struct MassForm(pub BundleValuedForm);

impl MassForm {
    pub fn new(grid: &Grid, repr: Representation, over_map: Option<Arc<Configuration>>, density: Vec<f64>) -> Result<Self> {
        let mut f = BundleValuedForm::zeros(grid, 3, ValueKind::Scalar, repr, Parity::Pseudo, over_map)?;
        if density.len() != grid.len() {
            return Err(Error::Shape("mass density does not match grid".into()));
        }
        f.comps.values = density;
        Ok(Self(f))
    }

    /// Chart component `μ_{123}` per node.
    pub fn density(&self) -> &[f64] {
        &self.0.comps.values
    }

    pub fn total(&self, grid: &Grid) -> Result<f64> {
        integrate_top(grid, &self.0)
    }
}

fn scalar(f: &SampledField) -> SampledField {
    SampledField { shape: vec![], resolution: f.resolution, values: f.values.clone() }
}

/// `∫` of a scalar 3-form. Spatial forms sampled over `φ` are integrated over
/// `φ(B)` through the change of variables `dx = det F dX`.
pub fn integrate_top(grid: &Grid, omega: &BundleValuedForm) -> Result<f64> {
    if omega.degree != 3 || omega.value != ValueKind::Scalar {
        return Err(Error::Degree("only scalar 3-forms integrate over the body".into()));
    }
    let mut density = scalar(&omega.comps);
    if let (Representation::Spatial, Some(c)) = (omega.repr, &omega.over_map) {
        for (d, f) in density.values.iter_mut().zip(&c.f) {
            *d *= f.determinant();
        }
    }
    integrate_interior(grid, &density)
}

/// `ζ ∧̇ 𝒳`: value legs contracted, form legs wedged, `ζ`'s legs first.
///
/// Accepts vector⊗covector (either order) and scalar⊗scalar (plain wedge).
pub fn wedge_dot(zeta: &BundleValuedForm, chi: &BundleValuedForm) -> Result<BundleValuedForm> {
    check_compatible(zeta, chi)?;
    let ok = matches!(
        (zeta.value, chi.value),
        (ValueKind::Vector, ValueKind::Covector) | (ValueKind::Covector, ValueKind::Vector) | (ValueKind::Scalar, ValueKind::Scalar)
    );
    if !ok {
        return Err(Error::Representation(format!("cannot pair {:?} with {:?}", zeta.value, chi.value)));
    }
    let (k, l) = (zeta.degree, chi.degree);
    if k + l > 3 {
        return Err(Error::Degree(format!("{} + {} exceeds 3", k, l)));
    }
    let mut out = zeta.zeros_like(k + l, ValueKind::Scalar, zeta.parity.xor(chi.parity));
    // (output slot, zeta slot, chi slot, sign) for every split of each output tuple.
    let mut terms = Vec::new();
    for (cs, c) in form_tuples(k + l).iter().enumerate() {
        for (as_, a) in form_tuples(k).iter().enumerate() {
            if !a.iter().all(|i| c.contains(i)) {
                continue;
            }
            let b: Vec<usize> = c.iter().cloned().filter(|i| !a.contains(i)).collect();
            let mut ab = a.to_vec();
            ab.extend_from_slice(&b);
            let (sign, _) = sort_tuple(&ab).expect("disjoint split");
            let (_, bs) = sort_tuple(&b).expect("sorted");
            terms.push((cs, as_, bs, sign));
        }
    }
    let vd = zeta.vdim();
    for node in 0..zeta.nodes() {
        for &(cs, as_, bs, sign) in &terms {
            let s: f64 = (0..vd).map(|v| zeta.get(node, v, as_) * chi.get(node, v, bs)).sum();
            let cur = out.get(node, 0, cs);
            out.set(node, 0, cs, cur + sign * s);
        }
    }
    Ok(out)
}

/// `ι_v α`: contraction of the first form slot, applied to every value component.
pub fn interior_product(v: &TensorField, alpha: &BundleValuedForm) -> Result<BundleValuedForm> {
    if alpha.degree == 0 {
        return Err(Error::Degree("interior product of a 0-form".into()));
    }
    if v.rank() != 1 || v.legs[0].var != Variance::Up {
        return Err(Error::Shape("interior product needs a vector field".into()));
    }
    if v.legs[0].base != alpha.repr.form_base() {
        return Err(Error::Representation("vector field and form legs live on different manifolds".into()));
    }
    let k = alpha.degree;
    let mut out = alpha.zeros_like(k - 1, alpha.value, alpha.parity);
    let mut terms = Vec::new();
    for (rs, r) in form_tuples(k - 1).iter().enumerate() {
        for a in 0..3 {
            let mut idx = vec![a];
            idx.extend_from_slice(r);
            if let Some((sign, s)) = sort_tuple(&idx) {
                terms.push((rs, a, s, sign));
            }
        }
    }
    for node in 0..alpha.nodes() {
        let vn = v.data.node(node);
        for val in 0..alpha.vdim() {
            for &(rs, a, s, sign) in &terms {
                let cur = out.get(node, val, rs);
                out.set(node, val, rs, cur + sign * vn[a] * alpha.get(node, val, s));
            }
        }
    }
    Ok(out)
}

/// Alternating-sum assembly of a degree-`k+1` form from directional derivatives of a degree-`k` form.
///
/// `dcomp[c]` holds `D_c α` in the layout of `α`; the result is
/// `(dα)_{c₀…c_k} = Σ_j (−1)^j D_{c_j} α_{c₀…ĉ_j…c_k}`.
pub(crate) fn alternate(alpha: &BundleValuedForm, dcomp: &[Vec<f64>; 3]) -> BundleValuedForm {
    let k = alpha.degree;
    let mut out = alpha.zeros_like(k + 1, alpha.value, alpha.parity);
    let (vd, s_in, s_out) = (alpha.vdim(), alpha.slots(), out.slots());
    let mut terms = Vec::new();
    for (cs, c) in form_tuples(k + 1).iter().enumerate() {
        for j in 0..=k {
            let rest: Vec<usize> = c.iter().enumerate().filter(|(p, _)| *p != j).map(|(_, x)| *x).collect();
            let (_, rs) = sort_tuple(&rest).expect("sorted");
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            terms.push((cs, c[j], rs, sign));
        }
    }
    for node in 0..alpha.nodes() {
        for v in 0..vd {
            for &(cs, dir, rs, sign) in &terms {
                out.comps.values[(node * vd + v) * s_out + cs] += sign * dcomp[dir][(node * vd + v) * s_in + rs];
            }
        }
    }
    out
}

/// Exterior derivative of a scalar-valued form.
pub fn exterior_derivative(grid: &Grid, alpha: &BundleValuedForm) -> Result<BundleValuedForm> {
    if alpha.value != ValueKind::Scalar {
        return Err(Error::Representation("exterior derivative needs a scalar-valued form; use d_∇".into()));
    }
    if alpha.degree >= 3 {
        return Err(Error::Degree("d of a top form".into()));
    }
    alpha.comps.check_grid(grid)?;
    let d = alpha.sampling().gradient(grid, &alpha.comps.values, alpha.comps.ncomp());
    Ok(alternate(alpha, &d))
}

/// Metrics and mass form that define one of the three Hodge stars.
///
/// The value leg is lowered with `value_metric`; the form leg is dualized with
/// `form_metric` against the mass form. Spatial and convective stars use one
/// metric for both; the material star pairs `g̃` with the reference `G`.
#[derive(Clone, Copy, Debug)]
pub struct Star<'a> {
    pub repr: Representation,
    pub value_metric: &'a MetricField,
    pub form_metric: &'a MetricField,
    pub mu: &'a MassForm,
}

impl<'a> Star<'a> {
    pub fn new(repr: Representation, metric: &'a MetricField, mu: &'a MassForm) -> Self {
        Self { repr, value_metric: metric, form_metric: metric, mu }
    }

    pub fn material(g_tilde: &'a MetricField, reference: &'a MetricField, mu: &'a MassForm) -> Self {
        Self { repr: Representation::Material, value_metric: g_tilde, form_metric: reference, mu }
    }

    fn check(&self, f: &BundleValuedForm) -> Result<()> {
        if f.repr != self.repr || self.mu.0.repr != self.repr {
            return Err(Error::Representation(format!("{:?} form with {:?} star", f.repr, self.repr)));
        }
        let n = f.nodes();
        if self.value_metric.len() != n || self.form_metric.len() != n || self.mu.density().len() != n {
            return Err(Error::Shape("star data does not match the form's grid".into()));
        }
        Ok(())
    }

    fn density(&self, node: usize) -> Result<f64> {
        let m = self.mu.density()[node];
        if !(m.abs() > f64::MIN_POSITIVE) || !m.is_finite() {
            return Err(Error::Degenerate { node, value: m });
        }
        Ok(m)
    }
}

/// Raise the sorted form indices of a `k`-form slice with a metric inverse.
fn raise_form(ginv: &M3, k: usize, src: &[f64]) -> Vec<f64> {
    let c = compound(ginv, k);
    let n = form_slots(k);
    (0..n).map(|a| (0..n).map(|b| c[a * n + b] * src[b]).sum()).collect()
}

/// `⋆♭`: vector-valued `k`-form to covector-valued `(3−k)`-pseudo-form with
/// `ζ ∧̇ ⋆♭ξ = ⟨ζ, ξ⟩ μ`, the inner product being the full index contraction.
pub fn hodge_flat(xi: &BundleValuedForm, star: &Star) -> Result<BundleValuedForm> {
    if xi.value != ValueKind::Vector {
        return Err(Error::Representation("⋆♭ acts on vector-valued forms".into()));
    }
    star.check(xi)?;
    let k = xi.degree;
    let kf = factorial(k);
    let mut out = xi.zeros_like(3 - k, ValueKind::Covector, xi.parity.flip());
    out.over_map = xi.over_map.clone();
    let n = form_slots(k);
    for node in 0..xi.nodes() {
        let m = star.density(node)?;
        let gv = &star.value_metric.g[node];
        let gfi = &star.form_metric.inv[node];
        let raised: Vec<Vec<f64>> = (0..3)
            .map(|i| raise_form(gfi, k, &(0..n).map(|s| xi.get(node, i, s)).collect::<Vec<_>>()))
            .collect();
        for a in 0..n {
            let (sign, b) = complement(k, a);
            for j in 0..3 {
                let s: f64 = (0..3).map(|i| gv[(j, i)] * raised[i][a]).sum();
                out.set(node, j, b, kf * m * sign * s);
            }
        }
    }
    Ok(out)
}

/// `⋆♯ = (⋆♭)⁻¹`: covector-valued `(3−k)`-form back to a vector-valued `k`-form.
pub fn hodge_sharp(chi: &BundleValuedForm, star: &Star) -> Result<BundleValuedForm> {
    if chi.value != ValueKind::Covector {
        return Err(Error::Representation("⋆♯ acts on covector-valued forms".into()));
    }
    star.check(chi)?;
    let k = 3 - chi.degree;
    let kf = factorial(k);
    let mut out = chi.zeros_like(k, ValueKind::Vector, chi.parity.flip());
    let n = form_slots(k);
    for node in 0..chi.nodes() {
        let m = star.density(node)?;
        let gvi = &star.value_metric.inv[node];
        let gf = &star.form_metric.g[node];
        let cf = compound(gf, k);
        for i in 0..3 {
            let mut raised = vec![0.0; n];
            for (a, r) in raised.iter_mut().enumerate() {
                let (sign, b) = complement(k, a);
                *r = sign * (0..3).map(|j| gvi[(i, j)] * chi.get(node, j, b)).sum::<f64>() / (kf * m);
            }
            for c in 0..n {
                out.set(node, i, c, (0..n).map(|a| cf[c * n + a] * raised[a]).sum());
            }
        }
    }
    Ok(out)
}

/// Pointwise `⟨ζ, ξ⟩`: full contraction with `g` on the value legs and `G⁻¹` on every form index.
pub fn inner_product(zeta: &BundleValuedForm, xi: &BundleValuedForm, star: &Star) -> Result<Vec<f64>> {
    check_compatible(zeta, xi)?;
    if zeta.value != ValueKind::Vector || xi.value != ValueKind::Vector || zeta.degree != xi.degree {
        return Err(Error::Shape("inner product of vector-valued forms of equal degree".into()));
    }
    let k = zeta.degree;
    let n = form_slots(k);
    let mut out = Vec::with_capacity(zeta.nodes());
    for node in 0..zeta.nodes() {
        let c = compound(&star.form_metric.inv[node], k);
        let gv = &star.value_metric.g[node];
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..n {
                    for b in 0..n {
                        s += gv[(i, j)] * c[a * n + b] * zeta.get(node, i, a) * xi.get(node, j, b);
                    }
                }
            }
        }
        out.push(factorial(k) * s);
    }
    Ok(out)
}

/// Orientation reversal: pseudo-forms change sign, true forms are unchanged.
pub fn orientation_flip(alpha: &BundleValuedForm) -> BundleValuedForm {
    let mut out = alpha.clone();
    if alpha.parity == Parity::Pseudo {
        out.comps.values.iter_mut().for_each(|v| *v = -*v);
    }
    out
}

/// `⟨𝒳 | ζ⟩ = ∫ ζ ∧̇ 𝒳` over the chart box.
pub fn duality_pairing(chi: &BundleValuedForm, zeta: &BundleValuedForm, grid: &Grid) -> Result<f64> {
    if chi.degree + zeta.degree != 3 {
        return Err(Error::Degree("pairing needs complementary degrees".into()));
    }
    integrate_top(grid, &wedge_dot(zeta, chi)?)
}
