//! Riemannian metrics: inverses, Christoffel symbols, musical isomorphisms,
//! volume forms, Lie derivatives of metrics and Killing residuals.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CoordSystem, Grid, SampledField};
use crate::tensor::{Base, Representation, Sampling, TensorField, Variance, M3};

/// Eigenvalue threshold below which a metric sample is rejected.
pub const SPD_THRESHOLD: f64 = 1e-10;

/// Which of the four metrics a field holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricRole {
    /// Ambient metric `g` on the configuration.
    Spatial,
    /// Convective metric `ĝ = φ*g` on the body.
    Convective,
    /// Ambient metric composed with the embedding, `g̃ = g∘φ`.
    Material,
    /// Reference metric `G` on the body.
    Reference,
}

impl MetricRole {
    /// Manifold the metric's indices belong to.
    pub fn base(self) -> Base {
        match self {
            MetricRole::Spatial | MetricRole::Material => Base::Spatial,
            MetricRole::Convective | MetricRole::Reference => Base::Body,
        }
    }
}

/// Christoffel symbols per node: `gamma[node][k][(i, j)] = Γ^k_{ij}`.
pub type Christoffel = Vec<[M3; 3]>;

/// Symmetric positive-definite (0,2) field with its inverse.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub role: MetricRole,
    /// Frame used to differentiate the samples.
    pub sampling: Sampling,
    pub g: Vec<M3>,
    pub inv: Vec<M3>,
}

/// Ambient metric of a coordinate system at chart point `x`.
pub fn ambient_metric(coords: CoordSystem, x: [f64; 3]) -> M3 {
    match coords {
        CoordSystem::Cartesian => M3::identity(),
        CoordSystem::Cylindrical => M3::from_diagonal(&nalgebra::Vector3::new(1.0, x[0] * x[0], 1.0)),
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &M3) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

impl MetricField {
    /// Validate symmetry and positivity, then cache the inverse.
    pub fn new(role: MetricRole, sampling: Sampling, g: Vec<M3>) -> Result<Self> {
        let mut g = g;
        let mut inv = Vec::with_capacity(g.len());
        for (node, m) in g.iter_mut().enumerate() {
            let scale = m.abs().max().max(1.0);
            if (*m - m.transpose()).abs().max() > 1e-12 * scale || !m.iter().all(|v| v.is_finite()) {
                return Err(Error::Shape(format!("metric sample at node {} is not symmetric", node)));
            }
            *m = 0.5 * (*m + m.transpose());
            let min_eig = min_eigenvalue(m);
            if min_eig <= SPD_THRESHOLD {
                return Err(Error::NotSpd { node, min_eig });
            }
            let mi = m.try_inverse().ok_or(Error::NotSpd { node, min_eig })?;
            inv.push(0.5 * (mi + mi.transpose()));
        }
        Ok(Self { role, sampling, g, inv })
    }

    /// Constant identity metric.
    pub fn identity(grid: &Grid, role: MetricRole) -> Self {
        let g = vec![M3::identity(); grid.len()];
        Self { role, sampling: Sampling::Body, inv: g.clone(), g }
    }

    /// Ambient metric of `grid`'s chart evaluated at the given chart points.
    pub fn ambient(coords: CoordSystem, points: &[[f64; 3]], role: MetricRole, sampling: Sampling) -> Result<Self> {
        Self::new(role, sampling, points.iter().map(|&x| ambient_metric(coords, x)).collect())
    }

    /// Ambient metric at the grid nodes themselves (identity embedding).
    pub fn chart(grid: &Grid) -> Result<Self> {
        Self::ambient(grid.chart.coords, &grid.nodes(), MetricRole::Spatial, Sampling::Body)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn base(&self) -> Base {
        self.role.base()
    }

    /// Components as a `(0,2)` tensor field.
    pub fn as_tensor(&self, grid: &Grid, repr: Representation) -> TensorField {
        let b = self.base();
        TensorField::matrix(grid, [crate::tensor::Leg::down(b), crate::tensor::Leg::down(b)], repr, &self.g)
    }

    /// Largest `|g·g⁻¹ − I|` entry over all nodes.
    pub fn inverse_residual(&self) -> f64 {
        self.g.iter().zip(&self.inv).map(|(g, gi)| (g * gi - M3::identity()).abs().max()).fold(0.0, f64::max)
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{lj} + ∂_j g_{il} − ∂_l g_{ij})` from finite differences of the samples.
pub fn christoffel(m: &MetricField, grid: &Grid) -> Result<Christoffel> {
    if m.len() != grid.len() {
        return Err(Error::Shape("metric does not match grid".into()));
    }
    let flat: Vec<f64> = m.g.iter().flat_map(|g| g.transpose().as_slice().to_vec()).collect();
    let dg = m.sampling.gradient(grid, &flat, 9);
    let mut out = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let d: [M3; 3] = std::array::from_fn(|c| M3::from_row_slice(&dg[c][9 * node..9 * node + 9]));
        let gi = &m.inv[node];
        let mut gam = [M3::zeros(); 3];
        for (k, gk) in gam.iter_mut().enumerate() {
            for i in 0..3 {
                for j in i..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += gi[(k, l)] * (d[i][(l, j)] + d[j][(i, l)] - d[l][(i, j)]);
                    }
                    gk[(i, j)] = 0.5 * s;
                    gk[(j, i)] = 0.5 * s;
                }
            }
        }
        out.push(gam);
    }
    Ok(out)
}

/// Exact Christoffel symbols of the flat ambient metric at chart point `x`.
pub fn ambient_christoffel(coords: CoordSystem, x: [f64; 3]) -> [M3; 3] {
    let mut gam = [M3::zeros(); 3];
    if coords == CoordSystem::Cylindrical {
        let r = x[0];
        gam[0][(1, 1)] = -r;
        gam[1][(0, 1)] = 1.0 / r;
        gam[1][(1, 0)] = 1.0 / r;
    }
    gam
}

/// Direction of a musical isomorphism.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Musical {
    /// Lower an index with `g`.
    Flat,
    /// Raise an index with `g⁻¹`.
    Sharp,
}

/// Apply `♭` or `♯` to leg `leg` of `t`.
pub fn raise_lower(t: &TensorField, m: &MetricField, leg: usize, dir: Musical) -> Result<TensorField> {
    let l = *t.legs.get(leg).ok_or_else(|| Error::Shape(format!("tensor has no leg {}", leg)))?;
    if l.base != m.base() {
        return Err(Error::Representation(format!("leg {} lives on {:?}, metric on {:?}", leg, l.base, m.base())));
    }
    let (want, to, mats) = match dir {
        Musical::Flat => (Variance::Up, Variance::Down, &m.g),
        Musical::Sharp => (Variance::Down, Variance::Up, &m.inv),
    };
    if l.var != want {
        return Err(Error::Representation(format!("leg {} has the wrong variance for {:?}", leg, dir)));
    }
    if mats.len() != t.data.nodes() {
        return Err(Error::Shape("metric does not match tensor".into()));
    }
    let rank = t.rank();
    let stride = 3usize.pow((rank - 1 - leg) as u32);
    let nc = t.data.ncomp();
    let mut out = t.clone();
    out.legs[leg].var = to;
    for node in 0..mats.len() {
        let src = t.data.node(node);
        let dst = out.data.node_mut(node);
        let mm = &mats[node];
        for c in 0..nc {
            let a = (c / stride) % 3;
            let base = c - a * stride;
            dst[c] = (0..3).map(|b| mm[(a, b)] * src[base + b * stride]).sum();
        }
    }
    Ok(out)
}

/// Volume pseudo-form `ω_g` by its chart density `√det g`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumePseudoForm {
    pub density: SampledField,
}

impl VolumePseudoForm {
    /// Pseudo-forms change sign under orientation reversal.
    pub const PSEUDO: bool = true;
}

pub fn volume_form(m: &MetricField, grid: &Grid) -> VolumePseudoForm {
    VolumePseudoForm { density: scalar_field(grid, m.g.iter().map(|g| g.determinant().sqrt()).collect()) }
}

pub(crate) fn scalar_field(grid: &Grid, values: Vec<f64>) -> SampledField {
    SampledField { shape: vec![], resolution: grid.n, values }
}

/// `(L_v g)_{ij} = v^k ∂_k g_{ij} + g_{kj} ∂_i v^k + g_{ik} ∂_j v^k`.
pub fn lie_derivative_metric(grid: &Grid, v: &TensorField, m: &MetricField) -> Result<TensorField> {
    if v.rank() != 1 || v.legs[0].var != Variance::Up {
        return Err(Error::Shape("expected a vector field".into()));
    }
    if v.legs[0].base != m.base() {
        return Err(Error::Representation("vector field and metric live on different manifolds".into()));
    }
    let flat: Vec<f64> = m.g.iter().flat_map(|g| g.transpose().as_slice().to_vec()).collect();
    let dg = m.sampling.gradient(grid, &flat, 9);
    let dv = m.sampling.gradient(grid, &v.data.values, 3);
    let mut out = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let vn = v.data.node(node);
        // jac[(k, i)] = ∂_i v^k
        let jac = M3::from_fn(|k, i| dv[i][3 * node + k]);
        let g = &m.g[node];
        let mut l = g.transpose() * jac;
        l += l.transpose();
        for (k, vk) in vn.iter().enumerate() {
            l += *vk * M3::from_row_slice(&dg[k][9 * node..9 * node + 9]);
        }
        out.push(l);
    }
    let b = m.base();
    let repr = v.repr;
    Ok(TensorField::matrix(grid, [crate::tensor::Leg::down(b), crate::tensor::Leg::down(b)], repr, &out))
}

/// Max-norm of `L_v g`; zero exactly for Killing fields.
pub fn killing_residual(grid: &Grid, v: &TensorField, m: &MetricField) -> Result<f64> {
    Ok(lie_derivative_metric(grid, v, m)?.data.max_abs())
}
