//! Per-node tensor plumbing: representation tags, sampling frames, generic
//! tensor fields, and the sorted multi-index bookkeeping used by forms.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{partial_into, Grid, SampledField};

pub type M3 = Matrix3<f64>;
pub type V3 = Vector3<f64>;

/// Which description of the motion a quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Fields on the configuration `S = φ(B)`, stored in pulled-back sampling.
    Spatial,
    /// Two-point fields over `φ`: body form legs, spatial value legs.
    Material,
    /// Fields on the body `B`.
    Convective,
}

/// Index position of a tensor leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Up,
    Down,
}

/// Manifold a leg is attached to: ambient space (at `φ(X)`) or body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Base {
    Spatial,
    Body,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub var: Variance,
    pub base: Base,
}

impl Leg {
    pub const fn up(base: Base) -> Self {
        Leg { var: Variance::Up, base }
    }
    pub const fn down(base: Base) -> Self {
        Leg { var: Variance::Down, base }
    }
}

impl Representation {
    /// Base of the form legs (and of derivative indices).
    pub fn form_base(self) -> Base {
        match self {
            Representation::Spatial => Base::Spatial,
            _ => Base::Body,
        }
    }

    /// Base of the value leg.
    pub fn value_base(self) -> Base {
        match self {
            Representation::Convective => Base::Body,
            _ => Base::Spatial,
        }
    }
}

/// How chart derivatives of stored samples relate to the field's own coordinates.
///
/// Body fields differentiate directly in `X`. Spatial fields in pulled-back
/// sampling use the chain rule `∂/∂x^i = (F⁻¹)^I_i ∂/∂X^I`.
#[derive(Clone, Debug)]
pub enum Sampling {
    Body,
    /// Per-node `F⁻¹` with entry `(I, i) = (F⁻¹)^I_i`.
    PulledBack(Arc<Vec<M3>>),
}

impl Sampling {
    /// Gradient `[∂_0 f, ∂_1 f, ∂_2 f]` of a node-major array with `nc` components.
    pub fn gradient(&self, grid: &Grid, src: &[f64], nc: usize) -> [Vec<f64>; 3] {
        let mut body: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; src.len()]);
        for (a, dst) in body.iter_mut().enumerate() {
            partial_into(grid, src, dst, nc, a);
        }
        match self {
            Sampling::Body => body,
            Sampling::PulledBack(finv) => {
                let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; src.len()]);
                for node in 0..grid.len() {
                    let fi = &finv[node];
                    for c in 0..nc {
                        let p = node * nc + c;
                        for (i, o) in out.iter_mut().enumerate() {
                            o[p] = fi[(0, i)] * body[0][p] + fi[(1, i)] * body[1][p] + fi[(2, i)] * body[2][p];
                        }
                    }
                }
                out
            }
        }
    }

    pub fn is_pulled_back(&self) -> bool {
        matches!(self, Sampling::PulledBack(_))
    }
}

/// A tensor field with explicitly typed legs; components row-major over the legs.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub legs: Vec<Leg>,
    pub repr: Representation,
    pub data: SampledField,
}

impl TensorField {
    pub fn zeros(grid: &Grid, legs: Vec<Leg>, repr: Representation) -> Self {
        let shape = vec![3; legs.len()];
        Self { legs, repr, data: SampledField::zeros(grid, &shape) }
    }

    pub fn rank(&self) -> usize {
        self.legs.len()
    }

    /// Vector field from per-node vectors.
    pub fn vector(grid: &Grid, repr: Representation, base: Base, v: &[V3]) -> Self {
        let mut t = Self::zeros(grid, vec![Leg::up(base)], repr);
        for (n, vn) in v.iter().enumerate() {
            t.data.node_mut(n).copy_from_slice(vn.as_slice());
        }
        t
    }

    /// Covector field from per-node components.
    pub fn covector(grid: &Grid, repr: Representation, base: Base, v: &[V3]) -> Self {
        let mut t = Self::vector(grid, repr, base, v);
        t.legs[0].var = Variance::Down;
        t
    }

    /// Rank-2 field from per-node matrices, entry `(a, b)` ↦ component `[a][b]`.
    pub fn matrix(grid: &Grid, legs: [Leg; 2], repr: Representation, m: &[M3]) -> Self {
        let mut t = Self::zeros(grid, legs.to_vec(), repr);
        for (n, mn) in m.iter().enumerate() {
            let d = t.data.node_mut(n);
            for a in 0..3 {
                for b in 0..3 {
                    d[3 * a + b] = mn[(a, b)];
                }
            }
        }
        t
    }

    /// Per-node vectors of a rank-1 field.
    pub fn as_vectors(&self) -> Vec<V3> {
        assert_eq!(self.rank(), 1);
        (0..self.data.nodes()).map(|n| V3::from_column_slice(self.data.node(n))).collect()
    }

    /// Per-node matrices of a rank-2 field.
    pub fn as_matrices(&self) -> Vec<M3> {
        assert_eq!(self.rank(), 2);
        (0..self.data.nodes()).map(|n| M3::from_row_slice(self.data.node(n))).collect()
    }

    pub fn max_diff(&self, other: &TensorField) -> f64 {
        self.data.max_diff(&other.data)
    }
}

/// Sorted form multi-indices of degree `k` in dimension 3.
pub fn form_tuples(k: usize) -> &'static [&'static [usize]] {
    const K0: &[&[usize]] = &[&[]];
    const K1: &[&[usize]] = &[&[0], &[1], &[2]];
    const K2: &[&[usize]] = &[&[0, 1], &[0, 2], &[1, 2]];
    const K3: &[&[usize]] = &[&[0, 1, 2]];
    match k {
        0 => K0,
        1 => K1,
        2 => K2,
        3 => K3,
        _ => &[],
    }
}

/// Number of stored slots for a `k`-form: `C(3, k)`.
pub fn form_slots(k: usize) -> usize {
    form_tuples(k).len()
}

/// Sign and slot of an arbitrary index tuple; `None` when an index repeats.
pub fn sort_tuple(idx: &[usize]) -> Option<(f64, usize)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let slot = form_tuples(v.len()).iter().position(|t| *t == v.as_slice())?;
    Some((sign, slot))
}

/// Slot of the complement of sorted tuple `slot` of degree `k`, and the sign of `(A, Aᶜ)`.
pub fn complement(k: usize, slot: usize) -> (f64, usize) {
    let a = form_tuples(k)[slot];
    let rest: Vec<usize> = (0..3).filter(|i| !a.contains(i)).collect();
    let mut all = a.to_vec();
    all.extend_from_slice(&rest);
    let (sign, _) = sort_tuple(&all).expect("disjoint");
    let (_, cslot) = sort_tuple(&rest).expect("sorted");
    (sign, cslot)
}

/// `k`-th compound matrix: entry `(R, C)` is the minor of `m` on sorted rows `R`, columns `C`.
pub fn compound(m: &M3, k: usize) -> Vec<f64> {
    let t = form_tuples(k);
    let n = t.len();
    let mut out = vec![0.0; n * n];
    for (r, rows) in t.iter().enumerate() {
        for (c, cols) in t.iter().enumerate() {
            out[r * n + c] = match k {
                0 => 1.0,
                1 => m[(rows[0], cols[0])],
                2 => m[(rows[0], cols[0])] * m[(rows[1], cols[1])] - m[(rows[0], cols[1])] * m[(rows[1], cols[0])],
                _ => m.determinant(),
            };
        }
    }
    out
}

/// `k!`
pub fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Per-node map over a node count, collected into a `Vec`.
pub fn per_node<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Check that two fields sit over the same grid.
pub fn same_nodes(a: &SampledField, b: &SampledField) -> Result<()> {
    if a.resolution != b.resolution || a.nodes() != b.nodes() {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    Ok(())
}
