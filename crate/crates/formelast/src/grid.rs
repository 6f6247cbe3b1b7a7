//! Charts, structured grids, finite-difference stencils and trapezoidal quadrature.
//!
//! All fields live on a uniform lattice over the body chart. Spatial fields are
//! stored in pulled-back sampling: the value at `x = φ(X)` is kept at body node
//! `X`, so no Eulerian grid is ever built.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum nodes per axis: one-sided boundary stencils need a few interior neighbours.
pub const MIN_NODES: usize = 5;

/// Coordinate system of the ambient chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSystem {
    /// Euclidean space in Cartesian coordinates, `g = I`.
    Cartesian,
    /// Euclidean space in `(r, θ, z)` coordinates, `g = diag(1, r², 1)`.
    Cylindrical,
}

/// A coordinate box `[lo, hi]³` with a tag for the ambient coordinate system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub name: String,
    pub ranges: [[f64; 2]; 3],
    pub coords: CoordSystem,
}

impl Chart {
    pub fn new(name: &str, ranges: [[f64; 2]; 3], coords: CoordSystem) -> Result<Self> {
        for (a, r) in ranges.iter().enumerate() {
            if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Config(format!("axis {} range {:?} is empty", a + 1, r)));
            }
        }
        if coords == CoordSystem::Cylindrical && ranges[0][0] <= 0.0 {
            return Err(Error::Config("cylindrical chart needs r > 0".into()));
        }
        Ok(Self { name: name.to_string(), ranges, coords })
    }

    /// The unit cube with Cartesian ambient coordinates.
    pub fn unit_cube() -> Self {
        Self {
            name: "unit_cube".into(),
            ranges: [[0.0, 1.0]; 3],
            coords: CoordSystem::Cartesian,
        }
    }

    /// A cylindrical shell sector `r ∈ [1, 2]`, `θ ∈ [0, 1]`, `z ∈ [0, 1]`.
    pub fn cylindrical_sector() -> Self {
        Self {
            name: "cyl_sector".into(),
            ranges: [[1.0, 2.0], [0.0, 1.0], [0.0, 1.0]],
            coords: CoordSystem::Cylindrical,
        }
    }

    pub fn dim(&self) -> usize {
        3
    }
}

/// One of the six faces of the lattice box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    /// Normal axis, 0-based.
    pub axis: usize,
    /// `false` for the `lo` face, `true` for the `hi` face.
    pub high: bool,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face { axis: 0, high: false },
        Face { axis: 0, high: true },
        Face { axis: 1, high: false },
        Face { axis: 1, high: true },
        Face { axis: 2, high: false },
        Face { axis: 2, high: true },
    ];

    /// `+1` when the outward normal points along `+X^axis`.
    pub fn outward(&self) -> f64 {
        if self.high {
            1.0
        } else {
            -1.0
        }
    }

    /// Sign relating the outward-induced orientation to `dX^b ∧ dX^c`, `b < c` the tangent axes:
    /// `ι_{n} (dX¹∧dX²∧dX³) = sign · dX^b∧dX^c`.
    pub fn orientation(&self) -> f64 {
        let parity = if self.axis == 1 { -1.0 } else { 1.0 };
        self.outward() * parity
    }

    /// Tangent axes `(b, c)` with `b < c`.
    pub fn tangents(&self) -> (usize, usize) {
        match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }
}

/// Uniform structured lattice over a chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub chart: Chart,
    pub n: [usize; 3],
    pub h: [f64; 3],
}

impl Grid {
    pub fn new(chart: Chart, n: [usize; 3]) -> Result<Self> {
        if let Some(a) = n.iter().position(|&k| k < MIN_NODES) {
            return Err(Error::Config(format!(
                "resolution {} on axis {} is below the minimum of {}",
                n[a],
                a + 1,
                MIN_NODES
            )));
        }
        let h = std::array::from_fn(|a| (chart.ranges[a][1] - chart.ranges[a][0]) / (n[a] - 1) as f64);
        Ok(Self { chart, n, h })
    }

    /// Same number of nodes on every axis.
    pub fn cube(chart: Chart, n: usize) -> Result<Self> {
        Self::new(chart, [n; 3])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest spacing, the `h` of all tolerance formulas.
    pub fn h_max(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    /// Row-major node index; axis 1 varies slowest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n[1] * self.n[2],
            1 => self.n[2],
            _ => 1,
        }
    }

    /// Chart coordinates of a node.
    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 3] {
        let ijk = self.ijk(idx);
        std::array::from_fn(|a| self.chart.ranges[a][0] + ijk[a] as f64 * self.h[a])
    }

    /// All node coordinates in storage order.
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    /// Faces a node lies on (empty for interior nodes, up to three at corners).
    pub fn boundary_faces(&self, idx: usize) -> Vec<Face> {
        let ijk = self.ijk(idx);
        let mut out = Vec::new();
        for a in 0..3 {
            if ijk[a] == 0 {
                out.push(Face { axis: a, high: false });
            }
            if ijk[a] == self.n[a] - 1 {
                out.push(Face { axis: a, high: true });
            }
        }
        out
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ijk = self.ijk(idx);
        (0..3).any(|a| ijk[a] == 0 || ijk[a] == self.n[a] - 1)
    }

    /// Per-node flags: `true` on the lattice faces.
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    /// One-dimensional trapezoid weight of lattice position `i` on `axis`.
    #[inline]
    pub fn trap_weight(&self, axis: usize, i: usize) -> f64 {
        if i == 0 || i == self.n[axis] - 1 {
            0.5 * self.h[axis]
        } else {
            self.h[axis]
        }
    }

    /// Product trapezoid weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let ijk = self.ijk(idx);
        (0..3).map(|a| self.trap_weight(a, ijk[a])).product()
    }

    /// Node indices on a face, in row-major order of the two tangent axes.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        let (b, c) = face.tangents();
        let fixed = if face.high { self.n[face.axis] - 1 } else { 0 };
        let mut out = Vec::with_capacity(self.n[b] * self.n[c]);
        for p in 0..self.n[b] {
            for q in 0..self.n[c] {
                let mut ijk = [0usize; 3];
                ijk[face.axis] = fixed;
                ijk[b] = p;
                ijk[c] = q;
                out.push(self.index(ijk[0], ijk[1], ijk[2]));
            }
        }
        out
    }

    /// Trapezoid area weights of the face nodes, aligned with [`Grid::face_nodes`].
    pub fn face_weights(&self, face: Face) -> Vec<f64> {
        let (b, c) = face.tangents();
        let mut out = Vec::with_capacity(self.n[b] * self.n[c]);
        for p in 0..self.n[b] {
            for q in 0..self.n[c] {
                out.push(self.trap_weight(b, p) * self.trap_weight(c, q));
            }
        }
        out
    }

    /// Build a scalar field from a closure of chart coordinates.
    pub fn scalar(&self, f: impl Fn([f64; 3]) -> f64) -> SampledField {
        SampledField {
            shape: vec![],
            resolution: self.n,
            values: (0..self.len()).map(|i| f(self.coord(i))).collect(),
        }
    }

    /// Build a field with `shape` from a closure filling the components of each node.
    pub fn field(&self, shape: &[usize], f: impl Fn([f64; 3], &mut [f64])) -> SampledField {
        let mut out = SampledField::zeros(self, shape);
        let nc = out.ncomp();
        for i in 0..self.len() {
            let x = self.coord(i);
            f(x, &mut out.values[i * nc..(i + 1) * nc]);
        }
        out
    }
}

/// Per-node component array; components of a node are contiguous (node-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    /// Index ranges, one entry per tensor index (each 3 for full tensors; empty for scalars).
    pub shape: Vec<usize>,
    pub resolution: [usize; 3],
    /// Row-major: node first, then components in row-major order of `shape`.
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn zeros(grid: &Grid, shape: &[usize]) -> Self {
        let nc: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            resolution: grid.n,
            values: vec![0.0; nc * grid.len()],
        }
    }

    /// Components per node.
    pub fn ncomp(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.ncomp().max(1)
    }

    #[inline]
    pub fn at(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.ncomp() + comp]
    }

    #[inline]
    pub fn node(&self, node: usize) -> &[f64] {
        let nc = self.ncomp();
        &self.values[node * nc..(node + 1) * nc]
    }

    #[inline]
    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let nc = self.ncomp();
        &mut self.values[node * nc..(node + 1) * nc]
    }

    /// One component as a scalar array over nodes.
    pub fn component(&self, comp: usize) -> Vec<f64> {
        let nc = self.ncomp();
        self.values.iter().skip(comp).step_by(nc).cloned().collect()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.resolution != grid.n || self.values.len() != self.ncomp() * grid.len() {
            return Err(Error::Shape(format!(
                "field with resolution {:?} and {} values does not fit grid {:?}",
                self.resolution,
                self.values.len(),
                grid.n
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute value over all nodes and components.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a·self + b·other`, componentwise.
    pub fn axpby(&self, a: f64, other: &SampledField, b: f64) -> Result<SampledField> {
        if self.shape != other.shape || self.values.len() != other.values.len() {
            return Err(Error::Shape("axpby operands differ in shape".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(SampledField { shape: self.shape.clone(), resolution: self.resolution, values })
    }

    /// Max-norm of `self − other`.
    pub fn max_diff(&self, other: &SampledField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SampledField = serde_json::from_str(s)?;
        let n: usize = f.resolution.iter().product();
        if f.values.len() != n * f.ncomp() {
            return Err(Error::Shape(format!(
                "{} values for {} nodes x {} components",
                f.values.len(),
                n,
                f.ncomp()
            )));
        }
        Ok(f)
    }

    /// Write a scalar field as CSV rows `x1,x2,x3,value`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, w: W) -> Result<()> {
        if self.ncomp() != 1 {
            return Err(Error::Shape("CSV export is for scalar fields".into()));
        }
        self.check_grid(grid)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x1", "x2", "x3", "value"])?;
        for i in 0..grid.len() {
            let x = grid.coord(i);
            wr.serialize((x[0], x[1], x[2], self.values[i]))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Second-order derivative of a strided line: central inside, one-sided at both ends.
#[inline]
fn diff_line(src: &[f64], dst: &mut [f64], base: usize, stride: usize, n: usize, nc: usize, inv2h: f64) {
    let at = |i: usize| base + i * stride * nc;
    // One-sided ends written in differences so constants differentiate to exactly zero.
    dst[at(0)] = (4.0 * (src[at(1)] - src[at(0)]) - (src[at(2)] - src[at(0)])) * inv2h;
    for i in 1..n - 1 {
        dst[at(i)] = (src[at(i + 1)] - src[at(i - 1)]) * inv2h;
    }
    dst[at(n - 1)] = (4.0 * (src[at(n - 1)] - src[at(n - 2)]) - (src[at(n - 1)] - src[at(n - 3)])) * inv2h;
}

/// Transpose of [`diff_line`]: accumulates `Σ_i D_{ij} u_i` into `dst[j]`.
fn diff_line_transpose(src: &[f64], dst: &mut [f64], base: usize, stride: usize, n: usize, nc: usize, inv2h: f64) {
    let at = |i: usize| base + i * stride * nc;
    for i in 0..n {
        dst[at(i)] = 0.0;
    }
    let u0 = src[at(0)] * inv2h;
    dst[at(0)] -= 3.0 * u0;
    dst[at(1)] += 4.0 * u0;
    dst[at(2)] -= u0;
    for i in 1..n - 1 {
        let u = src[at(i)] * inv2h;
        dst[at(i + 1)] += u;
        dst[at(i - 1)] -= u;
    }
    let un = src[at(n - 1)] * inv2h;
    dst[at(n - 1)] += 3.0 * un;
    dst[at(n - 2)] -= 4.0 * un;
    dst[at(n - 3)] += un;
}

/// `∂f/∂X^axis` (0-based axis) for every component of `f`.
///
/// Exact on polynomials of degree ≤ 2 in the chart coordinates.
pub fn partial_derivative(grid: &Grid, f: &SampledField, axis: usize) -> Result<SampledField> {
    if axis > 2 {
        return Err(Error::Config(format!("axis {} out of range 0..3", axis)));
    }
    f.check_grid(grid)?;
    let nc = f.ncomp();
    let mut out = SampledField { shape: f.shape.clone(), resolution: f.resolution, values: vec![0.0; f.values.len()] };
    partial_into(grid, &f.values, &mut out.values, nc, axis);
    Ok(out)
}

/// Raw-slice derivative used by the hot loops of the other modules.
pub(crate) fn partial_into(grid: &Grid, src: &[f64], dst: &mut [f64], nc: usize, axis: usize) {
    let n = grid.n[axis];
    let stride = grid.stride(axis);
    let inv2h = 0.5 / grid.h[axis];
    let (na, nb) = match axis {
        0 => (grid.n[1], grid.n[2]),
        1 => (grid.n[0], grid.n[2]),
        _ => (grid.n[0], grid.n[1]),
    };
    for p in 0..na {
        for q in 0..nb {
            let start = match axis {
                0 => grid.index(0, p, q),
                1 => grid.index(p, 0, q),
                _ => grid.index(p, q, 0),
            };
            for c in 0..nc {
                diff_line(src, dst, start * nc + c, stride, n, nc, inv2h);
            }
        }
    }
}

/// Transpose of the difference operator along `axis`: `(Dᵀu)_j = Σ_i D_{ij} u_i`.
///
/// Used to assemble forces as exact adjoints of discrete energies (summation by parts).
pub fn partial_transpose(grid: &Grid, src: &[f64], nc: usize, axis: usize) -> Vec<f64> {
    let mut dst = vec![0.0; src.len()];
    let n = grid.n[axis];
    let stride = grid.stride(axis);
    let inv2h = 0.5 / grid.h[axis];
    let (na, nb) = match axis {
        0 => (grid.n[1], grid.n[2]),
        1 => (grid.n[0], grid.n[2]),
        _ => (grid.n[0], grid.n[1]),
    };
    for p in 0..na {
        for q in 0..nb {
            let start = match axis {
                0 => grid.index(0, p, q),
                1 => grid.index(p, 0, q),
                _ => grid.index(p, q, 0),
            };
            for c in 0..nc {
                diff_line_transpose(src, &mut dst, start * nc + c, stride, n, nc, inv2h);
            }
        }
    }
    dst
}

/// Derivative of a plain scalar array along `axis`.
pub fn diff_scalar(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    partial_into(grid, f, &mut out, 1, axis);
    out
}

/// Trapezoidal quadrature of a scalar density array over the chart box.
pub fn quadrature(grid: &Grid, density: &[f64]) -> f64 {
    (0..grid.len()).map(|i| grid.weight(i) * density[i]).sum()
}

/// `∫ ω` for a top form given by its single chart component `ω_{123}`.
pub fn integrate_interior(grid: &Grid, omega: &SampledField) -> Result<f64> {
    omega.check_grid(grid)?;
    if omega.ncomp() != 1 {
        return Err(Error::Shape("integrate_interior expects a single top-form component".into()));
    }
    Ok(quadrature(grid, &omega.values))
}

/// Quadrature-weighted RMS of all components: `(∫|f|² / ∫1)^½`.
pub fn rms_norm(grid: &Grid, f: &SampledField) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for node in 0..f.nodes() {
        let w = grid.weight(node);
        num += w * f.node(node).iter().map(|x| x * x).sum::<f64>();
        den += w;
    }
    (num / den).sqrt()
}

/// Pullback of a 2-form to one face: the tangent component sampled on the face lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceDensity {
    pub face: Face,
    /// Component `β_{bc}` (tangent axes `b < c`) at the face nodes, row-major in `(b, c)`.
    pub values: Vec<f64>,
}

/// A 2-form restricted to the six boundary faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryForm {
    pub faces: Vec<FaceDensity>,
}

/// Sorted slot of the 2-form component `dX^b ∧ dX^c` in `[12, 13, 23]` storage.
fn two_form_slot(b: usize, c: usize) -> usize {
    match (b, c) {
        (0, 1) => 0,
        (0, 2) => 1,
        _ => 2,
    }
}

impl BoundaryForm {
    /// Boundary pullback `i*β` of a 2-form stored as components `[β₁₂, β₁₃, β₂₃]`.
    pub fn restrict(grid: &Grid, beta: &[f64]) -> Result<Self> {
        if beta.len() != 3 * grid.len() {
            return Err(Error::Shape("2-form needs 3 components per node".into()));
        }
        let faces = Face::ALL
            .iter()
            .map(|&face| {
                let (b, c) = face.tangents();
                let s = two_form_slot(b, c);
                FaceDensity { face, values: grid.face_nodes(face).iter().map(|&i| beta[3 * i + s]).collect() }
            })
            .collect();
        Ok(Self { faces })
    }
}

/// `∮ β` over the box boundary with outward-normal induced orientation.
pub fn integrate_boundary(grid: &Grid, beta: &BoundaryForm) -> Result<f64> {
    let mut total = 0.0;
    for face in Face::ALL {
        let fd = beta
            .faces
            .iter()
            .find(|f| f.face == face)
            .ok_or_else(|| Error::Shape(format!("missing data for face {:?}", face)))?;
        let (b, c) = face.tangents();
        if fd.values.len() != grid.n[b] * grid.n[c] {
            return Err(Error::Shape(format!("face {:?} has {} values", face, fd.values.len())));
        }
        let mut s = 0.0;
        for p in 0..grid.n[b] {
            for q in 0..grid.n[c] {
                s += grid.trap_weight(b, p) * grid.trap_weight(c, q) * fd.values[p * grid.n[c] + q];
            }
        }
        total += face.orientation() * s;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_cube_lattice() {
        let g = Grid::cube(Chart::unit_cube(), 5).unwrap();
        assert_eq!(g.len(), 125);
        assert_eq!(g.h, [0.25; 3]);
        assert_eq!(g.boundary_mask().iter().filter(|b| !**b).count(), 27);
    }

    #[test]
    fn anisotropic_box_spacing() {
        let c = Chart::new("box", [[0.0, 2.0], [0.0, 1.0], [0.0, 1.0]], CoordSystem::Cartesian).unwrap();
        let g = Grid::new(c, [9, 5, 5]).unwrap();
        assert_eq!(g.h, [0.25; 3]);
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(matches!(Grid::new(Chart::unit_cube(), [3, 5, 5]), Err(Error::Config(_))));
    }

    #[test]
    fn derivative_exact_on_quadratics() {
        let g = Grid::cube(Chart::unit_cube(), 6).unwrap();
        let f = g.scalar(|x| x[0]);
        let d = partial_derivative(&g, &f, 0).unwrap();
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let f = g.scalar(|x| x[0] * x[0] + 3.0 * x[1] * x[2]);
        let want = [g.scalar(|x| 2.0 * x[0]), g.scalar(|x| 3.0 * x[2]), g.scalar(|x| 3.0 * x[1])];
        for (axis, w) in want.iter().enumerate() {
            assert!(partial_derivative(&g, &f, axis).unwrap().max_diff(w) < 1e-12);
        }
    }

    #[test]
    fn derivative_order_two() {
        let err = |n| {
            let g = Grid::cube(Chart::unit_cube(), n).unwrap();
            let f = g.scalar(|x| (PI * x[0]).sin());
            let want = g.scalar(|x| PI * (PI * x[0]).cos());
            partial_derivative(&g, &f, 0).unwrap().max_diff(&want)
        };
        let ratio = err(17) / err(33);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {}", ratio);
    }

    #[test]
    fn axis_out_of_range() {
        let g = Grid::cube(Chart::unit_cube(), 5).unwrap();
        assert!(partial_derivative(&g, &g.scalar(|_| 1.0), 3).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::cube(Chart::unit_cube(), 9).unwrap();
        assert!((integrate_interior(&g, &g.scalar(|_| 1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((integrate_interior(&g, &g.scalar(|x| x[0])).unwrap() - 0.5).abs() < 1e-14);
        let e = |n| {
            let g = Grid::cube(Chart::unit_cube(), n).unwrap();
            (integrate_interior(&g, &g.scalar(|x| (PI * x[0]).sin())).unwrap() - 2.0 / PI).abs()
        };
        assert!((e(17) / e(33)).log2() > 1.9);
    }

    /// `ι_v (dX¹∧dX²∧dX³)` has components `[v³, −v², v¹]` in `[12, 13, 23]` order.
    fn flux_form(g: &Grid, v: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        g.nodes()
            .iter()
            .flat_map(|&x| {
                let v = v(x);
                [v[2], -v[1], v[0]]
            })
            .collect()
    }

    #[test]
    fn boundary_flux_matches_divergence() {
        let g = Grid::cube(Chart::unit_cube(), 7).unwrap();
        let b = BoundaryForm::restrict(&g, &flux_form(&g, |_| [1.0, 0.0, 0.0])).unwrap();
        assert!(integrate_boundary(&g, &b).unwrap().abs() < 1e-14);
        let b = BoundaryForm::restrict(&g, &flux_form(&g, |x| [x[0], 0.0, 0.0])).unwrap();
        assert!((integrate_boundary(&g, &b).unwrap() - 1.0).abs() < 1e-14);
        let b = BoundaryForm::restrict(&g, &flux_form(&g, |x| [0.0, x[1], 2.0 * x[2]])).unwrap();
        assert!((integrate_boundary(&g, &b).unwrap() - 3.0).abs() < 1e-14);
        let zero = BoundaryForm::restrict(&g, &vec![0.0; 3 * g.len()]).unwrap();
        assert_eq!(integrate_boundary(&g, &zero).unwrap(), 0.0);
    }

    #[test]
    fn missing_face_is_an_error() {
        let g = Grid::cube(Chart::unit_cube(), 5).unwrap();
        let mut b = BoundaryForm::restrict(&g, &vec![0.0; 3 * g.len()]).unwrap();
        b.faces.pop();
        assert!(integrate_boundary(&g, &b).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let g = Grid::cube(Chart::unit_cube(), 5).unwrap();
        let f = g.field(&[3], |x, out| out.copy_from_slice(&x));
        let back = SampledField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let mut buf = Vec::new();
        g.scalar(|x| x[0]).write_csv(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 126);
    }

    #[test]
    fn transpose_is_the_adjoint() {
        let g = Grid::new(Chart::unit_cube(), [5, 6, 7]).unwrap();
        let u: Vec<f64> = (0..2 * g.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let v: Vec<f64> = (0..2 * g.len()).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.2).collect();
        for axis in 0..3 {
            let mut dv = vec![0.0; v.len()];
            partial_into(&g, &v, &mut dv, 2, axis);
            let dtu = partial_transpose(&g, &u, 2, axis);
            let a: f64 = u.iter().zip(&dv).map(|(x, y)| x * y).sum();
            let b: f64 = dtu.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }
}
