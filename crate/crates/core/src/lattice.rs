//! Finite graph domains and their linear algebra: Green operators, harmonic
//! extensions, boundary excursion kernels and Dirichlet forms.
//!
//! Conventions used throughout the crate:
//!
//! * every edge has unit conductance and the Laplacian is
//!   `Δf(x) = Σ_{y∼x} (f(y) − f(x))`;
//! * boundary vertices are absorbing, so operators indexed by the interior
//!   carry Dirichlet (zero) boundary conditions;
//! * the excursion kernel gives the step from a boundary vertex into the
//!   interior weight one, so `K(a, b) = Σ_{x∼a} P_x[exit at b]`.
//!
//! Matrices are dense and factorized directly, which is fine up to roughly
//! `10⁴` interior vertices.

use std::collections::HashSet;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type VertexId = usize;

/// Whether a field is meaningful on the interior only or on every vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Interior,
    All,
}

/// A real value per vertex of a domain.
///
/// Values are stored for every vertex; for interior-supported fields the
/// boundary entries are zero and carry no meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    values: Vec<f64>,
    support: Support,
}

impl ScalarField {
    pub fn zeros(domain: &DomainGraph, support: Support) -> Self {
        ScalarField {
            values: vec![0.0; domain.n_vertices()],
            support,
        }
    }

    /// Constant `c` on the support (boundary entries stay zero for interior
    /// fields).
    pub fn constant(domain: &DomainGraph, support: Support, c: f64) -> Self {
        Self::from_fn(domain, support, |_| c)
    }

    pub fn from_fn(domain: &DomainGraph, support: Support, f: impl Fn(VertexId) -> f64) -> Self {
        let values = (0..domain.n_vertices())
            .map(|v| {
                if support == Support::All || domain.is_interior(v) {
                    f(v)
                } else {
                    0.0
                }
            })
            .collect();
        ScalarField { values, support }
    }

    pub fn from_values(domain: &DomainGraph, support: Support, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.n_vertices() {
            return Err(Error::FieldLength {
                expected: domain.n_vertices(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().position(|x| !x.is_finite()) {
            return Err(invalid("field", format!("non-finite value at vertex {v}")));
        }
        let mut field = ScalarField { values, support };
        if support == Support::Interior {
            for &b in domain.boundary() {
                field.values[b] = 0.0;
            }
        }
        Ok(field)
    }

    /// Interior field built from a vector in interior order.
    pub fn from_interior(domain: &DomainGraph, interior: &DVector<f64>) -> Self {
        let mut values = vec![0.0; domain.n_vertices()];
        for (i, &v) in domain.interior().iter().enumerate() {
            values[v] = interior[i];
        }
        ScalarField {
            values,
            support: Support::Interior,
        }
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    pub fn set(&mut self, v: VertexId, value: f64) {
        self.values[v] = value;
    }

    pub fn add_at(&mut self, v: VertexId, value: f64) {
        self.values[v] += value;
    }

    /// Values on the interior, in interior order.
    pub fn interior_vector(&self, domain: &DomainGraph) -> DVector<f64> {
        DVector::from_iterator(
            domain.interior().len(),
            domain.interior().iter().map(|&v| self.values[v]),
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        ScalarField {
            values: self.values.iter().map(|x| c * x).collect(),
            support: self.support,
        }
    }

    /// Pointwise `a·self + b·other`; the support is the wider of the two.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Self {
        let support = if self.support == Support::All || other.support == Support::All {
            Support::All
        } else {
            Support::Interior
        };
        ScalarField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            support,
        }
    }

    /// `Σ_x self(x)·other(x)` over interior vertices.
    pub fn interior_dot(&self, domain: &DomainGraph, other: &ScalarField) -> f64 {
        domain
            .interior()
            .iter()
            .map(|&v| self.values[v] * other.values[v])
            .sum()
    }
}

/// A finite graph with an absorbing boundary and optional labeled boundary
/// arcs.
///
/// Arc indices are 0-based here; user-facing descriptions such as
/// [`ArcSegment`] and config files number arcs from 1.
#[derive(Debug, Clone)]
pub struct DomainGraph {
    is_interior: Vec<bool>,
    interior: Vec<VertexId>,
    boundary: Vec<VertexId>,
    interior_pos: Vec<usize>,
    boundary_pos: Vec<usize>,
    adjacency: Vec<Vec<VertexId>>,
    edges: Vec<(VertexId, VertexId)>,
    arc_of: Vec<Option<usize>>,
    n_arcs: usize,
    coords: Option<Vec<(i64, i64)>>,
    laplacian_chol: OnceLock<Option<Cholesky<f64, Dyn>>>,
    green: OnceLock<Option<GreenOperator>>,
}

const NONE: usize = usize::MAX;

impl DomainGraph {
    /// Validates and builds a domain.
    ///
    /// `arcs[v]` is the 0-based arc index of boundary vertex `v`, if any.
    pub fn new(is_interior: Vec<bool>, edges: Vec<(VertexId, VertexId)>, arcs: Vec<Option<usize>>) -> Result<Self> {
        let n = is_interior.len();
        if arcs.len() != n {
            return Err(Error::InvalidDomain(format!(
                "arc label vector has {} entries, expected {n}",
                arcs.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(x, y) in &edges {
            if x >= n || y >= n {
                return Err(Error::InvalidDomain(format!(
                    "edge ({x}, {y}) references a vertex outside 0..{n}"
                )));
            }
            if x == y {
                return Err(Error::InvalidDomain(format!("self-loop at vertex {x}")));
            }
            let e = (x.min(y), x.max(y));
            if !seen.insert(e) {
                return Err(Error::InvalidDomain(format!("duplicate edge {e:?}")));
            }
            if !is_interior[x] && !is_interior[y] {
                return Err(Error::InvalidDomain(format!("edge {e:?} joins two boundary vertices")));
            }
            adjacency[x].push(y);
            adjacency[y].push(x);
            normalized.push(e);
        }
        let interior: Vec<_> = (0..n).filter(|&v| is_interior[v]).collect();
        let boundary: Vec<_> = (0..n).filter(|&v| !is_interior[v]).collect();
        if let Some(&v) = interior.iter().find(|&&v| adjacency[v].is_empty()) {
            return Err(Error::InvalidDomain(format!("interior vertex {v} has no neighbors")));
        }
        let mut used = Vec::new();
        for (v, arc) in arcs.iter().enumerate() {
            if let Some(a) = *arc {
                if is_interior[v] {
                    return Err(Error::InvalidDomain(format!(
                        "interior vertex {v} carries arc label {}",
                        a + 1
                    )));
                }
                if used.len() <= a {
                    used.resize(a + 1, false);
                }
                used[a] = true;
            }
        }
        if let Some(gap) = used.iter().position(|u| !u) {
            return Err(Error::InvalidDomain(format!(
                "arc labels must be contiguous; arc {} is empty",
                gap + 1
            )));
        }
        let mut interior_pos = vec![NONE; n];
        for (i, &v) in interior.iter().enumerate() {
            interior_pos[v] = i;
        }
        let mut boundary_pos = vec![NONE; n];
        for (i, &v) in boundary.iter().enumerate() {
            boundary_pos[v] = i;
        }
        Ok(DomainGraph {
            is_interior,
            interior,
            boundary,
            interior_pos,
            boundary_pos,
            adjacency,
            edges: normalized,
            arc_of: arcs,
            n_arcs: used.len(),
            coords: None,
            laplacian_chol: OnceLock::new(),
            green: OnceLock::new(),
        })
    }

    pub fn with_coords(mut self, coords: Vec<(i64, i64)>) -> Self {
        assert_eq!(coords.len(), self.n_vertices());
        self.coords = Some(coords);
        self
    }

    /// Path graph `b₀ – x₁ – … – x_n – b₁` with the two end vertices as
    /// boundary, labeled as arcs 0 and 1 when `label_ends` is set.
    pub fn path(n_interior: usize, label_ends: bool) -> Result<Self> {
        let n = n_interior + 2;
        let mut is_interior = vec![true; n];
        is_interior[0] = false;
        is_interior[n - 1] = false;
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
        let mut arcs = vec![None; n];
        if label_ends {
            arcs[0] = Some(0);
            arcs[n - 1] = Some(1);
        }
        DomainGraph::new(is_interior, edges, arcs)
    }

    pub fn n_vertices(&self) -> usize {
        self.is_interior.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn interior(&self) -> &[VertexId] {
        &self.interior
    }

    pub fn boundary(&self) -> &[VertexId] {
        &self.boundary
    }

    pub fn is_interior(&self, v: VertexId) -> bool {
        self.is_interior[v]
    }

    /// Position of `v` in [`interior`](Self::interior), if interior.
    pub fn interior_index(&self, v: VertexId) -> Option<usize> {
        match self.interior_pos[v] {
            NONE => None,
            i => Some(i),
        }
    }

    pub fn boundary_index(&self, v: VertexId) -> Option<usize> {
        match self.boundary_pos[v] {
            NONE => None,
            i => Some(i),
        }
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v].len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn n_arcs(&self) -> usize {
        self.n_arcs
    }

    pub fn arc_of(&self, v: VertexId) -> Option<usize> {
        self.arc_of[v]
    }

    pub fn arc_vertices(&self, arc: usize) -> Vec<VertexId> {
        self.boundary
            .iter()
            .copied()
            .filter(|&v| self.arc_of[v] == Some(arc))
            .collect()
    }

    pub fn coords(&self, v: VertexId) -> Option<(i64, i64)> {
        self.coords.as_ref().map(|c| c[v])
    }

    /// `−Δ` restricted to the interior (Dirichlet boundary).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_interior();
        let mut l = DMatrix::zeros(n, n);
        for (i, &v) in self.interior.iter().enumerate() {
            l[(i, i)] = self.degree(v) as f64;
            for &w in &self.adjacency[v] {
                if let Some(j) = self.interior_index(w) {
                    l[(i, j)] -= 1.0;
                }
            }
        }
        l
    }

    fn laplacian_cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.laplacian_chol
            .get_or_init(|| Cholesky::new(self.laplacian()))
            .as_ref()
            .ok_or_else(|| {
                Error::Singular(
                    "Dirichlet Laplacian is not positive definite; \
                     some interior component does not reach the boundary"
                        .into(),
                )
            })
    }

    /// Interior vector `Σ_{a∼x, a∈∂} w(a)`: the boundary data seen by the
    /// Dirichlet problem.
    pub fn boundary_flux(&self, w: impl Fn(VertexId) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.n_interior(),
            self.interior.iter().map(|&x| {
                self.adjacency[x]
                    .iter()
                    .filter(|&&a| !self.is_interior[a])
                    .map(|&a| w(a))
                    .sum()
            }),
        )
    }

    /// Flux vector of the indicator of arc `arc`.
    pub fn arc_flux(&self, arc: usize) -> DVector<f64> {
        self.boundary_flux(|a| if self.arc_of[a] == Some(arc) { 1.0 } else { 0.0 })
    }

    /// Cached killing-free Green operator.
    pub fn green0(&self) -> Result<&GreenOperator> {
        self.green
            .get_or_init(|| green(self, &ScalarField::zeros(self, Support::Interior)).ok())
            .as_ref()
            .ok_or_else(|| Error::Singular("Dirichlet Laplacian is singular".into()))
    }

    pub(crate) fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.len() != self.n_vertices() {
            return Err(Error::FieldLength {
                expected: self.n_vertices(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// `((−Δ) + K)⁻¹` on the interior, with `K` the diagonal killing operator.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    matrix: DMatrix<f64>,
    killing: ScalarField,
    interior_pos: Vec<usize>,
}

impl GreenOperator {
    /// The matrix in interior order.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn killing(&self) -> &ScalarField {
        &self.killing
    }

    /// `G(x, y)` for interior vertex ids.
    pub fn at(&self, x: VertexId, y: VertexId) -> f64 {
        self.matrix[(self.interior_pos[x], self.interior_pos[y])]
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.matrix.diagonal()
    }

    /// `max |((−Δ) + K)·G − I|` entrywise.
    pub fn inverse_residual(&self, domain: &DomainGraph) -> f64 {
        let mut op = domain.laplacian();
        for (i, &v) in domain.interior().iter().enumerate() {
            op[(i, i)] += self.killing.get(v);
        }
        let prod = op * &self.matrix;
        let n = prod.nrows();
        (prod - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Writes the matrix as CSV rows labeled by interior vertex id.
    pub fn to_csv(&self, domain: &DomainGraph) -> String {
        let mut out = String::from("vertex");
        for v in domain.interior() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
        for (i, v) in domain.interior().iter().enumerate() {
            out.push_str(&v.to_string());
            for j in 0..self.matrix.ncols() {
                out.push_str(&format!(",{}", self.matrix[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

fn killed_operator(domain: &DomainGraph, killing: &ScalarField) -> Result<DMatrix<f64>> {
    domain.check_field(killing)?;
    let mut op = domain.laplacian();
    for (i, &v) in domain.interior().iter().enumerate() {
        let k = killing.get(v);
        if !(k >= 0.0) || !k.is_finite() {
            return Err(invalid(
                "killing",
                format!("rate at vertex {v} is {k}; must be finite and ≥ 0"),
            ));
        }
        op[(i, i)] += k;
    }
    Ok(op)
}

/// Green operator of the walk killed at rate `killing`.
pub fn green(domain: &DomainGraph, killing: &ScalarField) -> Result<GreenOperator> {
    let op = killed_operator(domain, killing)?;
    let chol = Cholesky::new(op).ok_or_else(|| Error::Singular("killed Laplacian is not positive definite".into()))?;
    let mut matrix = chol.inverse();
    // Cholesky inverses are symmetric up to rounding; make it exact.
    let n = matrix.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = s;
            matrix[(j, i)] = s;
        }
    }
    Ok(GreenOperator {
        matrix,
        killing: ScalarField::from_values(domain, Support::Interior, killing.values().to_vec())?,
        interior_pos: domain.interior_pos.clone(),
    })
}

/// `log det((−Δ) + K)`.
pub fn log_det_killed(domain: &DomainGraph, killing: &ScalarField) -> Result<f64> {
    let op = killed_operator(domain, killing)?;
    let chol = Cholesky::new(op).ok_or_else(|| Error::Singular("killed Laplacian is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Solves the Dirichlet problem with the given boundary values.
pub fn harmonic_extension(domain: &DomainGraph, boundary_values: &ScalarField) -> Result<ScalarField> {
    domain.check_field(boundary_values)?;
    let mut values = vec![0.0; domain.n_vertices()];
    for &b in domain.boundary() {
        values[b] = boundary_values.get(b);
    }
    if domain.n_interior() > 0 {
        let rhs = domain.boundary_flux(|a| boundary_values.get(a));
        let sol = domain.laplacian_cholesky()?.solve(&rhs);
        for (i, &v) in domain.interior().iter().enumerate() {
            values[v] = sol[i];
        }
    }
    ScalarField::from_values(domain, Support::All, values)
}

/// Harmonic extension of the indicator of the union of `arcs`.
pub fn arc_harmonic(domain: &DomainGraph, arcs: &[usize]) -> Result<ScalarField> {
    let bv = ScalarField::from_fn(domain, Support::All, |v| match domain.arc_of(v) {
        Some(a) if arcs.contains(&a) => 1.0,
        _ => 0.0,
    });
    harmonic_extension(domain, &bv)
}

/// `Σ_{edges {x,y}} (f(x) − f(y))(g(x) − g(y))`.
pub fn dirichlet_form(domain: &DomainGraph, f: &ScalarField, g: &ScalarField) -> f64 {
    domain
        .edges()
        .iter()
        .map(|&(x, y)| (f.get(x) - f.get(y)) * (g.get(x) - g.get(y)))
        .sum()
}

/// Boundary-to-boundary excursion kernel, optionally weighted by
/// `exp(−T_e(k))` for a killing rate `k`.
///
/// `K_k(a, b) = Σ_{x∼a, y∼b} G_k(x, y)`; with `k = 0` this is
/// `Σ_{x∼a} P_x[exit at b]`. The unoriented excursion measure between arcs
/// `i ≠ j` has mass `Σ_{a∈∂_i, b∈∂_j} K(a, b)`; within a single arc each
/// excursion is counted from both ends, so the mass is half the sum.
#[derive(Debug, Clone)]
pub struct ExcursionKernel {
    boundary: Vec<VertexId>,
    boundary_pos: Vec<usize>,
    arc_of: Vec<Option<usize>>,
    n_arcs: usize,
    /// `hitting[(i, b)] = Σ_{y∼b} G_k(x_i, y)`: for `k = 0`, the probability
    /// that the walk from interior vertex `x_i` exits at boundary vertex `b`.
    hitting: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl ExcursionKernel {
    pub fn new(domain: &DomainGraph) -> Result<Self> {
        Self::build(domain, domain.green0()?)
    }

    pub fn with_killing(domain: &DomainGraph, killing: &ScalarField) -> Result<Self> {
        Self::build(domain, &green(domain, killing)?)
    }

    fn build(domain: &DomainGraph, g: &GreenOperator) -> Result<Self> {
        let nb = domain.boundary().len();
        let ni = domain.n_interior();
        let mut flux = DMatrix::zeros(ni, nb);
        for (j, &b) in domain.boundary().iter().enumerate() {
            for &x in domain.neighbors(b) {
                if let Some(i) = domain.interior_index(x) {
                    flux[(i, j)] += 1.0;
                }
            }
        }
        let hitting = g.matrix() * &flux;
        let mut matrix = flux.transpose() * &hitting;
        for i in 0..nb {
            for j in 0..i {
                let s = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = s;
                matrix[(j, i)] = s;
            }
        }
        Ok(ExcursionKernel {
            boundary: domain.boundary().to_vec(),
            boundary_pos: domain.boundary_pos.clone(),
            arc_of: domain.arc_of.clone(),
            n_arcs: domain.n_arcs(),
            hitting,
            matrix,
        })
    }

    /// Full boundary × boundary matrix in [`DomainGraph::boundary`] order.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn at(&self, a: VertexId, b: VertexId) -> f64 {
        self.matrix[(self.boundary_pos[a], self.boundary_pos[b])]
    }

    /// Exit probability (or killed weight) from interior index `i` to boundary
    /// vertex `b`.
    pub fn hitting(&self, interior_idx: usize, b: VertexId) -> f64 {
        self.hitting[(interior_idx, self.boundary_pos[b])]
    }

    /// `|μ_{i,j}|` (or `μ_{i,j}(e^{−T_e(k)})` for a killed kernel).
    pub fn arc_mass(&self, i: usize, j: usize) -> f64 {
        let mut total = 0.0;
        for (p, &a) in self.boundary.iter().enumerate() {
            if self.arc_of[a] != Some(i) {
                continue;
            }
            for (q, &b) in self.boundary.iter().enumerate() {
                if self.arc_of[b] == Some(j) {
                    total += self.matrix[(p, q)];
                }
            }
        }
        if i == j {
            0.5 * total
        } else {
            total
        }
    }

    /// Symmetric matrix of arc masses, same-arc masses on the diagonal.
    pub fn arc_mass_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_arcs)
            .map(|i| (0..self.n_arcs).map(|j| self.arc_mass(i, j)).collect())
            .collect()
    }
}

pub fn excursion_kernel(domain: &DomainGraph) -> Result<ExcursionKernel> {
    ExcursionKernel::new(domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// Part of the boundary ring of a rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundarySegment {
    /// Positions `start..end` along a side, counted in increasing x (bottom,
    /// top) or increasing y (left, right). `None` means the whole side.
    Side { side: Side, range: Option<(usize, usize)> },
    /// Positions `start..end` along the counterclockwise ring that starts at
    /// the left end of the bottom side.
    Ring { start: usize, end: usize },
}

/// A boundary segment carrying a 1-based arc label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub arc: usize,
    pub segment: BoundarySegment,
}

impl ArcSegment {
    pub fn side(arc: usize, side: Side) -> Self {
        ArcSegment {
            arc,
            segment: BoundarySegment::Side { side, range: None },
        }
    }

    pub fn ring(arc: usize, start: usize, end: usize) -> Self {
        ArcSegment {
            arc,
            segment: BoundarySegment::Ring { start, end },
        }
    }
}

/// Splits the boundary ring of an `nx × ny` grid into `n` contiguous arcs of
/// near-equal length.
pub fn ring_arcs(nx: usize, ny: usize, n: usize) -> Vec<ArcSegment> {
    let len = 2 * (nx + ny);
    (0..n)
        .map(|k| ArcSegment::ring(k + 1, k * len / n, (k + 1) * len / n))
        .collect()
}

/// Rectangular grid with `nx × ny` interior vertices and the surrounding ring
/// of boundary vertices (ring corners are omitted: they would touch no
/// interior vertex).
///
/// Interior vertex `(i, j)` has id `j·nx + i`; boundary ids follow in
/// counterclockwise ring order starting at the left end of the bottom side.
pub fn build_rect_domain(nx: usize, ny: usize, arcs: &[ArcSegment]) -> Result<DomainGraph> {
    if nx == 0 || ny == 0 {
        return Err(invalid("nx/ny", format!("grid must be at least 1×1, got {nx}×{ny}")));
    }
    let n_int = nx * ny;
    let mut coords: Vec<(i64, i64)> = (0..n_int).map(|v| ((v % nx) as i64, (v / nx) as i64)).collect();
    let (nxi, nyi) = (nx as i64, ny as i64);
    coords.extend((0..nxi).map(|i| (i, -1)));
    coords.extend((0..nyi).map(|j| (nxi, j)));
    coords.extend((0..nxi).rev().map(|i| (i, nyi)));
    coords.extend((0..nyi).rev().map(|j| (-1, j)));
    let n = coords.len();
    let ring_len = n - n_int;

    let mut is_interior = vec![false; n];
    is_interior[..n_int].fill(true);
    let index_of = |x: i64, y: i64| -> Option<usize> {
        if (0..nxi).contains(&x) && (0..nyi).contains(&y) {
            return Some((y * nxi + x) as usize);
        }
        let ring_pos = if y == -1 && (0..nxi).contains(&x) {
            x
        } else if x == nxi && (0..nyi).contains(&y) {
            nxi + y
        } else if y == nyi && (0..nxi).contains(&x) {
            nxi + nyi + (nxi - 1 - x)
        } else if x == -1 && (0..nyi).contains(&y) {
            2 * nxi + nyi + (nyi - 1 - y)
        } else {
            return None;
        };
        Some(n_int + ring_pos as usize)
    };
    let mut edges = Vec::new();
    for v in 0..n_int {
        let (x, y) = coords[v];
        for (dx, dy) in [(1, 0), (0, 1)] {
            if let Some(w) = index_of(x + dx, y + dy) {
                if w < n_int {
                    edges.push((v, w));
                }
            }
        }
        for (dx, dy) in [(-1, 0), (0, -1)] {
            if let Some(w) = index_of(x + dx, y + dy) {
                if w >= n_int {
                    edges.push((v, w));
                }
            }
        }
        if x == nxi - 1 {
            edges.push((v, index_of(nxi, y).unwrap()));
        }
        if y == nyi - 1 {
            edges.push((v, index_of(x, nyi).unwrap()));
        }
    }

    let mut arc_labels: Vec<Option<usize>> = vec![None; n];
    for seg in arcs {
        if seg.arc == 0 {
            return Err(invalid("arc", "arc labels start at 1"));
        }
        let vertices: Vec<usize> = match seg.segment {
            BoundarySegment::Side { side, range } => {
                let side_len = match side {
                    Side::Bottom | Side::Top => nx,
                    Side::Left | Side::Right => ny,
                };
                let (s, e) = range.unwrap_or((0, side_len));
                if s >= e || e > side_len {
                    return Err(invalid(
                        "arc",
                        format!("range {s}..{e} is empty or exceeds side length {side_len}"),
                    ));
                }
                (s..e)
                    .map(|p| {
                        let p = p as i64;
                        match side {
                            Side::Bottom => index_of(p, -1),
                            Side::Top => index_of(p, nyi),
                            Side::Left => index_of(-1, p),
                            Side::Right => index_of(nxi, p),
                        }
                        .unwrap()
                    })
                    .collect()
            }
            BoundarySegment::Ring { start, end } => {
                if start >= end || end > ring_len {
                    return Err(invalid(
                        "arc",
                        format!("ring range {start}..{end} is empty or exceeds ring length {ring_len}"),
                    ));
                }
                (start..end).map(|p| n_int + p).collect()
            }
        };
        for v in vertices {
            if let Some(prev) = arc_labels[v] {
                return Err(Error::OverlappingArcs {
                    vertex: v,
                    first: prev + 1,
                    second: seg.arc,
                });
            }
            arc_labels[v] = Some(seg.arc - 1);
        }
    }
    Ok(DomainGraph::new(is_interior, edges, arc_labels)?.with_coords(coords))
}
