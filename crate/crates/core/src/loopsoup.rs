//! Random-walk loop soups on the interior of a domain.
//!
//! A loop is a cyclic sequence of interior vertices together with a holding
//! time per visit. Nontrivial loops (at least one jump) are sampled from the
//! discrete loop measure, whose mass on unrooted loops of length `k` is
//! `tr(Pᵏ)/k`; each visit at `x` then holds for an independent
//! `Exp(deg(x)/s)` time, `s` being the local-time unit. Loops without jumps
//! are aggregated into a single length-1 loop per vertex carrying a
//! `Gamma(α, deg(x)/s)` local time. With `s = 1` the occupation field at
//! `α = ½` has the law of `½h²` for the free field `h` of [`crate::gff`].

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::unionfind::UnionFind;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::excursions::ExcursionEnsemble;
use crate::lattice::{DomainGraph, ScalarField, Support, VertexId};
use crate::rng::RngKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    /// Cyclic vertex sequence; `vertices[i]` jumps to `vertices[i + 1]` and
    /// the last vertex jumps back to the first.
    pub vertices: Vec<VertexId>,
    /// Holding time of each visit.
    pub holding: Vec<f64>,
}

impl DiscreteLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.vertices.len() == 1
    }

    /// Jumps as directed `(from, to)` pairs; empty for a trivial loop.
    pub fn jumps(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        let n = self.vertices.len();
        let k = if n > 1 { n } else { 0 };
        (0..k).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut holding = self.holding.clone();
        vertices.reverse();
        holding.reverse();
        DiscreteLoop { vertices, holding }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEnsemble {
    pub loops: Vec<DiscreteLoop>,
    pub alpha: f64,
    pub n_vertices: usize,
    /// Upper bound on the omitted mass of loops longer than the skeleton cap.
    pub truncation_bound: f64,
    pub rng: Option<RngKey>,
}

impl LoopEnsemble {
    pub fn empty(domain: &DomainGraph, alpha: f64) -> Self {
        LoopEnsemble {
            loops: Vec::new(),
            alpha,
            n_vertices: domain.n_vertices(),
            truncation_bound: 0.0,
            rng: None,
        }
    }

    pub fn nontrivial(&self) -> impl Iterator<Item = &DiscreteLoop> {
        self.loops.iter().filter(|l| !l.is_trivial())
    }

    /// Sorted multiset of directed jumps over all loops.
    pub fn edge_multiset(&self) -> Vec<(VertexId, VertexId)> {
        let mut e: Vec<_> = self.loops.iter().flat_map(|l| l.jumps()).collect();
        e.sort_unstable();
        e
    }

    /// Number of visits to each vertex by nontrivial loops.
    /// Jumps with their endpoints ordered, sorted.
    pub fn undirected_edge_multiset(&self) -> Vec<(VertexId, VertexId)> {
        let mut e: Vec<_> = self
            .loops
            .iter()
            .flat_map(|l| l.jumps())
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn passage_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_vertices];
        for l in self.nontrivial() {
            for &v in &l.vertices {
                c[v] += 1;
            }
        }
        c
    }
}

/// Sampler state shared by all draws on one domain: powers of the transition
/// matrix, loop-length masses and holding-time laws.
#[derive(Debug, Clone)]
pub struct LoopSoupSampler {
    alpha: f64,
    k_max: usize,
    local_time_unit: f64,
    interior: Vec<VertexId>,
    /// Interior neighbors of each interior vertex, as interior indices.
    neighbors: Vec<Vec<usize>>,
    degree: Vec<f64>,
    n_vertices: usize,
    /// `powers[k] = Pᵏ` for `k = 0..=k_max`.
    powers: Vec<DMatrix<f64>>,
    length_dist: Option<WeightedIndex<f64>>,
    total_mass: f64,
    spectral_radius: f64,
    truncation_bound: f64,
}

/// Omitted intensity `α·Σ_{k>K} tr(Pᵏ)/k`, bounded through
/// `tr(Pᵏ) ≤ n·ρᵏ` by `α·n·ρ^{K+1}/(K(1−ρ))`.
fn tail_bound(alpha: f64, n: usize, rho: f64, k_max: usize) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    alpha * n as f64 * rho.powi(k_max as i32 + 1) / (k_max as f64 * (1.0 - rho))
}

impl LoopSoupSampler {
    pub fn new(domain: &DomainGraph, alpha: f64, k_max: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if k_max < 2 {
            return Err(invalid("k_max", format!("must be ≥ 2, got {k_max}")));
        }
        let n = domain.n_interior();
        let p = transition_matrix(domain);
        let rho = spectral_radius(domain, &p);
        let mut powers = Vec::with_capacity(k_max + 1);
        powers.push(DMatrix::identity(n, n));
        for k in 1..=k_max {
            powers.push(&powers[k - 1] * &p);
        }
        let masses: Vec<f64> = (0..=k_max)
            .map(|k| if k < 2 { 0.0 } else { powers[k].trace() / k as f64 })
            .collect();
        let total_mass: f64 = masses.iter().sum();
        let length_dist = if total_mass > 0.0 {
            Some(WeightedIndex::new(&masses).expect("loop masses are finite"))
        } else {
            None
        };
        let neighbors = domain
            .interior()
            .iter()
            .map(|&v| {
                domain
                    .neighbors(v)
                    .iter()
                    .filter_map(|&w| domain.interior_index(w))
                    .collect()
            })
            .collect();
        let truncation_bound = tail_bound(alpha, n, rho, k_max);
        Ok(LoopSoupSampler {
            alpha,
            k_max,
            local_time_unit: 1.0,
            interior: domain.interior().to_vec(),
            neighbors,
            degree: domain.interior().iter().map(|&v| domain.degree(v) as f64).collect(),
            n_vertices: domain.n_vertices(),
            powers,
            length_dist,
            total_mass,
            spectral_radius: rho,
            truncation_bound,
        })
    }

    /// Picks the smallest skeleton cap whose tail bound is below `tolerance`.
    pub fn with_tolerance(domain: &DomainGraph, alpha: f64, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(invalid("tolerance", "must be > 0"));
        }
        let rho = spectral_radius(domain, &transition_matrix(domain));
        let mut k = 2;
        while tail_bound(alpha, domain.n_interior(), rho, k) > tolerance && k < 10_000 {
            k += 1;
        }
        Self::new(domain, alpha, k)
    }

    pub fn with_local_time_unit(mut self, unit: f64) -> Self {
        assert!(unit > 0.0);
        self.local_time_unit = unit;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// `Σ_{2≤k≤K} tr(Pᵏ)/k`.
    pub fn skeleton_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn truncation_bound(&self) -> f64 {
        self.truncation_bound
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LoopEnsemble {
        let mut loops = Vec::new();
        if let Some(dist) = &self.length_dist {
            let count = poisson(rng, self.alpha * self.total_mass);
            for _ in 0..count {
                let k = dist.sample(rng);
                loops.push(self.sample_loop(rng, k));
            }
        }
        for (i, &v) in self.interior.iter().enumerate() {
            let rate = self.degree[i] / self.local_time_unit;
            let t: f64 = Gamma::new(self.alpha, 1.0 / rate).unwrap().sample(rng);
            if t > 0.0 {
                loops.push(DiscreteLoop {
                    vertices: vec![v],
                    holding: vec![t],
                });
            }
        }
        LoopEnsemble {
            loops,
            alpha: self.alpha,
            n_vertices: self.n_vertices,
            truncation_bound: self.truncation_bound,
            rng: None,
        }
    }

    fn sample_loop<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> DiscreteLoop {
        let pk = &self.powers[k];
        let root_weights: Vec<f64> = (0..pk.nrows()).map(|i| pk[(i, i)]).collect();
        let root = WeightedIndex::new(&root_weights).unwrap().sample(rng);
        let mut path = Vec::with_capacity(k);
        let mut y = root;
        for r in (1..=k).rev() {
            path.push(y);
            // P(y, z) = 1/deg(y) is constant in z, so the bridge weight is
            // the remaining return probability alone.
            let next = &self.neighbors[y];
            let w: Vec<f64> = next.iter().map(|&z| self.powers[r - 1][(z, root)]).collect();
            y = next[WeightedIndex::new(&w).unwrap().sample(rng)];
        }
        debug_assert_eq!(y, root);
        let vertices: Vec<_> = path.iter().map(|&i| self.interior[i]).collect();
        let holding = path
            .iter()
            .map(|&i| Exp::new(self.degree[i] / self.local_time_unit).unwrap().sample(rng))
            .collect();
        DiscreteLoop { vertices, holding }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).unwrap().sample(rng) as u64
    }
}

/// Killed-walk transition matrix on the interior, `P(x, y) = 1/deg(x)`.
pub fn transition_matrix(domain: &DomainGraph) -> DMatrix<f64> {
    let n = domain.n_interior();
    let mut p = DMatrix::zeros(n, n);
    for (i, &v) in domain.interior().iter().enumerate() {
        let d = domain.degree(v) as f64;
        for &w in domain.neighbors(v) {
            if let Some(j) = domain.interior_index(w) {
                p[(i, j)] = 1.0 / d;
            }
        }
    }
    p
}

/// Spectral radius of `P`, through the symmetric matrix `D^{½} P D^{−½}`.
fn spectral_radius(domain: &DomainGraph, p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    if n == 0 {
        return 0.0;
    }
    let d: Vec<f64> = domain
        .interior()
        .iter()
        .map(|&v| (domain.degree(v) as f64).sqrt())
        .collect();
    let s = DMatrix::from_fn(n, n, |i, j| d[i] * p[(i, j)] / d[j]);
    SymmetricEigen::new(s).eigenvalues.amax()
}

pub fn sample_loopsoup<R: Rng + ?Sized>(
    domain: &DomainGraph,
    alpha: f64,
    k_max: usize,
    rng: &mut R,
) -> Result<LoopEnsemble> {
    Ok(LoopSoupSampler::new(domain, alpha, k_max)?.sample(rng))
}

/// Total holding time per vertex. Each vertex sums its holding times in
/// increasing order, so the result depends only on the multiset of (vertex,
/// holding) pairs and not on how they are grouped into loops.
pub fn occupation_field(domain: &DomainGraph, ensemble: &LoopEnsemble) -> ScalarField {
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); domain.n_vertices()];
    for l in &ensemble.loops {
        for (&v, &t) in l.vertices.iter().zip(&l.holding) {
            times[v].push(t);
        }
    }
    let mut f = ScalarField::zeros(domain, Support::Interior);
    for (v, ts) in times.iter_mut().enumerate() {
        if !ts.is_empty() {
            ts.sort_by(f64::total_cmp);
            f.set(v, ts.iter().sum());
        }
    }
    f
}

/// Cluster id per vertex; `None` for unvisited vertices. Ids are numbered in
/// order of each cluster's smallest vertex, so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub cluster_of: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl ClusterPartition {
    fn from_union_find(uf: &UnionFind<usize>, visited: &[bool]) -> Self {
        let mut ids = BTreeMap::new();
        let cluster_of = visited
            .iter()
            .enumerate()
            .map(|(v, &seen)| {
                seen.then(|| {
                    let root = uf.find(v);
                    let next = ids.len();
                    *ids.entry(root).or_insert(next)
                })
            })
            .collect();
        ClusterPartition {
            cluster_of,
            n_clusters: ids.len(),
        }
    }

    pub fn same_cluster(&self, a: VertexId, b: VertexId) -> bool {
        matches!((self.cluster_of[a], self.cluster_of[b]), (Some(x), Some(y)) if x == y)
    }

    /// Whether some cluster meets both vertex sets.
    pub fn connects(&self, a: &[VertexId], b: &[VertexId]) -> bool {
        let left: HashSet<usize> = a.iter().filter_map(|&v| self.cluster_of[v]).collect();
        b.iter().any(|&v| self.cluster_of[v].is_some_and(|c| left.contains(&c)))
    }
}

fn union_path(uf: &mut UnionFind<usize>, visited: &mut [bool], path: &[VertexId]) {
    for &v in path {
        visited[v] = true;
    }
    for w in path.windows(2) {
        uf.union(w[0], w[1]);
    }
}

/// Transitive closure of vertex sharing among loops and excursions.
/// Excursions contribute their boundary endpoints as well.
pub fn clusters(loops: &LoopEnsemble, excursions: Option<&ExcursionEnsemble>) -> ClusterPartition {
    let n = loops.n_vertices;
    let mut uf = UnionFind::new(n);
    let mut visited = vec![false; n];
    for l in &loops.loops {
        union_path(&mut uf, &mut visited, &l.vertices);
    }
    if let Some(ex) = excursions {
        for e in &ex.excursions {
            union_path(&mut uf, &mut visited, &e.path);
        }
    }
    ClusterPartition::from_union_find(&uf, &visited)
}

/// Clusters of the cable-graph (metric graph) version of the configuration.
///
/// Every edge crossed by some loop or excursion is open. An edge `{x, y}`
/// that no path crosses is still covered on the cable graph with probability
/// `1 − exp(−2√(ℓ_x ℓ_y))`, `ℓ` being the total occupation, by loops and
/// excursion pieces that stay inside the edge. `boundary_local_time` gives
/// `ℓ` at boundary vertices (zero where nothing touches the boundary); the
/// interior occupation is computed from the ensembles. Vertices with zero
/// occupation belong to no cluster.
pub fn cable_clusters<R: Rng + ?Sized>(
    domain: &DomainGraph,
    loops: &LoopEnsemble,
    excursions: Option<&ExcursionEnsemble>,
    boundary_local_time: &ScalarField,
    rng: &mut R,
) -> ClusterPartition {
    let n = domain.n_vertices();
    let mut ell = occupation_field(domain, loops);
    let mut crossed = HashSet::new();
    for l in &loops.loops {
        for (a, b) in l.jumps() {
            crossed.insert((a.min(b), a.max(b)));
        }
    }
    if let Some(ex) = excursions {
        for e in &ex.excursions {
            for w in e.path.windows(2) {
                crossed.insert((w[0].min(w[1]), w[0].max(w[1])));
            }
            for (&v, &t) in e.path[1..e.path.len() - 1].iter().zip(&e.holding) {
                ell.add_at(v, t);
            }
        }
    }
    for &b in domain.boundary() {
        ell.set(b, boundary_local_time.get(b));
    }
    let mut uf = UnionFind::new(n);
    let visited: Vec<bool> = (0..n).map(|v| ell.get(v) > 0.0).collect();
    for &(x, y) in domain.edges() {
        let open = crossed.contains(&(x, y)) || {
            let p_closed = (-2.0 * (ell.get(x) * ell.get(y)).sqrt()).exp();
            // Always draw so that the stream position is independent of the
            // crossed set.
            rng.random::<f64>() >= p_closed
        };
        if open {
            uf.union(x, y);
        }
    }
    ClusterPartition::from_union_find(&uf, &visited)
}

/// How passages at the rewired vertex are re-paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewireMode {
    /// Uniform re-pairing of (incoming, outgoing) passage ends; loops keep
    /// their orientation.
    #[default]
    Oriented,
    /// Uniform perfect matching of all edge ends at the vertex, reversing
    /// strands as needed; each resulting loop gets a fresh random
    /// orientation.
    Unoriented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewireOutcome {
    /// Rewired vertex, or `None` when no vertex has two passages.
    pub vertex: Option<VertexId>,
    pub loops_before: usize,
    pub loops_after: usize,
}

/// A maximal piece of a loop between two consecutive visits to the rewired
/// vertex `v`: it leaves `v` along `vertices[0]` and arrives back at `v` after
/// `vertices.last()`. `arrival_holding` is the holding time at `v` of the
/// visit it arrives at.
struct Strand {
    vertices: Vec<VertexId>,
    holding: Vec<f64>,
    arrival_holding: f64,
}

/// One step of the rewiring chain: picks a vertex uniformly among those with
/// at least two passages by nontrivial loops and re-pairs its passages
/// uniformly. Jumps, local times and clusters are unchanged.
pub fn rewire_step<R: Rng + ?Sized>(ensemble: &mut LoopEnsemble, mode: RewireMode, rng: &mut R) -> RewireOutcome {
    let counts = ensemble.passage_counts();
    let candidates: Vec<VertexId> = (0..counts.len()).filter(|&v| counts[v] >= 2).collect();
    let before = ensemble.nontrivial().count();
    let Some(&v) = candidates.as_slice().choose(rng) else {
        return RewireOutcome {
            vertex: None,
            loops_before: before,
            loops_after: before,
        };
    };

    let mut strands = Vec::new();
    let mut kept = Vec::with_capacity(ensemble.loops.len());
    for l in ensemble.loops.drain(..) {
        if l.is_trivial() || !l.vertices.contains(&v) {
            kept.push(l);
            continue;
        }
        let k = l.len();
        let visits: Vec<usize> = (0..k).filter(|&i| l.vertices[i] == v).collect();
        for (t, &start) in visits.iter().enumerate() {
            let end = if t + 1 < visits.len() {
                visits[t + 1]
            } else {
                visits[0] + k
            };
            let idx = (start + 1..end).map(|i| i % k);
            strands.push(Strand {
                vertices: idx.clone().map(|i| l.vertices[i]).collect(),
                holding: idx.map(|i| l.holding[i]).collect(),
                arrival_holding: l.holding[end % k],
            });
        }
    }

    let new_loops = match mode {
        RewireMode::Oriented => repair_oriented(v, strands, rng),
        RewireMode::Unoriented => repair_unoriented(v, strands, rng),
    };
    kept.extend(new_loops);
    ensemble.loops = kept;
    let loops_after = ensemble.nontrivial().count();
    RewireOutcome {
        vertex: Some(v),
        loops_before: before,
        loops_after,
    }
}

/// After arriving through strand `i`, the walk departs along strand `σ(i)`.
fn repair_oriented<R: Rng + ?Sized>(v: VertexId, strands: Vec<Strand>, rng: &mut R) -> Vec<DiscreteLoop> {
    let n = strands.len();
    let mut sigma: Vec<usize> = (0..n).collect();
    sigma.shuffle(rng);
    let mut used = vec![false; n];
    let mut loops = Vec::new();
    for s0 in 0..n {
        if used[s0] {
            continue;
        }
        let mut l = DiscreteLoop {
            vertices: Vec::new(),
            holding: Vec::new(),
        };
        let mut s = s0;
        while !used[s] {
            used[s] = true;
            let st = &strands[s];
            l.vertices.extend(&st.vertices);
            l.holding.extend(&st.holding);
            l.vertices.push(v);
            l.holding.push(st.arrival_holding);
            s = sigma[s];
        }
        // Start the loop at its first visit to v, like the input strands.
        l.vertices.rotate_right(1);
        l.holding.rotate_right(1);
        loops.push(l);
    }
    loops
}

/// Edge end `2s` is the departure end of strand `s`, `2s + 1` its arrival
/// end. A uniform perfect matching of the ends reconnects the strands.
fn repair_unoriented<R: Rng + ?Sized>(v: VertexId, strands: Vec<Strand>, rng: &mut R) -> Vec<DiscreteLoop> {
    let n = strands.len();
    let mut ends: Vec<usize> = (0..2 * n).collect();
    ends.shuffle(rng);
    let mut partner = vec![0; 2 * n];
    for pair in ends.chunks(2) {
        partner[pair[0]] = pair[1];
        partner[pair[1]] = pair[0];
    }
    // Holding times at v are exchangeable; hand them out in strand order.
    let mut holdings = strands.iter().map(|s| s.arrival_holding);
    let mut used = vec![false; n];
    let mut loops = Vec::new();
    for s0 in 0..n {
        if used[s0] {
            continue;
        }
        let mut l = DiscreteLoop {
            vertices: Vec::new(),
            holding: Vec::new(),
        };
        // Enter strand s0 through its departure end; the cycle closes when the
        // matching leads back to that end.
        let mut end = 2 * s0;
        loop {
            let st = &strands[end / 2];
            used[end / 2] = true;
            if end % 2 == 0 {
                l.vertices.extend(&st.vertices);
                l.holding.extend(&st.holding);
            } else {
                l.vertices.extend(st.vertices.iter().rev());
                l.holding.extend(st.holding.iter().rev());
            }
            l.vertices.push(v);
            l.holding.push(holdings.next().expect("one holding time per visit"));
            end = partner[end ^ 1];
            if end == 2 * s0 {
                break;
            }
        }
        l.vertices.rotate_right(1);
        l.holding.rotate_right(1);
        if rng.random::<bool>() {
            l = l.reversed();
        }
        loops.push(l);
    }
    loops
}

/// A piece of a loop between two consecutive visits to the marked set `S`,
/// endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPiece {
    pub path: Vec<VertexId>,
    /// Holding times of every visit except the final endpoint (which belongs
    /// to the next piece).
    pub holding: Vec<f64>,
    pub loop_index: usize,
    pub piece_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub pieces: Vec<LoopPiece>,
    /// Loops that avoid `S`, with their index in the original ensemble.
    pub untouched: Vec<(usize, DiscreteLoop)>,
    /// Rotation applied to each cut loop so that it starts at an `S` visit.
    offsets: BTreeMap<usize, usize>,
    alpha: f64,
    n_vertices: usize,
    truncation_bound: f64,
    rng: Option<RngKey>,
}

/// Cuts every loop that visits `marked` into its `S`-to-`S` pieces.
pub fn decompose_boundary_loops(ensemble: &LoopEnsemble, marked: &[VertexId]) -> Decomposition {
    let s: HashSet<VertexId> = marked.iter().copied().collect();
    let mut pieces = Vec::new();
    let mut untouched = Vec::new();
    let mut offsets = BTreeMap::new();
    for (li, l) in ensemble.loops.iter().enumerate() {
        let hits: Vec<usize> = (0..l.len()).filter(|&i| s.contains(&l.vertices[i])).collect();
        if hits.is_empty() {
            untouched.push((li, l.clone()));
            continue;
        }
        let k = l.len();
        offsets.insert(li, hits[0]);
        for (t, &start) in hits.iter().enumerate() {
            let end = if t + 1 < hits.len() { hits[t + 1] } else { hits[0] + k };
            pieces.push(LoopPiece {
                path: (start..=end).map(|i| l.vertices[i % k]).collect(),
                holding: (start..end).map(|i| l.holding[i % k]).collect(),
                loop_index: li,
                piece_index: t,
            });
        }
    }
    Decomposition {
        pieces,
        untouched,
        offsets,
        alpha: ensemble.alpha,
        n_vertices: ensemble.n_vertices,
        truncation_bound: ensemble.truncation_bound,
        rng: ensemble.rng,
    }
}

/// Inverse of [`decompose_boundary_loops`].
pub fn reassemble(decomposition: &Decomposition) -> LoopEnsemble {
    let mut by_loop: BTreeMap<usize, Vec<&LoopPiece>> = BTreeMap::new();
    for p in &decomposition.pieces {
        by_loop.entry(p.loop_index).or_default().push(p);
    }
    let mut indexed: Vec<(usize, DiscreteLoop)> = decomposition.untouched.clone();
    for (li, mut ps) in by_loop {
        ps.sort_by_key(|p| p.piece_index);
        let mut l = DiscreteLoop {
            vertices: Vec::new(),
            holding: Vec::new(),
        };
        for p in ps {
            l.vertices.extend(&p.path[..p.path.len() - 1]);
            l.holding.extend(&p.holding);
        }
        let off = decomposition.offsets[&li];
        l.vertices.rotate_right(off);
        l.holding.rotate_right(off);
        indexed.push((li, l));
    }
    indexed.sort_by_key(|(i, _)| *i);
    LoopEnsemble {
        loops: indexed.into_iter().map(|(_, l)| l).collect(),
        alpha: decomposition.alpha,
        n_vertices: decomposition.n_vertices,
        truncation_bound: decomposition.truncation_bound,
        rng: decomposition.rng,
    }
}

/// Line-based text form: a header, then one loop per line as
/// `v₀ v₁ … | t₀ t₁ …`. Floats use the shortest round-trip representation.
pub fn write_loops(ensemble: &LoopEnsemble) -> String {
    let mut out = format!(
        "# loops alpha={} vertices={} truncation={}\n",
        ensemble.alpha, ensemble.n_vertices, ensemble.truncation_bound
    );
    for l in &ensemble.loops {
        write_path_line(&mut out, &l.vertices, &l.holding);
    }
    out
}

pub(crate) fn write_path_line(out: &mut String, vertices: &[VertexId], holding: &[f64]) {
    let vs: Vec<String> = vertices.iter().map(|v| v.to_string()).collect();
    let ts: Vec<String> = holding.iter().map(|t| format!("{t:?}")).collect();
    writeln!(out, "{} | {}", vs.join(" "), ts.join(" ")).unwrap();
}

pub(crate) fn parse_path_line(line: &str) -> Result<(Vec<VertexId>, Vec<f64>)> {
    let bad = |what: &str| Error::InvalidDomain(format!("malformed path line ({what}): {line}"));
    let (vs, ts) = line.split_once('|').ok_or_else(|| bad("missing `|`"))?;
    let vertices = vs
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("vertex")))
        .collect::<Result<Vec<_>>>()?;
    let holding = ts
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("holding time")))
        .collect::<Result<Vec<_>>>()?;
    Ok((vertices, holding))
}

pub(crate) fn parse_header<'a>(line: &'a str, tag: &str) -> Result<BTreeMap<&'a str, &'a str>> {
    let rest = line
        .strip_prefix("# ")
        .and_then(|r| r.strip_prefix(tag))
        .ok_or_else(|| Error::InvalidDomain(format!("expected `# {tag}` header, got: {line}")))?;
    Ok(rest.split_whitespace().filter_map(|kv| kv.split_once('=')).collect())
}

pub fn read_loops(text: &str) -> Result<LoopEnsemble> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().unwrap_or(""), "loops")?;
    let field = |k: &str| {
        header
            .get(k)
            .ok_or_else(|| Error::InvalidDomain(format!("header lacks `{k}`")))
    };
    let num_err = |k: &str| Error::InvalidDomain(format!("bad header value for `{k}`"));
    let alpha = field("alpha")?.parse().map_err(|_| num_err("alpha"))?;
    let n_vertices = field("vertices")?.parse().map_err(|_| num_err("vertices"))?;
    let truncation_bound = field("truncation")?.parse().map_err(|_| num_err("truncation"))?;
    let mut loops = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (vertices, holding) = parse_path_line(line)?;
        if vertices.is_empty() || vertices.len() != holding.len() {
            return Err(Error::InvalidDomain(format!(
                "loop needs one holding time per visit: {line}"
            )));
        }
        loops.push(DiscreteLoop { vertices, holding });
    }
    Ok(LoopEnsemble {
        loops,
        alpha,
        n_vertices,
        truncation_bound,
        rng: None,
    })
}
