//! Poisson point processes of boundary-to-boundary excursions, optionally
//! conditioned on the parity event that every arc is hit by an even number of
//! cross-arc excursions.
//!
//! Counts `N_{i,j}` for distinct arcs are independent `Poisson(β|μ_{i,j}|)`;
//! same-arc counts `N_{i,i}` are `Poisson(β|μ_{i,i}|)`. Given its endpoints
//! `(a, b)`, an excursion's interior path is the walk from a neighbor of `a`
//! conditioned to exit at `b`, sampled exactly through the exit
//! probabilities `z ↦ P_z[exit at b]`.

use std::fmt::Write as _;

use log::warn;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::{Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{DomainGraph, ExcursionKernel, ScalarField, VertexId};
use crate::loopsoup::{parse_header, parse_path_line, poisson, write_path_line};
use crate::rng::RngKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    /// `a, x₁, …, x_m, b`: boundary start, interior visits, boundary end.
    pub path: Vec<VertexId>,
    /// Holding time of each interior visit `x₁ … x_m`.
    pub holding: Vec<f64>,
    /// 0-based arcs of the two endpoints, smaller first.
    pub arcs: (usize, usize),
}

impl Excursion {
    pub fn interior(&self) -> &[VertexId] {
        &self.path[1..self.path.len() - 1]
    }

    /// `T_e(k) = Σ_x k(x)·ℓ_x(e)`.
    pub fn occupation(&self, k: &ScalarField) -> f64 {
        self.interior()
            .iter()
            .zip(&self.holding)
            .map(|(&x, &t)| k.get(x) * t)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionEnsemble {
    pub excursions: Vec<Excursion>,
    /// Symmetric `n × n` count matrix; same-arc counts on the diagonal.
    pub counts: Vec<Vec<u64>>,
    pub beta: f64,
    pub rng: Option<RngKey>,
}

impl ExcursionEnsemble {
    pub fn empty(n_arcs: usize, beta: f64) -> Self {
        ExcursionEnsemble {
            excursions: Vec::new(),
            counts: vec![vec![0; n_arcs]; n_arcs],
            beta,
            rng: None,
        }
    }

    pub fn n_arcs(&self) -> usize {
        self.counts.len()
    }

    pub fn push(&mut self, e: Excursion) {
        let (i, j) = e.arcs;
        self.counts[i][j] += 1;
        if i != j {
            self.counts[j][i] += 1;
        }
        self.excursions.push(e);
    }

    pub fn extend(&mut self, other: ExcursionEnsemble) {
        for e in other.excursions {
            self.push(e);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityEvent {
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingCounts {
    pub pair_counts: Vec<Vec<u64>>,
    /// `N_i = Σ_{j≠i} N_{i,j}`.
    pub arc_counts: Vec<u64>,
    pub parity: ParityEvent,
}

pub fn crossing_counts(ensemble: &ExcursionEnsemble) -> CrossingCounts {
    let n = ensemble.n_arcs();
    let arc_counts: Vec<u64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| ensemble.counts[i][j]).sum())
        .collect();
    CrossingCounts {
        pair_counts: ensemble.counts.clone(),
        parity: ParityEvent {
            satisfied: arc_counts.iter().all(|c| c % 2 == 0),
        },
        arc_counts,
    }
}

/// `T_β(k) = Σ_e T_e(k)`.
pub fn occupation_functional(ensemble: &ExcursionEnsemble, k: &ScalarField) -> f64 {
    ensemble.excursions.iter().map(|e| e.occupation(k)).sum()
}

/// Which arc pairs a process includes (0-based arcs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    AllPairs,
    CrossArc,
    Pair(usize, usize),
}

impl Restriction {
    fn allows(self, i: usize, j: usize) -> bool {
        match self {
            Restriction::AllPairs => true,
            Restriction::CrossArc => i != j,
            Restriction::Pair(a, b) => (a.min(b), a.max(b)) == (i, j),
        }
    }
}

/// Endpoint law of one arc pair.
#[derive(Debug, Clone)]
struct PairLaw {
    arcs: (usize, usize),
    /// `|μ_{i,j}|`
    mass: f64,
    endpoints: Vec<(VertexId, VertexId)>,
    dist: Option<WeightedIndex<f64>>,
}

/// Precomputed kernel, exit probabilities and endpoint laws for one domain.
#[derive(Debug, Clone)]
pub struct ExcursionSampler {
    kernel: ExcursionKernel,
    /// Arc pairs `i ≤ j` in lexicographic order.
    pairs: Vec<PairLaw>,
    n_arcs: usize,
    /// Neighbors of every vertex.
    neighbors: Vec<Vec<VertexId>>,
    is_interior: Vec<bool>,
    interior_pos: Vec<Option<usize>>,
    degree: Vec<f64>,
    local_time_unit: f64,
}

impl ExcursionSampler {
    pub fn new(domain: &DomainGraph) -> Result<Self> {
        let kernel = ExcursionKernel::new(domain)?;
        let n_arcs = domain.n_arcs();
        let arc_vertices: Vec<Vec<VertexId>> = (0..n_arcs).map(|a| domain.arc_vertices(a)).collect();
        let mut pairs = Vec::new();
        for i in 0..n_arcs {
            for j in i..n_arcs {
                let mut endpoints = Vec::new();
                let mut weights = Vec::new();
                for &a in &arc_vertices[i] {
                    for &b in &arc_vertices[j] {
                        endpoints.push((a, b));
                        weights.push(kernel.at(a, b));
                    }
                }
                let total: f64 = weights.iter().sum();
                pairs.push(PairLaw {
                    arcs: (i, j),
                    mass: kernel.arc_mass(i, j),
                    endpoints,
                    dist: (total > 0.0).then(|| WeightedIndex::new(&weights).unwrap()),
                });
            }
        }
        let n = domain.n_vertices();
        Ok(ExcursionSampler {
            kernel,
            pairs,
            n_arcs,
            neighbors: (0..n).map(|v| domain.neighbors(v).to_vec()).collect(),
            is_interior: (0..n).map(|v| domain.is_interior(v)).collect(),
            interior_pos: (0..n).map(|v| domain.interior_index(v)).collect(),
            degree: (0..n).map(|v| domain.degree(v) as f64).collect(),
            local_time_unit: 1.0,
        })
    }

    pub fn with_local_time_unit(mut self, unit: f64) -> Self {
        assert!(unit > 0.0);
        self.local_time_unit = unit;
        self
    }

    pub fn n_arcs(&self) -> usize {
        self.n_arcs
    }

    pub fn kernel(&self) -> &ExcursionKernel {
        &self.kernel
    }

    /// `|μ_{i,j}|`.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.pair(i.min(j), i.max(j)).mass
    }

    fn pair(&self, i: usize, j: usize) -> &PairLaw {
        // lexicographic index of (i, j), i ≤ j
        let idx = i * self.n_arcs - i * (i + 1) / 2 + j;
        &self.pairs[idx]
    }

    /// Cross-arc masses `β|μ_{i,j}|` for `i < j`, lexicographic.
    pub fn cross_intensities(&self, beta: f64) -> Vec<f64> {
        self.pairs
            .iter()
            .filter(|p| p.arcs.0 != p.arcs.1)
            .map(|p| beta * p.mass)
            .collect()
    }

    /// One excursion of arc pair `(i, j)`, `i ≤ j`, with endpoints drawn
    /// proportionally to the kernel.
    pub fn sample_excursion<R: Rng + ?Sized>(&self, i: usize, j: usize, rng: &mut R) -> Excursion {
        let law = self.pair(i, j);
        let dist = law.dist.as_ref().expect("sampling from a zero-mass arc pair");
        let (a, b) = law.endpoints[dist.sample(rng)];
        self.sample_path(a, b, (i, j), rng)
    }

    fn step<R: Rng + ?Sized>(&self, from: &[VertexId], b: VertexId, rng: &mut R) -> VertexId {
        let w: Vec<f64> = from
            .iter()
            .map(|&z| match self.interior_pos[z] {
                Some(iz) => self.kernel.hitting(iz, b),
                None if z == b => 1.0,
                None => 0.0,
            })
            .collect();
        from[WeightedIndex::new(&w).unwrap().sample(rng)]
    }

    fn sample_path<R: Rng + ?Sized>(&self, a: VertexId, b: VertexId, arcs: (usize, usize), rng: &mut R) -> Excursion {
        let entry: Vec<VertexId> = self.neighbors[a]
            .iter()
            .copied()
            .filter(|&x| self.is_interior[x])
            .collect();
        let mut path = vec![a];
        let mut holding = Vec::new();
        let mut y = self.step(&entry, b, rng);
        while self.is_interior[y] {
            path.push(y);
            holding.push(Exp::new(self.degree[y] / self.local_time_unit).unwrap().sample(rng));
            y = self.step(&self.neighbors[y], b, rng);
        }
        debug_assert_eq!(y, b);
        path.push(b);
        Excursion { path, holding, arcs }
    }

    /// Unconditioned Poisson process over the allowed pairs.
    pub fn sample_ppp<R: Rng + ?Sized>(&self, beta: f64, restriction: Restriction, rng: &mut R) -> ExcursionEnsemble {
        let mut ens = ExcursionEnsemble::empty(self.n_arcs, beta);
        for law in &self.pairs {
            let (i, j) = law.arcs;
            if !restriction.allows(i, j) || law.mass <= 0.0 {
                continue;
            }
            let n = poisson(rng, beta * law.mass);
            for _ in 0..n {
                ens.push(self.sample_excursion(i, j, rng));
            }
        }
        ens
    }

    /// Fills in paths for a cross-arc count vector (lexicographic `i < j`).
    pub fn sample_given_counts<R: Rng + ?Sized>(&self, beta: f64, counts: &[u64], rng: &mut R) -> ExcursionEnsemble {
        let mut ens = ExcursionEnsemble::empty(self.n_arcs, beta);
        for ((i, j), &c) in cross_pairs(self.n_arcs).zip(counts) {
            for _ in 0..c {
                ens.push(self.sample_excursion(i, j, rng));
            }
        }
        ens
    }

    pub fn sample_parity_conditioned<R: Rng + ?Sized>(
        &self,
        beta: f64,
        method: ParityMethod,
        rng: &mut R,
    ) -> Result<ExcursionEnsemble> {
        let counts = ParityCountSampler::new(self.n_arcs, &self.cross_intensities(beta))?.sample(method, rng);
        Ok(self.sample_given_counts(beta, &counts, rng))
    }
}

/// Lexicographic pairs `(i, j)`, `i < j < n`.
pub fn cross_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

pub fn sample_excursion_ppp<R: Rng + ?Sized>(
    domain: &DomainGraph,
    beta: f64,
    restriction: Restriction,
    rng: &mut R,
) -> Result<ExcursionEnsemble> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be > 0, got {beta}")));
    }
    Ok(ExcursionSampler::new(domain)?.sample_ppp(beta, restriction, rng))
}

pub fn sample_parity_conditioned<R: Rng + ?Sized>(
    domain: &DomainGraph,
    beta: f64,
    method: ParityMethod,
    rng: &mut R,
) -> Result<ExcursionEnsemble> {
    if domain.n_arcs() < 2 {
        return Err(invalid("arcs", "parity conditioning needs at least two arcs"));
    }
    ExcursionSampler::new(domain)?.sample_parity_conditioned(beta, method, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParityMethod {
    Rejection,
    ExactCounts,
}

/// `log Σ_i exp(x_i)`.
pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log P[ℰ] = log(2^{−n} Σ_{a∈{±1}ⁿ} Π_{i<j} exp((a_i a_j − 1)λ_{i,j}))` for
/// cross intensities `λ` in lexicographic order.
pub fn log_parity_probability(n: usize, lambda: &[f64]) -> f64 {
    let pairs: Vec<_> = cross_pairs(n).collect();
    let terms = (0..1u64 << n).map(|mask| {
        pairs
            .iter()
            .zip(lambda)
            .map(|(&(i, j), &l)| {
                let same = ((mask >> i) & 1) == ((mask >> j) & 1);
                if same {
                    0.0
                } else {
                    -2.0 * l
                }
            })
            .sum::<f64>()
    });
    log_sum_exp(terms) - n as f64 * std::f64::consts::LN_2
}

/// Samples cross-arc count vectors conditioned on every `N_i` being even.
///
/// The exact method draws the parities `ε_{i,j} = N_{i,j} mod 2` first — they
/// are independent Bernoulli variables restricted to even-degree subgraphs of
/// the complete graph — and then each count from its Poisson law restricted
/// to the drawn parity.
#[derive(Debug, Clone)]
pub struct ParityCountSampler {
    n: usize,
    lambda: Vec<f64>,
    /// `P[Poisson(λ) odd] = (1 − e^{−2λ})/2` per pair.
    p_odd: Vec<f64>,
    table: Option<(Vec<Vec<u8>>, WeightedIndex<f64>)>,
}

const ENUMERATION_LIMIT: usize = 16;
const SPIN_SUM_LIMIT: usize = 20;

impl ParityCountSampler {
    pub fn new(n: usize, lambda: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(invalid("arcs", "parity conditioning needs at least two arcs"));
        }
        if lambda.len() != n * (n - 1) / 2 {
            return Err(invalid(
                "lambda",
                format!("expected {} pair intensities", n * (n - 1) / 2),
            ));
        }
        if let Some(l) = lambda.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(invalid("lambda", format!("intensity {l} is not finite and ≥ 0")));
        }
        let p_odd: Vec<f64> = lambda.iter().map(|&l| 0.5 * (1.0 - (-2.0 * l).exp())).collect();
        let free = (n - 1) * (n - 2) / 2;
        let table = (free <= ENUMERATION_LIMIT).then(|| {
            let configs: Vec<Vec<u8>> = (0..1u64 << free).map(|m| complete_parities(n, m)).collect();
            let weights: Vec<f64> = configs
                .iter()
                .map(|eps| {
                    eps.iter()
                        .zip(&p_odd)
                        .map(|(&e, &p)| if e == 1 { p } else { 1.0 - p })
                        .product()
                })
                .collect();
            (configs, WeightedIndex::new(&weights).unwrap())
        });
        if table.is_none() && n > SPIN_SUM_LIMIT {
            warn!("{n} arcs: exact parity sampling would need 2^{n} terms; falling back to rejection");
        }
        Ok(ParityCountSampler {
            n,
            lambda: lambda.to_vec(),
            p_odd,
            table,
        })
    }

    pub fn n_arcs(&self) -> usize {
        self.n
    }

    pub fn log_acceptance(&self) -> f64 {
        log_parity_probability(self.n, &self.lambda)
    }

    pub fn sample<R: Rng + ?Sized>(&self, method: ParityMethod, rng: &mut R) -> Vec<u64> {
        match method {
            ParityMethod::ExactCounts if self.table.is_some() || self.n <= SPIN_SUM_LIMIT => self.sample_exact(rng),
            _ => self.sample_rejection(rng),
        }
    }

    /// Unconditioned independent Poisson counts.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        self.lambda.iter().map(|&l| poisson(rng, l)).collect()
    }

    pub fn sample_rejection<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        loop {
            let c = self.sample_free(rng);
            if counts_even(self.n, &c) {
                return c;
            }
        }
    }

    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let eps = match &self.table {
            Some((configs, dist)) => configs[dist.sample(rng)].clone(),
            None => self.sample_parities_sequential(rng),
        };
        eps.iter()
            .zip(&self.lambda)
            .map(|(&e, &l)| poisson_with_parity(rng, l, e))
            .collect()
    }

    /// Draws the parities edge by edge. The indicator of even degrees is
    /// `2^{−n} Σ_a Π_{i<j} (a_i a_j)^{ε_{i,j}}`, so after fixing some edges the
    /// remaining mass is a spin sum of per-edge factors `(1 − p) + p·a_i a_j`
    /// for free edges; one `O(2ⁿ)` pass per edge.
    fn sample_parities_sequential<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        let n = self.n;
        let pairs: Vec<_> = cross_pairs(n).collect();
        let sign = |mask: usize, i: usize, j: usize| -> f64 {
            if ((mask >> i) & 1) == ((mask >> j) & 1) {
                1.0
            } else {
                -1.0
            }
        };
        let mut w: Vec<f64> = (0..1usize << n)
            .map(|mask| {
                pairs
                    .iter()
                    .zip(&self.p_odd)
                    .map(|(&(i, j), &p)| (1.0 - p) + p * sign(mask, i, j))
                    .product()
            })
            .collect();
        let mut eps = Vec::with_capacity(pairs.len());
        for (&(i, j), &p) in pairs.iter().zip(&self.p_odd) {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (mask, wm) in w.iter().enumerate() {
                let s = sign(mask, i, j);
                let free = (1.0 - p) + p * s;
                if free == 0.0 {
                    continue;
                }
                s0 += wm * (1.0 - p) / free;
                s1 += wm * p * s / free;
            }
            let e = u8::from(rng.random::<f64>() * (s0 + s1) >= s0);
            for (mask, wm) in w.iter_mut().enumerate() {
                let s = sign(mask, i, j);
                let free = (1.0 - p) + p * s;
                let fixed = if e == 1 { p * s } else { 1.0 - p };
                *wm = if free == 0.0 { 0.0 } else { *wm * fixed / free };
            }
            eps.push(e);
        }
        eps
    }
}

/// Parities of all pairs from the free parities among arcs `0..n−1`; the
/// pairs `(i, n−1)` are set so that every arc has even degree.
fn complete_parities(n: usize, mask: u64) -> Vec<u8> {
    let last = n - 1;
    let mut free_bits = (0..).map(|b| ((mask >> b) & 1) as u8);
    let mut eps = vec![0u8; n * (n - 1) / 2];
    let mut degree = vec![0u8; n];
    let pairs: Vec<_> = cross_pairs(n).collect();
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        if j != last {
            let e = free_bits.next().unwrap();
            eps[idx] = e;
            degree[i] ^= e;
            degree[j] ^= e;
        }
    }
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        if j == last {
            eps[idx] = degree[i];
        }
    }
    eps
}

pub fn counts_even(n: usize, counts: &[u64]) -> bool {
    let mut parity = vec![0u64; n];
    for ((i, j), &c) in cross_pairs(n).zip(counts) {
        parity[i] ^= c & 1;
        parity[j] ^= c & 1;
    }
    parity.iter().all(|&p| p == 0)
}

/// `Poisson(λ)` conditioned on `N mod 2 = parity`.
pub fn poisson_with_parity<R: Rng + ?Sized>(rng: &mut R, lambda: f64, parity: u8) -> u64 {
    if lambda <= 0.0 {
        assert_eq!(parity, 0, "odd count requested from a zero-mass pair");
        return 0;
    }
    if lambda >= 30.0 {
        let d = Poisson::new(lambda).unwrap();
        loop {
            let k = d.sample(rng) as u64;
            if k % 2 == parity as u64 {
                return k;
            }
        }
    }
    // Inversion over k = parity, parity + 2, …; the restricted mass is
    // e^{−λ}cosh λ or e^{−λ}sinh λ.
    let total = if parity == 0 {
        0.5 * (1.0 + (-2.0 * lambda).exp())
    } else {
        0.5 * (1.0 - (-2.0 * lambda).exp())
    };
    let mut u = rng.random::<f64>() * total;
    let mut k = parity as u64;
    let mut pk = (-lambda).exp() * if parity == 1 { lambda } else { 1.0 };
    loop {
        if u < pk || (pk < 1e-300 && k as f64 > lambda) {
            return k;
        }
        u -= pk;
        pk *= lambda * lambda / (((k + 1) * (k + 2)) as f64);
        k += 2;
    }
}

/// Line-based form shared with loops, each line prefixed by its 1-based arc
/// pair: `i j : a x₁ … b | t₁ …`.
pub fn write_excursions(ensemble: &ExcursionEnsemble) -> String {
    let mut out = format!("# excursions beta={} arcs={}\n", ensemble.beta, ensemble.n_arcs());
    for e in &ensemble.excursions {
        write!(out, "{} {} : ", e.arcs.0 + 1, e.arcs.1 + 1).unwrap();
        write_path_line(&mut out, &e.path, &e.holding);
    }
    out
}

pub fn read_excursions(text: &str) -> Result<ExcursionEnsemble> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().unwrap_or(""), "excursions")?;
    let get = |k: &str| -> Result<&str> {
        header
            .get(k)
            .copied()
            .ok_or_else(|| Error::InvalidDomain(format!("header lacks `{k}`")))
    };
    let bad = |what: &str| Error::InvalidDomain(format!("malformed excursion data: {what}"));
    let beta: f64 = get("beta")?.parse().map_err(|_| bad("beta"))?;
    let n: usize = get("arcs")?.parse().map_err(|_| bad("arcs"))?;
    let mut ens = ExcursionEnsemble::empty(n, beta);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (label, rest) = line.split_once(':').ok_or_else(|| bad(line))?;
        let arcs: Vec<usize> = label
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| bad(line)))
            .collect::<Result<_>>()?;
        let [i, j] = arcs[..] else { return Err(bad(line)) };
        if i == 0 || j == 0 || i > n || j > n || i > j {
            return Err(bad(line));
        }
        let (path, holding) = parse_path_line(rest.trim_start())?;
        if path.len() < 3 || holding.len() != path.len() - 2 {
            return Err(bad(line));
        }
        ens.push(Excursion {
            path,
            holding,
            arcs: (i - 1, j - 1),
        });
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;
    use crate::lattice::{build_rect_domain, ArcSegment, Side, Support};
    use crate::rng::StreamRng;

    fn north_south() -> DomainGraph {
        build_rect_domain(
            1,
            1,
            &[ArcSegment::side(1, Side::Top), ArcSegment::side(2, Side::Bottom)],
        )
        .unwrap()
    }

    fn excursion(arcs: (usize, usize)) -> Excursion {
        Excursion {
            path: vec![5, 0, 6],
            holding: vec![0.5],
            arcs,
        }
    }

    #[test]
    fn crossing_count_examples() {
        let mut e = ExcursionEnsemble::empty(2, 0.25);
        assert!(crossing_counts(&e).parity.satisfied);
        e.push(excursion((0, 1)));
        let c = crossing_counts(&e);
        assert_eq!(c.arc_counts, vec![1, 1]);
        assert!(!c.parity.satisfied);
        e.push(excursion((0, 1)));
        assert!(crossing_counts(&e).parity.satisfied);
        e.push(excursion((0, 0)));
        let c = crossing_counts(&e);
        assert_eq!(c.arc_counts, vec![2, 2]);
        assert_eq!(c.pair_counts[0][0], 1);
    }

    #[test]
    fn occupation_functional_examples() {
        let d = north_south();
        let mut e = ExcursionEnsemble::empty(2, 0.25);
        let k = ScalarField::constant(&d, Support::Interior, 2.0);
        assert_eq!(occupation_functional(&e, &k), 0.0);
        e.push(excursion((0, 1)));
        assert_close!(occupation_functional(&e, &k), 1.0, 1e-15);
        assert_eq!(
            occupation_functional(&e, &ScalarField::zeros(&d, Support::Interior)),
            0.0
        );
    }

    #[test]
    fn paths_have_declared_endpoints() {
        let d = build_rect_domain(3, 3, &crate::lattice::ring_arcs(3, 3, 3)).unwrap();
        let s = ExcursionSampler::new(&d).unwrap();
        let mut rng = StreamRng::new(2, 0);
        for _ in 0..200 {
            let ens = s.sample_ppp(1.0, Restriction::AllPairs, &mut rng);
            for e in &ens.excursions {
                let (a, b) = (e.path[0], *e.path.last().unwrap());
                let mut ends = [d.arc_of(a).unwrap(), d.arc_of(b).unwrap()];
                ends.sort();
                assert_eq!((ends[0], ends[1]), e.arcs);
                assert!(e.interior().iter().all(|&x| d.is_interior(x)));
                for w in e.path.windows(2) {
                    assert!(d.neighbors(w[0]).contains(&w[1]));
                }
            }
        }
    }

    #[test]
    fn tiny_beta_gives_empty_ensembles() {
        let d = north_south();
        let s = ExcursionSampler::new(&d).unwrap();
        let mut rng = StreamRng::new(3, 0);
        let nonempty = (0..10_000)
            .filter(|_| {
                !s.sample_ppp(1e-9, Restriction::AllPairs, &mut rng)
                    .excursions
                    .is_empty()
            })
            .count();
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn two_arc_parity_probability() {
        for l in [0.0, 0.3, 2.0] {
            let p = log_parity_probability(2, &[l]).exp();
            assert_close!(p, 0.5 * (1.0 + (-2.0 * l).exp()), 1e-15);
        }
    }

    #[test]
    fn complete_parities_are_even() {
        for n in 2..7 {
            let free = (n - 1) * (n - 2) / 2;
            for m in 0..1u64 << free {
                let eps: Vec<u64> = complete_parities(n, m).into_iter().map(u64::from).collect();
                assert!(counts_even(n, &eps));
            }
        }
    }

    #[test]
    fn parity_samplers_respect_the_event() {
        let lambda = [0.4, 0.7, 1.1, 0.2, 0.5, 0.9];
        let s = ParityCountSampler::new(4, &lambda).unwrap();
        let mut rng = StreamRng::new(8, 0);
        for _ in 0..2000 {
            assert!(counts_even(4, &s.sample_exact(&mut rng)));
            assert!(counts_even(4, &s.sample_rejection(&mut rng)));
            assert!(counts_even(
                4,
                &s.sample_parities_sequential(&mut rng)
                    .iter()
                    .map(|&e| e as u64)
                    .collect::<Vec<_>>()
            ));
        }
    }

    #[test]
    fn restricted_poisson_has_right_parity_and_mean() {
        let mut rng = StreamRng::new(1, 0);
        for lambda in [0.5, 3.0, 40.0] {
            for parity in [0u8, 1] {
                let n = 20_000;
                let mut sum = 0.0;
                for _ in 0..n {
                    let k = poisson_with_parity(&mut rng, lambda, parity);
                    assert_eq!(k % 2, parity as u64);
                    sum += k as f64;
                }
                // E[N | even] = λ tanh λ, E[N | odd] = λ coth λ
                let mean = if parity == 0 {
                    lambda * lambda.tanh()
                } else {
                    lambda / lambda.tanh()
                };
                let se = (lambda.max(0.5) / n as f64).sqrt() * 2.0;
                assert!((sum / n as f64 - mean).abs() < 5.0 * se, "λ={lambda} parity={parity}");
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let d = build_rect_domain(2, 2, &crate::lattice::ring_arcs(2, 2, 3)).unwrap();
        let e = sample_excursion_ppp(&d, 2.0, Restriction::AllPairs, &mut StreamRng::new(5, 0)).unwrap();
        assert!(!e.excursions.is_empty());
        assert_eq!(read_excursions(&write_excursions(&e)).unwrap(), e);
    }
}
