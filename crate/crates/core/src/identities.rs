//! Closed-form evaluators for the identities linking loop soups, free fields
//! and excursion processes, and the calibration of the lattice constants they
//! depend on.
//!
//! Three constants fix the discrete normalization:
//!
//! * the local-time unit `s`: holding times are `Exp(deg/s)`;
//! * `β_disc`: the excursion intensity is `β(u) = β_disc·u²`;
//! * the height gap `2λ_disc`: the harmonic shift of arc `i` is
//!   `Φ_i = 2λ_disc·h_i`, `h_i` the harmonic extension of `𝟙_{∂_i}`.
//!
//! They are pinned by [`calibrate`] through exact identities on the
//! single-vertex graph and validated on the 2×2 grid.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::excursions::{
    cross_pairs, log_sum_exp, occupation_functional, ExcursionSampler, ParityCountSampler, ParityMethod, Restriction,
};
use crate::gff::{
    laplace_centered_square, laplace_shifted_square, log_laplace_centered_square, renormalized_square_functional,
    GffSampler,
};
use crate::lattice::{
    arc_harmonic, build_rect_domain, dirichlet_form, green, ArcSegment, DomainGraph, ScalarField, Side, Support,
};
use crate::loopsoup::LoopSoupSampler;
use crate::rng::run_replicas;

/// Symmetric nonnegative couplings with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    m: Vec<Vec<f64>>,
}

impl CouplingMatrix {
    pub fn new(m: Vec<Vec<f64>>) -> Result<Self> {
        let n = m.len();
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(invalid("coupling", "matrix must be square"));
            }
            if row[i] != 0.0 {
                return Err(invalid("coupling", format!("diagonal entry {i} is nonzero")));
            }
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0) || !x.is_finite() || x != m[j][i] {
                    return Err(invalid(
                        "coupling",
                        format!("entry ({i}, {j}) must be finite, ≥ 0 and symmetric"),
                    ));
                }
            }
        }
        Ok(CouplingMatrix { m })
    }

    /// `m_{i,j} = β|μ_{i,j}|`.
    pub fn from_domain(domain: &DomainGraph, beta: f64) -> Result<Self> {
        let s = ExcursionSampler::new(domain)?;
        let n = domain.n_arcs();
        let m = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { beta * s.mass(i, j) }).collect())
            .collect();
        CouplingMatrix::new(m)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.m
    }
}

/// Law of `n` ±1 spins, indexed by bitmask: bit `i` set means `a_i = −1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinLaw {
    pub n: usize,
    pub probabilities: Vec<f64>,
    pub log_normalizer: f64,
}

impl SpinLaw {
    pub fn spin(mask: usize, i: usize) -> f64 {
        if (mask >> i) & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn mask_of(spins: &[i8]) -> usize {
        spins
            .iter()
            .enumerate()
            .filter(|(_, &a)| a < 0)
            .map(|(i, _)| 1 << i)
            .sum()
    }

    pub fn p(&self, spins: &[i8]) -> f64 {
        self.probabilities[Self::mask_of(spins)]
    }
}

/// `p(a) = exp(Σ_{i<j} a_i a_j m_{i,j}) / Z_n`, evaluated in log space.
pub fn spin_law(m: &CouplingMatrix) -> SpinLaw {
    let n = m.n();
    let energies: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            cross_pairs(n)
                .map(|(i, j)| SpinLaw::spin(mask, i) * SpinLaw::spin(mask, j) * m.get(i, j))
                .sum()
        })
        .collect();
    let log_z = log_sum_exp(energies.iter().copied());
    SpinLaw {
        n,
        probabilities: energies.iter().map(|e| (e - log_z).exp()).collect(),
        log_normalizer: log_z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstants {
    /// `2λ_disc`: boundary value of the harmonic shift at `u = 1`.
    pub height_gap: f64,
    /// `β_disc`: excursion intensity at `u = 1`.
    pub beta_disc: f64,
    pub local_time_unit: f64,
}

impl CalibrationConstants {
    pub fn beta(&self, u: f64) -> f64 {
        self.beta_disc * u * u
    }

    /// The `u ≥ 0` at which the excursion intensity equals `beta`.
    pub fn u_for_beta(&self, beta: f64) -> f64 {
        (beta / self.beta_disc).sqrt()
    }

    /// `u·Φ_i = u·2λ_disc·h_i` on all vertices.
    pub fn shift(&self, domain: &DomainGraph, arcs: &[usize], u: f64) -> Result<ScalarField> {
        Ok(arc_harmonic(domain, arcs)?.scaled(u * self.height_gap))
    }
}

/// Exact-vs-exact or Monte-Carlo-vs-exact comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub z_score: Option<f64>,
    pub n_samples: usize,
    pub seed: Option<u64>,
}

impl IdentityReport {
    fn exact(lhs: f64, rhs: f64) -> Self {
        IdentityReport {
            lhs,
            rhs,
            abs_err: (lhs - rhs).abs(),
            z_score: None,
            n_samples: 0,
            seed: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn interior_vec(domain: &DomainGraph, f: &ScalarField) -> DVector<f64> {
    f.interior_vector(domain)
}

fn check_arcs(domain: &DomainGraph, arcs: &[usize]) -> Result<()> {
    if let Some(&a) = arcs.iter().find(|&&a| a >= domain.n_arcs()) {
        return Err(invalid("arc", format!("arc {} does not exist", a + 1)));
    }
    Ok(())
}

/// `β·μ_{i,j}(exp(−T_e(k)))` through the harmonic shifts:
/// `β|μ_{i,j}| − u²Σ_x Φ_iΦ_j k + u²Φ_iᵀ K G_k K Φ_j`, halved for `i = j`
/// (each same-arc excursion is counted from both ends).
pub fn excursion_laplace_exact(
    domain: &DomainGraph,
    cal: &CalibrationConstants,
    (i, j): (usize, usize),
    k: &ScalarField,
    u: f64,
) -> Result<f64> {
    check_arcs(domain, &[i, j])?;
    let beta = cal.beta(u);
    let mass = ExcursionSampler::new(domain)?.mass(i, j);
    let phi_i = interior_vec(domain, &cal.shift(domain, &[i], u)?);
    let phi_j = interior_vec(domain, &cal.shift(domain, &[j], u)?);
    let kv = interior_vec(domain, k);
    let gk = green(domain, k)?;
    let kphi_i = phi_i.component_mul(&kv);
    let kphi_j = phi_j.component_mul(&kv);
    let direct = phi_i.dot(&kphi_j);
    let resolvent = kphi_i.dot(&(gk.matrix() * &kphi_j));
    let half = if i == j { 0.5 } else { 1.0 };
    Ok(beta * mass - half * (direct - resolvent))
}

/// `β·μ_{i,j}(exp(−T_e(k)))` as a path sum over excursions: with `b_i` the
/// number of `∂_i` neighbors of each interior vertex, this is `β·b_iᵀ G_k b_j`
/// (halved for `i = j`).
pub fn excursion_laplace_path_sum(
    domain: &DomainGraph,
    beta: f64,
    (i, j): (usize, usize),
    k: &ScalarField,
) -> Result<f64> {
    check_arcs(domain, &[i, j])?;
    let gk = green(domain, k)?;
    let v = domain.arc_flux(i).dot(&(gk.matrix() * domain.arc_flux(j)));
    Ok(if i == j { 0.5 * beta * v } else { beta * v })
}

/// `β·μ_∂(1 − e^{−T_e(k)})` for the excursions with both ends in `arcs`,
/// assembled pairwise from [`excursion_laplace_exact`].
pub fn ppp_log_laplace(
    domain: &DomainGraph,
    cal: &CalibrationConstants,
    arcs: &[usize],
    k: &ScalarField,
    u: f64,
) -> Result<f64> {
    let beta = cal.beta(u);
    let s = ExcursionSampler::new(domain)?;
    let mut total = 0.0;
    for (p, &i) in arcs.iter().enumerate() {
        for &j in &arcs[p..] {
            total += beta * s.mass(i, j) - excursion_laplace_exact(domain, cal, (i, j), k, u)?;
        }
    }
    Ok(total)
}

/// Compares `E[exp(−½[[(h + uΦ_∂)²]](k))]` with
/// `E[exp(−½[[h²]](k))]·exp(−β μ_∂(1 − e^{−T_e(k)}))`, both exactly.
pub fn dynkin_check(
    domain: &DomainGraph,
    cal: &CalibrationConstants,
    arcs: &[usize],
    u: f64,
    k: &ScalarField,
) -> Result<IdentityReport> {
    check_arcs(domain, arcs)?;
    let shift = cal.shift(domain, arcs, u)?;
    let lhs = laplace_shifted_square(domain, k, &shift)?;
    let rhs = laplace_centered_square(domain, k)? * (-ppp_log_laplace(domain, cal, arcs, k, u)?).exp();
    Ok(IdentityReport::exact(lhs, rhs))
}

/// Mean and standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo version of [`dynkin_check`]: the left side from shifted free
/// fields, the right side from independent centered fields and excursion
/// processes. `lhs`/`rhs` hold the two estimates and the z-score their
/// difference.
pub fn dynkin_check_mc(
    domain: &DomainGraph,
    cal: &CalibrationConstants,
    arcs: &[usize],
    u: f64,
    k: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<IdentityReport> {
    check_arcs(domain, arcs)?;
    let zero = ScalarField::zeros(domain, Support::All);
    let gff = GffSampler::new(domain, &zero)?;
    let shift = cal.shift(domain, arcs, u)?;
    let ex = ExcursionSampler::new(domain)?.with_local_time_unit(cal.local_time_unit);
    let beta = cal.beta(u);
    let within: Vec<usize> = arcs.to_vec();
    let left = run_replicas(seed, 0x10, samples, |rng, _| {
        let h = gff.sample_centered(rng);
        (-0.5 * renormalized_square_functional(domain, &h, Some(&shift), k).unwrap()).exp()
    });
    let right = run_replicas(seed, 0x11, samples, |rng, _| {
        let h = gff.sample_centered(rng);
        let mut t = 0.0;
        for (p, &i) in within.iter().enumerate() {
            for &j in &within[p..] {
                let e = ex.sample_ppp(beta, Restriction::Pair(i, j), rng);
                t += occupation_functional(&e, k);
            }
        }
        (-0.5 * renormalized_square_functional(domain, &h, None, k).unwrap() - t).exp()
    });
    let (l, sl) = mean_se(&left);
    let (r, sr) = mean_se(&right);
    Ok(IdentityReport {
        lhs: l,
        rhs: r,
        abs_err: (l - r).abs(),
        z_score: Some((l - r) / (sl * sl + sr * sr).sqrt()),
        n_samples: samples,
        seed: Some(seed),
    })
}

/// Exact `E[Π_{i<j} exp(−T_{i,j}(k)) | ℰ]` for the cross-arc process:
/// `Σ_a Π exp(a_i a_j X_{i,j}(k)) / Σ_a Π exp(a_i a_j X_{i,j}(0))` with
/// `X_{i,j}(k) = β μ_{i,j}(exp(−T_e(k)))`.
pub fn random_current_exact(domain: &DomainGraph, beta: f64, k: &ScalarField) -> Result<f64> {
    let n = domain.n_arcs();
    if n < 2 {
        return Err(invalid("arcs", "need at least two arcs"));
    }
    let zero = ScalarField::zeros(domain, Support::Interior);
    let x: Vec<f64> = cross_pairs(n)
        .map(|p| excursion_laplace_path_sum(domain, beta, p, k))
        .collect::<Result<_>>()?;
    let x0: Vec<f64> = cross_pairs(n)
        .map(|p| excursion_laplace_path_sum(domain, beta, p, &zero))
        .collect::<Result<_>>()?;
    Ok((spin_log_sum(n, &x) - spin_log_sum(n, &x0)).exp())
}

/// `log Σ_{a∈{±1}ⁿ} exp(Σ_{i<j} a_i a_j x_{i,j})`.
pub fn spin_log_sum(n: usize, x: &[f64]) -> f64 {
    let pairs: Vec<_> = cross_pairs(n).collect();
    log_sum_exp((0..1usize << n).map(|mask| {
        pairs
            .iter()
            .zip(x)
            .map(|(&(i, j), &v)| SpinLaw::spin(mask, i) * SpinLaw::spin(mask, j) * v)
            .sum()
    }))
}

/// Exact right side against a Monte-Carlo left side from the exact-counts
/// parity sampler.
pub fn random_current_identity(
    domain: &DomainGraph,
    beta: f64,
    k: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let rhs = random_current_exact(domain, beta, k)?;
    let ex = ExcursionSampler::new(domain)?;
    let counts = ParityCountSampler::new(domain.n_arcs(), &ex.cross_intensities(beta))?;
    let values = run_replicas(seed, 0x20, samples, |rng, _| {
        let c = counts.sample(ParityMethod::ExactCounts, rng);
        let e = ex.sample_given_counts(beta, &c, rng);
        (-occupation_functional(&e, k)).exp()
    });
    let (lhs, se) = mean_se(&values);
    Ok(IdentityReport {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
        z_score: Some(if se > 0.0 { (lhs - rhs) / se } else { 0.0 }),
        n_samples: samples,
        seed: Some(seed),
    })
}

/// Closed-form crossing probabilities for a two-arc configuration with
/// coupling `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingProbabilities {
    pub p_e: f64,
    pub p_o: f64,
    pub p_ecapa: f64,
    pub p_eminusa_given_e: f64,
}

pub fn crossing_formulas(m: f64) -> Result<CrossingProbabilities> {
    if !(m >= 0.0) {
        return Err(invalid("m", format!("must be ≥ 0, got {m}")));
    }
    let q = (-2.0 * m).exp();
    let p_e = 0.5 * (1.0 + q);
    let p_eminusa_given_e = 2.0 * q / (1.0 + q);
    Ok(CrossingProbabilities {
        p_e,
        p_o: 0.5 * (1.0 - q),
        p_ecapa: p_e * (1.0 - p_eminusa_given_e),
        p_eminusa_given_e,
    })
}

/// `sinh(β μ_{1,2}(exp(−T_e(k))))` for the first two arcs.
pub fn sinh_expression(domain: &DomainGraph, cal: &CalibrationConstants, k: &ScalarField, u: f64) -> Result<f64> {
    Ok(excursion_laplace_exact(domain, cal, (0, 1), k, u)?.sinh())
}

/// The Laplace transform of the full occupation field (loop soup at `α = ½`
/// plus every excursion with both ends in arcs 1 and 2) factorizes as
/// `(L)·(L)_1·(L)_2·(L)_{1,2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    /// Loops: `det(I + GK)^{−1/2}`.
    pub loops: f64,
    /// Same-arc excursions of each arc.
    pub same_arc: [f64; 2],
    /// `X = β μ_{1,2}(exp(−T_e(k)))`.
    pub cross_exponent: f64,
    /// `m = β|μ_{1,2}|`.
    pub coupling: f64,
}

impl Factorization {
    pub fn new(domain: &DomainGraph, cal: &CalibrationConstants, k: &ScalarField, u: f64) -> Result<Self> {
        check_arcs(domain, &[0, 1])?;
        let trace: f64 = {
            let g = domain.green0()?;
            domain.interior().iter().map(|&v| g.at(v, v) * k.get(v)).sum()
        };
        let loops = (log_laplace_centered_square(domain, k)? - 0.5 * trace).exp();
        let beta = cal.beta(u);
        let s = ExcursionSampler::new(domain)?;
        let same = |i: usize| -> Result<f64> {
            Ok((-(beta * s.mass(i, i) - excursion_laplace_exact(domain, cal, (i, i), k, u)?)).exp())
        };
        Ok(Factorization {
            loops,
            same_arc: [same(0)?, same(1)?],
            cross_exponent: excursion_laplace_exact(domain, cal, (0, 1), k, u)?,
            coupling: beta * s.mass(0, 1),
        })
    }

    fn common(&self) -> f64 {
        self.loops * self.same_arc[0] * self.same_arc[1]
    }

    /// Unconditioned: `(L)(L)_1(L)_2·exp(X − m)`.
    pub fn total(&self) -> f64 {
        self.common() * (self.cross_exponent - self.coupling).exp()
    }

    /// Given an even number of crossings: `… · cosh X / cosh m`.
    pub fn given_even(&self) -> f64 {
        self.common() * self.cross_exponent.cosh() / self.coupling.cosh()
    }

    /// Given an odd number of crossings: `… · sinh X / sinh m`.
    pub fn given_odd(&self) -> f64 {
        self.common() * self.cross_exponent.sinh() / self.coupling.sinh()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub constants: CalibrationConstants,
    /// Dynkin discrepancy on the single-vertex graph.
    pub anchor_residual: f64,
    /// Dynkin discrepancy on the 2×2 grid.
    pub validation_residual: f64,
    /// `|E[occupation] − ½G(x, x)|` and `|Var[occupation] − ½G(x, x)²|` on
    /// the single-vertex graph at `α = ½`.
    pub lejan_mean_residual: f64,
    pub lejan_variance_residual: f64,
    /// Worst first-moment mismatch on the 2×2 grid, net of the truncation
    /// bound of the skeleton sum.
    pub lejan_validation_residual: f64,
    /// `m_{1,2}`, `β_disc|μ_{1,2}|` and `−dirichlet_form(Φ_1, Φ_2)` on the
    /// single-vertex graph.
    pub coupling: f64,
    pub coupling_from_mass: f64,
    pub coupling_from_dirichlet: f64,
    /// `m_{i,j}/|μ_{i,j}|`, to be compared with the continuum value 1/4.
    pub coupling_ratio: f64,
    pub continuum_ratio: f64,
}

/// `E[ℓ_x]` of the sampler's loop soup, including the skeleton truncation.
fn loopsoup_mean_occupation(domain: &DomainGraph, alpha: f64, unit: f64, k_max: usize) -> Result<Vec<f64>> {
    let s = LoopSoupSampler::new(domain, alpha, k_max)?;
    let p = crate::loopsoup::transition_matrix(domain);
    let n = domain.n_interior();
    let mut power = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut diag = DVector::from_element(n, 1.0);
    for _ in 1..=s.k_max() {
        power = &power * &p;
        diag += power.diagonal();
    }
    Ok(domain
        .interior()
        .iter()
        .enumerate()
        .map(|(i, &v)| alpha * unit / domain.degree(v) as f64 * diag[i])
        .collect())
}

/// Solves for the lattice constants on the single-vertex graph with arcs
/// west and east, then validates them on the 2×2 grid.
///
/// * `β_disc = 1/4`: the intensity convention `β = u²/4`.
/// * `s`: the trivial-loop local time at `α = ½` is `Gamma(½, 4/s)`, whose
///   mean `s/8` must equal `½G(x, x) = 1/8`.
/// * `2λ_disc`: the Dynkin identity at `u = 1`, `k ≡ 1` reads
///   `(2λ)²·Q/2 = β·R` with `Q = ψᵀKψ − ψᵀK G_k Kψ` (free-field side,
///   `ψ` the harmonic extension of `𝟙_∂`) and `R = μ_∂(1 − e^{−T_e(k)})`
///   (excursion side, by path sums).
pub fn calibrate() -> Result<CalibrationReport> {
    let one = build_rect_domain(
        1,
        1,
        &[ArcSegment::side(1, Side::Left), ArcSegment::side(2, Side::Right)],
    )?;
    let beta_disc = 0.25;
    let g = domain_green_diag(&one)?;
    let alpha = 0.5;
    let deg = one.degree(0) as f64;
    // Gamma(α, deg/s): mean α s/deg, variance α s²/deg².
    let local_time_unit = 0.5 * g * deg / alpha;

    let k = ScalarField::constant(&one, Support::Interior, 1.0);
    let psi = interior_vec(&one, &arc_harmonic(&one, &[0, 1])?);
    let kv = interior_vec(&one, &k);
    let gk = green(&one, &k)?;
    let kpsi = psi.component_mul(&kv);
    let q = psi.dot(&kpsi) - kpsi.dot(&(gk.matrix() * &kpsi));
    let zero = ScalarField::zeros(&one, Support::Interior);
    let r: f64 = [(0, 0), (0, 1), (1, 1)]
        .iter()
        .map(|&p| Ok(excursion_laplace_path_sum(&one, 1.0, p, &zero)? - excursion_laplace_path_sum(&one, 1.0, p, &k)?))
        .sum::<Result<f64>>()?;
    if !(q > 0.0) {
        return Err(Error::CalibrationFailed(format!("degenerate free-field term Q = {q}")));
    }
    let height_gap = (2.0 * beta_disc * r / q).sqrt();
    let constants = CalibrationConstants {
        height_gap,
        beta_disc,
        local_time_unit,
    };

    let anchor = dynkin_check(&one, &constants, &[0, 1], 1.0, &k)?;
    let lejan_mean = alpha * local_time_unit / deg;
    let lejan_var = alpha * (local_time_unit / deg).powi(2);
    let lejan_mean_residual = (lejan_mean - 0.5 * g).abs();
    let lejan_variance_residual = (lejan_var - 0.5 * g * g).abs();

    let two = build_rect_domain(2, 2, &crate::lattice::ring_arcs(2, 2, 2))?;
    let k2 = ScalarField::from_fn(&two, Support::Interior, |v| 0.3 + 0.4 * v as f64);
    let validation = dynkin_check(&two, &constants, &[0, 1], 1.0, &k2)?;
    let soup = LoopSoupSampler::with_tolerance(&two, alpha, 1e-13)?;
    let means = loopsoup_mean_occupation(&two, alpha, local_time_unit, soup.k_max())?;
    let g2 = two.green0()?;
    let lejan_validation_residual = two
        .interior()
        .iter()
        .zip(&means)
        .map(|(&v, &m)| ((m - 0.5 * g2.at(v, v)).abs() - soup.truncation_bound()).max(0.0))
        .fold(0.0, f64::max);

    let coupling = CouplingMatrix::from_domain(&one, beta_disc)?.get(0, 1);
    let mass = ExcursionSampler::new(&one)?.mass(0, 1);
    let phi1 = constants.shift(&one, &[0], 1.0)?;
    let phi2 = constants.shift(&one, &[1], 1.0)?;
    let coupling_from_dirichlet = -dirichlet_form(&one, &phi1, &phi2);

    let report = CalibrationReport {
        constants,
        anchor_residual: anchor.abs_err,
        validation_residual: validation.abs_err,
        lejan_mean_residual,
        lejan_variance_residual,
        lejan_validation_residual,
        coupling,
        coupling_from_mass: beta_disc * mass,
        coupling_from_dirichlet,
        coupling_ratio: coupling / mass,
        continuum_ratio: 0.25,
    };
    let residuals = [
        ("dynkin (1 vertex)", report.anchor_residual, 1e-12),
        ("dynkin (2×2)", report.validation_residual, 1e-10),
        ("Le Jan mean", report.lejan_mean_residual, 1e-12),
        ("Le Jan variance", report.lejan_variance_residual, 1e-12),
        ("Le Jan mean (2×2)", report.lejan_validation_residual, 1e-12),
        (
            "coupling vs mass",
            (report.coupling - report.coupling_from_mass).abs(),
            1e-12,
        ),
        (
            "coupling vs Dirichlet form",
            (report.coupling - report.coupling_from_dirichlet).abs(),
            1e-12,
        ),
    ];
    if let Some((name, r, tol)) = residuals.iter().find(|(_, r, tol)| !(r < tol)) {
        let all: Vec<String> = residuals.iter().map(|(n, r, _)| format!("{n}: {r:e}")).collect();
        return Err(Error::CalibrationFailed(format!(
            "{name} residual {r:e} exceeds {tol:e}; residuals: {}",
            all.join(", ")
        )));
    }
    Ok(report)
}

fn domain_green_diag(domain: &DomainGraph) -> Result<f64> {
    let g = domain.green0()?;
    Ok(g.at(domain.interior()[0], domain.interior()[0]))
}

/// Draws a killing field with independent `Uniform(lo, hi)` rates.
pub fn random_killing<R: Rng + ?Sized>(domain: &DomainGraph, lo: f64, hi: f64, rng: &mut R) -> ScalarField {
    let rates: Vec<f64> = (0..domain.n_vertices()).map(|_| rng.random_range(lo..hi)).collect();
    ScalarField::from_fn(domain, Support::Interior, |v| rates[v])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assert_close;

    fn cal() -> CalibrationConstants {
        calibrate().unwrap().constants
    }

    fn north_south() -> DomainGraph {
        build_rect_domain(
            1,
            1,
            &[ArcSegment::side(1, Side::Top), ArcSegment::side(2, Side::Bottom)],
        )
        .unwrap()
    }

    #[test]
    fn spin_law_examples() {
        let one = spin_law(&CouplingMatrix::new(vec![vec![0.0]]).unwrap());
        assert_close!(one.probabilities[0], 0.5, 1e-15);
        let zero = spin_law(&CouplingMatrix::new(vec![vec![0.0; 3]; 3]).unwrap());
        assert!(zero.probabilities.iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let two = spin_law(&CouplingMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let e = 1f64.exp();
        let z = 2.0 * e + 2.0 / e;
        assert_close!(two.p(&[1, 1]), e / z, 1e-15);
        assert_close!(two.p(&[-1, -1]), e / z, 1e-15);
        assert_close!(two.p(&[1, -1]), 1.0 / e / z, 1e-15);
        assert_close!(two.p(&[1, 1]), 0.440399, 1e-6);
        assert_close!(two.p(&[1, -1]), 0.059601, 1e-6);
    }

    #[test]
    fn coupling_matrix_validation() {
        assert!(CouplingMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![1.0]]).is_err());
        assert!(CouplingMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn calibration_constants() {
        let r = calibrate().unwrap();
        assert_close!(r.constants.beta_disc, 0.25, 0.0);
        assert_close!(r.constants.local_time_unit, 1.0, 1e-15);
        assert_close!(r.constants.height_gap, 0.5, 1e-14);
        assert!(r.anchor_residual < 1e-12);
        assert!(r.validation_residual < 1e-10);
        assert_close!(r.coupling_ratio, r.continuum_ratio, 1e-15);
        assert_eq!(calibrate().unwrap(), r);
    }

    #[test]
    fn laplace_exact_zero_killing_and_strong_killing() {
        let c = cal();
        let d = build_rect_domain(2, 2, &crate::lattice::ring_arcs(2, 2, 2)).unwrap();
        let zero = ScalarField::zeros(&d, Support::Interior);
        let mass = ExcursionSampler::new(&d).unwrap().mass(0, 1);
        assert_close!(
            excursion_laplace_exact(&d, &c, (0, 1), &zero, 1.0).unwrap(),
            0.25 * mass,
            1e-15
        );
        let big = ScalarField::constant(&d, Support::Interior, 1e6);
        assert!(excursion_laplace_exact(&d, &c, (0, 1), &big, 1.0).unwrap().abs() < 1e-3);
    }

    #[test]
    fn single_vertex_laplace_matches_scalar_path_sum() {
        let c = cal();
        let d = north_south();
        for rate in [0.5, 1.0, 3.0] {
            let k = ScalarField::constant(&d, Support::Interior, rate);
            // one visit, ℓ ~ Exp(4): E[e^{−cℓ}] = 4/(4 + c); K(n, s) = 1/4
            let expected = 0.25 * 0.25 * 4.0 / (4.0 + rate);
            assert_close!(
                excursion_laplace_exact(&d, &c, (0, 1), &k, 1.0).unwrap(),
                expected,
                1e-12
            );
            assert_close!(
                excursion_laplace_path_sum(&d, 0.25, (0, 1), &k).unwrap(),
                expected,
                1e-12
            );
        }
    }

    #[test]
    fn dynkin_trivial_cases() {
        let c = cal();
        let d = build_rect_domain(2, 2, &crate::lattice::ring_arcs(2, 2, 3)).unwrap();
        let k = ScalarField::from_fn(&d, Support::Interior, |v| 0.5 + v as f64);
        let r = dynkin_check(&d, &c, &[0, 2], 0.0, &k).unwrap();
        assert_close!(r.lhs, laplace_centered_square(&d, &k).unwrap(), 1e-14);
        assert!(r.abs_err < 1e-14);
        let zero = ScalarField::zeros(&d, Support::Interior);
        let r = dynkin_check(&d, &c, &[0, 1, 2], 1.3, &zero).unwrap();
        assert_close!(r.lhs, 1.0, 1e-14);
        assert_close!(r.rhs, 1.0, 1e-14);
        let one = north_south();
        let k1 = ScalarField::constant(&one, Support::Interior, 1.0);
        assert!(dynkin_check(&one, &c, &[0, 1], 1.0, &k1).unwrap().abs_err < 1e-10);
    }

    #[test]
    fn spin_law_flip_symmetry_and_ratios() {
        let m = CouplingMatrix::new(vec![
            vec![0.0, 0.3, 1.2, 0.1],
            vec![0.3, 0.0, 0.5, 2.0],
            vec![1.2, 0.5, 0.0, 0.7],
            vec![0.1, 2.0, 0.7, 0.0],
        ])
        .unwrap();
        let law = spin_law(&m);
        let full = (1 << 4) - 1;
        for mask in 0..16usize {
            assert_close!(law.probabilities[mask], law.probabilities[mask ^ full], 1e-15);
            for i in 0..4 {
                if mask >> i & 1 == 1 {
                    continue;
                }
                let ratio = law.probabilities[mask] / law.probabilities[mask | 1 << i];
                let expected: f64 = (0..4)
                    .filter(|&j| j != i)
                    .map(|j| 2.0 * SpinLaw::spin(mask, j) * m.get(i, j))
                    .sum::<f64>()
                    .exp();
                assert_close!(ratio, expected, 1e-12 * expected);
            }
        }
        assert_close!(law.probabilities.iter().sum::<f64>(), 1.0, 1e-14);
    }

    #[test]
    fn crossing_formula_examples() {
        let p = crossing_formulas(0.0).unwrap();
        assert_eq!((p.p_e, p.p_o, p.p_ecapa), (1.0, 0.0, 0.0));
        let p = crossing_formulas(20.0).unwrap();
        assert_close!(p.p_e, 0.5, 1e-15);
        assert_close!(p.p_o, 0.5, 1e-15);
        assert!(p.p_eminusa_given_e < 1e-15);
        let p = crossing_formulas(2f64.ln() / 2.0).unwrap();
        assert_close!(p.p_e, 0.75, 1e-15);
        assert_close!(p.p_o, 0.25, 1e-15);
        assert_close!(p.p_ecapa, 0.25, 1e-15);
        assert_close!(p.p_eminusa_given_e, 2.0 / 3.0, 1e-15);
        assert!(crossing_formulas(-1.0).is_err());
    }

    #[test]
    fn sinh_expression_examples() {
        let c = cal();
        let d = build_rect_domain(
            3,
            2,
            &[ArcSegment::side(1, Side::Left), ArcSegment::side(2, Side::Right)],
        )
        .unwrap();
        let zero = ScalarField::zeros(&d, Support::Interior);
        let m = CouplingMatrix::from_domain(&d, c.beta(1.0)).unwrap().get(0, 1);
        assert_close!(sinh_expression(&d, &c, &zero, 1.0).unwrap(), m.sinh(), 1e-15);
        let k1 = ScalarField::constant(&d, Support::Interior, 0.2);
        let k2 = ScalarField::from_fn(&d, Support::Interior, |v| 0.2 + 0.1 * v as f64);
        assert!(sinh_expression(&d, &c, &k1, 1.0).unwrap() >= sinh_expression(&d, &c, &k2, 1.0).unwrap());
    }

    #[test]
    fn factorization_matches_dynkin_for_two_arcs() {
        let c = cal();
        let d = build_rect_domain(
            3,
            3,
            &[ArcSegment::side(1, Side::Left), ArcSegment::side(2, Side::Right)],
        )
        .unwrap();
        let k = ScalarField::from_fn(&d, Support::Interior, |v| 0.1 * (1 + v % 4) as f64);
        let f = Factorization::new(&d, &c, &k, 1.0).unwrap();
        // loops × all excursions of ∂₁ ∪ ∂₂ = shifted square × e^{−½ tr(GK)}
        let shift = c.shift(&d, &[0, 1], 1.0).unwrap();
        let g = d.green0().unwrap();
        let trace: f64 = d.interior().iter().map(|&v| g.at(v, v) * k.get(v)).sum();
        let expected = laplace_shifted_square(&d, &k, &shift).unwrap() * (-0.5 * trace).exp();
        assert_close!(f.total(), expected, 1e-13);
        let zero = ScalarField::zeros(&d, Support::Interior);
        let f0 = Factorization::new(&d, &c, &zero, 1.0).unwrap();
        assert_close!(f0.given_odd(), 1.0, 1e-14);
        assert_close!(f0.given_even(), 1.0, 1e-14);
    }

    #[test]
    fn random_current_two_arcs_reduces_to_cosh_ratio() {
        let d = north_south();
        let beta = 2.0;
        for rate in [0.5, 2.0] {
            let k = ScalarField::constant(&d, Support::Interior, rate);
            let x = excursion_laplace_path_sum(&d, beta, (0, 1), &k).unwrap();
            let m = beta * 0.25;
            assert_close!(random_current_exact(&d, beta, &k).unwrap(), x.cosh() / m.cosh(), 1e-14);
        }
        let zero = ScalarField::zeros(&d, Support::Interior);
        assert_close!(random_current_exact(&d, beta, &zero).unwrap(), 1.0, 1e-15);
    }

    #[test]
    fn identity_report_json_fields() {
        let r = IdentityReport::exact(1.0, 0.5);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["lhs", "rhs", "abs_err", "z_score", "n_samples", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
