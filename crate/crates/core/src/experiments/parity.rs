use super::{tally, ExperimentConfig, ExperimentReport, ReportBuilder};
use crate::error::Result;
use crate::excursions::{counts_even, log_parity_probability, ExcursionSampler, ParityCountSampler, ParityMethod};
use crate::identities::{random_current_identity, random_killing, CalibrationConstants};
use crate::lattice::{build_rect_domain, ring_arcs};
use crate::loopsoup::poisson;
use crate::rng::{run_replicas, StreamRng};
use crate::stats::{chi_square_contingency, chi_square_gof, chi_square_homogeneity, prop_ztest};

const EXACT: u16 = 0x400;
const REJECTION: u16 = 0x410;
const FREE: u16 = 0x420;
const KILLING: u16 = 0x430;

/// Cross-arc counts conditioned on every arc being crossed an even number of
/// times, for each arc count: rejection against exact-count sampling, the
/// acceptance probability, independence of same-arc counts, the two-arc
/// count law, and the random-current identity on random killing fields.
pub fn multi_arc_parity_experiment(cfg: &ExperimentConfig, cal: &CalibrationConstants) -> Result<ExperimentReport> {
    let mut rb = ReportBuilder::new("multi_arc_parity", cfg.thresholds);
    let (beta, _) = cfg.resolve_beta(cal);
    let arc_counts: Vec<usize> = match &cfg.arcs {
        Some(arcs) => vec![arcs.iter().map(|a| a.arc).max().unwrap_or(0)],
        None => cfg.arc_counts.clone(),
    };
    let reps = cfg.replicas;
    for &n in &arc_counts {
        let arcs = cfg.arcs.clone().unwrap_or_else(|| ring_arcs(cfg.nx, cfg.ny, n));
        let domain = build_rect_domain(cfg.nx, cfg.ny, &arcs)?;
        let ex = ExcursionSampler::new(&domain)?.with_local_time_unit(cal.local_time_unit);
        let lambda = ex.cross_intensities(beta);
        let sampler = ParityCountSampler::new(n, &lambda)?;
        let label = format!("n={n}");
        let tag = n as u16;

        let exact = run_replicas(cfg.seed, EXACT + tag, reps, |rng, _| {
            sampler.sample(ParityMethod::ExactCounts, rng)
        });
        let rejected = run_replicas(cfg.seed, REJECTION + tag, reps, |rng, _| {
            sampler.sample(ParityMethod::Rejection, rng)
        });
        let (a, b) = tally(&exact, &rejected);
        rb.p(
            "parity.samplers_agree",
            &label,
            chi_square_homogeneity(&a, &b),
            2 * reps,
        );
        let violations = exact.iter().chain(&rejected).filter(|c| !counts_even(n, c)).count();
        rb.always("parity.event_holds", &label, violations, 2 * reps);

        // Unconditioned counts, cross-arc and same-arc together.
        let same: Vec<f64> = (0..n).map(|i| beta * ex.mass(i, i)).collect();
        let free = run_replicas(cfg.seed, FREE + tag, reps, |rng, _| {
            let c = sampler.sample_free(rng);
            let s: u64 = same.iter().map(|&m| poisson(rng, m)).sum();
            (counts_even(n, &c), s)
        });
        let hits = free.iter().filter(|(even, _)| *even).count() as u64;
        let p_even = log_parity_probability(n, &lambda).exp();
        let t = prop_ztest(hits, reps as u64, p_even);
        rb.z(
            "parity.acceptance",
            &label,
            p_even,
            hits as f64 / reps as f64,
            (p_even * (1.0 - p_even) / reps as f64).sqrt(),
            reps,
        )
        .p_value = Some(t.p_value);
        let max_s = free.iter().map(|f| f.1).max().unwrap_or(0) as usize;
        let mut table = vec![vec![0u64; max_s + 1]; 2];
        for &(even, s) in &free {
            table[usize::from(!even)][s as usize] += 1;
        }
        rb.p(
            "parity.same_arc_independent",
            &label,
            chi_square_contingency(&table),
            reps,
        );

        if n == 2 {
            let lam = lambda[0];
            // P[N = 2j | N even] = e^{−λ}λ^{2j}/(2j)! · 2/(1 + e^{−2λ})
            let max_j = exact.iter().map(|c| c[0] / 2).max().unwrap_or(0) as usize;
            let norm = 2.0 / (1.0 + (-2.0 * lam).exp());
            let mut log_term = -lam;
            let mut expected = Vec::with_capacity(max_j + 2);
            for j in 0..=max_j {
                if j > 0 {
                    let k = 2 * j;
                    log_term += 2.0 * lam.ln() - ((k - 1) as f64).ln() - (k as f64).ln();
                }
                expected.push(reps as f64 * norm * log_term.exp());
            }
            let tail = reps as f64 - expected.iter().sum::<f64>();
            let mut observed = vec![0.0; max_j + 1];
            for c in &exact {
                observed[(c[0] / 2) as usize] += 1.0;
            }
            observed.push(0.0);
            expected.push(tail.max(0.0));
            rb.p("parity.pmf", &label, chi_square_gof(&observed, &expected), reps)
                .target = lam;
        }

        let samples = cfg.replicas.min(cfg.identity_samples);
        for f in 0..cfg.killing_fields {
            let mut rng = StreamRng::derived(cfg.seed, KILLING + tag, f as u64);
            let k = random_killing(&domain, 0.0, 1.0, &mut rng);
            let sub_seed = cfg.seed ^ ((n as u64) << 40 | (f as u64 + 1) << 48);
            let r = random_current_identity(&domain, beta, &k, samples, sub_seed)?;
            let z = r.z_score.unwrap_or(0.0);
            let se = if z != 0.0 { r.abs_err / z.abs() } else { 0.0 };
            rb.z("rc.identity", &format!("n={n} field={f}"), r.rhs, r.lhs, se, samples);
        }
    }
    rb.note("same-arc counts are drawn with the cross-arc counts and tested for independence of the parity event");
    Ok(rb.finish(cfg))
}
