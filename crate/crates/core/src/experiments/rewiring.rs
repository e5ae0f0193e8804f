use super::{tally, ExperimentConfig, ExperimentReport, ReportBuilder};
use crate::error::Result;
use crate::identities::CalibrationConstants;
use crate::lattice::build_rect_domain;
use crate::loopsoup::{clusters, occupation_field, rewire_step, LoopEnsemble, RewireMode};
use crate::rng::run_replicas;
use crate::stats::chi_square_homogeneity;

const CONSERVATION: u16 = 0x700;
const FRESH: u16 = 0x710;
const REWIRED: u16 = 0x720;

/// Steps applied to each ensemble in the conservation check.
const STEPS_PER_ENSEMBLE: usize = 100;
const MAX_RESAMPLES: usize = 1000;

fn mode_tag(mode: RewireMode) -> u16 {
    match mode {
        RewireMode::Oriented => 0,
        RewireMode::Unoriented => 1,
    }
}

fn mode_name(mode: RewireMode) -> &'static str {
    match mode {
        RewireMode::Oriented => "oriented",
        RewireMode::Unoriented => "unoriented",
    }
}

/// `(loop count, max loop length)` over nontrivial loops.
fn summary(e: &LoopEnsemble) -> (usize, usize) {
    let count = e.nontrivial().count();
    let longest = e.nontrivial().map(|l| l.len()).max().unwrap_or(0);
    (count, longest)
}

/// Intensity at which a mode's re-pairing is expected to leave the soup
/// invariant: orientation-preserving re-pairing matches the oriented soup
/// (`α = 1`), matchings of unoriented ends the unoriented one (`α = ½`).
fn natural_alpha(mode: RewireMode) -> f64 {
    match mode {
        RewireMode::Oriented => 1.0,
        RewireMode::Unoriented => 0.5,
    }
}

/// Rewiring steps on sampled ensembles: exact conservation of local times,
/// jumps and clusters at every step, and a chi-square comparison of
/// `(loop count, max loop length)` before and after several sweeps.
pub fn rewiring_experiment(cfg: &ExperimentConfig, cal: &CalibrationConstants) -> Result<ExperimentReport> {
    let rc = &cfg.rewiring;
    let mut rb = ReportBuilder::new("rewiring", cfg.thresholds);
    let domain = build_rect_domain(cfg.nx, cfg.ny, &[])?;
    let soup = cfg.loop_sampler(&domain, cal)?;

    for &mode in &rc.modes {
        let label = mode_name(mode);
        let ensembles = rc.steps.div_ceil(STEPS_PER_ENSEMBLE);
        let per: Vec<(usize, usize, usize)> =
            run_replicas(cfg.seed, CONSERVATION + mode_tag(mode), ensembles, |rng, r| {
                // Sparse soups often have nothing to rewire; resample a
                // bounded number of times so the steps do something.
                let mut ens = soup.sample(rng);
                for _ in 0..MAX_RESAMPLES {
                    if ens.passage_counts().iter().any(|&c| c >= 2) {
                        break;
                    }
                    ens = soup.sample(rng);
                }
                let steps = STEPS_PER_ENSEMBLE.min(rc.steps - r * STEPS_PER_ENSEMBLE);
                let (mut violations, mut idle) = (0, 0);
                for _ in 0..steps {
                    let occ = occupation_field(&domain, &ens);
                    let jumps = match mode {
                        RewireMode::Oriented => ens.edge_multiset(),
                        RewireMode::Unoriented => ens.undirected_edge_multiset(),
                    };
                    let part = clusters(&ens, None);
                    let out = rewire_step(&mut ens, mode, rng);
                    idle += usize::from(out.vertex.is_none());
                    let occ_after = occupation_field(&domain, &ens);
                    let same_occ = occ
                        .values()
                        .iter()
                        .zip(occ_after.values())
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                    let jumps_after = match mode {
                        RewireMode::Oriented => ens.edge_multiset(),
                        RewireMode::Unoriented => ens.undirected_edge_multiset(),
                    };
                    if !same_occ || jumps != jumps_after || part != clusters(&ens, None) {
                        violations += 1;
                    }
                }
                (violations, idle, steps)
            });
        let violations = per.iter().map(|p| p.0).sum();
        let idle: usize = per.iter().map(|p| p.1).sum();
        let steps: usize = per.iter().map(|p| p.2).sum();
        rb.always("rewire.conservation", label, violations, steps);
        rb.note(format!(
            "{label}: {idle} of {steps} steps found no vertex with two passages and left the ensemble unchanged"
        ));

        let fresh = run_replicas(cfg.seed, FRESH, cfg.replicas, |rng, _| summary(&soup.sample(rng)));
        let rewired = run_replicas(cfg.seed, REWIRED + mode_tag(mode), cfg.replicas, |rng, _| {
            let mut ens = soup.sample(rng);
            let sweep: usize = ens.passage_counts().iter().sum();
            for _ in 0..rc.sweeps * sweep {
                rewire_step(&mut ens, mode, rng);
            }
            summary(&ens)
        });
        let (a, b) = tally(&fresh, &rewired);
        let rec = rb.p("rewire.stationary", label, chi_square_homogeneity(&a, &b), cfg.replicas);
        if cfg.alpha != natural_alpha(mode) {
            rec.exploratory = true;
        }
    }
    rb.note(
        "stationarity is decisive only for the mode matching alpha (oriented: alpha = 1, \
         unoriented: alpha = 1/2); other combinations are reported as exploratory",
    );
    Ok(rb.finish(cfg))
}
