//! Monte-Carlo checks of the samplers against exact values.

use loopsoup_core::excursions::{occupation_functional, ExcursionSampler, Restriction};
use loopsoup_core::experiments::{run_experiment, ExperimentConfig, Verdict};
use loopsoup_core::gff::GffSampler;
use loopsoup_core::identities::{calibrate, dynkin_check_mc, CalibrationConstants};
use loopsoup_core::lattice::{arc_harmonic, build_rect_domain, ring_arcs, DomainGraph, ScalarField, Support};
use loopsoup_core::loopsoup::LoopSoupSampler;
use loopsoup_core::rng::run_replicas;
use loopsoup_core::stats::{chi_square_contingency, chi_square_gof, mean_se};

fn cal() -> CalibrationConstants {
    calibrate().unwrap().constants
}

#[test]
fn gff_covariance_matches_green() {
    let d = build_rect_domain(2, 3, &[]).unwrap();
    let zero = ScalarField::zeros(&d, Support::All);
    let gff = GffSampler::new(&d, &zero).unwrap();
    let g = d.green0().unwrap();
    let samples = run_replicas(11, 1, 100_000, |rng, _| gff.sample_centered(rng));
    for (i, &x) in d.interior().iter().enumerate() {
        for (j, &y) in d.interior().iter().enumerate().skip(i) {
            let prods: Vec<f64> = samples.iter().map(|h| h[i] * h[j]).collect();
            let (m, se) = mean_se(&prods);
            assert!(
                (m - g.at(x, y)).abs() < 5.0 * se,
                "cov({x},{y}) = {m} vs {}",
                g.at(x, y)
            );
        }
    }
}

#[test]
fn path_graph_loop_count_is_poisson() {
    let d = DomainGraph::path(2, false).unwrap();
    let alpha = 0.5;
    let soup = LoopSoupSampler::new(&d, alpha, 200).unwrap();
    let n = 100_000;
    let counts = run_replicas(12, 1, n, |rng, _| soup.sample(rng).nontrivial().count());
    let lam = alpha * (4.0f64 / 3.0).ln();
    let max = *counts.iter().max().unwrap();
    let mut observed = vec![0.0; max + 2];
    for &c in &counts {
        observed[c] += 1.0;
    }
    let mut expected = Vec::new();
    let mut p = (-lam).exp();
    for k in 0..=max {
        if k > 0 {
            p *= lam / k as f64;
        }
        expected.push(n as f64 * p);
    }
    expected.push(n as f64 - expected.iter().sum::<f64>());
    assert!(chi_square_gof(&observed, &expected).p_value > 1e-3);
}

#[test]
fn le_jan_moments_hold_off_criticality() {
    let cfg = ExperimentConfig {
        nx: 2,
        ny: 2,
        alpha: 0.25,
        replicas: 50_000,
        seed: 13,
        ..Default::default()
    };
    let r = run_experiment("isomorphism", &cfg, &cal()).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.claims_named("iso.mean").count() == 4);
    assert!(r.claims_named("iso.ks").next().is_none());
}

#[test]
fn empty_interior_passes_vacuously() {
    let cfg = ExperimentConfig {
        nx: 0,
        ny: 3,
        ..Default::default()
    };
    let r = run_experiment("isomorphism", &cfg, &cal()).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.claims.is_empty());
}

#[test]
fn excursion_occupation_mean_is_product_of_harmonic_measures() {
    let d = build_rect_domain(3, 2, &ring_arcs(3, 2, 2)).unwrap();
    let ex = ExcursionSampler::new(&d).unwrap();
    let beta = 0.7;
    let h0 = arc_harmonic(&d, &[0]).unwrap();
    let h1 = arc_harmonic(&d, &[1]).unwrap();
    let n = 100_000;
    let fields: Vec<Vec<f64>> = run_replicas(14, 1, n, |rng, _| {
        let e = ex.sample_ppp(beta, Restriction::Pair(0, 1), rng);
        d.interior()
            .iter()
            .map(|&x| {
                let k = ScalarField::from_fn(&d, Support::Interior, |v| if v == x { 1.0 } else { 0.0 });
                occupation_functional(&e, &k)
            })
            .collect()
    });
    for (i, &x) in d.interior().iter().enumerate() {
        let col: Vec<f64> = fields.iter().map(|f| f[i]).collect();
        let (m, se) = mean_se(&col);
        let target = beta * h0.get(x) * h1.get(x);
        assert!((m - target).abs() < 5.0 * se, "vertex {x}: {m} vs {target}");
    }
}

#[test]
fn same_arc_counts_ignore_crossing_parity() {
    let d = build_rect_domain(2, 2, &ring_arcs(2, 2, 2)).unwrap();
    let ex = ExcursionSampler::new(&d).unwrap();
    let rows = run_replicas(15, 1, 40_000, |rng, _| {
        let e = ex.sample_ppp(1.5, Restriction::AllPairs, rng);
        (
            (e.counts[0][1] % 2) as usize,
            (e.counts[0][0] + e.counts[1][1]) as usize,
        )
    });
    let max = rows.iter().map(|r| r.1).max().unwrap();
    let mut table = vec![vec![0u64; max + 1]; 2];
    for (parity, same) in rows {
        table[parity][same] += 1;
    }
    assert!(chi_square_contingency(&table).p_value > 1e-3);
}

#[test]
fn dynkin_identity_by_monte_carlo() {
    let d = build_rect_domain(2, 2, &ring_arcs(2, 2, 2)).unwrap();
    let k = ScalarField::from_fn(&d, Support::Interior, |v| 0.3 + 0.1 * v as f64);
    let r = dynkin_check_mc(&d, &cal(), &[0, 1], 1.0, &k, 50_000, 16).unwrap();
    assert!(r.z_score.unwrap().abs() < 4.0, "{r:?}");
}
