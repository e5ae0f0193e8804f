use super::{ExperimentConfig, ExperimentReport, ReportBuilder, Rule, Table};
use crate::error::{invalid, Result};
use crate::excursions::{occupation_functional, ExcursionSampler, Restriction};
use crate::identities::{crossing_formulas, CalibrationConstants, Factorization};
use crate::lattice::{build_rect_domain, ArcSegment, DomainGraph, ScalarField, Side, Support};
use crate::loopsoup::{cable_clusters, occupation_field};
use crate::rng::{run_replicas, StreamRng};
use crate::stats::{energy_test, ks_two_sample, mean_se, prop_ztest};

const SAMPLES: u16 = 0x500;
const PERMUTATIONS: u16 = 0x501;

/// `nx × ny` grid whose left side is arc 1 and right side arc 2.
pub fn rectangle_domain(nx: usize, ny: usize) -> Result<DomainGraph> {
    build_rect_domain(
        nx,
        ny,
        &[ArcSegment::side(1, Side::Left), ArcSegment::side(2, Side::Right)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    EvenNotConnected,
    EvenConnected,
    Odd,
}

struct Replica {
    class: Class,
    crossings: u64,
    panel: Vec<f64>,
    /// `exp(−T(k))` for the Laplace-transform claims.
    laplace: f64,
}

/// Loop soup plus the excursion process between the two vertical sides.
/// Each replica is classified by the parity of left-right crossings (E / O)
/// and by whether a cable-graph cluster joins the two sides (A).
pub fn rectangle_crossing_experiment(cfg: &ExperimentConfig, cal: &CalibrationConstants) -> Result<ExperimentReport> {
    let mut rb = ReportBuilder::new("rectangle_crossing", cfg.thresholds);
    let th = cfg.thresholds;
    let domain = match &cfg.arcs {
        Some(arcs) => build_rect_domain(cfg.nx, cfg.ny, arcs)?,
        None => rectangle_domain(cfg.nx, cfg.ny)?,
    };
    if domain.n_arcs() != 2 {
        return Err(invalid("arcs", "the rectangle experiment needs exactly two arcs"));
    }
    let ex = ExcursionSampler::new(&domain)?.with_local_time_unit(cal.local_time_unit);
    let mass = ex.mass(0, 1);
    let (beta, u) = match cfg.target_m {
        Some(m) => {
            let b = m / mass;
            (b, cal.u_for_beta(b))
        }
        None => cfg.resolve_beta(cal),
    };
    let m = beta * mass;
    let probs = crossing_formulas(m)?;
    let soup = cfg.loop_sampler(&domain, cal)?;

    // ℓ on the arcs: half the squared boundary height.
    let arc_ell = 0.5 * (u * cal.height_gap).powi(2);
    let boundary_ell = ScalarField::from_fn(&domain, Support::All, |v| {
        if domain.arc_of(v).is_some() {
            arc_ell
        } else {
            0.0
        }
    });
    let left = domain.arc_vertices(0);
    let right = domain.arc_vertices(1);
    let panel: Vec<ScalarField> = cfg.panel.iter().map(|p| p.field(&domain)).collect();
    let k_test = panel[0].scaled(cfg.laplace_scale);

    let n = cfg.replicas;
    let reps: Vec<Replica> = run_replicas(cfg.seed, SAMPLES, n, |rng, _| {
        let loops = soup.sample(rng);
        let exc = ex.sample_ppp(beta, Restriction::AllPairs, rng);
        let crossings = exc.counts[0][1];
        let class = if crossings % 2 == 1 {
            Class::Odd
        } else if cable_clusters(&domain, &loops, Some(&exc), &boundary_ell, rng).connects(&left, &right) {
            Class::EvenConnected
        } else {
            Class::EvenNotConnected
        };
        let occ = occupation_field(&domain, &loops);
        let total = |k: &ScalarField| occ.interior_dot(&domain, k) + occupation_functional(&exc, k);
        Replica {
            class,
            crossings,
            panel: panel.iter().map(total).collect(),
            laplace: (-total(&k_test)).exp(),
        }
    });

    let indicator =
        |f: &dyn Fn(&Replica) -> bool| -> Vec<f64> { reps.iter().map(|r| if f(r) { 1.0 } else { 0.0 }).collect() };
    let is_odd = |r: &Replica| r.class == Class::Odd;
    let is_ea = |r: &Replica| r.class == Class::EvenConnected;
    let n_odd = reps.iter().filter(|r| is_odd(r)).count();
    let n_ea = reps.iter().filter(|r| is_ea(r)).count();
    let n_a = n_odd + n_ea;

    let diff: Vec<f64> = indicator(&|r| !is_odd(r))
        .iter()
        .zip(indicator(&is_odd))
        .map(|(e, o)| e - o)
        .collect();
    let (d, d_se) = mean_se(&diff);
    rb.z("rect.e_minus_o", "", probs.p_e - probs.p_o, d, d_se, n);

    let se_p = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
    rb.z(
        "rect.ecapa",
        "",
        probs.p_ecapa,
        n_ea as f64 / n as f64,
        se_p(probs.p_ecapa),
        n,
    );
    rb.z("rect.o", "", probs.p_o, n_odd as f64 / n as f64, se_p(probs.p_o), n);
    let diff: Vec<f64> = indicator(&is_ea)
        .iter()
        .zip(indicator(&is_odd))
        .map(|(a, o)| a - o)
        .collect();
    let (d, d_se) = mean_se(&diff);
    rb.z("rect.ecapa_eq_o", "", 0.0, d, d_se, n);

    if n_a >= th.min_class_samples {
        let t = prop_ztest(n_odd as u64, n_a as u64, 0.5);
        rb.z(
            "rect.odd_given_a",
            "",
            0.5,
            n_odd as f64 / n_a as f64,
            (0.25 / n_a as f64).sqrt(),
            n_a,
        )
        .p_value = Some(t.p_value);
    } else {
        rb.inconclusive("rect.odd_given_a", "", 0.5, n_a, Rule::ZScore);
    }

    if cfg.alpha == 0.5 {
        let f = Factorization::new(&domain, cal, &k_test, u)?;
        let odd: Vec<f64> = reps.iter().filter(|r| is_odd(r)).map(|r| r.laplace).collect();
        let even: Vec<f64> = reps.iter().filter(|r| !is_odd(r)).map(|r| r.laplace).collect();
        for (claim, values, target) in [("rect.sinh", odd, f.given_odd()), ("rect.cosh", even, f.given_even())] {
            if values.len() >= th.min_class_samples {
                let (mu, se) = mean_se(&values);
                rb.z(claim, "", target, mu, se, values.len());
            } else {
                rb.inconclusive(claim, "", target, values.len(), Rule::ZScore);
            }
        }
    } else {
        rb.note("the conditioned Laplace transforms are checked only at alpha = 1/2");
    }

    let enough = n_ea >= th.min_class_samples && n_odd >= th.min_class_samples;
    let ea: Vec<&Replica> = reps.iter().filter(|r| is_ea(r)).collect();
    let odd: Vec<&Replica> = reps.iter().filter(|r| is_odd(r)).collect();
    for (i, p) in cfg.panel.iter().enumerate() {
        if enough {
            let a: Vec<f64> = ea.iter().map(|r| r.panel[i]).collect();
            let b: Vec<f64> = odd.iter().map(|r| r.panel[i]).collect();
            rb.p("rect.panel_ks", p.name(), ks_two_sample(&a, &b), n_ea.min(n_odd));
        } else {
            rb.inconclusive("rect.panel_ks", p.name(), 0.0, n_ea.min(n_odd), Rule::PValue);
        }
    }
    if enough {
        // Standardize each functional by its pooled spread before measuring
        // distances, so no coordinate dominates.
        let dim = cfg.panel.len();
        let pooled: Vec<&Replica> = ea.iter().chain(&odd).copied().collect();
        let scale: Vec<f64> = (0..dim)
            .map(|i| {
                let xs: Vec<f64> = pooled.iter().map(|r| r.panel[i]).collect();
                let (mu, _) = mean_se(&xs);
                let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let sub = cfg.energy_subsample;
        let vecs = |rs: &[&Replica]| -> Vec<Vec<f64>> {
            rs.iter()
                .take(sub)
                .map(|r| r.panel.iter().zip(&scale).map(|(x, s)| x / s).collect())
                .collect()
        };
        let mut rng = StreamRng::derived(cfg.seed, PERMUTATIONS, 0);
        let t = energy_test(&vecs(&ea), &vecs(&odd), cfg.permutations, &mut rng);
        rb.p("rect.panel_energy", "", t, sub.min(n_ea).min(n_odd));
    } else {
        rb.inconclusive("rect.panel_energy", "", 0.0, n_ea.min(n_odd), Rule::PValue);
    }

    rb.note(format!(
        "beta = {beta}, u = {u}, |mu_12| = {mass}, m = {m}; classes: E\\A = {}, E∩A = {n_ea}, O = {n_odd}",
        n - n_a
    ));
    rb.note("A is connectivity of the two arcs by clusters of the cable-graph configuration");
    rb.raw(Table {
        name: "replicas".into(),
        columns: ["class", "crossings"]
            .into_iter()
            .map(String::from)
            .chain(cfg.panel.iter().map(|p| p.name().to_string()))
            .collect(),
        rows: reps
            .iter()
            .map(|r| {
                let c = match r.class {
                    Class::EvenNotConnected => 0.0,
                    Class::EvenConnected => 1.0,
                    Class::Odd => 2.0,
                };
                [c, r.crossings as f64]
                    .into_iter()
                    .chain(r.panel.iter().copied())
                    .collect()
            })
            .collect(),
    });
    Ok(rb.finish(cfg))
}
