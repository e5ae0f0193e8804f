//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use loopsoup_core::excursions::ExcursionSampler;
use loopsoup_core::experiments::{ExperimentReport, Verdict};
use loopsoup_core::identities::calibrate;
use loopsoup_core::lattice::{arc_harmonic, build_rect_domain, dirichlet_form, ArcSegment};
use loopsoup_core::loopsoup::RewireMode;
use loopsoup_lab::{execute, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(cfg: &RunConfig) -> ExperimentReport {
    execute(cfg).unwrap_or_else(|e| panic!("{} failed to run: {e}", cfg.experiment))
}

/// Worst claim verdict among the named claims, and how many there were.
fn claims_verdict(r: &ExperimentReport, id: &str) -> (Verdict, usize) {
    let v: Vec<Verdict> = r.claims_named(id).map(|c| c.verdict).collect();
    (Verdict::combine(v.iter().copied()), v.len())
}

fn calibration() -> Outcome {
    let r = calibrate().expect("calibration");
    let ok = r.anchor_residual < 1e-12 && r.validation_residual < 1e-10;
    outcome(
        ok,
        format!(
            "1-vertex residual {:.1e}, 2x2 residual {:.1e}",
            r.anchor_residual, r.validation_residual
        ),
    )
}

/// Every way to cut the boundary ring into `k` contiguous arcs; the arc
/// through position 0 wraps around and is given as two ring segments.
fn ring_partitions(len: usize, k: usize) -> Vec<Vec<ArcSegment>> {
    fn cuts(len: usize, k: usize, from: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if acc.len() == k {
            out.push(acc.clone());
            return;
        }
        for c in from..len {
            acc.push(c);
            cuts(len, k, c + 1, acc, out);
            acc.pop();
        }
    }
    let mut all = Vec::new();
    cuts(len, k, 0, &mut Vec::new(), &mut all);
    all.into_iter()
        .map(|c| {
            let mut arcs: Vec<ArcSegment> = (0..k - 1).map(|i| ArcSegment::ring(i + 1, c[i], c[i + 1])).collect();
            arcs.push(ArcSegment::ring(k, c[k - 1], len));
            if c[0] > 0 {
                arcs.push(ArcSegment::ring(k, 0, c[0]));
            }
            arcs
        })
        .collect()
}

fn pairing() -> Outcome {
    let (mut worst, mut checked, mut partitions) = (0.0f64, 0usize, 0usize);
    for nx in 1..=4 {
        for ny in 1..=4 {
            for k in [2, 3] {
                for arcs in ring_partitions(2 * (nx + ny), k) {
                    let d = build_rect_domain(nx, ny, &arcs).expect("partition domain");
                    let ex = ExcursionSampler::new(&d).expect("kernel");
                    let h: Vec<_> = (0..k).map(|i| arc_harmonic(&d, &[i]).expect("harmonic")).collect();
                    for i in 0..k {
                        for j in i + 1..k {
                            let diff = (-dirichlet_form(&d, &h[i], &h[j]) - ex.mass(i, j)).abs();
                            worst = worst.max(diff);
                            checked += 1;
                        }
                    }
                    partitions += 1;
                }
            }
        }
    }
    outcome(
        worst < 1e-12,
        format!("{partitions} partitions, {checked} arc pairs, max |residual| {worst:.1e}"),
    )
}

fn isomorphism() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [2, 3] {
        let mut cfg = RunConfig::new("isomorphism", 1);
        (cfg.nx, cfg.ny, cfg.alpha, cfg.replicas) = (n, n, 0.5, 100_000);
        cfg.thresholds.z_max = 5.0;
        let r = run(&cfg);
        let mut line = format!("{n}x{n}:");
        for id in ["iso.mean", "iso.variance", "iso.ks"] {
            let (v, count) = claims_verdict(&r, id);
            pass &= v == Verdict::Pass && count == n * n;
            line.push_str(&format!(" {id} {v}"));
        }
        let min_p = r.claims_named("iso.ks").filter_map(|c| c.p_value).fold(1.0, f64::min);
        parts.push(format!("{line} (min raw KS p {min_p:.3})"));
    }
    outcome(pass, parts.join("; "))
}

fn rewiring() -> Outcome {
    let mut cfg = RunConfig::new("rewiring", 2);
    (cfg.nx, cfg.ny, cfg.alpha, cfg.replicas) = (3, 3, 0.5, 100);
    cfg.rewiring.steps = 10_000;
    cfg.rewiring.modes = vec![RewireMode::Oriented, RewireMode::Unoriented];
    let r = run(&cfg);
    let claims: Vec<_> = r.claims_named("rewire.conservation").collect();
    let violations: f64 = claims.iter().map(|c| c.estimate).sum();
    let steps: usize = claims.iter().map(|c| c.n_samples).sum();
    outcome(
        claims.len() == 2 && violations == 0.0 && steps == 20_000,
        format!("{violations} violations in {steps} steps over both modes"),
    )
}

fn parity_report() -> ExperimentReport {
    let mut cfg = RunConfig::new("multi_arc_parity", 3);
    (cfg.nx, cfg.ny, cfg.replicas) = (3, 3, 1_000_000);
    cfg.arc_counts = vec![2, 3, 4];
    cfg.killing_fields = 3;
    cfg.identity_samples = 1_000_000;
    run(&cfg)
}

fn parity_samplers(r: &ExperimentReport) -> Outcome {
    let agree: Vec<_> = r.claims_named("parity.samplers_agree").collect();
    let ps: Vec<String> = agree
        .iter()
        .map(|c| format!("{} p={:.3}", c.label, c.p_value.unwrap_or(f64::NAN)))
        .collect();
    let raw_ok = agree.len() == 3 && agree.iter().all(|c| c.p_value.is_some_and(|p| p > 0.01));
    let (held, count) = claims_verdict(r, "parity.event_holds");
    outcome(
        raw_ok && held == Verdict::Pass && count == 3,
        format!("{}; event holds: {held}", ps.join(", ")),
    )
}

fn random_current(r: &ExperimentReport) -> Outcome {
    let rc: Vec<_> = r
        .claims_named("rc.identity")
        .filter(|c| c.label.starts_with("n=2 ") || c.label.starts_with("n=3 "))
        .collect();
    let worst = rc.iter().filter_map(|c| c.z).fold(0.0f64, |m, z| m.max(z.abs()));
    outcome(
        rc.len() == 6 && rc.iter().all(|c| c.z.is_some_and(|z| z.abs() < 4.0)),
        format!("{} checks, max |z| {worst:.2}", rc.len()),
    )
}

fn rectangle_report() -> ExperimentReport {
    let mut cfg = RunConfig::new("rectangle_crossing", 4);
    (cfg.nx, cfg.ny, cfg.alpha, cfg.replicas) = (3, 3, 0.5, 100_000);
    cfg.target_m = Some(std::f64::consts::LN_2 / 2.0);
    run(&cfg)
}

fn crossing_parity(r: &ExperimentReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (id, target) in [
        ("rect.e_minus_o", 0.5),
        ("rect.ecapa", 0.25),
        ("rect.o", 0.25),
        ("rect.odd_given_a", 0.5),
    ] {
        let c = r.claims_named(id).next().expect("claim present");
        let z = c.z.unwrap_or(f64::INFINITY);
        pass &= (c.target - target).abs() < 1e-12 && z.abs() < 4.0;
        parts.push(format!("{id} {:.4} (z {z:+.2})", c.estimate));
    }
    outcome(pass, parts.join(", "))
}

fn occupation_law(r: &ExperimentReport) -> Outcome {
    let ks: Vec<_> = r.claims_named("rect.panel_ks").collect();
    let m = ks.len() as f64;
    let min_class = ks.iter().map(|c| c.n_samples).min().unwrap_or(0);
    let adjusted: Vec<f64> = ks.iter().map(|c| (c.p_value.unwrap_or(0.0) * m).min(1.0)).collect();
    let worst = adjusted.iter().copied().fold(1.0, f64::min);
    outcome(
        ks.len() == 5 && min_class >= 3000 && adjusted.iter().all(|&p| p > 0.01),
        format!("5 functionals, smaller class {min_class}, min Bonferroni p {worst:.3}"),
    )
}

fn strip() -> Outcome {
    let mut cfg = RunConfig::new("strip_parity", 5);
    cfg.replicas = 10_000;
    let r = run(&cfg);
    let p_even: Vec<_> = r.claims_named("strip.p_even").collect();
    let (exact_a, n_a) = claims_verdict(&r, "strip.a_n");
    let (mono, n_mono) = claims_verdict(&r, "strip.monotone");
    let within = p_even.iter().all(|c| c.z.is_some_and(|z| z.abs() < 4.0));
    let zs: Vec<String> = p_even
        .iter()
        .map(|c| format!("{} z {:+.2}", c.label, c.z.unwrap_or(f64::NAN)))
        .collect();
    outcome(
        p_even.len() == 3 && within && exact_a == Verdict::Pass && n_a == 3 && mono == Verdict::Pass && n_mono == 2,
        format!("{}; a(n) exact {exact_a}; monotone {mono}", zs.join(", ")),
    )
}

fn determinism() -> Outcome {
    let mut configs = Vec::new();
    for name in [
        "isomorphism",
        "multi_arc_parity",
        "rectangle_crossing",
        "strip_parity",
        "rewiring",
    ] {
        let mut cfg = RunConfig::new(name, 6);
        cfg.replicas = 2000;
        cfg.identity_samples = 2000;
        cfg.rewiring.steps = 500;
        configs.push(cfg);
    }
    let mut differing = Vec::new();
    for cfg in &configs {
        let reports: Vec<String> = [1, 8]
            .into_iter()
            .map(|w| {
                let mut c = cfg.clone();
                c.workers = Some(w);
                run(&c).to_json()
            })
            .collect();
        if reports[0] != reports[1] {
            differing.push(cfg.experiment.clone());
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} experiments byte-identical at 1 and 8 workers", configs.len())
        } else {
            format!("reports differ: {}", differing.join(", "))
        },
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Option<Duration>, Outcome, Duration)> = Vec::new();
    let (o, t) = timed(calibration);
    results.push((1, "calibration exactness", Some(Duration::from_secs(1)), o, t));
    let (o, t) = timed(pairing);
    results.push((2, "pairing identity", Some(Duration::from_secs(10)), o, t));
    let (o, t) = timed(isomorphism);
    results.push((3, "occupation field isomorphism", Some(Duration::from_secs(300)), o, t));
    let (o, t) = timed(rewiring);
    results.push((4, "rewiring conservation", None, o, t));

    // criteria 5 and 6 share one run, as do 7 and 8
    let t = Instant::now();
    let parity = parity_report();
    let t_parity = t.elapsed();
    let o = parity_samplers(&parity);
    results.push((
        5,
        "parity sampler equivalence",
        Some(Duration::from_secs(600)),
        o,
        t_parity,
    ));
    let o = random_current(&parity);
    results.push((
        6,
        "random-current identity",
        Some(Duration::from_secs(600)),
        o,
        t_parity,
    ));

    let t = Instant::now();
    let rect = rectangle_report();
    let t_rect = t.elapsed();
    results.push((
        7,
        "crossing parity",
        Some(Duration::from_secs(900)),
        crossing_parity(&rect),
        t_rect,
    ));
    results.push((
        8,
        "occupation law given crossing",
        Some(Duration::from_secs(1200)),
        occupation_law(&rect),
        t_rect,
    ));

    let (o, t) = timed(strip);
    results.push((9, "strip parity mechanism", Some(Duration::from_secs(600)), o, t));
    let (o, t) = timed(determinism);
    results.push((10, "determinism across workers", None, o, t));

    let mut failed = 0;
    for (id, name, limit, o, elapsed) in &results {
        let in_time = limit.is_none_or(|l| *elapsed < l);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let budget = match limit {
            Some(l) => format!("{elapsed:.2?} of {l:.0?}"),
            None => format!("{elapsed:.2?}"),
        };
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
