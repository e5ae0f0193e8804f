use super::{ExperimentConfig, ExperimentReport, ReportBuilder, Table};
use crate::error::Result;
use crate::gff::GffSampler;
use crate::identities::CalibrationConstants;
use crate::lattice::{build_rect_domain, ScalarField, Support};
use crate::loopsoup::occupation_field;
use crate::rng::run_replicas;
use crate::stats::{ks_two_sample, mean_se, variance_se};

const LOOPS: u16 = 0x30;
const FIELD: u16 = 0x31;

/// Occupation field of the loop soup against `½φ²` on an `nx × ny` grid:
/// per-vertex moments against `α·G(x,x)` and `α·G(x,x)²`, and at `α = ½`
/// two-sample KS tests per vertex and per panel functional.
pub fn isomorphism_experiment(cfg: &ExperimentConfig, cal: &CalibrationConstants) -> Result<ExperimentReport> {
    let mut rb = ReportBuilder::new("isomorphism", cfg.thresholds);
    if cfg.nx == 0 || cfg.ny == 0 {
        rb.note("empty interior: nothing to compare");
        return Ok(rb.finish(cfg));
    }
    let domain = build_rect_domain(cfg.nx, cfg.ny, &[])?;
    let soup = cfg.loop_sampler(&domain, cal)?;
    let g = domain.green0()?;
    let s = cal.local_time_unit;
    let alpha = cfg.alpha;
    let n = cfg.replicas;

    rb.info(
        "iso.truncation",
        "tail bound",
        0.0,
        soup.truncation_bound(),
        soup.k_max(),
    );

    let occupation: Vec<Vec<f64>> = run_replicas(cfg.seed, LOOPS, n, |rng, _| {
        let ens = soup.sample(rng);
        let f = occupation_field(&domain, &ens);
        domain.interior().iter().map(|&v| f.get(v)).collect()
    });
    let critical = alpha == 0.5;
    let zero = ScalarField::zeros(&domain, Support::All);
    let gff = GffSampler::new(&domain, &zero)?;
    let half_square: Vec<Vec<f64>> = if critical {
        run_replicas(cfg.seed, FIELD, n, |rng, _| {
            gff.sample_centered(rng).iter().map(|p| 0.5 * s * p * p).collect()
        })
    } else {
        rb.note(format!(
            "alpha = {alpha}: only the moment identities apply; the law comparison needs alpha = 1/2"
        ));
        Vec::new()
    };

    for (i, &v) in domain.interior().iter().enumerate() {
        let (x, y) = domain.coords(v).unwrap_or((0, 0));
        let label = format!("vertex ({x},{y})");
        let column: Vec<f64> = occupation.iter().map(|r| r[i]).collect();
        let gxx = g.at(v, v);
        let (m, m_se) = mean_se(&column);
        rb.z("iso.mean", &label, alpha * s * gxx, m, m_se, n);
        let (var, var_se) = variance_se(&column);
        rb.z("iso.variance", &label, alpha * s * s * gxx * gxx, var, var_se, n);
        if critical {
            let other: Vec<f64> = half_square.iter().map(|r| r[i]).collect();
            rb.p("iso.ks", &label, ks_two_sample(&column, &other), n);
        }
    }

    if critical {
        let mut raw_rows = Vec::with_capacity(n);
        let panel: Vec<(String, Vec<f64>)> = cfg
            .panel
            .iter()
            .map(|p| {
                let k = p.field(&domain);
                (
                    p.name().to_string(),
                    domain.interior().iter().map(|&v| k.get(v)).collect(),
                )
            })
            .collect();
        let apply = |w: &[f64], r: &[f64]| -> f64 { w.iter().zip(r).map(|(a, b)| a * b).sum() };
        for (name, w) in &panel {
            let a: Vec<f64> = occupation.iter().map(|r| apply(w, r)).collect();
            let b: Vec<f64> = half_square.iter().map(|r| apply(w, r)).collect();
            rb.p("iso.functional", name, ks_two_sample(&a, &b), n);
        }
        for (a, b) in occupation.iter().zip(&half_square) {
            raw_rows.push(vec![a.iter().sum(), b.iter().sum()]);
        }
        rb.raw(Table {
            name: "totals".into(),
            columns: vec!["loop_occupation".into(), "half_gff_square".into()],
            rows: raw_rows,
        });
    }
    Ok(rb.finish(cfg))
}
