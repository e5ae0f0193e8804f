//! Monte-Carlo experiments that compare the samplers against the closed forms
//! of [`crate::identities`], with a uniform report format.

mod isomorphism;
mod parity;
mod rectangle;
mod rewiring;
mod strip;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::identities::CalibrationConstants;
use crate::lattice::{ArcSegment, DomainGraph, ScalarField, Support};
use crate::loopsoup::RewireMode;
use crate::stats::{bonferroni, TestResult};

pub use isomorphism::isomorphism_experiment;
pub use parity::multi_arc_parity_experiment;
pub use rectangle::{rectangle_crossing_experiment, rectangle_domain};
pub use rewiring::rewiring_experiment;
pub use strip::{strip_box_mean, strip_parity_experiment};

/// Version tag carried by every report.
pub const REPORT_SCHEMA: &str = "loopsoup-lab/report/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// FAIL dominates INCONCLUSIVE, which dominates PASS; an empty set passes.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        verdicts.into_iter().fold(Verdict::Pass, |acc, v| match (acc, v) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Pre-registered decision thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// z-score claims pass when `|z| < z_max`.
    pub z_max: f64,
    /// p-value claims pass when the Bonferroni-adjusted p-value is `> level`.
    pub level: f64,
    /// Conditioned comparisons with fewer samples per class are INCONCLUSIVE.
    pub min_class_samples: usize,
    /// Absolute tolerance for exact (non-random) claims.
    pub exact_tolerance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            z_max: 4.0,
            level: 0.01,
            min_class_samples: 1000,
            exact_tolerance: 1e-12,
        }
    }
}

/// How a claim is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    ZScore,
    PValue,
    Exact,
    /// Reported for information only; never affects the verdict.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim: String,
    /// Which instance of the claim (vertex, width, arc count, ...).
    pub label: String,
    pub target: f64,
    pub estimate: f64,
    pub standard_error: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub adjusted_p_value: Option<f64>,
    pub n_samples: usize,
    pub rule: Rule,
    pub verdict: Verdict,
    /// Exploratory claims are reported but excluded from the overall verdict.
    pub exploratory: bool,
}

/// Tabular data for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub decision_rule: String,
    pub claims: Vec<ClaimRecord>,
    pub notes: Vec<String>,
    /// Curves worth plotting, e.g. `P[even]` against box width.
    pub curves: Vec<Table>,
    /// Per-replica scalars; written to CSV on request, kept out of the JSON.
    #[serde(skip)]
    pub raw: Vec<Table>,
    pub verdict: Verdict,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn claims_named<'a>(&'a self, claim: &'a str) -> impl Iterator<Item = &'a ClaimRecord> + 'a {
        self.claims.iter().filter(move |c| c.claim == claim)
    }
}

const DECISION_RULE: &str = "z claims pass when |z| < z_max; p-value claims pass when the \
Bonferroni-adjusted p-value (over all p-value claims of the experiment) exceeds level; exact \
claims pass within exact_tolerance; a claim is INCONCLUSIVE when a conditioning class has fewer \
than min_class_samples samples; the experiment verdict is FAIL if any non-exploratory claim \
fails, else INCONCLUSIVE if any is inconclusive, else PASS";

/// Collects claim records and turns them into a report.
pub(crate) struct ReportBuilder {
    experiment: &'static str,
    thresholds: Thresholds,
    claims: Vec<ClaimRecord>,
    notes: Vec<String>,
    curves: Vec<Table>,
    raw: Vec<Table>,
}

impl ReportBuilder {
    pub fn new(experiment: &'static str, thresholds: Thresholds) -> Self {
        ReportBuilder {
            experiment,
            thresholds,
            claims: Vec::new(),
            notes: Vec::new(),
            curves: Vec::new(),
            raw: Vec::new(),
        }
    }

    fn push(&mut self, rec: ClaimRecord) -> &mut ClaimRecord {
        debug_assert!(
            catalog()
                .iter()
                .any(|e| e.name == self.experiment && e.claims.iter().any(|c| c.id == rec.claim)),
            "claim {} not in catalog",
            rec.claim
        );
        self.claims.push(rec);
        self.claims.last_mut().unwrap()
    }

    fn record(claim: &str, label: &str, target: f64, estimate: f64, n: usize, rule: Rule) -> ClaimRecord {
        ClaimRecord {
            claim: claim.to_string(),
            label: label.to_string(),
            target,
            estimate,
            standard_error: None,
            z: None,
            p_value: None,
            adjusted_p_value: None,
            n_samples: n,
            rule,
            verdict: Verdict::Pass,
            exploratory: false,
        }
    }

    /// `estimate ± se` against `target`.
    pub fn z(&mut self, claim: &str, label: &str, target: f64, estimate: f64, se: f64, n: usize) -> &mut ClaimRecord {
        let mut r = Self::record(claim, label, target, estimate, n, Rule::ZScore);
        let z = crate::stats::z_score(estimate, target, se);
        r.standard_error = Some(se);
        r.z = Some(z);
        r.verdict = if z.abs() < self.thresholds.z_max {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.push(r)
    }

    /// A test statistic with its p-value; the verdict is set in `finish`.
    pub fn p(&mut self, claim: &str, label: &str, test: impl Into<TestResult>, n: usize) -> &mut ClaimRecord {
        let test = test.into();
        let mut r = Self::record(claim, label, 0.0, test.statistic, n, Rule::PValue);
        r.p_value = Some(test.p_value);
        self.push(r)
    }

    pub fn exact(&mut self, claim: &str, label: &str, target: f64, estimate: f64, n: usize) -> &mut ClaimRecord {
        let mut r = Self::record(claim, label, target, estimate, n, Rule::Exact);
        r.verdict = if (estimate - target).abs() <= self.thresholds.exact_tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.push(r)
    }

    /// A boolean property that must hold in all `n` cases.
    pub fn always(&mut self, claim: &str, label: &str, violations: usize, n: usize) -> &mut ClaimRecord {
        let mut r = Self::record(claim, label, 0.0, violations as f64, n, Rule::Exact);
        r.verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };
        self.push(r)
    }

    pub fn info(&mut self, claim: &str, label: &str, target: f64, estimate: f64, n: usize) -> &mut ClaimRecord {
        let mut r = Self::record(claim, label, target, estimate, n, Rule::Info);
        r.exploratory = true;
        self.push(r)
    }

    pub fn inconclusive(&mut self, claim: &str, label: &str, target: f64, n: usize, rule: Rule) -> &mut ClaimRecord {
        let mut r = Self::record(claim, label, target, f64::NAN, n, rule);
        r.verdict = Verdict::Inconclusive;
        self.push(r)
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn curve(&mut self, table: Table) {
        self.curves.push(table);
    }

    pub fn raw(&mut self, table: Table) {
        self.raw.push(table);
    }

    pub fn finish(mut self, config: &ExperimentConfig) -> ExperimentReport {
        let idx: Vec<usize> = (0..self.claims.len())
            .filter(|&i| self.claims[i].rule == Rule::PValue && self.claims[i].verdict != Verdict::Inconclusive)
            .collect();
        let raw: Vec<f64> = idx.iter().map(|&i| self.claims[i].p_value.unwrap()).collect();
        for (&i, adj) in idx.iter().zip(bonferroni(&raw)) {
            let c = &mut self.claims[i];
            c.adjusted_p_value = Some(adj);
            c.verdict = if adj > self.thresholds.level {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
        }
        let verdict = Verdict::combine(
            self.claims
                .iter()
                .filter(|c| !c.exploratory && c.rule != Rule::Info)
                .map(|c| c.verdict),
        );
        ExperimentReport {
            schema: REPORT_SCHEMA.to_string(),
            experiment: self.experiment.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed: config.seed,
            thresholds: self.thresholds,
            decision_rule: DECISION_RULE.to_string(),
            claims: self.claims,
            notes: self.notes,
            curves: self.curves,
            raw: self.raw,
            verdict,
        }
    }
}

/// Excursion intensity: calibrated from `u`, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaSpec {
    #[default]
    Calibrated,
    Value(f64),
}

impl Serialize for BetaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaSpec::Calibrated => s.serialize_str("calibrated"),
            BetaSpec::Value(b) => s.serialize_f64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(b) => Ok(BetaSpec::Value(b)),
            Raw::Text(t) if t == "calibrated" => Ok(BetaSpec::Calibrated),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "beta must be a number or \"calibrated\", got \"{t}\""
            ))),
        }
    }
}

/// Fixed test functionals `k` of the occupation field, `T(k) = Σ_x k(x)ℓ_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelFunctional {
    /// Total occupation.
    Total,
    /// The middle column(s).
    CenterColumn,
    /// Columns left of the middle.
    LeftHalf,
    /// `k(x) = (i + 1)/nx` in column `i`.
    Ramp,
    /// `±1` by parity of `i + j`, shifted to `{0, 1}`.
    Checkerboard,
    /// The middle row(s).
    CenterRow,
}

impl PanelFunctional {
    pub fn field(self, domain: &DomainGraph) -> ScalarField {
        let (mut nx, mut ny) = (0i64, 0i64);
        for &v in domain.interior() {
            let (x, y) = domain.coords(v).unwrap_or((0, 0));
            nx = nx.max(x + 1);
            ny = ny.max(y + 1);
        }
        ScalarField::from_fn(domain, Support::Interior, |v| {
            let (x, y) = domain.coords(v).unwrap_or((0, 0));
            let mid = |c: i64, n: i64| c == (n - 1) / 2 || c == n / 2;
            let indicator = |b: bool| if b { 1.0 } else { 0.0 };
            match self {
                PanelFunctional::Total => 1.0,
                PanelFunctional::CenterColumn => indicator(mid(x, nx)),
                PanelFunctional::LeftHalf => indicator(2 * x + 1 < nx),
                PanelFunctional::Ramp => (x + 1) as f64 / nx as f64,
                PanelFunctional::Checkerboard => indicator((x + y) % 2 == 0),
                PanelFunctional::CenterRow => indicator(mid(y, ny)),
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PanelFunctional::Total => "total",
            PanelFunctional::CenterColumn => "center-column",
            PanelFunctional::LeftHalf => "left-half",
            PanelFunctional::Ramp => "ramp",
            PanelFunctional::Checkerboard => "checkerboard",
            PanelFunctional::CenterRow => "center-row",
        }
    }
}

pub fn default_panel() -> Vec<PanelFunctional> {
    vec![
        PanelFunctional::Total,
        PanelFunctional::CenterColumn,
        PanelFunctional::LeftHalf,
        PanelFunctional::Ramp,
        PanelFunctional::Checkerboard,
    ]
}

/// Parameters of the strip experiment. Boxes of width `n₁` sit in cells of
/// width `m = spacing·n₁` (3 by default), one box per cell starting `n₁`
/// columns in, so the strip is `m·K` columns wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StripConfig {
    /// Interior rows of the strip.
    pub height: usize,
    /// Box widths `n₁` to compare.
    pub widths: Vec<usize>,
    /// Boxes per strip, `K`.
    pub boxes: usize,
    /// Cell width in units of the box width.
    pub spacing: usize,
    /// `P[even]` is expected within `ε` of ½ once `a(n)` exceeds
    /// `½·ln(1/(2ε))`.
    pub epsilon: f64,
}

impl Default for StripConfig {
    fn default() -> Self {
        StripConfig {
            height: 2,
            widths: vec![4, 8, 16],
            boxes: 8,
            spacing: 3,
            epsilon: 0.05,
        }
    }
}

impl StripConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.boxes == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(invalid("strip", "height, boxes and widths must be positive"));
        }
        if self.spacing < 2 {
            return Err(invalid(
                "strip.spacing",
                format!(
                    "boxes touch or overlap, or leave the strip, unless spacing ≥ 2, got {}",
                    self.spacing
                ),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid(
                "strip.epsilon",
                format!("must lie in (0, ½), got {}", self.epsilon),
            ));
        }
        Ok(())
    }

    /// Column range `lo..hi` of box `j` for width `n`.
    pub fn box_columns(&self, n: usize, j: usize) -> (usize, usize) {
        let cell = self.spacing * n;
        (cell * j + n, cell * j + 2 * n)
    }

    pub fn strip_width(&self, n: usize) -> usize {
        self.spacing * n * self.boxes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewiringConfig {
    /// Steps of the conservation check, spread over the replicas.
    pub steps: usize,
    /// Sweeps applied before comparing with fresh samples; a sweep is as
    /// many steps as the ensemble has passages.
    pub sweeps: usize,
    /// Modes whose stationarity is tested.
    pub modes: Vec<RewireMode>,
}

impl Default for RewiringConfig {
    fn default() -> Self {
        RewiringConfig {
            steps: 10_000,
            sweeps: 10,
            modes: vec![RewireMode::Oriented, RewireMode::Unoriented],
        }
    }
}

/// Everything an experiment needs besides the calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub nx: usize,
    pub ny: usize,
    /// Explicit arcs; each experiment has its own default.
    pub arcs: Option<Vec<ArcSegment>>,
    /// Arc counts for the multi-arc experiment.
    pub arc_counts: Vec<usize>,
    pub alpha: f64,
    pub beta: BetaSpec,
    pub u: f64,
    /// Rectangle experiment: choose `β` so that `β|μ_{1,2}| = target_m`.
    pub target_m: Option<f64>,
    pub replicas: usize,
    /// Loop-length cutoff; derived from `truncation_tolerance` when absent.
    pub k_max: Option<usize>,
    pub truncation_tolerance: f64,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub panel: Vec<PanelFunctional>,
    /// Permutations of the energy-distance test.
    pub permutations: usize,
    /// Per-class subsample for the energy-distance test.
    pub energy_subsample: usize,
    /// Random killing fields for the random-current check.
    pub killing_fields: usize,
    /// Monte-Carlo samples per random-current check (capped by `replicas`).
    pub identity_samples: usize,
    /// The conditioned Laplace transforms use `k = laplace_scale·k₁`, `k₁`
    /// the first panel functional.
    pub laplace_scale: f64,
    pub strip: StripConfig,
    pub rewiring: RewiringConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nx: 2,
            ny: 2,
            arcs: None,
            arc_counts: vec![2, 3, 4],
            alpha: 0.5,
            beta: BetaSpec::Calibrated,
            u: 1.0,
            target_m: None,
            replicas: 10_000,
            k_max: None,
            truncation_tolerance: 1e-10,
            seed: 0,
            thresholds: Thresholds::default(),
            panel: default_panel(),
            permutations: 199,
            energy_subsample: 400,
            killing_fields: 3,
            identity_samples: 100_000,
            laplace_scale: 0.25,
            strip: StripConfig::default(),
            rewiring: RewiringConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if let BetaSpec::Value(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("beta", format!("must be > 0, got {b}")));
            }
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(invalid("u", format!("must be > 0, got {}", self.u)));
        }
        if let Some(m) = self.target_m {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("target_m", format!("must be > 0, got {m}")));
            }
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be ≥ 1"));
        }
        if self.k_max == Some(0) {
            return Err(invalid("k_max", "must be ≥ 1"));
        }
        if !(self.truncation_tolerance > 0.0) {
            return Err(invalid("truncation_tolerance", "must be > 0"));
        }
        if self.arc_counts.iter().any(|&n| !(2..=6).contains(&n)) {
            return Err(invalid("arc_counts", "arc counts must lie in 2..=6"));
        }
        if !(self.laplace_scale > 0.0 && self.laplace_scale.is_finite()) {
            return Err(invalid("laplace_scale", "must be > 0"));
        }
        if self.panel.is_empty() {
            return Err(invalid("panel", "needs at least one functional"));
        }
        let t = &self.thresholds;
        if !(t.z_max > 0.0) || !(t.level > 0.0 && t.level < 1.0) || !(t.exact_tolerance >= 0.0) {
            return Err(invalid("thresholds", "z_max > 0, 0 < level < 1, exact_tolerance ≥ 0"));
        }
        self.strip.validate()?;
        if let Some(arcs) = &self.arcs {
            crate::lattice::build_rect_domain(self.nx, self.ny, arcs)?;
        }
        Ok(())
    }

    /// `(β, u)` after resolving a calibrated intensity.
    pub fn resolve_beta(&self, cal: &CalibrationConstants) -> (f64, f64) {
        match self.beta {
            BetaSpec::Calibrated => (cal.beta(self.u), self.u),
            BetaSpec::Value(b) => (b, cal.u_for_beta(b)),
        }
    }

    pub(crate) fn loop_sampler(
        &self,
        domain: &DomainGraph,
        cal: &CalibrationConstants,
    ) -> Result<crate::loopsoup::LoopSoupSampler> {
        let s = match self.k_max {
            Some(k) => crate::loopsoup::LoopSoupSampler::new(domain, self.alpha, k)?,
            None => crate::loopsoup::LoopSoupSampler::with_tolerance(domain, self.alpha, self.truncation_tolerance)?,
        };
        Ok(s.with_local_time_unit(cal.local_time_unit))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimInfo {
    pub id: &'static str,
    pub anchor: &'static str,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub claims: Vec<ClaimInfo>,
}

const fn claim(id: &'static str, anchor: &'static str, description: &'static str) -> ClaimInfo {
    ClaimInfo {
        id,
        anchor,
        description,
    }
}

/// Every experiment with the claims its reports may contain.
pub fn catalog() -> Vec<ExperimentInfo> {
    vec![
        ExperimentInfo {
            name: "isomorphism",
            description: "loop-soup occupation field against half the squared free field",
            claims: vec![
                claim("iso.mean", "Le Jan isomorphism", "E[ℓ_x] = α·G(x,x)"),
                claim("iso.variance", "Le Jan isomorphism", "Var[ℓ_x] = α·G(x,x)²"),
                claim(
                    "iso.ks",
                    "Le Jan isomorphism",
                    "ℓ_x and ½φ_x² have the same law (α = ½)",
                ),
                claim(
                    "iso.functional",
                    "Le Jan isomorphism",
                    "panel functionals of ℓ and ½φ² agree in law (α = ½)",
                ),
                claim(
                    "iso.truncation",
                    "loop-length cutoff",
                    "tail mass bound of the skeleton cutoff",
                ),
            ],
        },
        ExperimentInfo {
            name: "multi_arc_parity",
            description: "parity-conditioned cross-arc excursions and the random-current identity",
            claims: vec![
                claim(
                    "parity.samplers_agree",
                    "parity conditioning",
                    "rejection and exact-count samplers give the same count law",
                ),
                claim(
                    "parity.event_holds",
                    "parity conditioning",
                    "every retained sample has all N_i even",
                ),
                claim(
                    "parity.acceptance",
                    "parity conditioning",
                    "P[all N_i even] matches the spin-sum formula",
                ),
                claim(
                    "parity.same_arc_independent",
                    "parity conditioning",
                    "same-arc counts are independent of the parity event",
                ),
                claim(
                    "parity.pmf",
                    "parity conditioning",
                    "two arcs: conditioned count has the even-Poisson law",
                ),
                claim(
                    "rc.identity",
                    "random current representation",
                    "E[exp(−T(k)) | ℰ] equals the 2ⁿ spin-sum ratio",
                ),
            ],
        },
        ExperimentInfo {
            name: "rectangle_crossing",
            description: "crossing parity of left-right excursions with loop-soup connectivity",
            claims: vec![
                claim("rect.e_minus_o", "crossing parity", "P[E] − P[O] = e^{−2m}"),
                claim("rect.ecapa", "crossing parity", "P[E∩A] matches the closed form"),
                claim("rect.o", "crossing parity", "P[O] = (1 − e^{−2m})/2"),
                claim("rect.ecapa_eq_o", "crossing parity", "P[E∩A] = P[O]"),
                claim("rect.odd_given_a", "crossing parity", "P[O | A] = ½"),
                claim(
                    "rect.sinh",
                    "odd-crossing Laplace transform",
                    "E[exp(−T(k)) | O] = (L)(L)₁(L)₂·sinh X / sinh m",
                ),
                claim(
                    "rect.cosh",
                    "even-crossing Laplace transform",
                    "E[exp(−T(k)) | E] = (L)(L)₁(L)₂·cosh X / cosh m",
                ),
                claim(
                    "rect.panel_ks",
                    "occupation-law equality",
                    "occupation functionals agree in law on E∩A and O",
                ),
                claim(
                    "rect.panel_energy",
                    "occupation-law equality",
                    "panel vectors agree in law on E∩A and O (energy distance)",
                ),
            ],
        },
        ExperimentInfo {
            name: "strip_parity",
            description: "top-bottom excursion counts in boxes of a long strip",
            claims: vec![
                claim("strip.a_n", "strip boxes", "exact Poisson mean a(n) of a box"),
                claim("strip.p_even", "strip boxes", "P[N even] = (1 + e^{−2a(n)})/2"),
                claim(
                    "strip.monotone",
                    "strip boxes",
                    "|P[even] − ½| decreases with box width",
                ),
                claim(
                    "strip.near_half",
                    "strip boxes",
                    "P[even] within ε of ½ once a(n) is large",
                ),
                claim(
                    "strip.frequency",
                    "shift-ergodicity frequency argument",
                    "fraction of even boxes per strip concentrates at P[even]",
                ),
            ],
        },
        ExperimentInfo {
            name: "rewiring",
            description: "rewiring chain on loop ensembles",
            claims: vec![
                claim(
                    "rewire.conservation",
                    "rewiring chain",
                    "occupation, jumps and clusters unchanged by every step",
                ),
                claim(
                    "rewire.stationary",
                    "rewiring chain",
                    "(loop count, max length) law unchanged after sweeps",
                ),
            ],
        },
    ]
}

pub fn experiment_names() -> Vec<&'static str> {
    catalog().iter().map(|e| e.name).collect()
}

/// Runs the named experiment.
pub fn run_experiment(name: &str, config: &ExperimentConfig, cal: &CalibrationConstants) -> Result<ExperimentReport> {
    config.validate()?;
    match name {
        "isomorphism" => isomorphism_experiment(config, cal),
        "multi_arc_parity" => multi_arc_parity_experiment(config, cal),
        "rectangle_crossing" => rectangle_crossing_experiment(config, cal),
        "strip_parity" => strip_parity_experiment(config, cal),
        "rewiring" => rewiring_experiment(config, cal),
        _ => Err(invalid(
            "experiment",
            format!(
                "unknown experiment \"{name}\"; known: {}",
                experiment_names().join(", ")
            ),
        )),
    }
}

/// Sorts a `(key, count)` tally into category vectors for two samples.
pub(crate) fn tally<K: Ord + Clone>(a: &[K], b: &[K]) -> (Vec<u64>, Vec<u64>) {
    use std::collections::BTreeMap;
    let mut m: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for k in a {
        m.entry(k.clone()).or_default().0 += 1;
    }
    for k in b {
        m.entry(k.clone()).or_default().1 += 1;
    }
    m.values().map(|&(x, y)| (x, y)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_combination() {
        use Verdict::*;
        assert_eq!(Verdict::combine([]), Pass);
        assert_eq!(Verdict::combine([Pass, Inconclusive]), Inconclusive);
        assert_eq!(Verdict::combine([Inconclusive, Fail, Pass]), Fail);
    }

    #[test]
    fn beta_spec_serde() {
        let c: BetaSpec = serde_json::from_str("\"calibrated\"").unwrap();
        assert_eq!(c, BetaSpec::Calibrated);
        let v: BetaSpec = serde_json::from_str("0.3").unwrap();
        assert_eq!(v, BetaSpec::Value(0.3));
        assert!(serde_json::from_str::<BetaSpec>("\"fixed\"").is_err());
    }

    #[test]
    fn catalog_claim_ids_unique() {
        let mut ids: Vec<_> = catalog().iter().flat_map(|e| e.claims.iter().map(|c| c.id)).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }

    #[test]
    fn strip_boxes_do_not_overlap() {
        let cfg = StripConfig::default();
        for n in 1..5 {
            for j in 0..cfg.boxes {
                let (lo, hi) = cfg.box_columns(n, j);
                assert_eq!(hi - lo, n);
                assert!(hi + n <= cfg.strip_width(n));
                if j + 1 < cfg.boxes {
                    assert_eq!(cfg.box_columns(n, j + 1).0 - hi, 2 * n);
                }
            }
        }
        let bad = StripConfig { spacing: 1, ..cfg };
        assert!(bad.validate().is_err());
    }
}
