//! Running experiments and writing their reports.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use loopsoup_core::experiments::{catalog, rectangle_domain, run_experiment, ExperimentReport, Table, Verdict};
use loopsoup_core::identities::{calibrate, CalibrationConstants, CalibrationReport};
use loopsoup_core::lattice::{build_rect_domain, excursion_kernel};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

/// Environment variable that overrides `output.dir`.
pub const REPORT_DIR_ENV: &str = "LOOPSOUP_LAB_REPORT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] loopsoup_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// Process exit status: configuration problems are 2, anything else
    /// that stops a run is 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_)
            | RunError::Core(loopsoup_core::Error::InvalidParameter { .. })
            | RunError::Core(loopsoup_core::Error::OverlappingArcs { .. })
            | RunError::Core(loopsoup_core::Error::InvalidDomain(_)) => 2,
            _ => 4,
        }
    }
}

pub fn exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 3,
    }
}

/// Calibration is domain-independent, so one solve serves the whole process.
pub fn calibration() -> Result<&'static CalibrationReport, RunError> {
    static CACHE: OnceLock<Result<CalibrationReport, loopsoup_core::Error>> = OnceLock::new();
    CACHE
        .get_or_init(calibrate)
        .as_ref()
        .map_err(|e| RunError::Core(e.clone()))
}

pub fn constants() -> Result<&'static CalibrationConstants, RunError> {
    Ok(&calibration()?.constants)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match workers {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

/// Runs the configured experiment; nothing is written.
pub fn execute(cfg: &RunConfig) -> Result<ExperimentReport, RunError> {
    let params = cfg.experiment_config().map_err(|message| ConfigError::Invalid {
        path: "<config>".into(),
        line: 1,
        message,
    })?;
    let cal = constants()?;
    log::info!(
        "running {} (seed {}, {} replicas)",
        cfg.experiment,
        cfg.seed,
        cfg.replicas
    );
    with_workers(cfg.workers, || run_experiment(&cfg.experiment, &params, cal))?.map_err(RunError::from)
}

pub fn report_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(REPORT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output.dir.clone())
}

pub struct RunOutcome {
    pub report: ExperimentReport,
    /// The JSON report followed by any CSV files.
    pub files: Vec<PathBuf>,
}

/// Runs the experiment and writes `<dir>/<experiment>-seed<seed>.json`, plus
/// one CSV per curve and raw table when `output.csv` is set.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let report = execute(cfg)?;
    let dir = report_dir(cfg);
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let stem = format!("{}-seed{}", cfg.experiment, cfg.seed);
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, report.to_json() + "\n").map_err(|source| RunError::Io {
        path: json.clone(),
        source,
    })?;
    let mut files = vec![json];
    if cfg.output.csv {
        for table in report.curves.iter().chain(&report.raw) {
            let path = dir.join(format!("{stem}-{}.csv", table.name));
            write_csv(&path, table)?;
            files.push(path);
        }
    }
    Ok(RunOutcome { report, files })
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), RunError> {
    let err = |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&table.columns).map_err(err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(err)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Arc couplings of the configured domain at the configured intensity.
#[derive(Debug, Clone, Serialize)]
pub struct DomainCouplings {
    pub nx: usize,
    pub ny: usize,
    pub beta: f64,
    pub u: f64,
    /// `|μ_{i,j}|`, same-arc masses on the diagonal.
    pub masses: Vec<Vec<f64>>,
    /// `m_{i,j} = β|μ_{i,j}|`.
    pub couplings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationOutput {
    pub calibration: CalibrationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainCouplings>,
}

/// The calibration report, with the arc couplings of the configured domain
/// when it has arcs.
pub fn calibrate_for(cfg: &RunConfig) -> Result<CalibrationOutput, RunError> {
    let report = calibration()?.clone();
    let params = cfg.experiment_config().map_err(|message| ConfigError::Invalid {
        path: "<config>".into(),
        line: 1,
        message,
    })?;
    let domain = match (&params.arcs, cfg.experiment.as_str()) {
        (Some(arcs), _) => Some(build_rect_domain(cfg.nx, cfg.ny, arcs)?),
        (None, "rectangle_crossing") => Some(rectangle_domain(cfg.nx, cfg.ny)?),
        _ => None,
    };
    let domain = match domain {
        Some(d) if d.n_arcs() >= 1 && d.n_interior() > 0 => {
            let (beta, u) = params.resolve_beta(&report.constants);
            let masses = excursion_kernel(&d)?.arc_mass_matrix();
            let couplings = masses.iter().map(|r| r.iter().map(|m| beta * m).collect()).collect();
            Some(DomainCouplings {
                nx: cfg.nx,
                ny: cfg.ny,
                beta,
                u,
                masses,
                couplings,
            })
        }
        _ => None,
    };
    Ok(CalibrationOutput {
        calibration: report,
        domain,
    })
}

/// Human-readable listing of experiments and their claim ids.
pub fn catalog_text() -> String {
    let mut out = String::new();
    for e in catalog() {
        out.push_str(&format!("{}\n    {}\n", e.name, e.description));
        for c in &e.claims {
            out.push_str(&format!("    {:<28} {}\n", c.id, c.description));
        }
        out.push('\n');
    }
    out
}
