//! Batch front door: task configuration, dispatch, and report emission.
//!
//! Measure-approximation pipelines (spectrum estimation, Garsia entropy,
//! flattening probes) are homogeneous-only; symbolic dimensions and
//! separation work for general systems, and reports say so explicitly when
//! a task falls back. Exit-code contract (enforced by the binary):
//! config errors → 2, resource limits → 3, invariant violations → 4.

use std::path::PathBuf;

use serde::Serialize;

use crate::cache::MeasureCache;
use crate::flatten::{
    build_tree_measure, flattening_ratio, regularity_check, tree_self_convolution_check,
    FlatteningReport, GridMeasure, RegularityOutcome, TreeConvolutionReport,
};
use crate::intersect::{fiber_report, FiberReport};
use crate::measure::invariant_histogram;
use crate::report::{emit_json, flatten_csv, spectrum_csv};
use crate::scalar::Scalar;
use crate::separation::{separation_report, SeparationReport};
use crate::spectrum::{
    estimate_tau_with_cache, garsia_with_cache, n_for_scale, GarsiaReport, SpectrumEstimate,
    TauMethod,
};
use crate::wifs::{
    normalize_to_unit, preset, similarity_dimensions, square_if_negative, DimensionReport,
    PresetParams, Wifs,
};
use crate::{Error, Result};

/// Where the WIFS comes from.
#[derive(Clone, Debug)]
pub enum WifsSource {
    Preset { name: String, params: PresetParams },
    Inline(Box<Wifs>),
    File(PathBuf),
}

impl WifsSource {
    pub fn resolve(&self) -> Result<Wifs> {
        match self {
            WifsSource::Preset { name, params } => preset(name, params),
            WifsSource::Inline(w) => Ok((**w).clone()),
            WifsSource::File(path) => {
                let data = std::fs::read(path).map_err(|e| {
                    Error::Validation(format!("cannot read {}: {e}", path.display()))
                })?;
                Ok(serde_json::from_slice(&data)?)
            }
        }
    }
}

/// Test measure ρ for the flattening probe.
#[derive(Clone, Debug)]
pub enum RhoKind {
    Uniform,
    Delta { j: u64 },
    /// `2^{-⌈θm⌉}δ_0 + (1−2^{-⌈θm⌉})·uniform`.
    Obstruction { theta: f64 },
}

impl RhoKind {
    fn build(&self, m: u32) -> Result<GridMeasure> {
        match self {
            RhoKind::Uniform => GridMeasure::uniform(m),
            RhoKind::Delta { j } => GridMeasure::dirac(m, *j),
            RhoKind::Obstruction { theta } => GridMeasure::obstruction(m, *theta),
        }
    }

    fn label(&self) -> String {
        match self {
            RhoKind::Uniform => "uniform".into(),
            RhoKind::Delta { j } => format!("delta:{j}"),
            RhoKind::Obstruction { theta } => format!("obstruction:{theta}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Task {
    Analyze {
        source: WifsSource,
        q_grid: Vec<f64>,
        m_grid: Vec<u32>,
        method: TauMethod,
        k_max: u32,
    },
    Spectrum {
        source: WifsSource,
        q_grid: Vec<f64>,
        m_grid: Vec<u32>,
        method: TauMethod,
    },
    Garsia {
        source: WifsSource,
        q_list: Vec<f64>,
        n_max: u32,
    },
    Separation {
        source: WifsSource,
        k_max: u32,
    },
    FlattenProbe {
        source: WifsSource,
        m_grid: Vec<u32>,
        q: f64,
        rho: RhoKind,
    },
    FlattenTree {
        d: u32,
        levels: u32,
        branching: Vec<u32>,
        q: f64,
    },
    Intersect {
        p: u32,
        digits: Vec<u32>,
        t: Scalar,
        u: f64,
        n: u32,
        epsilon: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug)]
pub struct RunConfig {
    pub task: Task,
    pub format: OutputFormat,
    /// Explicit cache dir; the `LQDIM_CACHE` environment variable is the
    /// fallback.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub text: String,
    /// Shape/soundness violations; a nonzero exit (4) when nonempty.
    pub invariant_violations: Vec<String>,
}

fn validate_q(qs: &[f64]) -> Result<()> {
    if qs.is_empty() {
        return Err(Error::Validation("need at least one q".into()));
    }
    for q in qs {
        if !(*q > 1.0) || !q.is_finite() {
            return Err(Error::Validation(format!(
                "q = {q} invalid: spectra need q > 1"
            )));
        }
    }
    Ok(())
}

fn open_cache(config: &RunConfig) -> Result<Option<MeasureCache>> {
    let dir = config
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os("LQDIM_CACHE").map(PathBuf::from));
    dir.map(|d| MeasureCache::open(&d)).transpose()
}

#[derive(Serialize)]
struct OverlapScan {
    k_max: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap_at: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<(Vec<u8>, Vec<u8>)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    refused: Option<String>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    wifs: Wifs,
    homogeneous: bool,
    /// Symbolic dimensions with predictions, one entry per q.
    dimensions: Vec<DimensionReport>,
    /// Finite-scale estimates; absent for non-homogeneous systems, which
    /// only support the symbolic route.
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<SpectrumEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    overlap: OverlapScan,
}

#[derive(Serialize)]
struct GarsiaEnvelope {
    wifs: Wifs,
    report: GarsiaReport,
}

#[derive(Serialize)]
struct SeparationEnvelope {
    wifs: Wifs,
    report: SeparationReport,
}

#[derive(Serialize)]
struct FlattenProbeReport {
    wifs: Wifs,
    rho: String,
    q: f64,
    sweeps: Vec<FlatteningReport>,
}

#[derive(Serialize)]
struct FlattenTreeReport {
    check: TreeConvolutionReport,
    profile: RegularityOutcome,
}

/// `μ^{(m)}` of a (normalized, squared-if-negative) system as a grid
/// measure: exact atom route when available, invariant histogram otherwise.
pub fn grid_measure_of(w: &Wifs, m: u32) -> Result<GridMeasure> {
    let squared = square_if_negative(w)?;
    let (norm, _) = normalize_to_unit(&squared)?;
    let h = if norm.is_exact() {
        let n = n_for_scale(m, norm.log2_inv_ratio()?);
        crate::measure::level_n_measure(&norm, n)?.dyadic_bin(m)?
    } else {
        invariant_histogram(&norm, m)?
    };
    GridMeasure::from_histogram(&h)
}

fn scan_overlaps(w: &Wifs, k_max: u32) -> OverlapScan {
    match crate::separation::detect_exact_overlap(w, k_max) {
        Ok(Some((k, witness))) => OverlapScan {
            k_max,
            overlap_at: Some(k),
            witness: Some(witness),
            refused: None,
        },
        Ok(None) => OverlapScan {
            k_max,
            overlap_at: None,
            witness: None,
            refused: None,
        },
        Err(e) => OverlapScan {
            k_max,
            overlap_at: None,
            witness: None,
            refused: Some(e.to_string()),
        },
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let cache = open_cache(config)?;
    let cache_ref = cache.as_ref();
    let mut violations: Vec<String> = Vec::new();
    let text = match &config.task {
        Task::Analyze {
            source,
            q_grid,
            m_grid,
            method,
            k_max,
        } => {
            validate_q(q_grid)?;
            let w = source.resolve()?;
            let dimensions = q_grid
                .iter()
                .map(|&q| similarity_dimensions(&w, q))
                .collect::<Result<Vec<_>>>()?;
            let (spectrum, note) = if w.is_homogeneous() {
                let est = estimate_tau_with_cache(&w, q_grid, m_grid, *method, cache_ref)?;
                violations.extend(est.shape_violations.iter().cloned());
                (Some(est), None)
            } else {
                (
                    None,
                    Some(
                        "non-homogeneous system: measure-approximation pipelines are \
                         homogeneous-only, reporting symbolic dimensions"
                            .to_string(),
                    ),
                )
            };
            let overlap = scan_overlaps(&w, *k_max);
            let body = AnalyzeReport {
                wifs: w,
                homogeneous: spectrum.is_some(),
                dimensions,
                spectrum,
                note,
                overlap,
            };
            match config.format {
                OutputFormat::Json => emit_json("analyze", &body)?,
                OutputFormat::Csv => match &body.spectrum {
                    Some(est) => spectrum_csv(est),
                    None => {
                        return Err(Error::Validation(
                            "csv output needs a spectrum (homogeneous system)".into(),
                        ))
                    }
                },
            }
        }
        Task::Spectrum {
            source,
            q_grid,
            m_grid,
            method,
        } => {
            validate_q(q_grid)?;
            let w = source.resolve()?;
            let est = estimate_tau_with_cache(&w, q_grid, m_grid, *method, cache_ref)?;
            violations.extend(est.shape_violations.iter().cloned());
            match config.format {
                OutputFormat::Json => emit_json("spectrum", &est)?,
                OutputFormat::Csv => spectrum_csv(&est),
            }
        }
        Task::Garsia {
            source,
            q_list,
            n_max,
        } => {
            validate_q(q_list)?;
            if *n_max < 1 {
                return Err(Error::Validation("n-max must be ≥ 1".into()));
            }
            let w = source.resolve()?;
            let report = garsia_with_cache(&w, q_list, *n_max, cache_ref)?;
            for series in &report.per_q {
                // Subadditivity is a theorem for exact power sums; a defect
                // beyond roundoff is an invariant violation.
                let mut max_defect = f64::NEG_INFINITY;
                for a in &series.samples {
                    for b in &series.samples {
                        if a.n + b.n <= *n_max {
                            let lnm = series.samples[(a.n + b.n - 1) as usize].l_n;
                            max_defect = max_defect.max(lnm - a.l_n - b.l_n);
                        }
                    }
                }
                if max_defect > 1e-9 {
                    violations.push(format!(
                        "subadditivity defect {max_defect} at q={}",
                        series.q
                    ));
                }
            }
            if config.format == OutputFormat::Csv {
                return Err(Error::Validation(
                    "garsia emits JSON only; use spectrum/flatten for CSV sweeps".into(),
                ));
            }
            emit_json(
                "garsia",
                &GarsiaEnvelope {
                    wifs: w,
                    report,
                },
            )?
        }
        Task::Separation { source, k_max } => {
            if *k_max < 1 {
                return Err(Error::Validation("k-max must be ≥ 1".into()));
            }
            let w = source.resolve()?;
            let report = separation_report(&w, *k_max)?;
            if config.format == OutputFormat::Csv {
                return Err(Error::Validation("separation emits JSON only".into()));
            }
            emit_json(
                "separation",
                &SeparationEnvelope {
                    wifs: w,
                    report,
                },
            )?
        }
        Task::FlattenProbe {
            source,
            m_grid,
            q,
            rho,
        } => {
            validate_q(&[*q])?;
            if m_grid.is_empty() {
                return Err(Error::Validation("need at least one m".into()));
            }
            let w = source.resolve()?;
            let mut sweeps = Vec::with_capacity(m_grid.len());
            for &m in m_grid {
                let mu = grid_measure_of(&w, m)?;
                let r = rho.build(m)?;
                let rep = flattening_ratio(&r, &mu, *q)?;
                if rep.log2_power_ratio > 0.0 {
                    violations.push(format!(
                        "Young violation at m={m}: log ratio {}",
                        rep.log2_power_ratio
                    ));
                }
                sweeps.push(rep);
            }
            match config.format {
                OutputFormat::Csv => flatten_csv(&sweeps),
                OutputFormat::Json => emit_json(
                    "flatten",
                    &FlattenProbeReport {
                        wifs: w,
                        rho: rho.label(),
                        q: *q,
                        sweeps,
                    },
                )?,
            }
        }
        Task::FlattenTree {
            d,
            levels,
            branching,
            q,
        } => {
            validate_q(&[*q])?;
            let check = tree_self_convolution_check(*d, *levels, branching, *q)?;
            let tree = build_tree_measure(*d, *levels, branching)?;
            let profile = regularity_check(&tree.support(), d * levels, *d, 2)?;
            if let RegularityOutcome::Irregular(w) = &profile {
                violations.push(format!(
                    "constructed tree is irregular at level {}",
                    w.level
                ));
            }
            if config.format == OutputFormat::Csv {
                return Err(Error::Validation("flatten tree emits JSON only".into()));
            }
            emit_json("flatten", &FlattenTreeReport { check, profile })?
        }
        Task::Intersect {
            p,
            digits,
            t,
            u,
            n,
            epsilon,
        } => {
            if *n < 1 {
                return Err(Error::Validation("n must be ≥ 1".into()));
            }
            let report: FiberReport = fiber_report(*p, digits, *n, t, *u, *epsilon)?;
            if report.c_measured > report.c_bound {
                violations.push(format!(
                    "fiber constant {} exceeds the calibrated bound {}",
                    report.c_measured, report.c_bound
                ));
            }
            if config.format == OutputFormat::Csv {
                return Err(Error::Validation("intersect emits JSON only".into()));
            }
            emit_json("intersect", &report)?
        }
    };
    Ok(RunOutcome {
        text,
        invariant_violations: violations,
    })
}

/// Map an error onto the CLI exit-code contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Validation(_)
        | Error::Domain(_)
        | Error::InvalidScalar(_)
        | Error::Json(_)
        | Error::FieldMismatch(..)
        | Error::NotCanonicalizable => 2,
        Error::Resource(_) => 3,
        Error::Invariant(_) => 4,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor_source() -> WifsSource {
        WifsSource::Preset {
            name: "p_cantor".into(),
            params: PresetParams {
                p: Some(3),
                digits: Some(vec![0, 2]),
                ..Default::default()
            },
        }
    }

    #[test]
    fn analyze_pairs_estimate_with_prediction() {
        let config = RunConfig {
            task: Task::Analyze {
                source: cantor_source(),
                q_grid: vec![2.0],
                m_grid: (4..=14).collect(),
                method: TauMethod::Atoms,
                k_max: 4,
            },
            format: OutputFormat::Json,
            cache_dir: None,
        };
        let out = run(&config).unwrap();
        assert!(out.invariant_violations.is_empty());
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["schema"], "1");
        let point = &v["report"]["spectrum"]["points"][0];
        let d_hat = point["d_hat"].as_f64().unwrap();
        let predicted = point["predicted_d"].as_f64().unwrap();
        assert!((predicted - 0.6309297535714574).abs() < 1e-12);
        assert!((d_hat - predicted).abs() < 0.05);
    }

    #[test]
    fn rerun_byte_reproduces_report() {
        let mk = || RunConfig {
            task: Task::Separation {
                source: cantor_source(),
                k_max: 5,
            },
            format: OutputFormat::Json,
            cache_dir: None,
        };
        let a = run(&mk()).unwrap().text;
        let b = run(&mk()).unwrap().text;
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors_map_to_exit_two() {
        let config = RunConfig {
            task: Task::Spectrum {
                source: cantor_source(),
                q_grid: vec![0.5],
                m_grid: vec![4, 6],
                method: TauMethod::Atoms,
            },
            format: OutputFormat::Json,
            cache_dir: None,
        };
        let err = run(&config).unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
    }

    #[test]
    fn resource_errors_map_to_exit_three() {
        let err = Error::Resource("too big".into());
        assert_eq!(exit_code_for(&err), 3);
        let err = Error::Invariant("broken".into());
        assert_eq!(exit_code_for(&err), 4);
    }

    #[test]
    fn csv_spectrum_has_expected_columns() {
        let config = RunConfig {
            task: Task::Spectrum {
                source: cantor_source(),
                q_grid: vec![2.0],
                m_grid: vec![4, 6, 8],
                method: TauMethod::Atoms,
            },
            format: OutputFormat::Csv,
            cache_dir: None,
        };
        let out = run(&config).unwrap();
        let mut lines = out.text.lines();
        assert_eq!(lines.next().unwrap(), "q,m,s_m,tau_hat,d_hat");
        assert_eq!(out.text.lines().count(), 4);
    }

    #[test]
    fn non_homogeneous_analyze_reports_symbolic_route() {
        use crate::scalar::big_rat;
        use crate::wifs::SimilarityMap;
        let w = Wifs::new(
            vec![
                SimilarityMap {
                    ratio: Scalar::rational(1, 2),
                    translation: Scalar::zero(),
                },
                SimilarityMap {
                    ratio: Scalar::rational(1, 4),
                    translation: Scalar::one(),
                },
            ],
            vec![big_rat(1, 2), big_rat(1, 2)],
        )
        .unwrap();
        let config = RunConfig {
            task: Task::Analyze {
                source: WifsSource::Inline(Box::new(w)),
                q_grid: vec![2.0],
                m_grid: vec![4, 6],
                method: TauMethod::Atoms,
                k_max: 3,
            },
            format: OutputFormat::Json,
            cache_dir: None,
        };
        let out = run(&config).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert!(v["report"]["spectrum"].is_null());
        assert!(v["report"]["note"]
            .as_str()
            .unwrap()
            .contains("homogeneous-only"));
        assert!(v["report"]["dimensions"][0]["t_q"].is_number());
    }

    #[test]
    fn flatten_tree_task_runs() {
        let config = RunConfig {
            task: Task::FlattenTree {
                d: 2,
                levels: 3,
                branching: vec![0, 2],
                q: 2.0,
            },
            format: OutputFormat::Json,
            cache_dir: None,
        };
        let out = run(&config).unwrap();
        assert!(out.invariant_violations.is_empty());
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["report"]["profile"]["outcome"], "regular");
    }

    #[test]
    fn cache_round_trip_through_run() {
        let dir = std::env::temp_dir().join(format!("lqdim-cli-cache-{}", std::process::id()));
        let mk = || RunConfig {
            task: Task::Garsia {
                source: cantor_source(),
                q_list: vec![2.0],
                n_max: 6,
            },
            format: OutputFormat::Json,
            cache_dir: Some(dir.clone()),
        };
        let a = run(&mk()).unwrap().text;
        let b = run(&mk()).unwrap().text; // second run hits the cache
        assert_eq!(a, b);
        assert!(std::fs::read_dir(&dir).unwrap().count() >= 6);
        std::fs::remove_dir_all(&dir).ok();
    }
}
