//! Scenario execution: build the structure once, run the experiments from
//! the config, and hand every artifact to a single aggregator that writes
//! the output directory in one pass.

use crate::svg::Plot;
use finsler_core::config::{ConfigError, ExperimentSpec, ScenarioConfig};
use finsler_core::geometry::{bishop_gromov_check, weighted_ricci, CurvatureMethod, GeomError};
use finsler_core::mesh::MeshRef;
use finsler_core::norms::NormError;
use finsler_core::pde::{solve_dirichlet, PdeError, Solution};
use finsler_core::report::{InequalityReport, ReportSet};
use finsler_core::verify::{
    bochner_check, bump_field, gradient_estimate_report, harnack_report, liouville_trend,
    measure_curvature_bound, norm_identity_reports, poincare_constant, sobolev_constant,
    VerifyError,
};
use finsler_core::{FinslerStructure, Point, Vector};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What one run produced, after everything has been written.
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub reports: ReportSet,
    /// Reports whose inequality failed beyond tolerance.
    pub red_flags: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// In-memory result of a single experiment; files are staged as
/// `(name, content)` so the aggregator owns all filesystem writes.
struct ExperimentOutput {
    reports: Vec<InequalityReport>,
    files: Vec<(String, String)>,
}

pub fn run_scenario(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    with_timestamp: bool,
) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let structure = cfg.structure.build()?;
    // The scenario mesh is shared by every solve-type experiment.
    let mesh = if cfg.experiments.iter().any(|e| e.needs_mesh()) {
        Some(cfg.mesh.build(cfg.h))
    } else {
        None
    };
    let k_hat = curvature_floor(&structure, f64::INFINITY, cfg.seed).ok();

    // Experiments are independent; run them on the pool and aggregate after.
    let outputs: Vec<Result<ExperimentOutput, RunError>> = cfg
        .experiments
        .par_iter()
        .map(|spec| run_experiment(cfg, &structure, mesh.as_ref(), k_hat, spec))
        .collect();

    let mut all = ReportSet::default();
    let mut staged: Vec<(String, String)> = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "scenario {}  (seed {}, h {})", cfg.name, cfg.seed, cfg.h);
    let _ = writeln!(
        summary,
        "structure: {:?}{}",
        cfg.structure.family,
        match &cfg.structure.density {
            Some(phi) => format!(", density e^({phi})"),
            None => String::new(),
        }
    );
    match k_hat {
        Some(k) => {
            let _ = writeln!(summary, "curvature floor: Ric_inf >= -{k:.6}");
        }
        None => {
            let _ = writeln!(summary, "curvature floor: not measurable on this chart");
        }
    }
    let _ = writeln!(summary);

    let mut red_flags = Vec::new();
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        let spec = &cfg.experiments[i];
        let prefix = format!("{:02}-{}", i + 1, spec.kind());
        let _ = writeln!(summary, "[{prefix}]");
        let mut set = ReportSet::default();
        for r in out.reports {
            let _ = writeln!(
                summary,
                "  {:<28} lhs={:<13.6e} rhs={:<13.6e} slack={:<13.6e} {}",
                r.name,
                r.lhs,
                r.rhs,
                r.slack(),
                if r.satisfied { "ok" } else { "RED" }
            );
            if !r.satisfied {
                red_flags.push(format!("{prefix}: {}", r.name));
            }
            set.push(r);
        }
        staged.push((format!("{prefix}.csv"), set.to_csv()));
        staged.push((format!("{prefix}.json"), set.to_json()));
        for (name, content) in out.files {
            staged.push((format!("{prefix}-{name}"), content));
        }
        all.reports.extend(set.reports);
    }
    let _ = writeln!(summary);
    let _ = writeln!(
        summary,
        "{} reports, {} red flags",
        all.reports.len(),
        red_flags.len()
    );
    for flag in &red_flags {
        let _ = writeln!(summary, "RED {flag}");
    }
    staged.push(("summary.txt".into(), summary));
    staged.push((
        "manifest.json".into(),
        manifest(cfg, &structure, k_hat, with_timestamp)?,
    ));

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = Vec::with_capacity(staged.len());
    for (name, content) in staged {
        let path = out_dir.join(&name);
        std::fs::write(&path, content).map_err(io_err(&path))?;
        files.push(path);
    }
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        reports: all,
        red_flags,
        files,
    })
}

fn run_experiment(
    cfg: &ScenarioConfig,
    structure: &FinslerStructure,
    mesh: Option<&MeshRef>,
    k_hat: Option<f64>,
    spec: &ExperimentSpec,
) -> Result<ExperimentOutput, RunError> {
    let center = cfg.mesh.center();
    let mesh = |spec: &ExperimentSpec| {
        mesh.cloned()
            .unwrap_or_else(|| panic!("{} needs the scenario mesh", spec.kind()))
    };
    match spec {
        ExperimentSpec::Solve { boundary } => {
            let mesh = mesh(spec);
            let sol = solve(structure, &mesh, boundary, cfg)?;
            let mut files = vec![
                ("solution.csv".into(), field_csv(&mesh, &sol)),
                ("iterations.csv".into(), sol.iteration_log_csv()),
            ];
            if sol.iterations.len() > 1 {
                let pts: Vec<(f64, f64)> = sol
                    .iterations
                    .iter()
                    .map(|r| (r.iteration as f64, r.residual_norm))
                    .collect();
                files.push((
                    "residual.svg".into(),
                    Plot::new("solver convergence", "iteration", "max weak residual")
                        .connected()
                        .with_points(&pts)
                        .render(),
                ));
            }
            Ok(ExperimentOutput {
                reports: solve_reports(&sol, cfg),
                files,
            })
        }
        ExperimentSpec::Gradient { boundary, radii } => {
            let mesh = mesh(spec);
            let sol = solve(structure, &mesh, boundary, cfg)?;
            let mut reports = solve_reports(&sol, cfg);
            let mut pts = Vec::new();
            for &r in radii {
                let rep = gradient_estimate_report(
                    structure,
                    center,
                    r,
                    &sol.field,
                    k_hat.unwrap_or(0.0),
                    None,
                )?;
                if let Some(&sigma) = rep.params.get("sigma") {
                    pts.push((r, sigma));
                }
                reports.push(rep);
            }
            let svg = Plot::new("normalized gradient statistic", "radius R", "sigma")
                .with_points(&pts)
                .render();
            Ok(ExperimentOutput {
                reports,
                files: vec![("sigma.svg".into(), svg)],
            })
        }
        ExperimentSpec::Harnack { boundary, radii } => {
            let mesh = mesh(spec);
            let sol = solve(structure, &mesh, boundary, cfg)?;
            let mut reports = solve_reports(&sol, cfg);
            for &r in radii {
                reports.push(harnack_report(structure, center, r, &sol.field)?);
            }
            Ok(ExperimentOutput {
                reports,
                files: Vec::new(),
            })
        }
        ExperimentSpec::Liouville {
            radii,
            cos,
            sin,
            control,
            h,
        } => {
            let h = h.unwrap_or(cfg.h);
            let (cos, sin) = if cos.is_empty() && sin.is_empty() {
                (vec![0.5], vec![0.0, 0.3])
            } else {
                (cos.clone(), sin.clone())
            };
            let trend = if *control {
                // linearly growing harmonic data: gradients must not decay
                liouville_trend(structure, |theta, r| r * theta.cos(), radii, h, &cfg.solver)?
            } else {
                let profile = move |theta: f64, _r: f64| {
                    let mut v = 2.0;
                    for (k, c) in cos.iter().enumerate() {
                        v += c * ((k + 1) as f64 * theta).cos();
                    }
                    for (k, s) in sin.iter().enumerate() {
                        v += s * ((k + 1) as f64 * theta).sin();
                    }
                    v
                };
                liouville_trend(structure, profile, radii, h, &cfg.solver)?
            };
            let pts: Vec<(f64, f64)> = radii
                .iter()
                .filter_map(|r| {
                    trend
                        .params
                        .get(&format!("gradient_at_r{r:.3}"))
                        .map(|&g| (*r, g))
                })
                .collect();
            let svg = Plot::new("gradient decay", "radius R", "max gradient on unit ball")
                .log_log()
                .connected()
                .with_points(&pts)
                .render();
            let report = if *control {
                // flip the check: a growing solution must keep its gradient
                let mut rep =
                    InequalityReport::new("liouville-control", -trend.lhs, 0.1, 0.0);
                rep.params = trend.params.clone();
                rep.params.insert("fitted_exponent".into(), trend.lhs);
                rep
            } else {
                trend
            };
            Ok(ExperimentOutput {
                reports: vec![report],
                files: vec![("decay.svg".into(), svg)],
            })
        }
        ExperimentSpec::Bochner {
            boundary,
            n,
            bump_radius,
            tolerance,
        } => {
            let mesh = mesh(spec);
            let sol = solve(structure, &mesh, boundary, cfg)?;
            let eta = bump_field(&mesh, center, bump_radius.unwrap_or(0.7 * cfg.mesh.extent()));
            let n = n.unwrap_or(f64::INFINITY);
            let report = match tolerance {
                Some(tol) => bochner_check(structure, &sol.field, &eta, n, *tol)?,
                None => {
                    // mesh-dependent default: five percent of the measured
                    // curvature side, floored well above roundoff
                    let raw = bochner_check(structure, &sol.field, &eta, n, 0.0)?;
                    let tol = (0.05 * raw.lhs.abs()).max(1e-9);
                    let mut rep = InequalityReport::new(raw.name.clone(), raw.lhs, raw.rhs, tol);
                    rep.params = raw.params;
                    rep
                }
            };
            let mut reports = solve_reports(&sol, cfg);
            reports.push(report);
            Ok(ExperimentOutput {
                reports,
                files: Vec::new(),
            })
        }
        ExperimentSpec::Poincare { radius, samples } => {
            let rep = poincare_constant(
                structure, center, *radius, cfg.h, *samples, cfg.seed, None,
            )?;
            Ok(ExperimentOutput {
                reports: vec![rep],
                files: Vec::new(),
            })
        }
        ExperimentSpec::Sobolev {
            radius,
            nu,
            samples,
        } => {
            let nu = nu.unwrap_or(2.0 * structure.dim() as f64);
            let rep = sobolev_constant(
                structure, center, *radius, cfg.h, nu, *samples, cfg.seed,
            )?;
            Ok(ExperimentOutput {
                reports: vec![rep],
                files: Vec::new(),
            })
        }
        ExperimentSpec::Volume { radii } => {
            let mesh = mesh(spec);
            let mut radii = radii.clone();
            radii.sort_by(|a, b| a.total_cmp(b));
            if radii.len() < 2 {
                return Err(VerifyError::InvalidParameter(
                    "volume comparison needs at least two radii".into(),
                )
                .into());
            }
            let (k, n) = volume_comparison_params(structure, cfg.seed)?;
            let mut reports = Vec::new();
            for pair in radii.windows(2) {
                reports.push(bishop_gromov_check(
                    structure, center, pair[1], pair[0], k, n, &mesh,
                )?);
            }
            Ok(ExperimentOutput {
                reports,
                files: Vec::new(),
            })
        }
        ExperimentSpec::Curvature { n_list, samples } => {
            let n_list = if n_list.is_empty() {
                vec![2.0 * structure.dim() as f64, f64::INFINITY]
            } else {
                n_list.clone()
            };
            Ok(curvature_table(structure, &n_list, *samples)?)
        }
        ExperimentSpec::NormCheck { samples } => Ok(ExperimentOutput {
            reports: norm_identity_reports(structure, *samples, cfg.seed)?,
            files: Vec::new(),
        }),
    }
}

fn solve(
    structure: &FinslerStructure,
    mesh: &MeshRef,
    boundary: &str,
    cfg: &ScenarioConfig,
) -> Result<Solution, RunError> {
    let f = ScenarioConfig::boundary_fn(boundary)?;
    Ok(solve_dirichlet(structure, mesh, f, &cfg.solver)?)
}

/// Residual and maximum-principle reports shared by every solve-type
/// experiment; the index keeps names unique across the scenario.
fn solve_reports(sol: &Solution, cfg: &ScenarioConfig) -> Vec<InequalityReport> {
    let residual = sol
        .iterations
        .last()
        .map_or(f64::NAN, |r| r.residual_norm);
    let energy = sol.iterations.last().map_or(f64::NAN, |r| r.energy);
    vec![
        InequalityReport::new("solver-residual", residual, 0.0, cfg.solver.tolerance)
            .with_param("iterations", sol.iterations.len() as f64)
            .with_param("converged", if sol.converged { 1.0 } else { 0.0 })
            .with_param("energy", energy),
        InequalityReport::new("maximum-principle", sol.max_principle_violation, 0.0, 1e-9),
    ]
}

/// Nodal field with coordinates, for external plotting.
fn field_csv(mesh: &MeshRef, sol: &Solution) -> String {
    let mut out = String::from("x,y,u\n");
    for (i, &v) in sol.field.values().iter().enumerate() {
        let p = mesh.node(i);
        let _ = writeln!(out, "{:.12e},{:.12e},{:.12e}", p.get(0), p.get(1), v);
    }
    out
}

/// Lower bound `K` with `Ric_N >= -K`. Locally Minkowski structures under
/// Lebesgue measure have `Ric_N = 0` exactly; anything else is sampled.
fn curvature_floor(
    structure: &FinslerStructure,
    n: f64,
    seed: u64,
) -> Result<f64, VerifyError> {
    if structure.is_x_independent() && structure.density_source().is_none() {
        return Ok(0.0);
    }
    measure_curvature_bound(structure, n, 16, seed)
}

/// The volume comparison needs a finite effective dimension and a matching
/// curvature floor. The flat power law (N = dim) applies when the floor is
/// exactly zero by construction; otherwise measure the floor at N = 2 dim,
/// which stays clear of the drift sentinel at N = dim.
fn volume_comparison_params(
    structure: &FinslerStructure,
    seed: u64,
) -> Result<(f64, f64), VerifyError> {
    let dim = structure.dim() as f64;
    if structure.is_x_independent() && structure.density_source().is_none() {
        return Ok((0.0, dim));
    }
    let n = 2.0 * dim;
    Ok((measure_curvature_bound(structure, n, 16, seed)?, n))
}

/// Weighted Ricci table over a deterministic low-discrepancy sweep of the
/// chart (plastic-constant lattice for points, golden angle for directions).
fn curvature_table(
    structure: &FinslerStructure,
    n_list: &[f64],
    samples: usize,
) -> Result<ExperimentOutput, VerifyError> {
    let domain = structure.domain();
    let center = domain.center();
    let dim = structure.dim();
    let method = if structure.known_flag_curvature().is_some() {
        CurvatureMethod::Analytic
    } else {
        CurvatureMethod::jacobi_default()
    };
    const ALPHA: f64 = 1.324_717_957_244_746; // x^3 = x + 1
    const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
    let mut csv = String::from("sample,x,y,vx,vy,n,ric_n\n");
    let mut floors: Vec<(f64, f64)> = n_list.iter().map(|&n| (n, f64::INFINITY)).collect();
    let mut skipped = 0usize;
    let mut kept = 0usize;
    for i in 0..samples {
        let fx = (0.5 + (i + 1) as f64 / ALPHA).fract();
        let fy = (0.5 + (i + 1) as f64 / (ALPHA * ALPHA)).fract();
        let mut x = Point::zeros(dim);
        x.set(0, center.get(0) + 0.75 * (domain.lo(0) + fx * (domain.hi(0) - domain.lo(0)) - center.get(0)));
        x.set(1, center.get(1) + 0.75 * (domain.lo(1) + fy * (domain.hi(1) - domain.lo(1)) - center.get(1)));
        let theta = i as f64 * GOLDEN_ANGLE;
        let mut raw = Vector::zeros(dim);
        raw.set(0, theta.cos());
        raw.set(1, theta.sin());
        let v = raw * (1.0 / structure.norm(&x, &raw));
        let report = match weighted_ricci(structure, &x, &v, n_list, method) {
            Ok(r) => r,
            Err(_) => {
                // chart edge: the probe geodesics left the domain
                skipped += 1;
                continue;
            }
        };
        kept += 1;
        for (slot, &(n, value)) in floors.iter_mut().zip(&report.ric_n) {
            let _ = writeln!(
                csv,
                "{i},{:.12e},{:.12e},{:.12e},{:.12e},{n},{value:.12e}",
                x.get(0),
                x.get(1),
                v.get(0),
                v.get(1),
            );
            if value.is_finite() {
                slot.1 = slot.1.min(value);
            }
        }
    }
    let mut reports = Vec::new();
    for (n, floor) in floors {
        // a non-finite floor means every sample hit the N = dim sentinel:
        // no usable data, which is not an inequality violation
        let k_hat = if floor.is_finite() { (-floor).max(0.0) } else { 0.0 };
        reports.push(
            InequalityReport::new("measured-ricci-floor", k_hat, k_hat, 0.0)
                .with_param("n", n)
                .with_param("samples_kept", kept as f64)
                .with_param("samples_skipped", skipped as f64)
                .with_param("sentinel_only", if floor.is_finite() { 0.0 } else { 1.0 })
                .with_param("min_ric_n", floor),
        );
    }
    Ok(ExperimentOutput {
        reports,
        files: vec![("samples.csv".into(), csv)],
    })
}

fn manifest(
    cfg: &ScenarioConfig,
    structure: &FinslerStructure,
    k_hat: Option<f64>,
    with_timestamp: bool,
) -> Result<String, RunError> {
    let constants =
        structure.estimate_uniform_constants(&structure.domain(), 160, cfg.seed)?;
    let mut doc = serde_json::json!({
        "name": cfg.name,
        "seed": cfg.seed,
        "h": cfg.h,
        "versions": {
            "finsler-core": finsler_core::VERSION,
            "finlab": env!("CARGO_PKG_VERSION"),
        },
        "constants": {
            "lambda": constants.lambda,
            "lambda_max": constants.lambda_max,
            "rho": constants.rho,
            "dual_lambda": constants.dual_lambda,
            "dual_lambda_max": constants.dual_lambda_max,
            "samples": constants.samples,
        },
        "curvature_bound": k_hat,
        "config": cfg.to_toml_string(),
    });
    if with_timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc["timestamp_unix"] = serde_json::json!(secs);
    }
    Ok(serde_json::to_string_pretty(&doc).expect("manifest serializes"))
}
