use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use slab_rte::crit::{assemble_n, criticality_of, keff_power_iteration, verify_spectrum_positive};
use slab_rte::io::{fmt17, write_json, Table};
use slab_rte::kernel::{assemble_k, DenseOperator};
use slab_rte::quad::double_gauss_legendre;
use slab_rte::solve::{
    check_bound_pure, check_bound_rte, source_iteration, weighted_norm, BoundReport, FluxOperator,
};
use slab_rte::sweep::transport_apply;
use slab_rte::uq::{run_uq, UqConfig};
use slab_rte::{CrossSections, Error, GridFunction, IterationTrace, SlabDomain};

use crate::config::{Command, ConfigError, FieldSource, RunConfig, SolverPath};
use crate::verify;

/// Relative σ-weighted tolerance between the dense and matrix-free paths.
pub const CROSS_PATH_TOL: f64 = 2e-4;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Solver(#[from] Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

/// What a command produced. `pass == false` means a certificate failed
/// (exit 1); `converged == false` means a solver did not finish (exit 3).
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub pass: bool,
    pub converged: bool,
    pub info: Map<String, Value>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            outputs: Vec::new(),
            pass: true,
            converged: true,
            info: Map::new(),
        }
    }

    fn json<T: Serialize + ?Sized>(
        &mut self,
        dir: &Path,
        name: &str,
        value: &T,
    ) -> Result<(), Error> {
        let path = dir.join(name);
        write_json(&path, value)?;
        self.outputs.push(path);
        Ok(())
    }

    fn csv(&mut self, dir: &Path, name: &str, table: &Table) -> Result<(), Error> {
        let path = dir.join(name);
        table.write(&path)?;
        self.outputs.push(path);
        Ok(())
    }
}

pub fn output_dir(config: &RunConfig, cli_out: Option<&Path>) -> Result<PathBuf, Failure> {
    let dir = cli_out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| ConfigError {
            path: "output_dir".into(),
            message: "missing (pass --out or set output_dir)".into(),
        })?;
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

pub fn run(command: Command, config: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    config.check_command(command)?;
    match command {
        Command::Solve => solve(config, dir),
        Command::Verify => verify(config, dir),
        Command::Criticality => criticality(config, dir),
        Command::Uq => uq(config, dir),
    }
}

fn phi_table(domain: &SlabDomain, phi: &GridFunction) -> Table {
    let mut t = Table::new(["midpoint", "phi"]);
    for (x, v) in domain.midpoints().iter().zip(phi.iter()) {
        t.push(vec![fmt17(*x), fmt17(*v)]);
    }
    t
}

#[derive(Serialize)]
struct Bounds {
    pure: BoundReport,
    scattering: BoundReport,
    pass: bool,
}

fn solve(config: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    config.check_solver_settings()?;
    let xs = config.required_field()?.realize()?;
    let domain = xs.domain().clone();
    let q = config.source_grid(&domain)?;
    let zero = GridFunction::zeros(q.len());
    let sigma = xs.sigma();
    let mut out = Outcome::new();

    let dense = match config.solver {
        SolverPath::Dense | SolverPath::Both => Some(assemble_k(&domain, &sigma)?),
        SolverPath::Sweep => None,
    };
    let quad = match config.solver {
        SolverPath::Sweep | SolverPath::Both => Some(double_gauss_legendre(config.angles)?),
        SolverPath::Dense => None,
    };
    let run = |op: FluxOperator<'_>| -> Result<(GridFunction, IterationTrace), Error> {
        source_iteration(&xs, op, &q, &zero, config.tol, config.max_iter)
    };
    let (phi, trace, kq) = match (&dense, &quad) {
        (Some(k), _) => {
            let (phi, trace) = run(FluxOperator::Dense(k))?;
            (phi, trace, k.apply(&q)?)
        }
        (None, Some(quad)) => {
            let (phi, trace) = run(FluxOperator::Sweep(quad))?;
            (phi, trace, transport_apply(&domain, &sigma, quad, &q)?)
        }
        (None, None) => unreachable!("every solver path builds an operator"),
    };
    out.csv(dir, "phi.csv", &phi_table(&domain, &phi))?;
    out.csv(dir, "trace.csv", &trace.to_table())?;
    let pure = check_bound_pure(&q, &kq, &xs)?;
    let scattering = check_bound_rte(&q, &phi, &xs)?;
    let bounds = Bounds {
        pure,
        scattering,
        pass: pure.pass && scattering.pass,
    };
    out.json(dir, "bounds.json", &bounds)?;
    out.pass = bounds.pass;
    out.converged = trace.converged;
    out.info.insert("sweeps".into(), json!(trace.sweeps));
    out.info.insert("converged".into(), json!(trace.converged));

    if let (Some(_), Some(quad)) = (&dense, &quad) {
        let (sweep_phi, sweep_trace) = run(FluxOperator::Sweep(quad))?;
        out.csv(dir, "phi_sweep.csv", &phi_table(&domain, &sweep_phi))?;
        let denom = weighted_norm(&domain, &phi, &sigma)?;
        let diff = weighted_norm(&domain, &sweep_phi.axpby(1.0, &phi, -1.0), &sigma)?;
        let relative = if denom > 0.0 { diff / denom } else { diff };
        let pass = relative <= CROSS_PATH_TOL;
        out.json(
            dir,
            "cross_path.json",
            &json!({"relative_difference": relative, "tolerance": CROSS_PATH_TOL, "angles": config.angles, "pass": pass}),
        )?;
        out.pass &= pass;
        out.converged &= sweep_trace.converged;
    }
    Ok(out)
}

fn verify(config: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    let extra = config.field()?.map(|f| f.realize()).transpose()?;
    let source = match &extra {
        Some(xs) => Some(config.source_grid(xs.domain())?),
        None => None,
    };
    let mut out = Outcome::new();
    let report = verify::run(&config.verify, extra.as_ref(), source.as_ref())?;
    out.json(dir, "verify_report.json", &report)?;
    for e in report.entries.iter().filter(|e| !e.pass) {
        eprintln!(
            "certificate failed: {} (measured {:e}, bound {:e})",
            e.name, e.measured, e.bound
        );
    }
    out.pass = report.pass;
    out.info.insert(
        "failed".into(),
        json!(report
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.name)
            .collect::<Vec<_>>()),
    );
    Ok(out)
}

fn scalar_operator(lsigs: &[Vec<f64>]) -> Result<DenseOperator, Failure> {
    let err = |path: String, message: String| Failure::Config(ConfigError { path, message });
    let n = lsigs.len();
    if n == 0 {
        return Err(err(
            "criticality.scalar_model.lsigs".into(),
            "empty matrix".into(),
        ));
    }
    if let Some(i) = lsigs.iter().position(|row| row.len() != n) {
        return Err(err(
            format!("criticality.scalar_model.lsigs[{i}]"),
            format!("expected {n} entries, got {}", lsigs[i].len()),
        ));
    }
    let domain = SlabDomain::uniform(1.0, n)?;
    DenseOperator::from_rows(lsigs, domain)
        .map_err(|e| err("criticality.scalar_model.lsigs".into(), e.to_string()))
}

fn criticality(config: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    if !(config.tol > 0.0) {
        return Err(ConfigError {
            path: "tol".into(),
            message: format!("must be positive, got {}", config.tol),
        }
        .into());
    }
    let mut out = Outcome::new();
    let result = if let Some(model) = &config.criticality.scalar_model {
        let lsigs = scalar_operator(&model.lsigs)?;
        let n = assemble_n(&lsigs, &model.fission_ratio).map_err(|e| ConfigError {
            path: "criticality.scalar_model".into(),
            message: e.to_string(),
        })?;
        criticality_of(&n, config.tol, config.max_iter)
    } else {
        let field = config.required_field()?;
        let xs: CrossSections = field.realize()?;
        if xs.sigma_f().is_none() {
            return Err(ConfigError {
                path: "cross_sections.sigma_f".into(),
                message: "criticality needs fission cross-sections".into(),
            }
            .into());
        }
        if config.criticality.samples > 0 {
            let FieldSource::Random { spec, .. } = &field else {
                return Err(ConfigError {
                    path: "criticality.samples".into(),
                    message: "a spectrum sweep needs a random cross-section field".into(),
                }
                .into());
            };
            let mut pass_count = 0;
            let mut min_eigenvalue = f64::INFINITY;
            let mut mapping = 0.0_f64;
            let mut residual = 0.0_f64;
            for i in 0..config.criticality.samples as u64 {
                let report = verify_spectrum_positive(&slab_rte::xsec::sample_xsec(spec, i)?)
                    .map_err(|e| Error::Sample {
                        index: i as usize,
                        source: Box::new(e),
                    })?;
                pass_count += usize::from(report.pass);
                min_eigenvalue = min_eigenvalue.min(report.min);
                mapping = mapping.max(report.mapping_error);
                residual = report
                    .generalized_residuals
                    .iter()
                    .fold(residual, |a, b| a.max(*b));
            }
            let pass = pass_count == config.criticality.samples;
            out.json(
                dir,
                "criticality_sweep.json",
                &json!({
                    "samples": config.criticality.samples,
                    "pass_count": pass_count,
                    "min_eigenvalue": min_eigenvalue,
                    "max_mapping_error": mapping,
                    "max_generalized_residual": residual,
                    "pass": pass,
                }),
            )?;
            out.pass = pass;
        }
        keff_power_iteration(&xs, config.tol, config.max_iter)
    };
    let result = result?;
    out.json(dir, "criticality.json", &result)?;
    out.info
        .insert("k_effective".into(), json!(result.k_effective));
    Ok(out)
}

fn uq(config: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    config.check_solver_settings()?;
    let section = config.uq.as_ref().ok_or_else(|| ConfigError {
        path: "uq".into(),
        message: "missing".into(),
    })?;
    let FieldSource::Random { spec, .. } = config.required_field()? else {
        return Err(ConfigError {
            path: "cross_sections.random".into(),
            message: "uq needs a random cross-section field".into(),
        }
        .into());
    };
    let uq_config = UqConfig {
        field: spec,
        angles: (config.solver == SolverPath::Sweep).then_some(config.angles),
        qoi: section.qoi,
        samples: section.samples,
        source: config.source.clone(),
        tol: config.tol,
        max_iter: config.max_iter,
    };
    uq_config.validate().map_err(|e| ConfigError {
        path: "uq".into(),
        message: e.to_string(),
    })?;
    let result = run_uq(&uq_config)?;
    let mut out = Outcome::new();
    out.csv(dir, "uq_samples.csv", &result.to_table())?;
    out.json(dir, "uq_summary.json", &result.summary)?;
    out.pass = result.summary.pass_count == result.summary.samples;
    out.info.insert("mean".into(), json!(result.summary.mean));
    out.info
        .insert("pass_count".into(), json!(result.summary.pass_count));
    Ok(out)
}
