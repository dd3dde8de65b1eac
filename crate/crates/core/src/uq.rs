//! Plain Monte Carlo over random cross-section fields.
//!
//! Every sample solves the source problem and checks the flux bound and the
//! observed contraction ratios against its own scattering ratio; the QoI is
//! read off the same solve (or a criticality solve). Samples run in
//! parallel, but each depends only on `(seed, index)` and statistics are
//! accumulated in index order, so results are reproducible to the byte.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crit::keff_power_iteration;
use crate::error::{Error, Result};
use crate::io::{fmt17, Table};
use crate::kernel::assemble_k;
use crate::quad::double_gauss_legendre;
use crate::solve::{check_bound_rte, source_iteration, FluxOperator, SourceSpec};
use crate::sweep::GridFunction;
use crate::xsec::{sample_xsec, scattering_ratio, RandomFieldSpec};

/// Slack on the observed-ratio check `max ratio ≤ c`.
pub const RATIO_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qoi {
    /// `(1/d) ∫ φ`.
    MeanFlux,
    /// Cell average of `φ` in one cell.
    ProbeCell(usize),
    /// Requires a `sigma_f` law.
    KEffective,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqConfig {
    pub field: RandomFieldSpec,
    /// Angular count for matrix-free sweeps; dense `K` when absent.
    #[serde(default)]
    pub angles: Option<usize>,
    pub qoi: Qoi,
    pub samples: usize,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl UqConfig {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        if self.samples == 0 {
            return Err(Error::Argument("samples must be at least 1".into()));
        }
        let n = self.field.domain.n_cells();
        match self.qoi {
            Qoi::ProbeCell(i) if i >= n => {
                return Err(Error::Argument(format!("probe cell {i} outside 0..{n}")));
            }
            Qoi::KEffective if self.field.sigma_f.is_none() => {
                return Err(Error::RandomField("k_effective needs a sigma_f law".into()));
            }
            _ => {}
        }
        if let Some(m) = self.angles {
            double_gauss_legendre(m)?;
        }
        self.source.grid(&self.field.domain)?;
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub qoi: f64,
    pub c: f64,
    pub bound_ratio: f64,
    pub max_obs_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UqSummary {
    pub samples: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub pass_count: usize,
    pub worst_bound_ratio: f64,
    /// Largest `max_obs_ratio − c` over samples.
    pub worst_ratio_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UqResult {
    pub records: Vec<SampleRecord>,
    pub summary: UqSummary,
}

impl UqResult {
    /// Aggregates per-sample records in index order, whatever order they
    /// arrive in.
    pub fn from_records(mut records: Vec<SampleRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Argument("no samples".into()));
        }
        records.sort_by_key(|r| r.index);
        let n = records.len();
        let mean = records.iter().map(|r| r.qoi).sum::<f64>() / n as f64;
        // shifted by the first value, so identical samples give exactly 0
        let shift = records[0].qoi;
        let (s1, s2) = records.iter().fold((0.0, 0.0), |(s1, s2), r| {
            let d = r.qoi - shift;
            (s1 + d, s2 + d * d)
        });
        let var = if n > 1 {
            ((s2 - s1 * s1 / n as f64) / (n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        let summary = UqSummary {
            samples: n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
            pass_count: records.iter().filter(|r| r.pass).count(),
            worst_bound_ratio: records.iter().map(|r| r.bound_ratio).fold(0.0, f64::max),
            worst_ratio_excess: records
                .iter()
                .map(|r| r.max_obs_ratio - r.c)
                .fold(f64::NEG_INFINITY, f64::max),
        };
        Ok(Self { records, summary })
    }

    /// `index,qoi,c,bound_ratio,max_obs_ratio`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["index", "qoi", "c", "bound_ratio", "max_obs_ratio"]);
        for r in &self.records {
            t.push(vec![
                r.index.to_string(),
                fmt17(r.qoi),
                fmt17(r.c),
                fmt17(r.bound_ratio),
                fmt17(r.max_obs_ratio),
            ]);
        }
        t
    }
}

fn run_sample(config: &UqConfig, q: &GridFunction, index: usize) -> Result<SampleRecord> {
    let xs = sample_xsec(&config.field, index as u64)?;
    let domain = xs.domain();
    let zero = GridFunction::zeros(q.len());
    let (phi, trace) = match config.angles {
        Some(m) => {
            let quad = double_gauss_legendre(m)?;
            source_iteration(
                &xs,
                FluxOperator::Sweep(&quad),
                q,
                &zero,
                config.tol,
                config.max_iter,
            )?
        }
        None => {
            let k = assemble_k(domain, &xs.sigma())?;
            source_iteration(
                &xs,
                FluxOperator::Dense(&k),
                q,
                &zero,
                config.tol,
                config.max_iter,
            )?
        }
    };
    if !trace.converged {
        return Err(Error::NotConverged {
            iterations: trace.sweeps,
            difference: trace.records.last().map_or(f64::NAN, |r| r.error_norm),
        });
    }
    let c = scattering_ratio(&xs);
    let bound = check_bound_rte(q, &phi, &xs)?;
    let max_obs_ratio = trace.max_ratio().unwrap_or(0.0);
    let qoi = match config.qoi {
        Qoi::MeanFlux => {
            domain
                .widths()
                .iter()
                .zip(phi.iter())
                .map(|(h, p)| h * p)
                .sum::<f64>()
                / domain.diameter()
        }
        Qoi::ProbeCell(i) => phi[i],
        Qoi::KEffective => keff_power_iteration(&xs, config.tol, config.max_iter)?.k_effective,
    };
    Ok(SampleRecord {
        index,
        qoi,
        c,
        bound_ratio: bound.ratio,
        max_obs_ratio,
        pass: bound.pass && max_obs_ratio <= c + RATIO_SLACK,
    })
}

/// Runs all samples. The first failing sample (lowest index) aborts the run.
pub fn run_uq(config: &UqConfig) -> Result<UqResult> {
    config.validate()?;
    let q = config.source.grid(&config.field.domain)?;
    let outcomes: Vec<Result<SampleRecord>> = (0..config.samples)
        .into_par_iter()
        .map(|i| run_sample(config, &q, i))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    for (index, outcome) in outcomes.into_iter().enumerate() {
        records.push(outcome.map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?);
    }
    UqResult::from_records(records)
}
