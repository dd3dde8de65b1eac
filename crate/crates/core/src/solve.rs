//! Source iteration, the direct second-kind solve, and the data-explicit flux
//! bounds.
//!
//! Norms here carry the cell widths: `‖v‖_w² = Σ_i h_i w_i v_i²`. Source
//! iteration stops and reports in the `σ`-weighted norm, the norm in which
//! `K σ_S` is a contraction with rate at most the scattering ratio `c`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt17, Table};
use crate::kernel::DenseOperator;
use crate::quad::AngularQuadrature;
use crate::sweep::{transport_apply, GridFunction};
use crate::xsec::{scattering_ratio, CrossSections, SlabDomain};

/// Residual bound of [`direct_solve`], relative to `‖KQ‖`.
pub const DIRECT_RESIDUAL_TOL: f64 = 1e-12;
/// Slack allowed on the bound ratios of [`check_bound_pure`] and
/// [`check_bound_rte`].
pub const BOUND_SLACK: f64 = 1e-10;

/// `(Σ_i h_i w_i v_i²)^{1/2}`.
pub fn weighted_norm(domain: &SlabDomain, v: &[f64], w: &[f64]) -> Result<f64> {
    domain.check_len("vector", v.len())?;
    domain.check_len("weight", w.len())?;
    if let Some(i) = w.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Argument(format!(
            "weight[{i}] = {} must be positive",
            w[i]
        )));
    }
    Ok(domain
        .widths()
        .iter()
        .zip(v)
        .zip(w)
        .map(|((h, v), w)| h * w * v * v)
        .sum::<f64>()
        .sqrt())
}

/// Discrete `L²` norm (unit weight).
pub fn l2_norm(domain: &SlabDomain, v: &[f64]) -> Result<f64> {
    weighted_norm(domain, v, &vec![1.0; v.len()])
}

/// Fixed source `Q`: one value for every cell or one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Constant(f64),
    PerCell(Vec<f64>),
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Constant(1.0)
    }
}

impl SourceSpec {
    pub fn grid(&self, domain: &SlabDomain) -> Result<GridFunction> {
        let values = match self {
            SourceSpec::Constant(q) => vec![*q; domain.n_cells()],
            SourceSpec::PerCell(v) => {
                domain.check_len("source", v.len())?;
                v.clone()
            }
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("source[{i}] is not finite")));
        }
        Ok(GridFunction::new(values))
    }
}

/// How `g ↦ K g` is evaluated inside source iteration.
#[derive(Debug, Clone, Copy)]
pub enum FluxOperator<'a> {
    /// Pre-assembled dense `K`.
    Dense(&'a DenseOperator),
    /// Matrix-free transport sweeps with the given angular rule.
    Sweep(&'a AngularQuadrature),
}

impl FluxOperator<'_> {
    pub fn apply(&self, xs: &CrossSections, g: &GridFunction) -> Result<GridFunction> {
        match self {
            FluxOperator::Dense(k) => k.apply(g),
            FluxOperator::Sweep(quad) => transport_apply(xs.domain(), &xs.sigma(), quad, g),
        }
    }
}

/// What the recorded error norms measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReference {
    /// `‖φ − φ^i‖` against the direct solve.
    DirectSolve,
    /// `‖φ^{i+1} − φ^i‖`.
    SuccessiveDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub error_norm: f64,
    /// `error_norm[i] / error_norm[i-1]`, absent for the first record or a
    /// zero predecessor.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Scattering ratio `c = max σ_S/σ`.
    pub theoretical_rate: f64,
    /// `c (1 − e^{−σ d})`, only for spatially constant coefficients.
    pub sharp_rate: Option<f64>,
    pub reference: ErrorReference,
    pub converged: bool,
    /// Loop index at which `‖φ^{i+1} − φ^i‖_σ ≤ tol` first held.
    pub converged_at: Option<usize>,
    /// Number of operator applications performed.
    pub sweeps: usize,
}

impl IterationTrace {
    pub fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.ratio)
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios().reduce(f64::max)
    }

    /// Last recorded ratio.
    pub fn asymptotic_ratio(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.ratio)
    }

    /// True when error norms never increase.
    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].error_norm <= w[0].error_norm)
    }

    /// `iter,error_norm,ratio,theoretical_rate,sharp_rate`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            "iter",
            "error_norm",
            "ratio",
            "theoretical_rate",
            "sharp_rate",
        ]);
        for r in &self.records {
            t.push(vec![
                r.iter.to_string(),
                fmt17(r.error_norm),
                r.ratio.map(fmt17).unwrap_or_default(),
                fmt17(self.theoretical_rate),
                self.sharp_rate.map(fmt17).unwrap_or_default(),
            ]);
        }
        t
    }
}

/// `c (1 − e^{−σ d})` when every coefficient is constant in space.
pub fn sharp_rate(xs: &CrossSections) -> Option<f64> {
    xs.is_constant().then(|| {
        let sigma = xs.sigma()[0];
        scattering_ratio(xs) * (1.0 - (-sigma * xs.domain().diameter()).exp())
    })
}

/// Iterates `φ^{i+1} = K(σ_S φ^i + Q)` from `phi0` until successive iterates
/// differ by at most `tol` in the `σ`-weighted norm, or `max_iter` sweeps.
///
/// Running out of iterations is not an error: the trace comes back with
/// `converged == false`.
pub fn source_iteration(
    xs: &CrossSections,
    op: FluxOperator<'_>,
    q: &GridFunction,
    phi0: &GridFunction,
    tol: f64,
    max_iter: usize,
) -> Result<(GridFunction, IterationTrace)> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let domain = xs.domain();
    domain.check_len("source", q.len())?;
    domain.check_len("initial guess", phi0.len())?;
    let sigma = xs.sigma();
    let norm = |v: &[f64]| weighted_norm(domain, v, &sigma);

    let reference = match op {
        FluxOperator::Dense(k) => Some(direct_solve(k, xs, q)?),
        FluxOperator::Sweep(_) => None,
    };
    let mut trace = IterationTrace {
        records: Vec::new(),
        theoretical_rate: scattering_ratio(xs),
        sharp_rate: sharp_rate(xs),
        reference: if reference.is_some() {
            ErrorReference::DirectSolve
        } else {
            ErrorReference::SuccessiveDifference
        },
        converged: false,
        converged_at: None,
        sweeps: 0,
    };
    let push = |records: &mut Vec<IterationRecord>, error_norm: f64| {
        let ratio = records
            .last()
            .filter(|r| r.error_norm > 0.0)
            .map(|r| error_norm / r.error_norm);
        records.push(IterationRecord {
            iter: records.len(),
            error_norm,
            ratio,
        });
    };

    let mut phi = phi0.clone();
    if let Some(exact) = &reference {
        push(&mut trace.records, norm(&exact.axpby(1.0, &phi, -1.0))?);
    }
    for it in 0..max_iter {
        let scattered: GridFunction = xs
            .sigma_s()
            .iter()
            .zip(phi.iter())
            .zip(q.iter())
            .map(|((s, p), q)| s * p + q)
            .collect::<Vec<_>>()
            .into();
        let next = op.apply(xs, &scattered)?;
        trace.sweeps += 1;
        let diff = norm(&next.axpby(1.0, &phi, -1.0))?;
        match &reference {
            Some(exact) => push(&mut trace.records, norm(&exact.axpby(1.0, &next, -1.0))?),
            None => push(&mut trace.records, diff),
        }
        phi = next;
        if diff <= tol {
            trace.converged = true;
            trace.converged_at = Some(it);
            break;
        }
    }
    Ok((phi, trace))
}

/// Solves `(I − K diag(σ_S)) φ = K Q` by LU with partial pivoting.
pub fn direct_solve(
    k: &DenseOperator,
    xs: &CrossSections,
    q: &GridFunction,
) -> Result<GridFunction> {
    let n = k.n();
    if k.domain() != xs.domain() {
        return Err(Error::Argument(
            "operator and cross-sections live on different grids".into(),
        ));
    }
    xs.domain().check_len("source", q.len())?;
    let ss = xs.sigma_s();
    let system = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - k.get(i, j) * ss[j]
    });
    let rhs = DVector::from_column_slice(&k.apply(q)?);
    let lu = system.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("I − Kσ_S has a zero pivot".into()))?;
    let bound = DIRECT_RESIDUAL_TOL * rhs.norm();
    let mut residual = &rhs - &system * &x;
    if residual.norm() > bound {
        // one step of iterative refinement
        if let Some(dx) = lu.solve(&residual) {
            x += dx;
            residual = &rhs - &system * &x;
        }
    }
    if residual.norm() > bound {
        return Err(Error::Singular(format!(
            "residual {:e} exceeds {:e}",
            residual.norm(),
            bound
        )));
    }
    Ok(GridFunction::new(x.as_slice().to_vec()))
}

/// Outcome of a data-explicit flux bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Self {
            lhs,
            rhs,
            ratio,
            pass: ratio <= 1.0 + BOUND_SLACK,
        }
    }
}

/// Pure transport: `‖φ‖ ≤ ‖g‖ / σ_min` for `φ = K g`.
pub fn check_bound_pure(
    g: &GridFunction,
    phi: &GridFunction,
    xs: &CrossSections,
) -> Result<BoundReport> {
    let d = xs.domain();
    Ok(BoundReport::new(
        l2_norm(d, phi)?,
        l2_norm(d, g)? / xs.sigma_min(),
    ))
}

/// Full problem: `‖φ‖ ≤ ‖Q‖ / (σ_min (1 − c))`.
pub fn check_bound_rte(
    q: &GridFunction,
    phi: &GridFunction,
    xs: &CrossSections,
) -> Result<BoundReport> {
    let d = xs.domain();
    let c = scattering_ratio(xs);
    Ok(BoundReport::new(
        l2_norm(d, phi)?,
        l2_norm(d, q)? / (xs.sigma_min() * (1.0 - c)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::assemble_k;
    use crate::quad::double_gauss_legendre;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> SlabDomain {
        SlabDomain::uniform(1.0, n).unwrap()
    }

    fn hetero(n: usize) -> CrossSections {
        let s: Vec<f64> = (0..n)
            .map(|i| 0.2 + 1.7 * ((i * 5 % 9) as f64 / 8.0))
            .collect();
        let a: Vec<f64> = (0..n)
            .map(|i| 0.1 + 0.9 * ((i * 3 % 7) as f64 / 6.0))
            .collect();
        CrossSections::new(unit(n), s, a, None).unwrap()
    }

    #[test]
    fn weighted_norm_examples() {
        for n in [1, 3, 10] {
            let d = unit(n);
            assert_relative_eq!(
                weighted_norm(&d, &vec![1.0; n], &vec![1.0; n]).unwrap(),
                1.0,
                epsilon = 1e-15
            );
            assert_relative_eq!(
                weighted_norm(&d, &vec![1.0; n], &vec![4.0; n]).unwrap(),
                2.0,
                epsilon = 1e-15
            );
        }
        let d = SlabDomain::new(vec![0.0, 0.2, 1.0]).unwrap();
        let v = [3.0, -1.0];
        let w = [0.5, 2.0];
        let base = weighted_norm(&d, &v, &w).unwrap();
        let scaled = weighted_norm(&d, &[-6.0, 2.0], &w).unwrap();
        assert_relative_eq!(scaled, 2.0 * base, max_relative = 1e-15);
        assert!(weighted_norm(&d, &v, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn source_spec_forms() {
        let d = unit(3);
        let c: SourceSpec = serde_json::from_str("2.5").unwrap();
        assert_eq!(c.grid(&d).unwrap(), GridFunction::constant(3, 2.5));
        let p: SourceSpec = serde_json::from_str("[1.0, 0.0, -1.0]").unwrap();
        assert_eq!(p.grid(&d).unwrap(), GridFunction::new(vec![1.0, 0.0, -1.0]));
        assert!(SourceSpec::PerCell(vec![1.0]).grid(&d).is_err());
    }

    #[test]
    fn zero_source_is_a_fixed_point() {
        let xs = hetero(8);
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let zero = GridFunction::zeros(8);
        let (phi, trace) =
            source_iteration(&xs, FluxOperator::Dense(&k), &zero, &zero, 1e-12, 50).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.converged_at, Some(0));
        assert!(phi.iter().all(|v| *v == 0.0));
        assert_eq!(direct_solve(&k, &xs, &zero).unwrap(), zero);
    }

    #[test]
    fn constant_coefficient_rates() {
        let xs = CrossSections::constant(unit(16), 0.5, 0.5, None).unwrap();
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let q = GridFunction::constant(16, 1.0);
        let (_, trace) = source_iteration(
            &xs,
            FluxOperator::Dense(&k),
            &q,
            &GridFunction::zeros(16),
            1e-10,
            200,
        )
        .unwrap();
        let sharp = trace.sharp_rate.unwrap();
        assert_relative_eq!(sharp, 0.5 * (1.0 - (-1.0f64).exp()), epsilon = 1e-15);
        for r in trace.ratios() {
            assert!(r <= 0.5);
            assert!(r <= sharp + 1e-3);
        }
        assert!(trace.is_monotone());
    }

    #[test]
    fn iteration_matches_direct_solve() {
        let xs = hetero(32);
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let q = GridFunction::new((0..32).map(|i| 1.0 + (i % 4) as f64).collect());
        let direct = direct_solve(&k, &xs, &q).unwrap();
        let (phi, trace) = source_iteration(
            &xs,
            FluxOperator::Dense(&k),
            &q,
            &GridFunction::zeros(32),
            1e-12,
            500,
        )
        .unwrap();
        assert!(trace.converged);
        let diff = weighted_norm(xs.domain(), &phi.axpby(1.0, &direct, -1.0), &xs.sigma()).unwrap();
        assert!(diff < 1e-10, "diff {diff:e}");
    }

    #[test]
    fn pure_transport_limit() {
        // with σ_S → 0 the direct solve is KQ
        let d = unit(6);
        let xs = CrossSections::new(d.clone(), vec![1e-14; 6], vec![1.5; 6], None).unwrap();
        let k = assemble_k(&d, &xs.sigma()).unwrap();
        let q = GridFunction::new(vec![1.0, 2.0, 0.0, 0.5, 3.0, 1.0]);
        let phi = direct_solve(&k, &xs, &q).unwrap();
        let kq = k.apply(&q).unwrap();
        for (a, b) in phi.iter().zip(kq.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn sweep_path_records_successive_differences() {
        let xs = hetero(12);
        let quad = double_gauss_legendre(32).unwrap();
        let q = GridFunction::constant(12, 1.0);
        let (_, trace) = source_iteration(
            &xs,
            FluxOperator::Sweep(&quad),
            &q,
            &GridFunction::zeros(12),
            1e-10,
            300,
        )
        .unwrap();
        assert_eq!(trace.reference, ErrorReference::SuccessiveDifference);
        assert!(trace.converged);
        assert!(trace.max_ratio().unwrap() <= trace.theoretical_rate + 1e-10);
        assert!(trace.sharp_rate.is_none());
    }

    #[test]
    fn exhaustion_is_reported_not_raised() {
        let xs = hetero(8);
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let q = GridFunction::constant(8, 1.0);
        let (_, trace) = source_iteration(
            &xs,
            FluxOperator::Dense(&k),
            &q,
            &GridFunction::zeros(8),
            1e-14,
            3,
        )
        .unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.sweeps, 3);
        assert_eq!(trace.records.len(), 4);
        assert!(source_iteration(
            &xs,
            FluxOperator::Dense(&k),
            &q,
            &GridFunction::zeros(8),
            0.0,
            3
        )
        .is_err());
    }

    #[test]
    fn bound_examples() {
        let xs = CrossSections::constant(unit(16), 1e-12, 1.0, None).unwrap();
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let zero = GridFunction::zeros(16);
        let r = check_bound_pure(&zero, &zero, &xs).unwrap();
        assert_eq!((r.lhs, r.pass), (0.0, true));

        let g = GridFunction::constant(16, 1.0);
        let phi = k.apply(&g).unwrap();
        let r = check_bound_pure(&g, &phi, &xs).unwrap();
        assert_relative_eq!(r.rhs, 1.0, max_relative = 1e-11);
        assert!(r.lhs < 1.0 && r.pass);

        let xs = CrossSections::constant(unit(16), 0.9, 0.1, None).unwrap();
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let phi = direct_solve(&k, &xs, &g).unwrap();
        let r = check_bound_rte(&g, &phi, &xs).unwrap();
        assert_relative_eq!(r.rhs, 10.0, max_relative = 1e-12);
        assert!(r.lhs < 10.0 && r.pass);
        assert!(check_bound_rte(&zero, &zero, &xs).unwrap().pass);
    }

    #[test]
    fn trace_csv_header() {
        let xs = CrossSections::constant(unit(4), 0.5, 0.5, None).unwrap();
        let k = assemble_k(xs.domain(), &xs.sigma()).unwrap();
        let q = GridFunction::constant(4, 1.0);
        let (_, trace) = source_iteration(
            &xs,
            FluxOperator::Dense(&k),
            &q,
            &GridFunction::zeros(4),
            1e-6,
            50,
        )
        .unwrap();
        let text = String::from_utf8(trace.to_table().to_bytes().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,error_norm,ratio,theoretical_rate,sharp_rate"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[2], "");
    }
}
