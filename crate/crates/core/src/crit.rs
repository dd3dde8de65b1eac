//! Criticality: `(I − Kσ_S) φ = λ K σ_F φ`.
//!
//! With `v = σ_S^{1/2} φ` and `w = (σ_F/σ_S)^{1/2} v` the problem becomes
//! `N w = (1/λ) w` for the symmetric
//! `N = R^{1/2} (I − L_S)^{-1} L_S R^{1/2}`, `L_S = σ_S^{1/2} K σ_S^{1/2}`,
//! `R = σ_F/σ_S`. All spectral work is done on the `h`-symmetric
//! representatives (see [`DenseOperator::h_symmetric`]), which coincide with
//! the plain matrices on uniform grids.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{assemble_k, sym_eigen, symmetrize, symmetrized, DenseOperator};
use crate::solve::l2_norm;
use crate::sweep::GridFunction;
use crate::xsec::CrossSections;

/// Largest grid for which full spectra are computed.
pub const SPECTRUM_MAX_N: usize = 256;
/// Tolerance on the generalized-form residual of the leading pairs.
pub const GENERALIZED_RESIDUAL_TOL: f64 = 1e-6;
/// Tolerance on `|eig(M) − μ/(1−μ)|`, relative to `max(1, ‖M‖)`.
pub const MAPPING_TOL: f64 = 1e-8;
/// Eigenvalues below this fraction of the largest count as non-positive.
pub const POSITIVITY_RTOL: f64 = 1e-12;

fn fission(xs: &CrossSections) -> Result<&[f64]> {
    xs.sigma_f()
        .ok_or_else(|| Error::CrossSections("criticality needs sigma_f".into()))
}

/// `L_S = σ_S^{1/2} K σ_S^{1/2}`, with `K` assembled for `σ = σ_S + σ_F + σ_A`.
pub fn build_lsigs(xs: &CrossSections) -> Result<DenseOperator> {
    fission(xs)?;
    let k = assemble_k(xs.domain(), &xs.sigma())?;
    symmetrize(&k, xs.sigma_s())
}

/// `(I − L_S)^{-1} L_S` on the `h`-symmetric form of `lsigs`.
pub fn assemble_m(lsigs: &DenseOperator) -> Result<DenseOperator> {
    let a = lsigs.h_symmetric()?.into_matrix();
    let n = a.nrows();
    let system = DMatrix::identity(n, n) - &a;
    let x = system
        .lu()
        .solve(&a)
        .ok_or_else(|| Error::Singular("I − L_S has a zero pivot".into()))?;
    DenseOperator::new(symmetrized(x)?, lsigs.domain().clone())
}

/// `N = R^{1/2} M R^{1/2}` for an explicit `L_S` and fission ratio `R`.
pub fn assemble_n(lsigs: &DenseOperator, ratio: &[f64]) -> Result<DenseOperator> {
    lsigs.domain().check_len("fission ratio", ratio.len())?;
    if let Some(i) = ratio.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Argument(format!(
            "fission ratio[{i}] = {} must be positive",
            ratio[i]
        )));
    }
    let root: Vec<f64> = ratio.iter().map(|r| r.sqrt()).collect();
    let n = assemble_m(lsigs)?.scaled(&root, &root)?;
    let domain = n.domain().clone();
    DenseOperator::new(symmetrized(n.into_matrix())?, domain)
}

pub fn fission_ratio(xs: &CrossSections) -> Result<Vec<f64>> {
    Ok(fission(xs)?
        .iter()
        .zip(xs.sigma_s())
        .map(|(f, s)| f / s)
        .collect())
}

/// `N` for the given cross-sections.
pub fn build_n(xs: &CrossSections) -> Result<DenseOperator> {
    assemble_n(&build_lsigs(xs)?, &fission_ratio(xs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityResult {
    pub lambda: f64,
    pub k_effective: f64,
    /// Fundamental mode, unit discrete `L²` norm, positive sum.
    pub eigenvector: GridFunction,
    /// Full spectrum of `N`, ascending; only for grids up to [`SPECTRUM_MAX_N`].
    pub spectrum: Option<Vec<f64>>,
    /// `‖N w − k w‖ / ‖w‖` at exit.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Serialize)]
struct CriticalityRecord<'a> {
    lambda: f64,
    k_effective: f64,
    residual: f64,
    spectrum: Option<&'a [f64]>,
}

impl Serialize for CriticalityResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CriticalityRecord {
            lambda: self.lambda,
            k_effective: self.k_effective,
            residual: self.residual,
            spectrum: self.spectrum.as_deref(),
        }
        .serialize(s)
    }
}

/// Dominant eigenpair of a symmetric matrix from an all-ones start.
/// Returns `(rayleigh, unit vector, residual, iterations)`.
pub fn power_iteration(
    a: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, DVector<f64>, f64, usize)> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = a.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let y = a * &x;
        estimate = x.dot(&y);
        residual = (&y - &x * estimate).norm();
        if residual <= tol {
            return Ok((estimate, x, residual, it));
        }
        let norm = y.norm();
        if norm == 0.0 {
            return Err(Error::Eigen("operator annihilates the iterate".into()));
        }
        x = y / norm;
    }
    Err(Error::PowerIteration {
        iterations: max_iter,
        estimate,
        residual,
    })
}

fn normalized(domain: &crate::SlabDomain, mut v: Vec<f64>) -> Result<GridFunction> {
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = l2_norm(domain, &v)?;
    Ok(GridFunction::new(v.into_iter().map(|x| x / norm).collect()))
}

/// Power iteration on an explicit `N`. The eigenvector is returned in the
/// cell-value form `H^{-1/2} w`, i.e. before any `σ_F^{-1/2}` rescaling.
pub fn criticality_of(
    n_op: &DenseOperator,
    tol: f64,
    max_iter: usize,
) -> Result<CriticalityResult> {
    let (k, w, residual, iterations) = power_iteration(n_op.matrix(), tol, max_iter)?;
    if !(k > 0.0) {
        return Err(Error::Eigen(format!(
            "dominant eigenvalue {k} is not positive"
        )));
    }
    let domain = n_op.domain();
    let h = domain.widths();
    let v: Vec<f64> = w.iter().zip(&h).map(|(w, h)| w / h.sqrt()).collect();
    let spectrum = if n_op.n() <= SPECTRUM_MAX_N {
        Some(sym_eigen(n_op)?.0)
    } else {
        None
    };
    Ok(CriticalityResult {
        lambda: 1.0 / k,
        k_effective: k,
        eigenvector: normalized(domain, v)?,
        spectrum,
        residual,
        iterations,
    })
}

/// Fundamental eigenvalue and mode of the criticality problem.
pub fn keff_power_iteration(
    xs: &CrossSections,
    tol: f64,
    max_iter: usize,
) -> Result<CriticalityResult> {
    let f = fission(xs)?.to_vec();
    let mut result = criticality_of(&build_n(xs)?, tol, max_iter)?;
    let phi: Vec<f64> = result
        .eigenvector
        .iter()
        .zip(&f)
        .map(|(v, f)| v / f.sqrt())
        .collect();
    result.eigenvector = normalized(xs.domain(), phi)?;
    Ok(result)
}

/// Certificate for the real, positive spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `N`, ascending.
    pub spectrum: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub positive: bool,
    /// `max |eig(M) − μ/(1−μ)|` over `μ ∈ eig(L_S)`, relative to `max(1, ‖M‖)`.
    pub mapping_error: f64,
    /// `‖(I − Kσ_S)φ − λ Kσ_F φ‖` for the leading (up to) three pairs,
    /// unit-norm `φ`.
    pub generalized_residuals: Vec<f64>,
    pub pass: bool,
}

pub fn verify_spectrum_positive(xs: &CrossSections) -> Result<SpectrumReport> {
    let n = xs.n_cells();
    if n > SPECTRUM_MAX_N {
        return Err(Error::Argument(format!(
            "full spectrum limited to n <= {SPECTRUM_MAX_N}, got {n}"
        )));
    }
    let f = fission(xs)?.to_vec();
    let domain = xs.domain();
    let k = assemble_k(domain, &xs.sigma())?;
    let lsigs = symmetrize(&k, xs.sigma_s())?;
    let m = assemble_m(&lsigs)?;
    let ratio = fission_ratio(xs)?;
    let root: Vec<f64> = ratio.iter().map(|r| r.sqrt()).collect();
    let n_op = DenseOperator::new(
        symmetrized(m.scaled(&root, &root)?.into_matrix())?,
        domain.clone(),
    )?;

    let (spectrum, vectors) = sym_eigen(&n_op)?;
    let min = spectrum[0];
    let max = spectrum[n - 1];
    let positive = min > POSITIVITY_RTOL * max && max > 0.0;

    let mu = crate::kernel::sym_eigenvalues(&lsigs.h_symmetric()?)?;
    let mapped: Vec<f64> = mu.iter().map(|m| m / (1.0 - m)).collect();
    let m_eigs = crate::kernel::sym_eigenvalues(&m)?;
    let scale = m_eigs[n - 1].abs().max(1.0);
    let mapping_error = mapped
        .iter()
        .zip(&m_eigs)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max);

    let h = domain.widths();
    let ss = xs.sigma_s();
    let mut generalized_residuals = Vec::new();
    for c in (n.saturating_sub(3)..n).rev() {
        let nu = spectrum[c];
        let lambda = 1.0 / nu;
        let w = vectors.column(c);
        let phi: Vec<f64> = (0..n).map(|i| w[i] / (h[i] * f[i]).sqrt()).collect();
        let phi = normalized(domain, phi)?;
        let scat: Vec<f64> = phi.iter().zip(ss).map(|(p, s)| p * s).collect();
        let fis: Vec<f64> = phi.iter().zip(&f).map(|(p, f)| p * f).collect();
        let ks = k.apply(&scat)?;
        let kf = k.apply(&fis)?;
        let r: Vec<f64> = (0..n).map(|i| phi[i] - ks[i] - lambda * kf[i]).collect();
        generalized_residuals.push(l2_norm(domain, &r)?);
    }
    let pass = positive
        && mapping_error <= MAPPING_TOL
        && generalized_residuals
            .iter()
            .all(|r| *r <= GENERALIZED_RESIDUAL_TOL);
    Ok(SpectrumReport {
        spectrum,
        min,
        max,
        positive,
        mapping_error,
        generalized_residuals,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::sym_eigenvalues;
    use crate::xsec::{sample_xsec, CoefficientLaw, RandomFieldSpec};
    use crate::SlabDomain;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> SlabDomain {
        SlabDomain::uniform(1.0, n).unwrap()
    }

    fn reference(n: usize) -> CrossSections {
        CrossSections::constant(unit(n), 0.5, 0.2, Some(0.3)).unwrap()
    }

    fn scalar(l: f64) -> DenseOperator {
        DenseOperator::new(DMatrix::from_element(1, 1, l), unit(1)).unwrap()
    }

    #[test]
    fn missing_fission_is_rejected() {
        let xs = CrossSections::constant(unit(4), 0.5, 0.5, None).unwrap();
        assert!(matches!(build_lsigs(&xs), Err(Error::CrossSections(_))));
        assert!(keff_power_iteration(&xs, 1e-10, 100).is_err());
    }

    #[test]
    fn lsigs_is_scaled_k() {
        let xs = reference(8);
        let ls = build_lsigs(&xs).unwrap();
        let k = assemble_k(xs.domain(), &[1.0; 8]).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(ls.get(i, j), 0.5 * k.get(i, j), max_relative = 1e-14);
            }
        }
        assert!(ls.is_symmetric());
        let top = *sym_eigenvalues(&ls).unwrap().last().unwrap();
        assert!(top < 0.5 + 1e-8);
    }

    #[test]
    fn scalar_model() {
        let n = assemble_n(&scalar(0.5), &[1.0]).unwrap();
        assert_relative_eq!(n.get(0, 0), 1.0, epsilon = 1e-15);
        let r = criticality_of(&n, 1e-12, 10).unwrap();
        assert_relative_eq!(r.k_effective, 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.lambda, 1.0, epsilon = 1e-15);

        let n = assemble_n(&scalar(0.2), &[3.0]).unwrap();
        assert_relative_eq!(n.get(0, 0), 3.0 * 0.2 / 0.8, max_relative = 1e-15);
    }

    #[test]
    fn equal_fission_and_scattering_gives_m() {
        let xs = CrossSections::constant(unit(6), 0.4, 0.2, Some(0.4)).unwrap();
        let n = build_n(&xs).unwrap();
        let m = assemble_m(&build_lsigs(&xs).unwrap()).unwrap();
        assert_relative_eq!(n.matrix(), m.matrix(), max_relative = 1e-14);
    }

    #[test]
    fn power_iteration_matches_full_spectrum() {
        let xs = reference(16);
        let r = keff_power_iteration(&xs, 1e-10, 10_000).unwrap();
        let top = *sym_eigenvalues(&build_n(&xs).unwrap())
            .unwrap()
            .last()
            .unwrap();
        assert!(
            (r.k_effective - top).abs() <= 1e-8,
            "{} vs {top}",
            r.k_effective
        );
        assert_relative_eq!(r.lambda * r.k_effective, 1.0, epsilon = 1e-15);
        assert!(r.residual <= 1e-10);
        assert!(r.eigenvector.iter().all(|v| *v > 0.0));
        assert_eq!(r.spectrum.as_ref().unwrap().last(), Some(&top));
    }

    #[test]
    fn spectrum_certificate_on_random_fields() {
        let spec = RandomFieldSpec {
            domain: unit(16),
            sigma_s: CoefficientLaw::uniform(0.1, 1.0),
            sigma_a: CoefficientLaw::log_uniform(0.05, 2.0),
            sigma_f: Some(CoefficientLaw::uniform(0.05, 1.0)),
            seed: 11,
        };
        for i in 0..10 {
            let xs = sample_xsec(&spec, i).unwrap();
            let report = verify_spectrum_positive(&xs).unwrap();
            assert!(report.pass, "sample {i}: {report:?}");
            assert_eq!(report.generalized_residuals.len(), 3);
        }
    }

    #[test]
    fn doubling_fission_keeps_positivity() {
        let xs = reference(8);
        let doubled = CrossSections::new(
            xs.domain().clone(),
            xs.sigma_s().to_vec(),
            xs.sigma_a().to_vec(),
            Some(xs.sigma_f().unwrap().iter().map(|f| 2.0 * f).collect()),
        )
        .unwrap();
        assert!(verify_spectrum_positive(&doubled).unwrap().positive);
    }

    #[test]
    fn guard_and_json_shape() {
        let xs = CrossSections::constant(unit(257), 0.5, 0.2, Some(0.3)).unwrap();
        assert!(verify_spectrum_positive(&xs).is_err());
        let r = criticality_of(&assemble_n(&scalar(0.5), &[1.0]).unwrap(), 1e-12, 10).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["k_effective", "lambda", "residual", "spectrum"]);
    }

    #[test]
    fn exhaustion_reports_estimate() {
        let xs = reference(16);
        match keff_power_iteration(&xs, 1e-15, 2) {
            Err(Error::PowerIteration {
                iterations,
                estimate,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(estimate > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
