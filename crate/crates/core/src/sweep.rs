//! Transport sweeps along characteristics for piecewise-constant data, optical
//! path lengths, and point evaluation of the 3D point-to-point kernel.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::AngularQuadrature;
use crate::xsec::SlabDomain;

/// Work size (angles × cells) above which directions are swept in parallel.
const PARALLEL_SWEEP_THRESHOLD: usize = 1 << 15;

/// Cell-average values of a source or scalar flux.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Componentwise `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &GridFunction, b: f64) -> GridFunction {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }
}

impl Deref for GridFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GridFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Interface values `ψ(x_i, μ_k)`; row `k` belongs to `nodes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularFlux {
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub(crate) fn check_sigma(domain: &SlabDomain, sigma: &[f64]) -> Result<()> {
    domain.check_len("sigma", sigma.len())?;
    if let Some(i) = sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::CrossSections(format!(
            "sigma[{i}] = {} must be finite and strictly positive",
            sigma[i]
        )));
    }
    Ok(())
}

/// `τ(x, y) = ∫_{min}^{max} σ`, summed exactly over cell overlaps.
pub fn optical_path(domain: &SlabDomain, sigma: &[f64], x: f64, y: f64) -> Result<f64> {
    check_sigma(domain, sigma)?;
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let first = domain.locate(a)?;
    let last = domain.locate(b)?;
    let bp = domain.breakpoints();
    let mut tau = 0.0;
    for cell in first..=last {
        let lo = bp[cell].max(a);
        let hi = bp[cell + 1].min(b);
        if hi > lo {
            tau += sigma[cell] * (hi - lo);
        }
    }
    Ok(tau)
}

/// Piecewise-constant cross-section along a segment, parametrized by arc
/// length from its start point.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProfile {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

fn distance(r: [f64; 3], rp: [f64; 3]) -> f64 {
    r.iter()
        .zip(&rp)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Optical path along the straight segment from `r` to `rp`.
pub fn optical_path_segment(r: [f64; 3], rp: [f64; 3], profile: &LineProfile) -> Result<f64> {
    let length = distance(r, rp);
    if length == 0.0 {
        return Ok(0.0);
    }
    let bp = &profile.breakpoints;
    if bp.len() < 2 || profile.values.len() != bp.len() - 1 {
        return Err(Error::Argument(format!(
            "line profile needs k+1 breakpoints for k values (got {} and {})",
            bp.len(),
            profile.values.len()
        )));
    }
    if bp[0] != 0.0 || bp.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument(
            "line profile breakpoints must start at 0 and increase strictly".into(),
        ));
    }
    if (bp[bp.len() - 1] - length).abs() > 1e-12 * length {
        return Err(Error::Argument(format!(
            "line profile ends at {} but the segment has length {length}",
            bp[bp.len() - 1]
        )));
    }
    if let Some(i) = profile
        .values
        .iter()
        .position(|v| !(*v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Argument(format!(
            "line profile value {i} is negative or not finite"
        )));
    }
    Ok(bp
        .windows(2)
        .zip(&profile.values)
        .map(|(w, s)| s * (w[1] - w[0]))
        .sum())
}

/// `k(r, r') = exp(-τ) / (4π |r - r'|²)`.
pub fn kernel3d_eval(r: [f64; 3], rp: [f64; 3], tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Argument(format!(
            "optical path must be nonnegative, got {tau}"
        )));
    }
    let d2 = r
        .iter()
        .zip(&rp)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    if d2 == 0.0 {
        return Err(Error::Argument(
            "kernel is singular at coincident points".into(),
        ));
    }
    Ok((-tau).exp() / (4.0 * PI * d2))
}

/// Exact cell solution of `|μ| ψ' + σ ψ = g` over optical depth `t = σh/|μ|`.
/// Returns `(outflow, cell average)`.
#[inline]
fn cell_step(psi_in: f64, sigma: f64, g: f64, t: f64) -> (f64, f64) {
    let q = g / sigma;
    let one_minus_e = -(-t).exp_m1();
    let out = psi_in * (-t).exp() + q * one_minus_e;
    let avg = q + (psi_in - q) * (one_minus_e / t);
    (out, avg)
}

/// Marches one direction from its vacuum inflow face. Fills `interfaces`
/// (length n+1, indexed by position) and `averages` (length n).
fn march(
    widths: &[f64],
    sigma: &[f64],
    g: &[f64],
    mu: f64,
    mut interfaces: Option<&mut [f64]>,
    averages: &mut [f64],
) {
    let n = widths.len();
    let inv = 1.0 / mu.abs();
    let mut psi = 0.0;
    let mut visit = |cell: usize, psi: &mut f64| {
        let t = sigma[cell] * widths[cell] * inv;
        let (out, avg) = cell_step(*psi, sigma[cell], g[cell], t);
        averages[cell] = avg;
        *psi = out;
    };
    if mu > 0.0 {
        if let Some(iface) = interfaces.as_deref_mut() {
            iface[0] = 0.0;
        }
        for cell in 0..n {
            visit(cell, &mut psi);
            if let Some(iface) = interfaces.as_deref_mut() {
                iface[cell + 1] = psi;
            }
        }
    } else {
        if let Some(iface) = interfaces.as_deref_mut() {
            iface[n] = 0.0;
        }
        for cell in (0..n).rev() {
            visit(cell, &mut psi);
            if let Some(iface) = interfaces.as_deref_mut() {
                iface[cell] = psi;
            }
        }
    }
}

fn check_direction(mu: f64) -> Result<()> {
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::Argument(format!(
            "direction cosine must be finite and nonzero, got {mu}"
        )));
    }
    Ok(())
}

/// Interface values of the pure-transport solution `μψ' + σψ = g` with vacuum
/// inflow, for one direction `mu`.
pub fn sweep_one_direction(
    domain: &SlabDomain,
    sigma: &[f64],
    g: &GridFunction,
    mu: f64,
) -> Result<Vec<f64>> {
    check_sigma(domain, sigma)?;
    domain.check_len("source", g.len())?;
    check_direction(mu)?;
    let n = domain.n_cells();
    let mut interfaces = vec![0.0; n + 1];
    let mut averages = vec![0.0; n];
    march(
        &domain.widths(),
        sigma,
        g,
        mu,
        Some(&mut interfaces),
        &mut averages,
    );
    Ok(interfaces)
}

/// Interface values for every node of `quad`.
pub fn angular_flux(
    domain: &SlabDomain,
    sigma: &[f64],
    quad: &AngularQuadrature,
    g: &GridFunction,
) -> Result<AngularFlux> {
    let values = quad
        .nodes()
        .iter()
        .map(|&mu| sweep_one_direction(domain, sigma, g, mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(AngularFlux {
        nodes: quad.nodes().to_vec(),
        values,
    })
}

/// Scalar flux `φ = P ψ` of the pure-transport problem with source `g`, as
/// exact cell averages of each directional solution combined with the angular
/// weights.
pub fn transport_apply(
    domain: &SlabDomain,
    sigma: &[f64],
    quad: &AngularQuadrature,
    g: &GridFunction,
) -> Result<GridFunction> {
    check_sigma(domain, sigma)?;
    domain.check_len("source", g.len())?;
    let widths = domain.widths();
    let n = widths.len();
    let directional = |mu: f64| {
        let mut avg = vec![0.0; n];
        march(&widths, sigma, g, mu, None, &mut avg);
        avg
    };
    let per_angle: Vec<Vec<f64>> = if quad.len() * n >= PARALLEL_SWEEP_THRESHOLD {
        quad.nodes().par_iter().map(|&mu| directional(mu)).collect()
    } else {
        quad.nodes().iter().map(|&mu| directional(mu)).collect()
    };
    let mut phi = vec![0.0; n];
    // fixed node order keeps the reduction independent of scheduling
    for (avg, &w) in per_angle.iter().zip(quad.weights()) {
        for (p, a) in phi.iter_mut().zip(avg) {
            *p += 0.5 * w * a;
        }
    }
    Ok(GridFunction(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{double_gauss_legendre, gauss_legendre};
    use approx::assert_relative_eq;

    fn unit(n: usize) -> SlabDomain {
        SlabDomain::uniform(1.0, n).unwrap()
    }

    #[test]
    fn optical_path_examples() {
        let d = unit(4);
        assert_relative_eq!(
            optical_path(&d, &[2.0; 4], 0.25, 0.75).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let d2 = unit(2);
        assert_relative_eq!(
            optical_path(&d2, &[1.0, 3.0], 0.25, 0.75).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            optical_path(&d2, &[1.0, 3.0], 0.75, 0.25).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        for x in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(optical_path(&d2, &[1.0, 3.0], x, x).unwrap(), 0.0);
        }
        assert!(optical_path(&d2, &[1.0, 3.0], -0.1, 0.5).is_err());
        assert!(optical_path(&d2, &[1.0, 3.0], 0.5, 1.1).is_err());
    }

    #[test]
    fn segment_path_examples() {
        let p = LineProfile {
            breakpoints: vec![0.0, 2.0],
            values: vec![1.0],
        };
        assert_eq!(
            optical_path_segment([0.0; 3], [0.0, 2.0, 0.0], &p).unwrap(),
            2.0
        );
        let p = LineProfile {
            breakpoints: vec![0.0, 0.5, 1.0],
            values: vec![1.0, 3.0],
        };
        assert_eq!(
            optical_path_segment([0.0; 3], [0.0, 0.0, 1.0], &p).unwrap(),
            2.0
        );
        assert_eq!(optical_path_segment([1.0; 3], [1.0; 3], &p).unwrap(), 0.0);
        // wrong total length and non-monotone partitions
        assert!(optical_path_segment([0.0; 3], [0.0, 0.0, 2.0], &p).is_err());
        let bad = LineProfile {
            breakpoints: vec![0.0, 0.7, 0.5, 1.0],
            values: vec![1.0, 1.0, 1.0],
        };
        assert!(optical_path_segment([0.0; 3], [1.0, 0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn segment_reduces_to_slab_path_on_axis() {
        let d = SlabDomain::new(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let sigma = [1.5, 0.4, 2.0];
        let (x, y) = (0.1, 0.8);
        let p = LineProfile {
            breakpoints: vec![0.0, 0.1, 0.4, 0.7],
            values: vec![1.5, 0.4, 2.0],
        };
        let seg = optical_path_segment([x, 0.0, 0.0], [y, 0.0, 0.0], &p).unwrap();
        assert_relative_eq!(
            seg,
            optical_path(&d, &sigma, x, y).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kernel3d_examples() {
        let k0 = kernel3d_eval([0.0; 3], [1.0, 0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(k0, 0.079_577_471_545_947_7, epsilon = 1e-16);
        let k1 = kernel3d_eval([0.0; 3], [0.0, 1.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(k1, (-1f64).exp() / (4.0 * PI), epsilon = 1e-17);
        assert_relative_eq!(k1, 0.029_274_915_762, epsilon = 1e-12);
        let k2 = kernel3d_eval([0.0; 3], [0.0, 0.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(k2, k0 / 4.0, epsilon = 1e-17);
        assert!(kernel3d_eval([1.0; 3], [1.0; 3], 0.0).is_err());
        assert!(kernel3d_eval([0.0; 3], [1.0; 3], -1.0).is_err());
    }

    #[test]
    fn constant_coefficient_profile() {
        let d = unit(10);
        let (s, g, mu) = (2.0, 3.0, 0.4);
        let psi = sweep_one_direction(&d, &[s; 10], &GridFunction::constant(10, g), mu).unwrap();
        for (x, p) in d.breakpoints().iter().zip(&psi) {
            let exact = g / s * (1.0 - (-s * x / mu).exp());
            assert_relative_eq!(*p, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_source_zero_flux() {
        let d = unit(5);
        let psi = sweep_one_direction(&d, &[1.0; 5], &GridFunction::zeros(5), -0.3).unwrap();
        assert!(psi.iter().all(|p| *p == 0.0));
        let q = gauss_legendre(8).unwrap();
        let phi = transport_apply(&d, &[1.0; 5], &q, &GridFunction::zeros(5)).unwrap();
        assert!(phi.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn rejects_grazing_direction() {
        let d = unit(2);
        assert!(sweep_one_direction(&d, &[1.0; 2], &GridFunction::zeros(2), 0.0).is_err());
        assert!(sweep_one_direction(&d, &[1.0, 0.0], &GridFunction::zeros(2), 0.5).is_err());
        assert!(sweep_one_direction(&d, &[1.0; 2], &GridFunction::zeros(3), 0.5).is_err());
    }

    #[test]
    fn mirror_symmetry() {
        let d = SlabDomain::new(vec![0.0, 0.1, 0.4, 0.45, 1.0]).unwrap();
        let sigma = [0.5, 2.0, 1.0, 3.0];
        let g = GridFunction::new(vec![1.0, 0.0, 2.0, 0.5]);
        let mirrored_bp: Vec<f64> = d.breakpoints().iter().rev().map(|x| 1.0 - x).collect();
        let md = SlabDomain::new(mirrored_bp).unwrap();
        let ms: Vec<f64> = sigma.iter().rev().copied().collect();
        let mg = GridFunction::new(g.iter().rev().copied().collect());
        let a = sweep_one_direction(&d, &sigma, &g, 0.3).unwrap();
        let b = sweep_one_direction(&md, &ms, &mg, -0.3).unwrap();
        for (x, y) in a.iter().zip(b.iter().rev()) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn vacuum_inflow_in_angular_flux() {
        let d = unit(6);
        let q = gauss_legendre(4).unwrap();
        let af = angular_flux(&d, &[1.0; 6], &q, &GridFunction::constant(6, 1.0)).unwrap();
        for (mu, row) in af.nodes.iter().zip(&af.values) {
            if *mu > 0.0 {
                assert_eq!(row[0], 0.0);
            } else {
                assert_eq!(row[6], 0.0);
            }
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn linearity() {
        let d = SlabDomain::new(vec![0.0, 0.3, 0.5, 1.0]).unwrap();
        let sigma = [1.0, 0.2, 4.0];
        let q = double_gauss_legendre(16).unwrap();
        let g1 = GridFunction::new(vec![1.0, -2.0, 0.5]);
        let g2 = GridFunction::new(vec![0.3, 0.1, 7.0]);
        let (a, b) = (2.5, -0.75);
        let lhs = transport_apply(&d, &sigma, &q, &g1.axpby(a, &g2, b)).unwrap();
        let r1 = transport_apply(&d, &sigma, &q, &g1).unwrap();
        let r2 = transport_apply(&d, &sigma, &q, &g2).unwrap();
        let rhs = r1.axpby(a, &r2, b);
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert!((x - y).abs() < 1e-14 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn parallel_and_serial_reductions_match() {
        let n = 300;
        let d = unit(n);
        let sigma: Vec<f64> = (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
        let g = GridFunction::new((0..n).map(|i| ((i * 13) % 5) as f64).collect());
        let big = double_gauss_legendre(128).unwrap();
        let phi = transport_apply(&d, &sigma, &big, &g).unwrap();
        let mut serial = vec![0.0; n];
        for (&mu, &w) in big.nodes().iter().zip(big.weights()) {
            let mut avg = vec![0.0; n];
            march(&d.widths(), &sigma, &g, mu, None, &mut avg);
            for (p, a) in serial.iter_mut().zip(&avg) {
                *p += 0.5 * w * a;
            }
        }
        assert_eq!(phi.into_inner(), serial);
    }
}
