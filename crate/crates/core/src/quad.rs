//! Angular quadrature for the direction average `½ ∫_{-1}^{1} ψ dμ`, and the
//! exponential integral E1.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const WEIGHT_SUM_TOL: f64 = 1e-14;

/// Nodes `μ_k` in `(-1, 1) \ {0}` with positive weights summing to 2,
/// symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularQuadrature {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::Quadrature(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(k) = nodes.iter().position(|&m| !(m.abs() < 1.0) || m == 0.0) {
            return Err(Error::Quadrature(format!(
                "node {k} = {} must lie in (-1, 1) and be nonzero",
                nodes[k]
            )));
        }
        if let Some(k) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::Quadrature(format!(
                "weight {k} = {} is not positive",
                weights[k]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 2.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Quadrature(format!(
                "weights sum to {total}, expected 2"
            )));
        }
        for (k, (&m, &w)) in nodes.iter().zip(&weights).enumerate() {
            let mirrored = nodes
                .iter()
                .zip(&weights)
                .any(|(&m2, &w2)| (m2 + m).abs() <= 1e-14 && (w2 - w).abs() <= 1e-14 * w);
            if !mirrored {
                return Err(Error::Quadrature(format!(
                    "node {k} = {m} has no mirror image"
                )));
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `½ Σ_k w_k f(μ_k)`.
    pub fn average(&self, f: impl Fn(f64) -> f64) -> f64 {
        0.5 * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&m, &w)| w * f(m))
            .sum::<f64>()
    }
}

/// Roots and weights of the `n`-point Gauss–Legendre rule on `(-1, 1)`,
/// ascending. Roots come from Newton iteration on the three-term recurrence.
pub(crate) fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Standard `n`-point Gauss–Legendre rule on `(-1, 1)`; `n` must be even so
/// that no node falls on `μ = 0`.
pub fn gauss_legendre(n: usize) -> Result<AngularQuadrature> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::Quadrature(format!(
            "Gauss-Legendre order must be even and >= 2, got {n}"
        )));
    }
    let (nodes, weights) = legendre_rule(n);
    AngularQuadrature::new(nodes, weights)
}

/// Half-range Gauss–Legendre: an `n/2`-point rule mapped onto each of
/// `(-1, 0)` and `(0, 1)`.
///
/// Angular fluxes in a slab jump in slope across `μ = 0` near the vacuum
/// faces; splitting there restores spectral convergence of the average.
pub fn double_gauss_legendre(n: usize) -> Result<AngularQuadrature> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::Quadrature(format!(
            "half-range Gauss-Legendre order must be even and >= 2, got {n}"
        )));
    }
    let (x, w) = legendre_rule(n / 2);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (&xi, &wi) in x.iter().zip(&w).rev() {
        nodes.push(-0.5 * (xi + 1.0));
        weights.push(0.5 * wi);
    }
    for (&xi, &wi) in x.iter().zip(&w) {
        nodes.push(0.5 * (xi + 1.0));
        weights.push(0.5 * wi);
    }
    AngularQuadrature::new(nodes, weights)
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
///
/// Power series below `x = 1`, modified Lentz continued fraction above;
/// relative accuracy about 1e-15 on both branches.
pub fn e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Argument(format!("E1 requires x > 0, got {x}")));
    }
    Ok(expint(1, x))
}

/// `E_n(x)` for `n >= 1`, `x > 0`. Callers guarantee the domain.
pub(crate) fn expint(n: u32, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_TERMS: usize = 500;
    debug_assert!(n >= 1 && x > 0.0);
    if x.is_infinite() {
        return 0.0;
    }
    let nm1 = n - 1;
    if x > 1.0 {
        let mut b = x + n as f64;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_TERMS {
            let fi = i as f64;
            let an = -fi * (nm1 as f64 + fi);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h * (-x).exp()
    } else {
        let mut ans = if nm1 != 0 {
            1.0 / nm1 as f64
        } else {
            -x.ln() - EULER_GAMMA
        };
        let mut fact = 1.0;
        for i in 1..=MAX_TERMS {
            fact *= -x / i as f64;
            let del = if i as u32 != nm1 {
                -fact / (i as f64 - nm1 as f64)
            } else {
                let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
                fact * (-x.ln() + psi)
            };
            ans += del;
            if del.abs() < ans.abs() * EPS {
                break;
            }
        }
        ans
    }
}

/// `E_n(0) = 1/(n-1)` for `n >= 2`; otherwise as [`expint`].
pub(crate) fn expint_at(n: u32, x: f64) -> f64 {
    if x == 0.0 && n >= 2 {
        1.0 / (n - 1) as f64
    } else {
        expint(n, x)
    }
}
