//! Dense Galerkin discretization of the slab integral operator
//! `K g(x) = ½ ∫ E1(τ(x, y)) g(y) dy` on piecewise-constant functions, its
//! symmetrized forms, and the spectral tools used to certify them.
//!
//! Conventions: a [`DenseOperator`] acts on cell averages. Entry `(i, j)` of
//! the assembled `K` is `(1/h_i) · ½ ∫_{cell i} ∫_{cell j} E1(τ) dy dx`, so
//! `diag(h) K` is symmetric on any grid and `K` itself only on uniform ones.
//! Spectral statements are made about the similar matrix
//! `H^{1/2} A H^{-1/2}` returned by [`DenseOperator::h_symmetric`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{fmt17, Table};
use crate::quad::{expint, expint_at, legendre_rule};
use crate::sweep::{check_sigma, GridFunction};
use crate::xsec::{CrossSections, SlabDomain};

/// Relative accuracy of every assembled matrix entry.
pub const ASSEMBLY_RTOL: f64 = 1e-10;
/// Panel budget per entry before assembly gives up.
pub const MAX_PANELS: usize = 4000;
/// Asymmetry (relative to the largest entry) tolerated before a matrix is
/// refused by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Per-pair eigen-residual bound, relative to the spectral norm.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

const PANEL_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    domain: SlabDomain,
    symmetric: bool,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>, domain: SlabDomain) -> Result<Self> {
        let n = domain.n_cells();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Length {
                what: "operator rows/cols",
                expected: n,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("operator has non-finite entries".into()));
        }
        let symmetric = asymmetry(&matrix) == 0.0;
        Ok(Self {
            matrix,
            domain,
            symmetric,
        })
    }

    /// From row-major entries; every row must have `n` entries.
    pub fn from_rows(rows: &[Vec<f64>], domain: SlabDomain) -> Result<Self> {
        let n = domain.n_cells();
        if rows.len() != n {
            return Err(Error::Length {
                what: "operator rows",
                expected: n,
                actual: rows.len(),
            });
        }
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Length {
                what: "operator row",
                expected: n,
                actual: row.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]), domain)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn domain(&self) -> &SlabDomain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn apply(&self, v: &[f64]) -> Result<GridFunction> {
        self.domain.check_len("operand", v.len())?;
        let out = &self.matrix * DVector::from_column_slice(v);
        Ok(GridFunction::new(out.as_slice().to_vec()))
    }

    /// `diag(left) · A · diag(right)`; symmetry is kept when `left == right`.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> Result<Self> {
        self.domain.check_len("left scaling", left.len())?;
        self.domain.check_len("right scaling", right.len())?;
        let n = self.n();
        let matrix = DMatrix::from_fn(n, n, |i, j| left[i] * self.matrix[(i, j)] * right[j]);
        Ok(Self {
            matrix,
            domain: self.domain.clone(),
            symmetric: self.symmetric && left == right,
        })
    }

    /// The similar matrix `H^{1/2} A H^{-1/2}`, `H = diag(h_i)`, made exactly
    /// symmetric. Fails if it is not symmetric to [`SYMMETRY_TOL`].
    pub fn h_symmetric(&self) -> Result<Self> {
        let h = self.domain.widths();
        let n = self.n();
        let m = DMatrix::from_fn(n, n, |i, j| (h[i] / h[j]).sqrt() * self.matrix[(i, j)]);
        let matrix = symmetrized(m)?;
        Ok(Self {
            matrix,
            domain: self.domain.clone(),
            symmetric: true,
        })
    }

    /// Row-major CSV with a `c0,c1,…` header.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new((0..self.n()).map(|j| format!("c{j}")));
        for row in self.matrix.row_iter() {
            t.push(row.iter().map(|v| fmt17(*v)).collect());
        }
        t
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Averages `m` with its transpose if the two agree to [`SYMMETRY_TOL`]
/// relative to the largest entry.
pub(crate) fn symmetrized(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax();
    let asym = asymmetry(&m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric {
            asymmetry: asym,
            tolerance: SYMMETRY_TOL * scale,
        });
    }
    if asym == 0.0 {
        return Ok(m);
    }
    let t = m.transpose();
    Ok((m + t) * 0.5)
}

/// Result of [`adaptive_gauss`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss–Legendre on `[a, b]`: the panel with the largest
/// error estimate is bisected until the summed estimate is below
/// `rtol · |value|`. Error estimate per panel is `|G(panel) - G(halves)|`.
pub(crate) fn adaptive_gauss(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rtol: f64,
    max_panels: usize,
) -> std::result::Result<Integral, Integral> {
    let (nodes, weights) = legendre_rule(PANEL_NODES);
    let rule = |l: f64, r: f64| {
        let (c, hw) = (0.5 * (l + r), 0.5 * (r - l));
        hw * nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * f(c + hw * x))
            .sum::<f64>()
    };
    // (left, right, refined value, error estimate)
    let estimate = |l: f64, r: f64| {
        let m = 0.5 * (l + r);
        let coarse = rule(l, r);
        let fine = rule(l, m) + rule(m, r);
        (l, r, fine, (fine - coarse).abs())
    };
    let mut panels = vec![estimate(a, b)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        let result = Integral {
            value,
            error,
            panels: panels.len(),
        };
        if error <= rtol * value.abs() || error <= f64::MIN_POSITIVE {
            return Ok(result);
        }
        if panels.len() >= max_panels {
            return Err(result);
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .expect("nonempty");
        let (l, r, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (l + r);
        if !(m > l && m < r) {
            // interval exhausted at working precision
            return Err(result);
        }
        panels.push(estimate(l, m));
        panels.push(estimate(m, r));
    }
}

/// `½ ∫_{cell i} ∫_{cell j} E1(τ(x, y)) dy dx` for `i <= j`.
///
/// The inner integral over cell `j` is exact (`E1` integrates to `-E2` along
/// a linear optical path); the outer one is adaptive Gauss–Legendre, which
/// refines toward the `t ln t` endpoint behaviour of `E2` on touching cells.
fn galerkin_entry(i: usize, j: usize, widths: &[f64], sigma: &[f64], depth: &[f64]) -> Result<f64> {
    debug_assert!(i <= j);
    let (hi, si) = (widths[i], sigma[i]);
    let outcome = if i == j {
        // ½ ∫∫ E1(σ|x-y|) = ∫_0^h (1 - E2(σu)) / σ du, with
        // 1 - E2(t) = (1 - e^{-t}) + t E1(t) to avoid cancellation
        let f = |u: f64| {
            let t = si * u;
            if t == 0.0 {
                0.0
            } else {
                (-(-t).exp_m1() + t * expint(1, t)) / si
            }
        };
        adaptive_gauss(f, 0.0, hi, ASSEMBLY_RTOL, MAX_PANELS)
    } else {
        // u: distance from x to the right face of cell i
        let gap = depth[j] - depth[i + 1];
        let (hj, sj) = (widths[j], sigma[j]);
        let f = |u: f64| {
            let near = gap + si * u;
            0.5 * (expint_at(2, near) - expint(2, near + sj * hj)) / sj
        };
        adaptive_gauss(f, 0.0, hi, ASSEMBLY_RTOL, MAX_PANELS)
    };
    outcome
        .map(|r| r.value)
        .map_err(|r| Error::KernelQuadrature {
            row: i,
            col: j,
            panels: r.panels,
            estimate: r.value,
            error: r.error,
        })
}

/// Assembles the dense matrix of `K` for total cross-section `sigma`.
pub fn assemble_k(domain: &SlabDomain, sigma: &[f64]) -> Result<DenseOperator> {
    check_sigma(domain, sigma)?;
    let widths = domain.widths();
    let n = widths.len();
    let mut depth = Vec::with_capacity(n + 1);
    depth.push(0.0);
    for (h, s) in widths.iter().zip(sigma) {
        depth.push(depth[depth.len() - 1] + h * s);
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| galerkin_entry(i, j, &widths, sigma, &depth))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // Gram matrix is symmetric; row-scale by 1/h_i to act on cell averages
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let g = if i <= j {
            upper[i][j - i]
        } else {
            upper[j][i - j]
        };
        g / widths[i]
    });
    let mut op = DenseOperator::new(matrix, domain.clone())?;
    if domain.is_uniform() {
        // widths differ in the last bit on "uniform" grids; average it out
        op.matrix = symmetrized(op.matrix)?;
        op.symmetric = true;
    }
    Ok(op)
}

/// `L = σ^{1/2} K σ^{1/2}` entrywise.
pub fn symmetrize(k: &DenseOperator, sigma: &[f64]) -> Result<DenseOperator> {
    check_sigma(k.domain(), sigma)?;
    let root: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    k.scaled(&root, &root)
}

/// Eigenvalues and orthonormal eigenvectors (columns) of a symmetric
/// operator, ascending.
pub fn sym_eigen(a: &DenseOperator) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = if a.is_symmetric() {
        a.matrix().clone()
    } else {
        symmetrized(a.matrix().clone())?
    };
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Eigen(format!("no convergence for n = {n}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    let norm = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for (c, &lambda) in values.iter().enumerate() {
        let v = vectors.column(c);
        let residual = (&m * v - v * lambda).norm();
        if residual > EIGEN_RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Eigen(format!(
                "eigenpair {c} residual {residual:e} exceeds {EIGEN_RESIDUAL_TOL:e}·‖A‖"
            )));
        }
    }
    Ok((values, vectors))
}

/// Full real spectrum of a symmetric operator, ascending.
pub fn sym_eigenvalues(a: &DenseOperator) -> Result<Vec<f64>> {
    sym_eigen(a).map(|(values, _)| values)
}

/// Operator norm of `K·diag(sigstar)` on cell functions with the norm
/// `(Σ h_i σ_i v_i²)^{1/2}`, for a pre-assembled `K`.
pub fn weighted_opnorm(k: &DenseOperator, sigma: &[f64], sigstar: &[f64]) -> Result<f64> {
    check_sigma(k.domain(), sigma)?;
    check_sigma(k.domain(), sigstar)?;
    let h = k.domain().widths();
    let w: Vec<f64> = h.iter().zip(sigma).map(|(h, s)| (h * s).sqrt()).collect();
    let n = k.n();
    let b = DMatrix::from_fn(n, n, |i, j| w[i] * k.get(i, j) * sigstar[j] / w[j]);
    let sv = b
        .try_svd(false, false, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Eigen("SVD did not converge".into()))?
        .singular_values;
    Ok(sv.max())
}

/// `‖K σ*‖` in the `σ`-weighted norm, with `K` assembled from `xs`.
pub fn weighted_opnorm_ksigma(xs: &CrossSections, sigstar: &[f64]) -> Result<f64> {
    let sigma = xs.sigma();
    let k = assemble_k(xs.domain(), &sigma)?;
    weighted_opnorm(&k, &sigma, sigstar)
}
