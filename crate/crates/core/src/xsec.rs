//! Slab partitions, piecewise-constant cross-section fields and their random
//! realizations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative spread of cell widths below which a grid counts as uniform.
const UNIFORM_WIDTH_RTOL: f64 = 1e-12;

/// A 1D interval `[x_0, x_n]` split into `n` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SlabDomain {
    breakpoints: Vec<f64>,
}

impl SlabDomain {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least two breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if let Some(bad) = breakpoints.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("breakpoint {bad} is not finite")));
        }
        for (i, pair) in breakpoints.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::Domain(format!(
                    "breakpoints must be strictly increasing (cell {i}: {} .. {})",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { breakpoints })
    }

    /// `n` equal cells on `[0, length]`.
    pub fn uniform(length: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("cell count must be at least 1".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!(
                "length must be positive, got {length}"
            )));
        }
        let h = length / n as f64;
        let mut breakpoints: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        breakpoints.push(length);
        Self::new(breakpoints)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn n_cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn left(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn right(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn diameter(&self) -> f64 {
        self.right() - self.left()
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.breakpoints[cell + 1] - self.breakpoints[cell]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        let widths = self.widths();
        let (lo, hi) = widths
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &h| {
                (lo.min(h), hi.max(h))
            });
        hi - lo <= UNIFORM_WIDTH_RTOL * hi
    }

    /// Index of the cell containing `x`; interface points belong to the cell
    /// on their right except at the right boundary.
    pub fn locate(&self, x: f64) -> Result<usize> {
        if !(x >= self.left() && x <= self.right()) {
            return Err(Error::Argument(format!(
                "point {x} outside domain [{}, {}]",
                self.left(),
                self.right()
            )));
        }
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        Ok(idx.saturating_sub(1).min(self.n_cells() - 1))
    }

    pub(crate) fn check_len(&self, what: &'static str, actual: usize) -> Result<()> {
        if actual != self.n_cells() {
            return Err(Error::Length {
                what,
                expected: self.n_cells(),
                actual,
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for SlabDomain {
    type Error = Error;

    fn try_from(breakpoints: Vec<f64>) -> Result<Self> {
        Self::new(breakpoints)
    }
}

impl From<SlabDomain> for Vec<f64> {
    fn from(domain: SlabDomain) -> Self {
        domain.breakpoints
    }
}

/// Per-cell scattering, absorption and (optionally) fission cross-sections.
///
/// The total cross-section is always derived as the sum of its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CrossSectionsRecord", into = "CrossSectionsRecord")]
pub struct CrossSections {
    domain: SlabDomain,
    sigma_s: Vec<f64>,
    sigma_a: Vec<f64>,
    sigma_f: Option<Vec<f64>>,
}

/// Wire shape of [`CrossSections`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossSectionsRecord {
    pub breakpoints: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub sigma_f: Option<Vec<f64>>,
}

fn check_positive(domain: &SlabDomain, name: &'static str, values: &[f64]) -> Result<()> {
    domain.check_len(name, values.len())?;
    if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::CrossSections(format!(
            "{name}[{i}] = {} must be finite and strictly positive",
            values[i]
        )));
    }
    Ok(())
}

impl CrossSections {
    pub fn new(
        domain: SlabDomain,
        sigma_s: Vec<f64>,
        sigma_a: Vec<f64>,
        sigma_f: Option<Vec<f64>>,
    ) -> Result<Self> {
        check_positive(&domain, "sigma_s", &sigma_s)?;
        check_positive(&domain, "sigma_a", &sigma_a)?;
        if let Some(f) = &sigma_f {
            check_positive(&domain, "sigma_f", f)?;
        }
        Ok(Self {
            domain,
            sigma_s,
            sigma_a,
            sigma_f,
        })
    }

    /// Spatially constant coefficients on `domain`.
    pub fn constant(
        domain: SlabDomain,
        sigma_s: f64,
        sigma_a: f64,
        sigma_f: Option<f64>,
    ) -> Result<Self> {
        let n = domain.n_cells();
        Self::new(
            domain,
            vec![sigma_s; n],
            vec![sigma_a; n],
            sigma_f.map(|f| vec![f; n]),
        )
    }

    pub fn domain(&self) -> &SlabDomain {
        &self.domain
    }

    pub fn sigma_s(&self) -> &[f64] {
        &self.sigma_s
    }

    pub fn sigma_a(&self) -> &[f64] {
        &self.sigma_a
    }

    pub fn sigma_f(&self) -> Option<&[f64]> {
        self.sigma_f.as_deref()
    }

    /// Total cross-section `σ = σ_S + σ_A (+ σ_F)`.
    pub fn sigma(&self) -> Vec<f64> {
        match &self.sigma_f {
            Some(f) => self
                .sigma_s
                .iter()
                .zip(f)
                .zip(&self.sigma_a)
                .map(|((s, f), a)| s + f + a)
                .collect(),
            None => self
                .sigma_s
                .iter()
                .zip(&self.sigma_a)
                .map(|(s, a)| s + a)
                .collect(),
        }
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// True when every coefficient is the same in all cells.
    pub fn is_constant(&self) -> bool {
        let same = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        same(&self.sigma_s) && same(&self.sigma_a) && self.sigma_f.as_deref().is_none_or(same)
    }

    pub fn n_cells(&self) -> usize {
        self.domain.n_cells()
    }
}

impl TryFrom<CrossSectionsRecord> for CrossSections {
    type Error = Error;

    fn try_from(r: CrossSectionsRecord) -> Result<Self> {
        Self::new(
            SlabDomain::new(r.breakpoints)?,
            r.sigma_s,
            r.sigma_a,
            r.sigma_f,
        )
    }
}

impl From<CrossSections> for CrossSectionsRecord {
    fn from(xs: CrossSections) -> Self {
        Self {
            breakpoints: xs.domain.breakpoints,
            sigma_s: xs.sigma_s,
            sigma_a: xs.sigma_a,
            sigma_f: xs.sigma_f,
        }
    }
}

/// `max_i σ_S[i] / σ[i]`, the scattering ratio `c`.
pub fn scattering_ratio(xs: &CrossSections) -> f64 {
    xs.sigma_s
        .iter()
        .zip(xs.sigma())
        .map(|(s, t)| s / t)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Uniform,
    LogUniform,
}

/// Marginal law shared by every cell of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientLaw {
    #[serde(rename = "dist")]
    pub kind: LawKind,
    pub lo: f64,
    pub hi: f64,
}

impl CoefficientLaw {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            kind: LawKind::Uniform,
            lo,
            hi,
        }
    }

    pub fn log_uniform(lo: f64, hi: f64) -> Self {
        Self {
            kind: LawKind::LogUniform,
            lo,
            hi,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::RandomField(format!(
                "{name}: lower bound {} must be finite and strictly positive",
                self.lo
            )));
        }
        if self.hi < self.lo {
            return Err(Error::RandomField(format!(
                "{name}: upper bound {} is below lower bound {}",
                self.hi, self.lo
            )));
        }
        Ok(())
    }

    fn sampler(&self) -> Uniform<f64> {
        let (lo, hi) = match self.kind {
            LawKind::Uniform => (self.lo, self.hi),
            LawKind::LogUniform => (self.lo.ln(), self.hi.ln()),
        };
        // bounds were validated as finite and ordered
        Uniform::new_inclusive(lo, hi).expect("validated bounds")
    }

    fn map(&self, draw: f64) -> f64 {
        match self.kind {
            LawKind::Uniform => draw,
            LawKind::LogUniform => draw.exp().clamp(self.lo, self.hi),
        }
    }
}

/// Independent per-cell random cross-sections on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    pub domain: SlabDomain,
    pub sigma_s: CoefficientLaw,
    pub sigma_a: CoefficientLaw,
    #[serde(default)]
    pub sigma_f: Option<CoefficientLaw>,
    pub seed: u64,
}

impl RandomFieldSpec {
    pub fn validate(&self) -> Result<()> {
        self.sigma_s.validate("sigma_s")?;
        self.sigma_a.validate("sigma_a")?;
        if let Some(f) = &self.sigma_f {
            f.validate("sigma_f")?;
        }
        Ok(())
    }
}

/// Draws realization `sample_index` of `spec`.
///
/// Each index gets its own ChaCha stream under the base seed, so a sample
/// depends only on `(seed, sample_index)` and not on which samples were
/// drawn before it.
pub fn sample_xsec(spec: &RandomFieldSpec, sample_index: u64) -> Result<CrossSections> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(sample_index);
    let n = spec.domain.n_cells();
    let mut draw = |law: &CoefficientLaw| -> Vec<f64> {
        let sampler = law.sampler();
        (0..n).map(|_| law.map(sampler.sample(&mut rng))).collect()
    };
    let sigma_s = draw(&spec.sigma_s);
    let sigma_a = draw(&spec.sigma_a);
    let sigma_f = spec.sigma_f.as_ref().map(&mut draw);
    CrossSections::new(spec.domain.clone(), sigma_s, sigma_a, sigma_f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> SlabDomain {
        SlabDomain::uniform(1.0, n).unwrap()
    }

    #[test]
    fn domain_rejects_bad_breakpoints() {
        assert!(SlabDomain::new(vec![0.0]).is_err());
        assert!(SlabDomain::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(SlabDomain::new(vec![0.0, f64::NAN]).is_err());
        assert!(SlabDomain::uniform(1.0, 0).is_err());
        assert!(SlabDomain::uniform(-1.0, 3).is_err());
    }

    #[test]
    fn uniform_domain_geometry() {
        let d = SlabDomain::uniform(2.0, 4).unwrap();
        assert_eq!(d.n_cells(), 4);
        assert_eq!(d.diameter(), 2.0);
        assert!(d.is_uniform());
        assert_eq!(d.midpoints(), vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(d.locate(0.0).unwrap(), 0);
        assert_eq!(d.locate(0.5).unwrap(), 1);
        assert_eq!(d.locate(2.0).unwrap(), 3);
        assert!(d.locate(2.5).is_err());
        let nu = SlabDomain::new(vec![0.0, 0.1, 1.0]).unwrap();
        assert!(!nu.is_uniform());
    }

    #[test]
    fn scattering_ratio_examples() {
        let xs = CrossSections::new(unit(1), vec![0.5], vec![0.5], None).unwrap();
        assert_eq!(scattering_ratio(&xs), 0.5);
        let xs = CrossSections::new(unit(2), vec![1.0, 2.0], vec![1.0, 2.0], None).unwrap();
        assert_eq!(scattering_ratio(&xs), 0.5);
        let xs = CrossSections::new(unit(2), vec![0.9, 0.1], vec![0.1, 0.9], None).unwrap();
        assert!((scattering_ratio(&xs) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn total_includes_fission_when_present() {
        let xs = CrossSections::constant(unit(3), 0.5, 0.2, Some(0.3)).unwrap();
        assert_eq!(xs.sigma(), vec![1.0; 3]);
        let xs = CrossSections::constant(unit(3), 0.5, 0.2, None).unwrap();
        assert_eq!(xs.sigma(), vec![0.7; 3]);
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        let err = CrossSections::new(unit(2), vec![1.0, 0.0], vec![1.0, 1.0], None).unwrap_err();
        assert!(err.to_string().contains("sigma_s[1]"));
        assert!(CrossSections::new(unit(2), vec![1.0; 2], vec![1.0, -1.0], None).is_err());
        assert!(
            CrossSections::new(unit(2), vec![1.0; 2], vec![1.0; 2], Some(vec![0.0, 1.0])).is_err()
        );
        assert!(CrossSections::new(unit(2), vec![1.0; 3], vec![1.0; 2], None).is_err());
    }

    #[test]
    fn json_shape() {
        let xs = CrossSections::constant(unit(2), 0.5, 0.25, None).unwrap();
        let v = serde_json::to_value(&xs).unwrap();
        assert_eq!(v["breakpoints"], serde_json::json!([0.0, 0.5, 1.0]));
        assert!(v["sigma_f"].is_null());
        let back: CrossSections = serde_json::from_value(v).unwrap();
        assert_eq!(back, xs);
        let bad = serde_json::json!({"breakpoints":[0.0,1.0],"sigma_s":[0.0],"sigma_a":[1.0],"sigma_f":null});
        assert!(serde_json::from_value::<CrossSections>(bad).is_err());
    }

    fn spec(law: CoefficientLaw, n: usize) -> RandomFieldSpec {
        RandomFieldSpec {
            domain: unit(n),
            sigma_s: law,
            sigma_a: law,
            sigma_f: None,
            seed: 1234,
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = spec(CoefficientLaw::uniform(0.5, 1.5), 8);
        assert_eq!(sample_xsec(&s, 7).unwrap(), sample_xsec(&s, 7).unwrap());
        assert_ne!(sample_xsec(&s, 7).unwrap(), sample_xsec(&s, 8).unwrap());
    }

    #[test]
    fn degenerate_law_gives_constant_field() {
        let s = spec(CoefficientLaw::uniform(1.0, 1.0), 5);
        let xs = sample_xsec(&s, 3).unwrap();
        assert_eq!(xs.sigma_s(), &[1.0; 5]);
        assert_eq!(xs.sigma_a(), &[1.0; 5]);
        let s = spec(CoefficientLaw::log_uniform(1.0, 1.0), 5);
        assert_eq!(sample_xsec(&s, 0).unwrap().sigma_s(), &[1.0; 5]);
    }

    #[test]
    fn uniform_marginal_mean() {
        // sd of U(0.5, 1.5) is 1/sqrt(12); standard error over 1e4 draws is that / 100
        let s = spec(CoefficientLaw::uniform(0.5, 1.5), 1);
        let n = 10_000;
        let mean = (0..n)
            .map(|i| sample_xsec(&s, i).unwrap().sigma_s()[0])
            .sum::<f64>()
            / n as f64;
        let se = 1.0 / (12f64.sqrt() * 100.0);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn log_uniform_stays_in_bounds() {
        let s = spec(CoefficientLaw::log_uniform(0.1, 10.0), 16);
        for i in 0..50 {
            let xs = sample_xsec(&s, i).unwrap();
            assert!(xs.sigma_s().iter().all(|v| (0.1..=10.0).contains(v)));
            assert!(scattering_ratio(&xs) < 1.0);
        }
    }

    #[test]
    fn rejects_nonpositive_bounds() {
        assert!(sample_xsec(&spec(CoefficientLaw::uniform(0.0, 1.0), 2), 0).is_err());
        assert!(sample_xsec(&spec(CoefficientLaw::uniform(2.0, 1.0), 2), 0).is_err());
        assert!(sample_xsec(&spec(CoefficientLaw::log_uniform(-1.0, 1.0), 2), 0).is_err());
    }
}
