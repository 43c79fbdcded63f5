//! Problem model, config ingestion and estimation of the bounds `M`, `K`.
//!
//! Config files are TOML:
//!
//! ```toml
//! [problem]
//! p = 1.5               # order in (1, 2]
//! T = 1.0               # horizon
//! alpha1 = 1.0          # u(0); scalar or array
//! alpha2 = 2.0          # u(T)
//! N = 401               # grid nodes (optional, default 401)
//! domain_policy = "strict"   # or "record" (optional)
//!
//! [domain]              # box D
//! lo = 1.0
//! hi = 2.0
//!
//! [rhs]
//! expr = "-u1 + omega*t"     # components separated by ';'
//! constants = { omega = 2.0 }
//!
//! [omega_box]           # box Ω for u'(0)
//! lo = -5.0
//! hi = 5.0
//!
//! [bounds]              # optional; missing entries are estimated
//! M = [3.0]
//! K = [1.0]             # row-major n x n
//! beta_convention = "raw"    # or "normalized"
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprlang::{self, Rhs};
use crate::fracops::{self, Grid, ProductWeights};

pub const DEFAULT_NODES: usize = 401;
const INFLATION: f64 = 0.01;

const ACC_GYRE: &str = include_str!("../builtins/acc-gyre.toml");
const ZERO_RHS: &str = include_str!("../builtins/zero-rhs.toml");

/// Built-in problems: (name, description, config source).
pub const BUILTINS: [(&str, &str, &str); 2] = [
    (
        "acc-gyre",
        "fractional gyre equation of the Antarctic Circumpolar Current, p = 3/2",
        ACC_GYRE,
    ),
    ("zero-rhs", "f = 0; the exact solution is a straight line", ZERO_RHS),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainPolicy {
    /// Iterates leaving `D` by more than `1e-9` are an error.
    #[default]
    Strict,
    /// Excursions are logged and counted, the iteration continues.
    Record,
}

/// Which `β` the `D_β` verdict uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaConvention {
    /// `β = M T^p / (2^(2p-1) Γ(p+1))`.
    #[default]
    Raw,
    /// `β / M`, the kernel constant alone.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSource {
    Supplied,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Numbers {
    One(f64),
    Many(Vec<f64>),
}

impl Numbers {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Numbers::One(v) => vec![v],
            Numbers::Many(v) => v,
        }
    }
}

impl From<Vec<f64>> for Numbers {
    fn from(v: Vec<f64>) -> Self {
        Numbers::Many(v)
    }
}

impl From<f64> for Numbers {
    fn from(v: f64) -> Self {
        Numbers::One(v)
    }
}

/// Mirror of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemSection,
    pub domain: BoxSection,
    pub rhs: RhsSection,
    pub omega_box: BoxSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub alpha1: Numbers,
    pub alpha2: Numbers,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default)]
    pub domain_policy: DomainPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lo: Numbers,
    pub hi: Numbers,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsSection {
    pub expr: String,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Numbers>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Numbers>,
    #[serde(default)]
    pub beta_convention: BetaConvention,
}

impl ProblemConfig {
    /// Scalar problem with default grid and no supplied bounds.
    pub fn scalar(
        p: f64,
        horizon: f64,
        alpha: (f64, f64),
        domain: (f64, f64),
        omega: (f64, f64),
        expr: &str,
    ) -> Self {
        Self {
            problem: ProblemSection {
                p,
                horizon,
                alpha1: alpha.0.into(),
                alpha2: alpha.1.into(),
                nodes: None,
                domain_policy: DomainPolicy::Strict,
            },
            domain: BoxSection {
                lo: domain.0.into(),
                hi: domain.1.into(),
            },
            rhs: RhsSection {
                expr: expr.to_string(),
                constants: BTreeMap::new(),
            },
            omega_box: BoxSection {
                lo: omega.0.into(),
                hi: omega.1.into(),
            },
            bounds: BoundsSection::default(),
        }
    }

    pub fn from_toml_str(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| {
            let msg = e.message().to_string();
            match msg.strip_prefix("missing field `") {
                Some(rest) => Error::MissingField(rest.trim_end_matches('`').to_string()),
                None => Error::Config(e.to_string()),
            }
        })
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Invalid(format!(
                "box bounds have mismatched lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("box bounds must be finite".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Clamps `x` into the box.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    /// `per_axis^n` equal sub-boxes, first axis varying slowest.
    pub fn subdivide(&self, per_axis: usize) -> Vec<BoxDomain> {
        let n = self.dim();
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut cell = vec![0; n];
                for c in (0..n).rev() {
                    cell[c] = idx % per_axis;
                    idx /= per_axis;
                }
                let mut lo = Vec::with_capacity(n);
                let mut hi = Vec::with_capacity(n);
                for (c, &i) in cell.iter().enumerate() {
                    let w = (self.hi[c] - self.lo[c]) / per_axis as f64;
                    lo.push(self.lo[c] + w * i as f64);
                    hi.push(if i + 1 == per_axis {
                        self.hi[c]
                    } else {
                        self.lo[c] + w * (i + 1) as f64
                    });
                }
                BoxDomain { lo, hi }
            })
            .collect()
    }
}

/// `M` and `K` as used by the scheme, with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub m: DVector<f64>,
    pub k: DMatrix<f64>,
    pub m_source: BoundSource,
    pub k_source: BoundSource,
    /// Present when at least one of `M`, `K` was estimated.
    pub estimate: Option<BoundEstimate>,
}

/// Sampled suprema before and after the safety inflation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub m_sampled: DVector<f64>,
    pub k_sampled: DMatrix<f64>,
    pub m: DVector<f64>,
    pub k: DMatrix<f64>,
    pub samples: usize,
}

/// Sampling plan for [`estimate_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSampling {
    /// Lattice points per axis (t and every u component), used for n <= 2.
    pub per_axis: usize,
    /// Latin-hypercube points for n > 2.
    pub lhs_points: usize,
    pub seed: u64,
}

impl Default for BoundSampling {
    fn default() -> Self {
        Self {
            per_axis: 200,
            lhs_points: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Overrides the config's `N`.
    pub nodes: Option<usize>,
    pub sampling: BoundSampling,
}

/// A validated boundary value problem.
#[derive(Debug)]
pub struct Problem {
    pub order: f64,
    pub horizon: f64,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub domain: BoxDomain,
    pub rhs: Rhs,
    pub omega: BoxDomain,
    pub grid: Grid,
    pub bounds: Bounds,
    pub domain_policy: DomainPolicy,
    pub beta_convention: BetaConvention,
    weights: OnceLock<ProductWeights>,
}

impl Clone for Problem {
    fn clone(&self) -> Self {
        Self {
            order: self.order,
            horizon: self.horizon,
            alpha1: self.alpha1.clone(),
            alpha2: self.alpha2.clone(),
            domain: self.domain.clone(),
            rhs: self.rhs.clone(),
            omega: self.omega.clone(),
            grid: self.grid,
            bounds: self.bounds.clone(),
            domain_policy: self.domain_policy,
            beta_convention: self.beta_convention,
            weights: self.weights.clone(),
        }
    }
}

/// Reads and validates a config file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem> {
    load_problem_with(path, &LoadOptions::default())
}

pub fn load_problem_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Problem> {
    let source = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    Problem::from_toml_str(&source, opts)
}

impl Problem {
    pub fn from_toml_str(source: &str, opts: &LoadOptions) -> Result<Self> {
        Self::from_config(ProblemConfig::from_toml_str(source)?, opts)
    }

    pub fn builtin(name: &str, opts: &LoadOptions) -> Result<Self> {
        let (_, _, source) = BUILTINS
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown builtin problem `{name}`")))?;
        Self::from_toml_str(source, opts)
    }

    pub fn from_config(cfg: ProblemConfig, opts: &LoadOptions) -> Result<Self> {
        let ProblemConfig {
            problem,
            domain,
            rhs,
            omega_box,
            bounds,
        } = cfg;
        let beta_convention = bounds.beta_convention;

        let p = problem.p;
        if !(p.is_finite() && p > 1.0 && p <= 2.0) {
            return Err(Error::Invalid(format!("p outside (1,2]: {p}")));
        }
        let horizon = problem.horizon;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Invalid(format!("T must be finite and > 0, got {horizon}")));
        }
        let alpha1 = problem.alpha1.into_vec();
        let alpha2 = problem.alpha2.into_vec();
        let n = alpha1.len();
        if n == 0 {
            return Err(Error::Invalid("alpha1 is empty".into()));
        }
        let check_len = |what: &str, v: &[f64]| -> Result<()> {
            if v.len() != n {
                return Err(Error::Invalid(format!(
                    "{what} has {} component(s), alpha1 has {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        check_len("alpha2", &alpha2)?;
        check_len("alpha1", &alpha1)?;

        let (dlo, dhi) = (domain.lo.into_vec(), domain.hi.into_vec());
        check_len("domain.lo", &dlo)?;
        check_len("domain.hi", &dhi)?;
        if dlo.iter().zip(&dhi).any(|(l, h)| !(l < h)) {
            return Err(Error::Invalid("domain needs lo < hi in every component".into()));
        }
        let domain = BoxDomain::new(dlo, dhi)?;
        if !domain.contains(&alpha1) {
            return Err(Error::Invalid(format!("alpha1 = {alpha1:?} outside the domain D")));
        }
        if !domain.contains(&alpha2) {
            return Err(Error::Invalid(format!("alpha2 = {alpha2:?} outside the domain D")));
        }

        let (olo, ohi) = (omega_box.lo.into_vec(), omega_box.hi.into_vec());
        check_len("omega_box.lo", &olo)?;
        check_len("omega_box.hi", &ohi)?;
        if olo.iter().zip(&ohi).any(|(l, h)| !(l < h)) {
            return Err(Error::Invalid("omega_box is empty (needs lo < hi)".into()));
        }
        let omega = BoxDomain::new(olo, ohi)?;

        let nodes = opts.nodes.or(problem.nodes).unwrap_or(DEFAULT_NODES);
        if nodes < 5 {
            return Err(Error::Invalid(format!("N must be at least 5, got {nodes}")));
        }
        let grid = Grid::new(horizon, nodes)?;

        let rhs = exprlang::parse(&rhs.expr, n, &rhs.constants)?;

        let m_given = bounds
            .m
            .map(|m| {
                let m = m.into_vec();
                if m.len() != n || m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Invalid(format!(
                        "M must have {n} finite non-negative entries, got {m:?}"
                    )));
                }
                Ok(DVector::from_vec(m))
            })
            .transpose()?;
        let k_given = bounds
            .k
            .map(|k| {
                let k = k.into_vec();
                if k.len() != n * n || k.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Invalid(format!(
                        "K must have {} finite non-negative entries (row-major), got {k:?}",
                        n * n
                    )));
                }
                Ok(DMatrix::from_row_slice(n, n, &k))
            })
            .transpose()?;

        let estimate = if m_given.is_none() || k_given.is_none() {
            Some(sample_bounds(&rhs, horizon, &domain, &opts.sampling)?)
        } else {
            None
        };
        let bounds = Bounds {
            m_source: if m_given.is_some() {
                BoundSource::Supplied
            } else {
                BoundSource::Estimated
            },
            k_source: if k_given.is_some() {
                BoundSource::Supplied
            } else {
                BoundSource::Estimated
            },
            m: m_given.unwrap_or_else(|| estimate.as_ref().expect("estimated").m.clone()),
            k: k_given.unwrap_or_else(|| estimate.as_ref().expect("estimated").k.clone()),
            estimate,
        };

        Ok(Self {
            order: p,
            horizon,
            alpha1,
            alpha2,
            domain,
            rhs,
            omega,
            grid,
            bounds,
            domain_policy: problem.domain_policy,
            beta_convention,
            weights: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha1.len()
    }

    /// Product-integration weights of order `p` on the problem grid.
    pub fn weights(&self) -> &ProductWeights {
        self.weights.get_or_init(|| {
            ProductWeights::new(self.order, &self.grid).expect("order validated at load")
        })
    }

    /// Same problem on a different grid.
    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        if nodes < 5 {
            return Err(Error::Invalid(format!("N must be at least 5, got {nodes}")));
        }
        let mut out = self.clone();
        out.grid = Grid::new(self.horizon, nodes)?;
        out.weights = OnceLock::new();
        Ok(out)
    }

    pub fn gamma_p1(&self) -> f64 {
        fracops::gamma(self.order + 1.0).expect("p validated")
    }
}

/// Re-estimates `M` and `K` for `prob` regardless of supplied values.
pub fn estimate_bounds(prob: &Problem, sampling: &BoundSampling) -> Result<BoundEstimate> {
    sample_bounds(&prob.rhs, prob.horizon, &prob.domain, sampling)
}

fn sample_bounds(
    rhs: &Rhs,
    horizon: f64,
    domain: &BoxDomain,
    sampling: &BoundSampling,
) -> Result<BoundEstimate> {
    let n = rhs.dim();
    let points = sample_points(horizon, domain, sampling)?;
    let samples = points.len();
    if samples < 1000 {
        return Err(Error::Invalid(format!(
            "bound estimation needs at least 1000 samples, plan gives {samples}"
        )));
    }
    let steps: Vec<f64> = domain.widths().iter().map(|w| 1e-5 * w).collect();

    // per sample: (|f| per component, |df_i/du_j| row-major)
    let (m_sampled, k_flat) = points
        .par_chunks(1024)
        .map(|chunk| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut m = vec![0.0_f64; n];
            let mut k = vec![0.0_f64; n * n];
            let mut fu = vec![0.0; n];
            let mut fp = vec![0.0; n];
            let mut fm = vec![0.0; n];
            let mut shifted = vec![0.0; n];
            for (t, u) in chunk {
                rhs.eval_into(*t, u, &mut fu)?;
                for (mi, v) in m.iter_mut().zip(&fu) {
                    *mi = mi.max(v.abs());
                }
                for j in 0..n {
                    shifted.copy_from_slice(u);
                    let up = (u[j] + steps[j]).min(domain.hi[j]);
                    let dn = (u[j] - steps[j]).max(domain.lo[j]);
                    shifted[j] = up;
                    rhs.eval_into(*t, &shifted, &mut fp)?;
                    shifted[j] = dn;
                    rhs.eval_into(*t, &shifted, &mut fm)?;
                    for i in 0..n {
                        let d = ((fp[i] - fm[i]) / (up - dn)).abs();
                        k[i * n + j] = k[i * n + j].max(d);
                    }
                }
            }
            Ok((m, k))
        })
        .try_reduce(
            || (vec![0.0; n], vec![0.0; n * n]),
            |(ma, ka), (mb, kb)| {
                Ok((
                    ma.iter().zip(&mb).map(|(a, b)| a.max(*b)).collect(),
                    ka.iter().zip(&kb).map(|(a, b)| a.max(*b)).collect(),
                ))
            },
        )?;

    let m_sampled = DVector::from_vec(m_sampled);
    let k_sampled = DMatrix::from_row_slice(n, n, &k_flat);
    Ok(BoundEstimate {
        m: &m_sampled * (1.0 + INFLATION),
        k: &k_sampled * (1.0 + INFLATION),
        m_sampled,
        k_sampled,
        samples,
    })
}

fn sample_points(
    horizon: f64,
    domain: &BoxDomain,
    sampling: &BoundSampling,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = domain.dim();
    let axis = |lo: f64, hi: f64, k: usize, i: usize| {
        if k == 1 {
            0.5 * (lo + hi)
        } else if i + 1 == k {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (k - 1) as f64
        }
    };
    if n <= 2 {
        let k = sampling.per_axis;
        if k == 0 {
            return Err(Error::Invalid("per_axis must be positive".into()));
        }
        let total = k.pow(n as u32 + 1);
        Ok((0..total)
            .map(|mut idx| {
                let mut u = vec![0.0; n];
                for c in (0..n).rev() {
                    u[c] = axis(domain.lo[c], domain.hi[c], k, idx % k);
                    idx /= k;
                }
                (axis(0.0, horizon, k, idx), u)
            })
            .collect())
    } else {
        // Latin hypercube over [0,T] x D
        let count = sampling.lhs_points;
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut bounds = vec![(0.0, horizon)];
        bounds.extend(domain.lo.iter().copied().zip(domain.hi.iter().copied()));
        for (lo, hi) in bounds {
            let mut strata: Vec<usize> = (0..count).collect();
            strata.shuffle(&mut rng);
            columns.push(
                strata
                    .into_iter()
                    .map(|s| lo + (hi - lo) * (s as f64 + rng.random::<f64>()) / count as f64)
                    .collect(),
            );
        }
        Ok((0..count)
            .map(|i| (columns[0][i], (1..=n).map(|c| columns[c][i]).collect()))
            .collect())
    }
}
