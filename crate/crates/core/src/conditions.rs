//! Sufficient conditions of the scheme and the error bounds derived from them.

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fracops::{self, Grid, GridFunction};
use crate::problem::{BetaConvention, Problem};

const DEFAULT_BOUND_COUNT: usize = 25;
const POWER_MAX_ITER: usize = 200;
const POWER_STAGNATION: f64 = 1e-12;

/// Verdicts and constants for one problem.
#[derive(Debug, Clone)]
pub struct ConditionsReport {
    pub order: f64,
    pub horizon: f64,
    pub m: DVector<f64>,
    pub k: DMatrix<f64>,
    /// `T^p / (2^(2p-1) Γ(p+1))`, equal to `β / M` and to `max α₁`.
    pub kernel_constant: f64,
    /// Raw `β = M · kernel_constant`.
    pub beta: DVector<f64>,
    pub q: DMatrix<f64>,
    pub spectral_radius: f64,
    /// Collatz-Wielandt enclosure of `r(Q)`.
    pub spectral_bounds: (f64, f64),
    pub beta_convention: BetaConvention,
    /// `β` actually used in the `D_β` verdict.
    pub beta_used: DVector<f64>,
    /// `2β ≤ hi − lo` componentwise: some ball of radius `β` fits in `D`.
    pub dbeta_nonempty: bool,
    /// `α₁ ± β` lies in `D`.
    pub alpha1_in_dbeta: bool,
    pub dbeta_ok: bool,
    /// `sup |t − T (t/T)^p|` on `[0, T]`, one entry per component.
    pub r: DVector<f64>,
    pub apriori_bounds: Vec<DVector<f64>>,
    inverse: Option<DMatrix<f64>>,
}

/// Evaluates every hypothesis for `prob`.
pub fn check_conditions(prob: &Problem) -> ConditionsReport {
    let n = prob.dim();
    let p = prob.order;
    let kernel_constant = fracops::alpha1_max(0.0, prob.horizon, p);
    let m = prob.bounds.m.clone();
    let k = prob.bounds.k.clone();
    let beta = &m * kernel_constant;
    let q = &k * kernel_constant;
    let (lower, upper) = spectral_radius_bounds(&q);
    let spectral_radius = upper;

    let beta_used = match prob.beta_convention {
        BetaConvention::Raw => beta.clone(),
        BetaConvention::Normalized => DVector::from_element(n, kernel_constant),
    };
    let widths = prob.domain.widths();
    let dbeta_nonempty = (0..n).all(|i| 2.0 * beta_used[i] <= widths[i]);
    let alpha1_in_dbeta = (0..n).all(|i| {
        prob.alpha1[i] - beta_used[i] >= prob.domain.lo[i]
            && prob.alpha1[i] + beta_used[i] <= prob.domain.hi[i]
    });

    let r = DVector::from_element(n, r_constant(prob.horizon, p));
    let inverse = if spectral_radius < 1.0 {
        (DMatrix::identity(n, n) - &q).try_inverse()
    } else {
        None
    };

    let mut report = ConditionsReport {
        order: p,
        horizon: prob.horizon,
        m,
        k,
        kernel_constant,
        beta,
        q,
        spectral_radius,
        spectral_bounds: (lower, upper),
        beta_convention: prob.beta_convention,
        beta_used,
        dbeta_nonempty,
        alpha1_in_dbeta,
        dbeta_ok: dbeta_nonempty,
        r,
        apriori_bounds: Vec::new(),
        inverse,
    };
    report.apriori_bounds = report.apriori_sequence(DEFAULT_BOUND_COUNT);
    report
}

/// `sup_{t∈[0,T]} |t − T (t/T)^p|`, attained at `t = T p^(-1/(p-1))`.
pub fn r_constant(horizon: f64, p: f64) -> f64 {
    let tau = p.powf(-1.0 / (p - 1.0));
    horizon * (tau - tau.powf(p))
}

/// Spectral radius of a nonnegative matrix by shifted power iteration.
pub fn spectral_radius(q: &DMatrix<f64>) -> f64 {
    spectral_radius_bounds(q).1
}

/// Lower and upper Collatz-Wielandt bounds on `r(Q)` after power iteration
/// on `Q + σI`.
pub fn spectral_radius_bounds(q: &DMatrix<f64>) -> (f64, f64) {
    let n = q.nrows();
    let sigma = q.abs().row_sum().max();
    if sigma == 0.0 {
        return (0.0, 0.0);
    }
    let shifted = q + DMatrix::identity(n, n) * sigma;
    let mut x = DVector::from_element(n, 1.0);
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let y = &shifted * &x;
        let ratios = y.component_div(&x);
        let (new_lo, new_hi) = (ratios.min(), ratios.max());
        let stalled = (hi - new_hi).abs() <= POWER_STAGNATION * new_hi
            && (new_lo - lo).abs() <= POWER_STAGNATION * new_hi;
        lo = new_lo;
        hi = new_hi;
        x = &y / y.max();
        if stalled || hi - lo <= POWER_STAGNATION * hi {
            break;
        }
    }
    ((lo - sigma).max(0.0), (hi - sigma).max(0.0))
}

impl ConditionsReport {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// `r(Q) < 1`.
    pub fn contraction_ok(&self) -> bool {
        self.spectral_radius < 1.0
    }

    pub fn all_hold(&self) -> bool {
        self.contraction_ok() && self.dbeta_ok
    }

    /// `β / M`.
    pub fn beta_over_m(&self) -> f64 {
        self.kernel_constant
    }

    fn inverse(&self) -> Result<&DMatrix<f64>> {
        self.inverse.as_ref().ok_or(Error::BoundUndefined {
            spectral_radius: self.spectral_radius,
        })
    }

    fn q_power(&self, m: usize) -> DMatrix<f64> {
        let n = self.dim();
        (0..m).fold(DMatrix::identity(n, n), |acc, _| &self.q * acc)
    }

    /// `Q^m (I − Q)^{-1} M`, the gap between exact and approximate
    /// determining functions.
    pub fn delta_gap_bound(&self, m: usize) -> Result<DVector<f64>> {
        self.delta_gap_bound_for(&self.m, m)
    }

    pub fn delta_gap_bound_for(&self, m_vec: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
        let inv = self.inverse()?;
        Ok(self.q_power(m) * (inv * m_vec))
    }

    /// Uniform a-priori bound on `|u_∞ − u_m|`.
    pub fn apriori_error(&self, m: usize) -> Result<DVector<f64>> {
        self.apriori_error_for(&self.m, m)
    }

    pub fn apriori_error_for(&self, m_vec: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
        Ok(self.delta_gap_bound_for(m_vec, m)? * self.kernel_constant)
    }

    fn apriori_sequence(&self, max_len: usize) -> Vec<DVector<f64>> {
        if !self.contraction_ok() || self.inverse.is_none() {
            return Vec::new();
        }
        let floor = 1e-12 * self.m.amax();
        let mut out = Vec::new();
        for m in 0..max_len {
            let b = self.apriori_error(m).expect("contraction checked");
            let done = b.amax() <= floor;
            out.push(b);
            if done {
                break;
            }
        }
        out
    }

    pub fn lipschitz_constants(&self) -> Result<LipschitzConstants> {
        Ok(LipschitzConstants {
            r: self.r.clone(),
            inverse: self.inverse()?.clone(),
            horizon: self.horizon,
            order: self.order,
        })
    }

    /// `K R + Q R (I − Q)^{-1} + Γ(p+1)/T^(p−1) I`, the slope of the
    /// exclusion test.
    pub fn exclusion_coefficient(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let r = DMatrix::from_diagonal(&self.r);
        let inv = self.inverse()?;
        let slope = fracops::gamma(self.order + 1.0)? / self.horizon.powf(self.order - 1.0);
        Ok(&self.k * &r + &self.q * &r * inv + DMatrix::identity(n, n) * slope)
    }

    /// Pointwise bound on `|u_∞(t, χ*) − u_m(t, χ̃)|` given `|χ* − χ̃| ≤ chi_gap`.
    pub fn combined_error_bound(&self, m: usize, chi_gap: &DVector<f64>) -> Result<CombinedBound> {
        Ok(CombinedBound {
            tube: self.delta_gap_bound(m)?,
            lipschitz: self.lipschitz_constants()?,
            q_power: self.q_power(m),
            chi_gap: chi_gap.clone(),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        let mat = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        json!({
            "p": self.order,
            "T": self.horizon,
            "M": vec(&self.m),
            "K": mat(&self.k),
            "beta_raw": vec(&self.beta),
            "beta_over_M": self.kernel_constant,
            "beta_convention": match self.beta_convention {
                BetaConvention::Raw => "raw",
                BetaConvention::Normalized => "normalized",
            },
            "beta_used": vec(&self.beta_used),
            "Q": mat(&self.q),
            "spectral_radius": self.spectral_radius,
            "spectral_bounds": [self.spectral_bounds.0, self.spectral_bounds.1],
            "contraction_ok": self.contraction_ok(),
            "dbeta_nonempty": self.dbeta_nonempty,
            "alpha1_in_dbeta": self.alpha1_in_dbeta,
            "dbeta_ok": self.dbeta_ok,
            "R": vec(&self.r),
            "apriori_bounds": self.apriori_bounds.iter().map(vec).collect::<Vec<_>>(),
            "all_hold": self.all_hold(),
        })
    }

    /// `quantity,component,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,index,value\n");
        let mut row = |name: &str, idx: String, v: f64| {
            out.push_str(&format!("{name},{idx},{v:.16e}\n"));
        };
        let n = self.dim();
        row("p", String::new(), self.order);
        row("T", String::new(), self.horizon);
        for i in 0..n {
            row("M", (i + 1).to_string(), self.m[i]);
        }
        for i in 0..n {
            for j in 0..n {
                row("K", format!("{}:{}", i + 1, j + 1), self.k[(i, j)]);
            }
        }
        for i in 0..n {
            row("beta_raw", (i + 1).to_string(), self.beta[i]);
        }
        row("beta_over_M", String::new(), self.kernel_constant);
        for i in 0..n {
            row("beta_used", (i + 1).to_string(), self.beta_used[i]);
        }
        for i in 0..n {
            for j in 0..n {
                row("Q", format!("{}:{}", i + 1, j + 1), self.q[(i, j)]);
            }
        }
        row("spectral_radius", String::new(), self.spectral_radius);
        for i in 0..n {
            row("R", (i + 1).to_string(), self.r[i]);
        }
        for (m, b) in self.apriori_bounds.iter().enumerate() {
            for i in 0..n {
                row("apriori_bound", format!("{m}:{}", i + 1), b[i]);
            }
        }
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        row("contraction_ok", String::new(), flag(self.contraction_ok()));
        row("dbeta_nonempty", String::new(), flag(self.dbeta_nonempty));
        row("alpha1_in_dbeta", String::new(), flag(self.alpha1_in_dbeta));
        row("dbeta_ok", String::new(), flag(self.dbeta_ok));
        out
    }

    pub fn human_summary(&self) -> String {
        let fmt_vec = |v: &DVector<f64>| {
            v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
        };
        let verdict = |b: bool| if b { "ok" } else { "FAILED" };
        let mut s = String::new();
        s.push_str(&format!("p = {}, T = {}\n", self.order, self.horizon));
        s.push_str(&format!("M = [{}]\n", fmt_vec(&self.m)));
        s.push_str(&format!("K = {:?}\n", self.k.data.as_vec()));
        s.push_str(&format!("beta (raw) = [{}]\n", fmt_vec(&self.beta)));
        s.push_str(&format!("beta / M = {:.6}\n", self.kernel_constant));
        s.push_str(&format!(
            "D_beta verdict uses the {} beta = [{}]\n",
            match self.beta_convention {
                BetaConvention::Raw => "raw",
                BetaConvention::Normalized => "normalized (beta / M)",
            },
            fmt_vec(&self.beta_used)
        ));
        s.push_str(&format!(
            "D_beta non-empty: {} (alpha1 itself in D_beta: {})\n",
            verdict(self.dbeta_nonempty),
            if self.alpha1_in_dbeta { "yes" } else { "no" }
        ));
        s.push_str(&format!("Q = {:?}\n", self.q.data.as_vec()));
        s.push_str(&format!(
            "r(Q) = {:.6} in [{:.6e}, {:.6e}]: {}\n",
            self.spectral_radius,
            self.spectral_bounds.0,
            self.spectral_bounds.1,
            verdict(self.contraction_ok())
        ));
        s.push_str(&format!("R = [{}]\n", fmt_vec(&self.r)));
        if let Some(b) = self.apriori_bounds.get(2) {
            s.push_str(&format!("a-priori bound at m = 2: [{}]\n", fmt_vec(b)));
        }
        s.push_str(&format!(
            "all conditions: {}\n",
            if self.all_hold() { "hold" } else { "DO NOT hold" }
        ));
        s
    }
}

/// Constants of the Lipschitz estimate of `u_m` with respect to `χ₁`.
#[derive(Debug, Clone)]
pub struct LipschitzConstants {
    pub r: DVector<f64>,
    inverse: DMatrix<f64>,
    horizon: f64,
    order: f64,
}

impl LipschitzConstants {
    /// `R I + α₁(t) R (I − Q)^{-1}`.
    pub fn chi_sensitivity(&self, t: f64) -> Result<DMatrix<f64>> {
        let a1 = fracops::alpha1(t, 0.0, self.horizon, self.order)?;
        let r = DMatrix::from_diagonal(&self.r);
        Ok(&r + &r * &self.inverse * a1)
    }
}

/// `Q^m (I−Q)^{-1} M α₁(t) + (R + R α₁(t) (I−Q)^{-1} + Q^m) |χ* − χ̃|`.
#[derive(Debug, Clone)]
pub struct CombinedBound {
    tube: DVector<f64>,
    lipschitz: LipschitzConstants,
    q_power: DMatrix<f64>,
    chi_gap: DVector<f64>,
}

impl CombinedBound {
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        let a1 = fracops::alpha1(t, 0.0, self.lipschitz.horizon, self.lipschitz.order)?;
        let coeff = self.lipschitz.chi_sensitivity(t)? + &self.q_power;
        Ok(&self.tube * a1 + coeff * &self.chi_gap)
    }

    pub fn on_grid(&self, grid: &Grid) -> Result<GridFunction> {
        let n = self.tube.len();
        let mut values = vec![0.0; n * grid.len()];
        for (j, t) in grid.nodes().enumerate() {
            let b = self.at(t)?;
            for c in 0..n {
                values[c * grid.len() + j] = b[c];
            }
        }
        GridFunction::new(*grid, n, values)
    }
}
