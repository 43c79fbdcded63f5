//! Fractional-calculus primitives on a uniform grid over `[0, T]`.
//!
//! Integrals against the weakly singular kernel `(t - s)^(q-1)` are computed by
//! product integration: the smooth factor is replaced by its piecewise-linear
//! interpolant and the kernel moments are integrated in closed form on every
//! panel. On a uniform grid the resulting weights depend only on the distance
//! between target and source node, so one table of `N` weights serves every
//! target node.

use crate::error::{Error, Result};

/// Lanczos coefficients for `g = 7`, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("gamma requires a finite x > 0, got {x}")));
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // Lanczos loses accuracy close to the pole; shift up by one.
        return gamma_positive(x + 1.0) / x;
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
}

pub(crate) fn check_order(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("p outside (1,2]: {p}")))
    }
}

/// Uniform grid `t_j = j T / (N - 1)`, `j = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    nodes: usize,
}

impl Grid {
    pub fn new(horizon: f64, nodes: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Domain(format!("grid horizon must be > 0, got {horizon}")));
        }
        if nodes < 3 {
            return Err(Error::Size(format!("grid needs at least 3 nodes, got {nodes}")));
        }
        Ok(Self { horizon, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.nodes - 1) as f64
    }

    /// Node `j`. The last node is exactly `T`.
    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.nodes {
            self.horizon
        } else {
            self.horizon * j as f64 / (self.nodes - 1) as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |j| self.node(j))
    }
}

/// Vector-valued function sampled on a [`Grid`], stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    /// `values[c * N + j]` is component `c` at node `j`.
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != dim * grid.len() {
            return Err(Error::Size(format!(
                "expected {} values for {dim} component(s) on {} nodes, got {}",
                dim * grid.len(),
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (c, j) = (pos / grid.len(), pos % grid.len());
            return Err(Error::Domain(format!(
                "non-finite grid value in component {} at t = {}",
                c + 1,
                grid.node(j)
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// Samples `f(t, out)` at every node.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let n = grid.len();
        let mut values = vec![0.0; dim * n];
        let mut buf = vec![0.0; dim];
        for j in 0..n {
            f(grid.node(j), &mut buf);
            for c in 0..dim {
                values[c * n + j] = buf[c];
            }
        }
        Self::new(grid, dim, values)
    }

    pub fn from_components(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        let dim = components.len();
        let values = components.into_iter().flatten().collect();
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.grid.len())
    }

    pub fn value(&self, c: usize, j: usize) -> f64 {
        self.values[c * self.grid.len() + j]
    }

    pub(crate) fn set(&mut self, c: usize, j: usize, v: f64) {
        debug_assert!(v.is_finite());
        let n = self.grid.len();
        self.values[c * n + j] = v;
    }

    pub fn at_node(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|c| self.value(c, j)).collect()
    }

    /// Piecewise-linear evaluation; `t` is clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.grid.len();
        let x = (t / self.grid.step()).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n - 2);
        let w = x - k as f64;
        (0..self.dim)
            .map(|c| (1.0 - w) * self.value(c, k) + w * self.value(c, k + 1))
            .collect()
    }

    /// Componentwise `max_j |self - other|`.
    pub fn sup_diff(&self, other: &GridFunction) -> Vec<f64> {
        self.components()
            .zip(other.components())
            .map(|(a, b)| a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
            .collect()
    }

    /// Componentwise `max_j |self|`.
    pub fn sup_abs(&self) -> Vec<f64> {
        self.components()
            .map(|a| a.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            .collect()
    }
}

/// Product-trapezoid weights for `(1/Γ(q)) ∫ (c - s)^(q-1) g(s) ds` on a
/// uniform grid.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    order: f64,
    nodes: usize,
    scale: f64,
    // index d = distance (in steps) from the kernel singularity to the
    // panel's far node; entry 0 unused.
    far: Vec<f64>,
    near: Vec<f64>,
}

impl ProductWeights {
    /// Weights for any order `q > 0`.
    pub fn new(order: f64, grid: &Grid) -> Result<Self> {
        if !order.is_finite() || order <= 0.0 {
            return Err(Error::Domain(format!("integration order must be > 0, got {order}")));
        }
        let n = grid.len();
        let mut far = vec![0.0; n];
        let mut near = vec![0.0; n];
        for d in 1..n {
            let (f, nr) = panel_moments(order, d);
            far[d] = f;
            near[d] = nr;
        }
        let scale = grid.step().powf(order) / gamma_positive(order);
        Ok(Self {
            order,
            nodes: n,
            scale,
            far,
            near,
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// `(1/Γ(q)) ∫_0^{t_j} (t_j - s)^(q-1) g(s) ds`.
    pub fn integral_at(&self, g: &[f64], j: usize) -> f64 {
        debug_assert_eq!(g.len(), self.nodes);
        let mut acc = 0.0;
        for k in 0..j {
            let d = j - k;
            acc += self.far[d] * g[k] + self.near[d] * g[k + 1];
        }
        acc * self.scale
    }

    pub fn integral_all(&self, g: &[f64]) -> Vec<f64> {
        (0..self.nodes).map(|j| self.integral_at(g, j)).collect()
    }

    /// `(1/Γ(q)) ∫_{t_j}^{T} (T - s)^(q-1) g(s) ds` for every node `j`.
    pub fn tail_all(&self, g: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; n];
        let mut acc = 0.0;
        for j in (0..n - 1).rev() {
            let d = n - 1 - j;
            acc += self.far[d] * g[j] + self.near[d] * g[j + 1];
            out[j] = acc * self.scale;
        }
        out
    }
}

/// Moments of `x^(q-1)` against the two hat functions on the unit panel
/// `[d-1, d]`: returns (weight of the node at distance `d`, weight of the
/// node at distance `d-1`).
fn panel_moments(q: f64, d: usize) -> (f64, f64) {
    let b = (d - 1) as f64;
    if b < 16.0 {
        let a = d as f64;
        let m0 = (a.powf(q) - b.powf(q)) / q;
        let m1 = (a.powf(q + 1.0) - b.powf(q + 1.0)) / (q + 1.0);
        (m1 - b * m0, a * m0 - m1)
    } else {
        // (b + y)^(q-1) = b^(q-1) Σ C(q-1, k) (y/b)^k, |y/b| <= 1/16
        let mut coeff = 1.0;
        let mut inv_pow = 1.0;
        let (mut far, mut near) = (0.0, 0.0);
        for k in 0..40 {
            let kf = k as f64;
            let term = coeff * inv_pow;
            far += term / (kf + 2.0);
            near += term / ((kf + 1.0) * (kf + 2.0));
            if term.abs() < 1e-18 {
                break;
            }
            coeff *= (q - 1.0 - kf) / (kf + 1.0);
            inv_pow /= b;
        }
        let lead = b.powf(q - 1.0);
        (far * lead, near * lead)
    }
}

/// Riemann-Liouville integral `I^p g` at node `t_index`, one entry per
/// component.
pub fn frac_integral(g: &GridFunction, p: f64, t_index: usize) -> Result<Vec<f64>> {
    check_order(p)?;
    if t_index >= g.grid().len() {
        return Err(Error::Size(format!(
            "node index {t_index} outside grid of {} nodes",
            g.grid().len()
        )));
    }
    let w = ProductWeights::new(p, g.grid())?;
    Ok(g.components().map(|c| w.integral_at(c, t_index)).collect())
}

/// `I^p g` at every node.
pub fn frac_integral_all(g: &GridFunction, p: f64) -> Result<GridFunction> {
    check_order(p)?;
    let w = ProductWeights::new(p, g.grid())?;
    let comps = g.components().map(|c| w.integral_all(c)).collect();
    GridFunction::from_components(*g.grid(), comps)
}

/// `(1/Γ(p)) [∫_0^t (t-s)^(p-1) g ds - (t/T)^p ∫_0^T (T-s)^(p-1) g ds]` at
/// every node, for one component. Zero at both end nodes.
pub fn corrected_integral(weights: &ProductWeights, grid: &Grid, g: &[f64]) -> Vec<f64> {
    let p = weights.order();
    let mut out = weights.integral_all(g);
    let n = grid.len();
    let total = out[n - 1];
    let horizon = grid.horizon();
    for (j, v) in out.iter_mut().enumerate() {
        *v -= (grid.node(j) / horizon).powf(p) * total;
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
    out
}

/// Numerical Caputo derivative of order `p` in `(1, 2]`.
///
/// Uses `ᶜD^p u = I^(2-p) u''` with central second differences, linearly
/// extrapolated at the two end nodes, integrated by the product-trapezoid
/// rule. Solutions of these problems carry a `c t^p` component whose second
/// derivative is singular at `t = 0`; `c` is fitted from the first four nodes
/// against `{1, t, t^p, t^2}`, its derivative `c Γ(p+1)` is added exactly and
/// only the remainder goes through the difference scheme.
pub fn caputo_derivative(u: &GridFunction, p: f64) -> Result<GridFunction> {
    check_order(p)?;
    let grid = *u.grid();
    let n = grid.len();
    if n < 5 {
        return Err(Error::Size(format!("Caputo derivative needs N >= 5 nodes, got {n}")));
    }
    let h = grid.step();
    let tp: Vec<f64> = grid.nodes().map(|t| t.powf(p)).collect();
    let weights = if p < 2.0 {
        Some(ProductWeights::new(2.0 - p, &grid)?)
    } else {
        None
    };
    let gamma_p1 = gamma_positive(p + 1.0);
    let h_p = h.powf(p);

    let mut comps = Vec::with_capacity(u.dim());
    for uc in u.components() {
        let coef = if p < 2.0 {
            singular_coefficient(uc, p) / h_p
        } else {
            0.0
        };
        let v: Vec<f64> = uc.iter().zip(&tp).map(|(x, s)| x - coef * s).collect();
        let mut second = vec![0.0; n];
        for j in 1..n - 1 {
            second[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
        }
        second[0] = 2.0 * second[1] - second[2];
        second[n - 1] = 2.0 * second[n - 2] - second[n - 3];
        let mut d = match &weights {
            Some(w) => w.integral_all(&second),
            None => second,
        };
        for x in d.iter_mut() {
            *x += coef * gamma_p1;
        }
        comps.push(d);
    }
    GridFunction::from_components(grid, comps)
}

/// Coefficient of `τ^p` when `u_j - u_0` at `τ = 1, 2, 3` is fitted by
/// `a τ + c τ^p + d τ^2` (Cramer's rule on the 3x3 system).
fn singular_coefficient(u: &[f64], p: f64) -> f64 {
    let rows: [[f64; 3]; 3] = [1.0f64, 2.0, 3.0].map(|tau| [tau, tau.powf(p), tau * tau]);
    let rhs = [u[1] - u[0], u[2] - u[0], u[3] - u[0]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut replaced = rows;
    for (row, r) in replaced.iter_mut().zip(rhs) {
        row[1] = r;
    }
    det3(replaced) / det3(rows)
}

/// Kernel estimate `α₁(t) = 2 (t-a)^p / Γ(p+1) · ((b-t)/(b-a))^p`.
pub fn alpha1(t: f64, a: f64, b: f64, p: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::Domain(format!("alpha1 needs a < b, got a = {a}, b = {b}")));
    }
    if !(a <= t && t <= b) {
        return Err(Error::Domain(format!("alpha1: t = {t} outside [{a}, {b}]")));
    }
    Ok(alpha1_unchecked(t, a, b, p))
}

pub(crate) fn alpha1_unchecked(t: f64, a: f64, b: f64, p: f64) -> f64 {
    2.0 * (t - a).powf(p) / gamma_positive(p + 1.0) * ((b - t) / (b - a)).powf(p)
}

/// `max_t α₁(t) = (b-a)^p / (2^(2p-1) Γ(p+1))`, attained at the midpoint.
pub fn alpha1_max(a: f64, b: f64, p: f64) -> f64 {
    (b - a).powf(p) / (2f64.powf(2.0 * p - 1.0) * gamma_positive(p + 1.0))
}

/// The sequence `α₁, α₂, …, α_count` on `grid` (`a = 0`, `b = T`), where
/// `α_{m+1}` applies the boundary-corrected kernel operator
///
/// `(1/Γ(p)) [∫_0^t ((t-s)^(p-1) - (t/T)^p (T-s)^(p-1)) α_m ds
///            + (t/T)^p ∫_t^T (T-s)^(p-1) α_m ds]`
///
/// to `α_m` numerically.
pub fn iterated_kernel_estimates(grid: &Grid, p: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    check_order(p)?;
    let horizon = grid.horizon();
    let weights = ProductWeights::new(p, grid)?;
    let ratio: Vec<f64> = grid.nodes().map(|t| (t / horizon).powf(p)).collect();
    let first: Vec<f64> = grid
        .nodes()
        .map(|t| alpha1_unchecked(t, 0.0, horizon, p))
        .collect();
    let mut seq = vec![first];
    while seq.len() < count {
        let prev = seq.last().expect("non-empty");
        let head = weights.integral_all(prev);
        let tail = weights.tail_all(prev);
        let total = head[grid.len() - 1];
        let next = (0..grid.len())
            .map(|j| head[j] - ratio[j] * (total - tail[j]) + ratio[j] * tail[j])
            .collect();
        seq.push(next);
    }
    seq.truncate(count);
    Ok(seq)
}
