//! The transfer operator on piecewise-linear bounded-variation functions.
//!
//! Two weightings share the same branch machinery:
//!
//! - `Invariant`: weights `P^i_N(x) = (x+N-1)/((x+i)(x+i-1))`, the operator of
//!   the map under its invariant measure. Its fixed function is the constant
//!   `1`, and its iterates contract variation by `1/N + K_N` per step.
//! - `Lebesgue`: weights `|u_i'(x)| = N/(x+i)^2`, the transfer operator with
//!   respect to Lebesgue measure. Its fixed function is the invariant density
//!   `1/((x+N-1) log(N/(N-1)))`.
//!
//! Branch sums are truncated at a digit `M` and the remaining mass is attached
//! analytically as `f(1) * tail(x)`, with the substitution error certified by
//! the local variation of `f` near `1`.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};

use crate::cf::{CfParams, DigitSequence};
use crate::error::{CfError, Result};
use crate::measures::MeasureParams;

/// `K_N = 2 / (2N - 1 + 2 sqrt(N(N-1)))`, the variation constant of the
/// invariant-measure operator.
pub fn k_constant(params: CfParams) -> f64 {
    let n = params.n_f64();
    2.0 / (2.0 * n - 1.0 + 2.0 * (n * (n - 1.0)).sqrt())
}

/// The per-step contraction factor `1/N + K_N`.
pub fn contraction_factor(params: CfParams) -> f64 {
    1.0 / params.n_f64() + k_constant(params)
}

/// Inverse branch `u_i(x) = 1 - N/(x+i)` in floats.
pub fn inverse_branch(x: f64, i: u64, params: CfParams) -> f64 {
    1.0 - params.n_f64() / (x + i as f64)
}

/// Transition weight `P^i_N(x) = (x+N-1)/((x+i)(x+i-1))`.
pub fn branch_weight(x: f64, i: u64, params: CfParams) -> f64 {
    let n = params.n_f64();
    let i = i as f64;
    (x + n - 1.0) / ((x + i) * (x + i - 1.0))
}

/// Remaining branch mass `sum_{i > m} P^i_N(x) = (x+N-1)/(x+m)`.
pub fn branch_weight_tail(x: f64, m: u64, params: CfParams) -> f64 {
    (x + params.n_f64() - 1.0) / (x + m as f64)
}

/// Monotonicity regime of one branch weight on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchShape {
    Decreasing,
    /// Interior maximum at `x* = 1 - N + sqrt(N(N-1))`, only for `i = 2N-1`.
    Unimodal,
    Increasing,
}

/// One branch weight `P^i_N` with its closed-form variation and supremum.
#[derive(Debug, Clone, Copy)]
pub struct BranchWeight {
    pub i: u64,
    pub params: CfParams,
}

impl BranchWeight {
    pub fn new(i: u64, params: CfParams) -> Result<Self> {
        if i < params.n() {
            return Err(CfError::InvalidParameter(format!(
                "branch index {i} below N = {}",
                params.n()
            )));
        }
        Ok(BranchWeight { i, params })
    }

    pub fn eval(&self, x: f64) -> f64 {
        branch_weight(x, self.i, self.params)
    }

    pub fn shape(&self) -> BranchShape {
        let n = self.params.n();
        if self.i <= 2 * n - 2 {
            BranchShape::Decreasing
        } else if self.i == 2 * n - 1 {
            BranchShape::Unimodal
        } else {
            BranchShape::Increasing
        }
    }

    /// Location of the interior maximum for the unimodal branch.
    pub fn unimodal_peak(&self) -> f64 {
        let n = self.params.n_f64();
        1.0 - n + (n * (n - 1.0)).sqrt()
    }

    /// Exact total variation on `[0,1]` from the monotonicity regime.
    pub fn variation(&self) -> f64 {
        match self.shape() {
            BranchShape::Decreasing => self.eval(0.0) - self.eval(1.0),
            BranchShape::Increasing => self.eval(1.0) - self.eval(0.0),
            BranchShape::Unimodal => {
                2.0 * self.eval(self.unimodal_peak()) - self.eval(0.0) - self.eval(1.0)
            }
        }
    }

    /// Supremum of the weight on `[0,1]`.
    pub fn sup(&self) -> f64 {
        match self.shape() {
            BranchShape::Decreasing => self.eval(0.0),
            BranchShape::Increasing => self.eval(1.0),
            BranchShape::Unimodal => self.eval(self.unimodal_peak()),
        }
    }
}

/// `sum_{i > m} var P^i_N`, valid once every remaining branch is increasing
/// (`m + 1 >= 2N`): the variations telescope to `N/(m+1) - (N-1)/m`.
pub fn branch_variation_tail(m: u64, params: CfParams) -> Result<f64> {
    let n = params.n();
    if m + 1 < 2 * n {
        return Err(CfError::InvalidParameter(format!(
            "variation tail needs m + 1 >= 2N, got m = {m}, N = {n}"
        )));
    }
    let nf = params.n_f64();
    let mf = m as f64;
    Ok(nf / (mf + 1.0) - (nf - 1.0) / mf)
}

/// A function on `[0,1]` represented by values at strictly increasing
/// breakpoints with piecewise-linear interpolation. Variation and integrals
/// of the interpolant are exact, which keeps the operator inequalities sharp.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() || breakpoints.len() < 2 {
            return Err(CfError::InvalidParameter(
                "grid function needs matching breakpoint/value lists of length >= 2".into(),
            ));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(CfError::InvalidParameter(
                "grid breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CfError::InvalidParameter(
                "grid breakpoints must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CfError::InvalidParameter(
                "grid values must be finite".into(),
            ));
        }
        Ok(GridFunction {
            breakpoints,
            values,
        })
    }

    /// Sample a closure on `points` uniform breakpoints.
    pub fn sample_uniform(points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 {
            return Err(CfError::InvalidParameter(
                "uniform grid needs at least 2 points".into(),
            ));
        }
        let bp: Vec<f64> = (0..points)
            .map(|k| k as f64 / (points - 1) as f64)
            .collect();
        let vals: Vec<f64> = bp.iter().map(|&x| f(x)).collect();
        GridFunction::new(bp, vals)
    }

    pub fn constant(c: f64) -> Self {
        GridFunction {
            breakpoints: vec![0.0, 1.0],
            values: vec![c, c],
        }
    }

    /// The monotone ramp `x`, with unit variation.
    pub fn ramp() -> Self {
        GridFunction {
            breakpoints: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear evaluation; exact at breakpoints.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= 1.0 {
            return *self.values.last().unwrap();
        }
        let hi = self.breakpoints.partition_point(|&b| b <= x);
        // breakpoints[hi-1] <= x < breakpoints[hi]
        let (x0, x1) = (self.breakpoints[hi - 1], self.breakpoints[hi]);
        if x == x0 {
            return self.values[hi - 1];
        }
        let w = (x - x0) / (x1 - x0);
        self.values[hi - 1] + w * (self.values[hi] - self.values[hi - 1])
    }

    /// Exact total variation of the interpolant.
    pub fn variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Exact variation of the interpolant restricted to `[a, b]`.
    pub fn variation_on(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(0.0), b.min(1.0));
        if a >= b {
            return 0.0;
        }
        let mut total = 0.0;
        let mut prev = self.eval(a);
        for (bp, v) in self.breakpoints.iter().zip(&self.values) {
            if *bp > a && *bp < b {
                total += (v - prev).abs();
                prev = *v;
            }
        }
        total + (self.eval(b) - prev).abs()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exact sup distance between two interpolants (attained at a breakpoint
    /// of one of them, since the difference is piecewise linear on the join).
    pub fn sup_diff(&self, other: &GridFunction) -> f64 {
        let mut m = 0.0f64;
        for (&x, &v) in self.breakpoints.iter().zip(&self.values) {
            m = m.max((v - other.eval(x)).abs());
        }
        for (&x, &v) in other.breakpoints.iter().zip(&other.values) {
            m = m.max((v - self.eval(x)).abs());
        }
        m
    }
}

/// Which family of branch weights drives the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `P^i_N`; fixed function is the constant 1.
    #[default]
    Invariant,
    /// `|u_i'| = N/(x+i)^2`; fixed function is the invariant density.
    Lebesgue,
}

/// Options for one operator application.
#[derive(Debug, Clone, Copy)]
pub struct PfoOptions {
    /// Largest explicitly summed digit; `None` picks `max(1000, 50 N)`.
    pub truncation: Option<u64>,
    /// Number of uniform output breakpoints.
    pub output_points: usize,
    /// When set, fail with `TruncationTooCoarse` if the certified sup error
    /// of the tail substitution exceeds this.
    pub tolerance: Option<f64>,
    pub weighting: Weighting,
}

impl Default for PfoOptions {
    fn default() -> Self {
        PfoOptions {
            truncation: None,
            output_points: 1025,
            tolerance: None,
            weighting: Weighting::Invariant,
        }
    }
}

/// Result of one operator application with its certified error budget.
#[derive(Debug, Clone)]
pub struct PfoResult {
    pub grid: GridFunction,
    /// Sup-norm bound on the tail-substitution error, `max_x tail(x) * var_loc`.
    pub sup_cert: f64,
    /// Bound on the variation added by the tail substitution.
    pub var_cert: f64,
    /// Per-cell Lipschitz estimates `|Δg|/Δx` of the output (diagnostic).
    pub lipschitz: Vec<f64>,
    /// The truncation digit actually used.
    pub truncation: u64,
}

pub fn default_truncation(params: CfParams) -> u64 {
    1000u64.max(50 * params.n())
}

/// Truncated trigamma tail `sum_{i >= 1} 1/(z+i-1)^2 = psi_1(z)` by the
/// asymptotic series; accurate to ~1e-13 relative for `z >= 32`.
fn trigamma_asymptotic(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    inv * (1.0 + 0.5 * inv + inv2 * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 / 42.0)))
}

/// Remaining Lebesgue-weight mass `sum_{i > m} N/(x+i)^2 = N psi_1(x+m+1)`.
pub fn lebesgue_weight_tail(x: f64, m: u64, params: CfParams) -> f64 {
    params.n_f64() * trigamma_asymptotic(x + m as f64 + 1.0)
}

/// One application of the operator to a grid function.
///
/// The output is sampled on a uniform grid; branches above the truncation
/// digit are folded into `f(1) * tail(x)` and the substitution error is
/// certified through the variation of `f` on the interval those branches map
/// into.
pub fn pfo_apply(f: &GridFunction, m: &MeasureParams, opts: &PfoOptions) -> Result<PfoResult> {
    let params = m.params();
    let n = params.n();
    let trunc = opts
        .truncation
        .unwrap_or_else(|| default_truncation(params));
    if trunc < 2 * n || trunc < 32 {
        return Err(CfError::InvalidParameter(format!(
            "truncation {trunc} too small (need at least max(2N, 32))"
        )));
    }
    if opts.output_points < 2 {
        return Err(CfError::InvalidParameter(
            "output grid needs at least 2 points".into(),
        ));
    }

    // Branches above `trunc` land in [1 - N/(trunc+1), 1).
    let var_loc = f.variation_on(1.0 - params.n_f64() / (trunc as f64 + 1.0), 1.0);
    let f_one = *f.values().last().unwrap();

    type TailFn = fn(f64, u64, CfParams) -> f64;
    let (tail_at, sup_tail_mass, var_tail): (TailFn, f64, f64) = match opts.weighting {
        Weighting::Invariant => (
            branch_weight_tail,
            branch_weight_tail(1.0, trunc, params),
            branch_variation_tail(trunc, params)? + branch_weight(1.0, trunc + 1, params),
        ),
        Weighting::Lebesgue => {
            let mf = trunc as f64;
            (
                lebesgue_weight_tail,
                lebesgue_weight_tail(1.0, trunc, params),
                2.0 * params.n_f64() / ((mf + 1.0) * (mf + 1.0)),
            )
        }
    };
    let sup_cert = sup_tail_mass * var_loc;
    let var_cert = var_tail * var_loc;
    if let Some(tol) = opts.tolerance {
        if sup_cert > tol {
            return Err(CfError::TruncationTooCoarse {
                certified: sup_cert,
                tolerance: tol,
            });
        }
    }

    let nf = params.n_f64();
    let points = opts.output_points;
    let mut bp = Vec::with_capacity(points);
    let mut vals = Vec::with_capacity(points);
    for k in 0..points {
        let x = k as f64 / (points - 1) as f64;
        let mut acc = 0.0f64;
        let mut comp = 0.0f64;
        for i in n..=trunc {
            let ix = x + i as f64;
            let w = match opts.weighting {
                Weighting::Invariant => (x + nf - 1.0) / (ix * (ix - 1.0)),
                Weighting::Lebesgue => nf / (ix * ix),
            };
            let term = w * f.eval(1.0 - nf / ix);
            let y = term - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
        }
        acc += tail_at(x, trunc, params) * f_one;
        bp.push(x);
        vals.push(acc);
    }
    let lipschitz = vals
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() * (points - 1) as f64)
        .collect();
    Ok(PfoResult {
        grid: GridFunction::new(bp, vals)?,
        sup_cert,
        var_cert,
        lipschitz,
        truncation: trunc,
    })
}

/// The limit functional `f -> integral of f against the invariant measure`,
/// exact for piecewise-linear `f` through per-cell antiderivatives.
pub fn pfo_fixed_functional(f: &GridFunction, m: &MeasureParams) -> f64 {
    let c = m.n() - 1.0;
    let mut acc = 0.0;
    for k in 0..f.breakpoints().len() - 1 {
        let (x0, x1) = (f.breakpoints()[k], f.breakpoints()[k + 1]);
        let (v0, v1) = (f.values()[k], f.values()[k + 1]);
        let slope = (v1 - v0) / (x1 - x0);
        // integral of (v0 + s(x-x0))/(x+c) over the cell
        acc += slope * (x1 - x0) + (v0 - slope * (x0 + c)) * ((x1 - x0) / (x0 + c)).ln_1p();
    }
    acc * m.normalizer()
}

/// One row of a contraction report: exact variation and sup-deviation of the
/// computed iterate against the geometric bounds, with the accumulated
/// certified truncation error kept alongside.
#[derive(Debug, Clone)]
pub struct ContractionRow {
    pub step: usize,
    pub variation: f64,
    pub sup_deviation: f64,
    pub var_bound: f64,
    pub dev_bound: f64,
    pub sup_cert: f64,
    pub var_cert: f64,
}

/// Iterates the operator `steps` times, reporting per-step variation,
/// sup-deviation from the limit functional, and the geometric bounds.
///
/// The bounds are statements about the invariant-measure weighting; the
/// Lebesgue-weighted operator is rejected here (its fixed point keeps its
/// variation, so no geometric contraction of variation holds for it).
pub fn contraction_report(
    f: &GridFunction,
    m: &MeasureParams,
    steps: usize,
    opts: &PfoOptions,
) -> Result<Vec<ContractionRow>> {
    if opts.weighting != Weighting::Invariant {
        return Err(CfError::InvalidParameter(
            "contraction bounds hold for the invariant-measure weighting only".into(),
        ));
    }
    let beta = contraction_factor(m.params());
    let limit = pfo_fixed_functional(f, m);
    let var0 = f.variation();
    let mut rows = Vec::with_capacity(steps);
    let mut cur = f.clone();
    let mut sup_cert = 0.0;
    let mut var_cert = 0.0;
    for step in 1..=steps {
        let res = pfo_apply(&cur, m, opts)?;
        sup_cert += res.sup_cert;
        var_cert += res.var_cert;
        cur = res.grid;
        let dev = cur
            .values()
            .iter()
            .fold(0.0f64, |mx, v| mx.max((v - limit).abs()));
        rows.push(ContractionRow {
            step,
            variation: cur.variation(),
            sup_deviation: dev,
            var_bound: beta.powi(step as i32) * var0,
            dev_bound: beta.powi(step as i32) * var0,
            sup_cert,
            var_cert,
        });
    }
    Ok(rows)
}

/// Conditional-measure weight of a cylinder by the chain-product formula:
/// the product of transition weights along the word, updating the state
/// through the inverse branches.
pub fn cylinder_weight(digits: &DigitSequence, t: f64) -> f64 {
    let params = digits.params();
    let mut s = t;
    let mut w = 1.0;
    for &a in digits.digits() {
        w *= branch_weight(s, a, params);
        s = inverse_branch(s, a, params);
    }
    w
}

/// Denominator polynomial `q_k` of a word, evaluated exactly.
pub fn q_polynomial(word: &[u64], params: CfParams) -> BigInt {
    let n = BigInt::from(params.n());
    let mut q2 = BigInt::one();
    if word.is_empty() {
        return q2;
    }
    let mut q1 = BigInt::from(word[0]) + 1;
    for &a in &word[1..] {
        let q = (BigInt::from(a) + 1) * &q1 - &n * &q2;
        q2 = std::mem::replace(&mut q1, q);
    }
    q1
}

/// Cylinder weight through the closed form in terms of denominator
/// polynomials of the word's tail, with the last index decremented in the
/// second factor. Cross-validates the product formula.
pub fn cylinder_weight_qpoly(digits: &DigitSequence, t: f64) -> f64 {
    let params = digits.params();
    let word = digits.digits();
    let n = params.n_f64();
    let len = word.len();
    if len == 0 {
        return 1.0;
    }
    if len == 1 {
        return branch_weight(t, word[0], params);
    }
    let to_f = |b: BigInt| b.to_f64().unwrap();

    let tail1 = &word[1..]; // (i_2, ..., i_n)
    let tail2 = &word[2..]; // (i_3, ..., i_n)
    let mut tail1_dec = tail1.to_vec();
    *tail1_dec.last_mut().unwrap() -= 1;
    let mut tail2_dec = tail2.to_vec();
    if let Some(last) = tail2_dec.last_mut() {
        *last -= 1;
    }

    let a = to_f(q_polynomial(tail1, params));
    let b = to_f(q_polynomial(tail2, params));
    let a_dec = to_f(q_polynomial(&tail1_dec, params));
    let b_dec = to_f(q_polynomial(&tail2_dec, params));

    let first = t + word[0] as f64;
    let d1 = first * a - n * b;
    let d2 = first * a_dec - n * b_dec;
    (t + n - 1.0) * n.powi(len as i32 - 1) / (d1 * d2)
}

/// `P^{N(n)}(t)`: weight of the all-minimal word of length `len`.
pub fn min_word_weight(len: usize, t: f64, params: CfParams) -> f64 {
    cylinder_weight(&DigitSequence::all_min(len, params), t)
}

/// Closed form `P^{N(n)}(1) = (N-1)/(N^{n+1}-1)`.
pub fn min_word_weight_at_one(len: u32, params: CfParams) -> f64 {
    let n = params.n_f64();
    (n - 1.0) / (n.powi(len as i32 + 1) - 1.0)
}
