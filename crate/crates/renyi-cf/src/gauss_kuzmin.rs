//! The two-dimensional distribution error term
//! `F_n(x,y) - G(x,y)` where `F_n(x,y)` is the joint law of
//! `(R_N^n, s_n)` under the conditional measure seeded at `t` and `G` is the
//! closed-form log limit, together with the sandwich bounds
//! `(1/2) (N-1)/(N^{n+1}-1) <= sup |F_n - G| <= (1/N + K_N)^n`.
//!
//! Two estimators are provided. Exact enumeration walks every digit word up
//! to a cutoff, carrying the chain state and the product weight; the missed
//! mass `1 - sum(weights)` is exact and reported as the tolerance. Monte
//! Carlo draws starting points by inverse-CDF sampling and builds the
//! empirical joint CDF with a distribution-free confidence half-width.
//!
//! For the exact supremum the `y`-section of `F_n` is a step function, so the
//! scan evaluates both one-sided limits at step ordinates. Small enumerations
//! keep every atom and refine at every ordinate; large ones aggregate atoms
//! into moment bins between candidate ordinates (the grid plus the heaviest
//! atoms), which still evaluates the CDF exactly at every candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::cf::CfParams;
use crate::error::{CfError, Result};
use crate::measures::{rho_bar_cdf, sample_rho_t, ConditionalParam, MeasureParams};
use crate::transfer::{contraction_factor, min_word_weight_at_one};

/// Limit law of the joint distribution; one shared implementation with the
/// extended-measure CDF.
pub fn limit_cdf(x: f64, y: f64, m: &MeasureParams) -> f64 {
    rho_bar_cdf(x, y, m)
}

/// Lower sandwich bound `(1/2) (N-1)/(N^{n+1}-1)`.
pub fn lower_bound(steps: u32, params: CfParams) -> f64 {
    0.5 * min_word_weight_at_one(steps, params)
}

/// Upper sandwich bound `(1/N + K_N)^n`.
pub fn upper_bound(steps: u32, params: CfParams) -> f64 {
    contraction_factor(params).powi(steps as i32)
}

/// `((N-1)/(2(N^{n+1}-1)))^{1/n}`, the per-step rate of the lower bound;
/// approaches `1/N` as `n` grows.
pub fn lower_bound_rate(steps: u32, params: CfParams) -> f64 {
    lower_bound(steps, params).powf(1.0 / steps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExactEnumeration,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactEnumeration => "exact-enumeration",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// One estimate of the supremum error with its certified context.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub n_param: u64,
    pub t: f64,
    pub steps: usize,
    pub sup_error: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub method: Method,
    /// Certified slack: unenumerated mass for exact mode, confidence
    /// half-width for Monte Carlo; float-level accumulation included.
    pub tolerance: f64,
    pub argmax: (f64, f64),
    pub words_enumerated: Option<u128>,
    pub samples: Option<u64>,
    pub discarded: Option<u64>,
    /// Step ordinates examined beyond the uniform grid (exact mode).
    pub refined_ordinates: Option<usize>,
}

/// Joint CDF values on a rectangular grid.
#[derive(Debug, Clone)]
pub struct JointCdf {
    pub x_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    values: Vec<f64>,
    pub method: Method,
    pub tolerance: f64,
}

impl JointCdf {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.y_grid.len() + iy]
    }
}

/// Options of the exact enumerator.
#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Largest digit enumerated per position.
    pub digit_cutoff: u64,
    /// Hard cap on `(cutoff - N + 1)^n`.
    pub word_budget: u128,
    /// Past this many words, atoms are aggregated into moment bins.
    pub atom_budget: u128,
    /// How many of the heaviest atoms contribute refinement ordinates in the
    /// aggregated regime.
    pub heavy_candidates: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            digit_cutoff: 60,
            word_budget: 100_000_000,
            atom_budget: 2_097_152,
            heavy_candidates: 256,
        }
    }
}

/// Options of the Monte-Carlo estimator.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    /// `1 - confidence`; the half-width is `sqrt(ln(2/delta)/(2 S))`.
    pub confidence_delta: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 100_000,
            seed: 1,
            confidence_delta: 0.01,
        }
    }
}

/// Options of the supremum scan.
#[derive(Debug, Clone, Copy)]
pub struct SupErrorOptions {
    pub method: Method,
    /// Uniform grid resolution per axis.
    pub resolution: usize,
    pub exact: ExactOptions,
    pub mc: McOptions,
}

impl Default for SupErrorOptions {
    fn default() -> Self {
        SupErrorOptions {
            method: Method::ExactEnumeration,
            resolution: 513,
            exact: ExactOptions::default(),
            mc: McOptions::default(),
        }
    }
}

/// `0, 1/(n-1), ..., 1`.
pub fn uniform_grid(resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|k| k as f64 / (resolution - 1) as f64)
        .collect()
}

/// One step of the chain: new state `u_i(s)` and transition weight `P^i(s)`.
/// Shared verbatim by every enumeration pass so that identical words produce
/// bitwise-identical states.
#[inline]
fn chain_step(s: f64, digit: f64, nf: f64) -> (f64, f64) {
    let d = s + digit;
    let w = (s + nf - 1.0) / (d * (d - 1.0));
    (1.0 - nf / d, w)
}

/// Brodén-Borel-Lévy kernel `N x / (N - (1-x)(1-z))`.
#[inline]
fn bbl(x: f64, z: f64, nf: f64) -> f64 {
    nf * x / (nf - (1.0 - x) * (1.0 - z))
}

/// Number of moment terms needed for a series remainder below 1e-12.
fn moment_terms(nf: f64) -> usize {
    ((2.0e12f64.ln() / nf.ln()).ceil() as usize + 1).min(48)
}

enum LawRepr {
    /// `(z, w)` sorted by `z`; every ordinate can be refined.
    Atoms(Vec<(f64, f64)>),
    /// Moments of `v = 1-z` aggregated between candidate ordinates.
    Binned {
        boundaries: Vec<f64>,
        /// `boundaries.len() + 1` bins, flattened `[bin][k]`.
        bins: Vec<f64>,
        /// Atoms exactly at each boundary, flattened `[boundary][k]`.
        jumps: Vec<f64>,
        kp1: usize,
    },
}

/// The exact (truncated) law of `s_n` with per-atom joint weights.
pub struct ExactLaw {
    repr: LawRepr,
    params: CfParams,
    /// Total enumerated mass.
    pub mass: f64,
    /// Unenumerated mass `1 - mass`, the certified tolerance.
    pub tail: f64,
    pub words: u128,
}

const LOOKUP_BUCKETS: usize = 1024;

struct BinAccum {
    bins: Vec<f64>,
    jumps: Vec<f64>,
    kp1: usize,
    /// For each uniform bucket of `[0,1]`, the first boundary index that
    /// could still lie at or above the bucket's start; atoms locate their
    /// slot with a short forward scan from there.
    bucket_start: Vec<u32>,
}

impl BinAccum {
    fn new(boundaries: &[f64], kp1: usize) -> Self {
        let bucket_start = (0..LOOKUP_BUCKETS)
            .map(|b| boundaries.partition_point(|&x| x < b as f64 / LOOKUP_BUCKETS as f64) as u32)
            .collect();
        BinAccum {
            bins: vec![0.0; (boundaries.len() + 1) * kp1],
            jumps: vec![0.0; boundaries.len() * kp1],
            kp1,
            bucket_start,
        }
    }

    #[inline]
    fn record(&mut self, boundaries: &[f64], z: f64, w: f64) {
        let bucket = ((z * LOOKUP_BUCKETS as f64) as usize).min(LOOKUP_BUCKETS - 1);
        let mut idx = self.bucket_start[bucket] as usize;
        while idx < boundaries.len() && boundaries[idx] < z {
            idx += 1;
        }
        let slot = if idx < boundaries.len() && boundaries[idx] == z {
            &mut self.jumps[idx * self.kp1..(idx + 1) * self.kp1]
        } else {
            &mut self.bins[idx * self.kp1..(idx + 1) * self.kp1]
        };
        // Four independent power chains hide the multiply latency; the tail
        // of the series is cut once the powers drop below 1e-20, which is
        // far inside the reported tolerance.
        let v = 1.0 - z;
        let v2 = v * v;
        let v4 = v2 * v2;
        let mut p = [w, w * v, w * v2, w * v2 * v];
        let mut k = 0;
        while k + 4 <= slot.len() {
            slot[k] += p[0];
            slot[k + 1] += p[1];
            slot[k + 2] += p[2];
            slot[k + 3] += p[3];
            if p[0] < 1e-20 {
                return;
            }
            p[0] *= v4;
            p[1] *= v4;
            p[2] *= v4;
            p[3] *= v4;
            k += 4;
        }
        let mut q = p[0];
        for cell in slot[k..].iter_mut() {
            *cell += q;
            q *= v;
        }
    }

    fn merge(&mut self, other: &BinAccum) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        for (a, b) in self.jumps.iter_mut().zip(&other.jumps) {
            *a += b;
        }
    }
}

/// Evaluate `sum w * bbl(x, z)` over one moment vector.
#[inline]
fn moment_eval(moments: &[f64], x: f64, nf: f64) -> f64 {
    let r = (1.0 - x) / nf;
    let mut acc = 0.0;
    for &m in moments.iter().rev() {
        acc = m + r * acc;
    }
    x * acc
}

fn first_digit_chunks(params: CfParams, cutoff: u64) -> Vec<(u64, u64)> {
    let n = params.n();
    let alphabet = cutoff - n + 1;
    let chunks = alphabet.min(64);
    (0..chunks)
        .map(|c| {
            let lo = n + alphabet * c / chunks;
            let hi = n + alphabet * (c + 1) / chunks - 1;
            (lo, hi)
        })
        .collect()
}

fn enumerate_atoms_rec(
    nf: f64,
    n: u64,
    cutoff: u64,
    depth: usize,
    s: f64,
    w: f64,
    out: &mut Vec<(f64, f64)>,
) {
    if depth == 0 {
        out.push((s, w));
        return;
    }
    for i in n..=cutoff {
        let (s2, step) = chain_step(s, i as f64, nf);
        enumerate_atoms_rec(nf, n, cutoff, depth - 1, s2, w * step, out);
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_binned_rec(
    nf: f64,
    n: u64,
    cutoff: u64,
    depth: usize,
    s: f64,
    w: f64,
    boundaries: &[f64],
    acc: &mut BinAccum,
) {
    if depth == 0 {
        acc.record(boundaries, s, w);
        return;
    }
    for i in n..=cutoff {
        let (s2, step) = chain_step(s, i as f64, nf);
        enumerate_binned_rec(nf, n, cutoff, depth - 1, s2, w * step, boundaries, acc);
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Enumerate the truncated law. `boundaries` are the candidate ordinates used
/// when the word count exceeds the atom budget; they must be sorted, deduped,
/// and inside `[0,1]`.
pub fn enumerate_law(
    t: f64,
    steps: usize,
    m: &MeasureParams,
    opts: &ExactOptions,
    boundaries: &[f64],
) -> Result<ExactLaw> {
    let params = m.params();
    let n = params.n();
    if opts.digit_cutoff < n {
        return Err(CfError::InvalidParameter(format!(
            "digit cutoff {} below N = {n}",
            opts.digit_cutoff
        )));
    }
    let alphabet = (opts.digit_cutoff - n + 1) as u128;
    let words = alphabet
        .checked_pow(steps as u32)
        .ok_or(CfError::ComplexityGuard {
            words: u128::MAX,
            budget: opts.word_budget,
        })?;
    if words > opts.word_budget {
        return Err(CfError::ComplexityGuard {
            words,
            budget: opts.word_budget,
        });
    }
    let nf = params.n_f64();

    if steps == 0 {
        return Ok(ExactLaw {
            repr: LawRepr::Atoms(vec![(t, 1.0)]),
            params,
            mass: 1.0,
            tail: 0.0,
            words: 1,
        });
    }

    let chunks = first_digit_chunks(params, opts.digit_cutoff);
    if words <= opts.atom_budget {
        let partials: Vec<Vec<(f64, f64)>> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut out = Vec::new();
                for i in lo..=hi {
                    let (s2, step) = chain_step(t, i as f64, nf);
                    enumerate_atoms_rec(nf, n, opts.digit_cutoff, steps - 1, s2, step, &mut out);
                }
                out
            })
            .collect();
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(words as usize);
        for p in partials {
            atoms.extend(p);
        }
        let mass = kahan_sum(atoms.iter().map(|a| a.1));
        atoms.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(ExactLaw {
            repr: LawRepr::Atoms(atoms),
            params,
            mass,
            tail: (1.0 - mass).max(0.0),
            words,
        })
    } else {
        let kp1 = moment_terms(nf);
        let partials: Vec<BinAccum> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = BinAccum::new(boundaries, kp1);
                for i in lo..=hi {
                    let (s2, step) = chain_step(t, i as f64, nf);
                    enumerate_binned_rec(
                        nf,
                        n,
                        opts.digit_cutoff,
                        steps - 1,
                        s2,
                        step,
                        boundaries,
                        &mut acc,
                    );
                }
                acc
            })
            .collect();
        let mut acc = BinAccum::new(boundaries, kp1);
        for p in &partials {
            acc.merge(p);
        }
        let mass = kahan_sum(
            acc.bins
                .chunks(kp1)
                .chain(acc.jumps.chunks(kp1))
                .map(|c| c[0]),
        );
        Ok(ExactLaw {
            repr: LawRepr::Binned {
                boundaries: boundaries.to_vec(),
                bins: acc.bins,
                jumps: acc.jumps,
                kp1,
            },
            params,
            mass,
            tail: (1.0 - mass).max(0.0),
            words,
        })
    }
}

impl ExactLaw {
    /// CDF values `F(x, y_j)` (right-continuous) for every `x` in `x_grid`
    /// and `y_j` in `y_grid`. For the binned representation every `y_j` must
    /// be one of the enumeration boundaries.
    fn cdf_matrix(&self, x_grid: &[f64], y_grid: &[f64]) -> Result<Vec<f64>> {
        let nf = self.params.n_f64();
        let mut out = vec![0.0; x_grid.len() * y_grid.len()];
        match &self.repr {
            LawRepr::Atoms(atoms) => {
                for (ix, &x) in x_grid.iter().enumerate() {
                    let row = &mut out[ix * y_grid.len()..(ix + 1) * y_grid.len()];
                    let mut f = 0.0;
                    let mut ai = 0;
                    for (iy, &y) in y_grid.iter().enumerate() {
                        while ai < atoms.len() && atoms[ai].0 <= y {
                            f += atoms[ai].1 * bbl(x, atoms[ai].0, nf);
                            ai += 1;
                        }
                        row[iy] = f;
                    }
                }
            }
            LawRepr::Binned {
                boundaries,
                bins,
                jumps,
                kp1,
            } => {
                for &y in y_grid {
                    if boundaries
                        .binary_search_by(|b| b.partial_cmp(&y).unwrap())
                        .is_err()
                    {
                        return Err(CfError::InvalidParameter(format!(
                            "grid ordinate {y} is not an enumeration boundary"
                        )));
                    }
                }
                for (ix, &x) in x_grid.iter().enumerate() {
                    let row = &mut out[ix * y_grid.len()..(ix + 1) * y_grid.len()];
                    let mut f = 0.0;
                    let mut iy = 0;
                    for (j, &b) in boundaries.iter().enumerate() {
                        f += moment_eval(&bins[j * kp1..(j + 1) * kp1], x, nf);
                        f += moment_eval(&jumps[j * kp1..(j + 1) * kp1], x, nf);
                        while iy < y_grid.len() && y_grid[iy] == b {
                            row[iy] = f;
                            iy += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Scan `|F - G|` over the x-grid crossed with every candidate ordinate,
    /// taking both one-sided values of `F` at each step.
    fn sup_scan(&self, x_grid: &[f64], y_grid: &[f64], m: &MeasureParams) -> (f64, (f64, f64)) {
        let nf = self.params.n_f64();
        let c = nf - 1.0;
        let log_ratio_inv = m.normalizer();
        let per_x: Vec<(f64, f64, f64)> = x_grid
            .par_iter()
            .map(|&x| {
                let lx = (x / c).ln_1p();
                let one_minus_x = 1.0 - x;
                let g_at =
                    |y: f64| (lx + ((y + c) / (nf - one_minus_x * (1.0 - y))).ln()) * log_ratio_inv;
                let mut best = (0.0f64, 0.0f64);
                let mut check = |y: f64, f: f64, g: f64| {
                    let d = (f - g).abs();
                    if d > best.0 {
                        best = (d, y);
                    }
                };
                match &self.repr {
                    LawRepr::Atoms(atoms) => {
                        let mut f = 0.0;
                        let mut ai = 0;
                        let mut gi = 0;
                        while ai < atoms.len() || gi < y_grid.len() {
                            let za = if ai < atoms.len() {
                                atoms[ai].0
                            } else {
                                f64::INFINITY
                            };
                            let yg = if gi < y_grid.len() {
                                y_grid[gi]
                            } else {
                                f64::INFINITY
                            };
                            let y = za.min(yg);
                            let g = g_at(y);
                            check(y, f, g);
                            if za == y {
                                while ai < atoms.len() && atoms[ai].0 == y {
                                    f += atoms[ai].1 * bbl(x, y, nf);
                                    ai += 1;
                                }
                                check(y, f, g);
                            }
                            if yg == y {
                                gi += 1;
                            }
                        }
                    }
                    LawRepr::Binned {
                        boundaries,
                        bins,
                        jumps,
                        kp1,
                    } => {
                        let mut f = 0.0;
                        for (j, &b) in boundaries.iter().enumerate() {
                            f += moment_eval(&bins[j * kp1..(j + 1) * kp1], x, nf);
                            let g = g_at(b);
                            check(b, f, g);
                            f += moment_eval(&jumps[j * kp1..(j + 1) * kp1], x, nf);
                            check(b, f, g);
                        }
                    }
                }
                (best.0, x, best.1)
            })
            .collect();
        let mut sup = 0.0;
        let mut arg = (0.0, 0.0);
        for (v, x, y) in per_x {
            if v > sup {
                sup = v;
                arg = (x, y);
            }
        }
        (sup, arg)
    }

    fn refined_count(&self, grid_len: usize) -> usize {
        match &self.repr {
            LawRepr::Atoms(atoms) => atoms.len(),
            LawRepr::Binned { boundaries, .. } => boundaries.len().saturating_sub(grid_len),
        }
    }
}

/// Ordinates of the heaviest atoms, found by enumerating words over a small
/// sub-alphabet (word weights decay quadratically in each digit, so heavy
/// atoms use small digits). Always contains the all-minimal word's ordinate,
/// which carries the largest single weight.
fn heavy_ordinates(t: f64, steps: usize, params: CfParams, cutoff: u64, count: usize) -> Vec<f64> {
    let n = params.n();
    let nf = params.n_f64();
    let mut base = 10u64;
    while base > 2
        && (base as u128)
            .checked_pow(steps as u32)
            .unwrap_or(u128::MAX)
            > 4_000_000
    {
        base -= 1;
    }
    if (base as u128)
        .checked_pow(steps as u32)
        .unwrap_or(u128::MAX)
        > 4_000_000
    {
        // enumeration too deep even over two digits: keep the one ordinate
        // the lower-bound argument needs, the all-minimal word's
        let mut s = t;
        for _ in 0..steps {
            (s, _) = chain_step(s, nf, nf);
        }
        return vec![s];
    }
    let hi = (n + base - 1).min(cutoff);
    let mut atoms = Vec::new();
    enumerate_atoms_rec(nf, n, hi, steps, t, 1.0, &mut atoms);
    atoms.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    atoms.truncate(count);
    atoms.into_iter().map(|(z, _)| z).collect()
}

fn sorted_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Exact joint CDF on the given grids (sorted, within `[0,1]`).
pub fn joint_cdf_exact(
    t: f64,
    steps: usize,
    m: &MeasureParams,
    opts: &ExactOptions,
    x_grid: &[f64],
    y_grid: &[f64],
) -> Result<JointCdf> {
    ConditionalParam::new(t)?;
    let boundaries = sorted_dedup(y_grid.to_vec());
    let law = enumerate_law(t, steps, m, opts, &boundaries)?;
    let values = law.cdf_matrix(x_grid, y_grid)?;
    Ok(JointCdf {
        x_grid: x_grid.to_vec(),
        y_grid: y_grid.to_vec(),
        values,
        method: Method::ExactEnumeration,
        tolerance: law.tail + 1e-9,
    })
}

struct McCounts {
    cells: Vec<u64>,
    discarded: u64,
}

fn mc_simulate(
    t: f64,
    steps: usize,
    m: &MeasureParams,
    opts: &McOptions,
    x_grid: &[f64],
    y_grid: &[f64],
) -> Result<McCounts> {
    if opts.samples == 0 {
        return Err(CfError::InvalidParameter("need at least one sample".into()));
    }
    let cond = ConditionalParam::new(t)?;
    let params = m.params();
    let nf = params.n_f64();
    let nx = x_grid.len();
    let ny = y_grid.len();
    const CHUNK: u64 = 1 << 16;
    let n_chunks = opts.samples.div_ceil(CHUNK);
    let partials: Vec<McCounts> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
            rng.set_stream(chunk + 1);
            let count = CHUNK.min(opts.samples - chunk * CHUNK);
            let mut cells = vec![0u64; nx * ny];
            let mut discarded = 0u64;
            'samples: for _ in 0..count {
                let u: f64 = rng.gen();
                let mut x = sample_rho_t(u, cond, m);
                let mut s = t;
                for _ in 0..steps {
                    match crate::cf::digit(x, params) {
                        Ok(a) => {
                            x = crate::cf::renyi_map(x, params);
                            s = 1.0 - nf / (a as f64 + s);
                        }
                        Err(_) => {
                            discarded += 1;
                            continue 'samples;
                        }
                    }
                }
                let ix = x_grid.partition_point(|&g| g < x).min(nx - 1);
                let iy = y_grid.partition_point(|&g| g < s).min(ny - 1);
                cells[ix * ny + iy] += 1;
            }
            McCounts { cells, discarded }
        })
        .collect();
    let mut cells = vec![0u64; nx * ny];
    let mut discarded = 0u64;
    for p in partials {
        discarded += p.discarded;
        for (a, b) in cells.iter_mut().zip(&p.cells) {
            *a += b;
        }
    }
    Ok(McCounts { cells, discarded })
}

/// Confidence half-width `sqrt(ln(2/delta) / (2 S))`.
pub fn mc_half_width(samples: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

/// Empirical joint CDF from seeded inverse-CDF sampling.
pub fn joint_cdf_mc(
    t: f64,
    steps: usize,
    m: &MeasureParams,
    opts: &McOptions,
    x_grid: &[f64],
    y_grid: &[f64],
) -> Result<JointCdf> {
    let counts = mc_simulate(t, steps, m, opts, x_grid, y_grid)?;
    let nx = x_grid.len();
    let ny = y_grid.len();
    let kept = opts.samples - counts.discarded;
    if kept == 0 {
        return Err(CfError::InsufficientData(
            "every sample was discarded".into(),
        ));
    }
    // prefix sums over both axes turn cell counts into CDF counts
    let mut acc = counts.cells;
    for ix in 0..nx {
        for iy in 1..ny {
            acc[ix * ny + iy] += acc[ix * ny + iy - 1];
        }
    }
    for ix in 1..nx {
        for iy in 0..ny {
            acc[ix * ny + iy] += acc[(ix - 1) * ny + iy];
        }
    }
    let values = acc.iter().map(|&c| c as f64 / kept as f64).collect();
    Ok(JointCdf {
        x_grid: x_grid.to_vec(),
        y_grid: y_grid.to_vec(),
        values,
        method: Method::MonteCarlo,
        tolerance: mc_half_width(kept, opts.confidence_delta),
    })
}

/// Supremum of `|F - G|` with the sandwich bounds attached.
///
/// Exact mode scans the uniform grid together with both one-sided values at
/// step ordinates (all of them when the enumeration fits the atom budget, the
/// heaviest ones binned exactly otherwise). Monte Carlo scans the grid only.
pub fn sup_error(
    t: f64,
    steps: usize,
    m: &MeasureParams,
    opts: &SupErrorOptions,
) -> Result<ErrorReport> {
    if steps == 0 {
        return Err(CfError::InvalidParameter(
            "the error term needs at least one step".into(),
        ));
    }
    if opts.resolution < 2 {
        return Err(CfError::InvalidParameter("resolution must be >= 2".into()));
    }
    ConditionalParam::new(t)?;
    let params = m.params();
    let grid = uniform_grid(opts.resolution);
    let report = match opts.method {
        Method::ExactEnumeration => {
            let mut candidates = grid.clone();
            candidates.extend(heavy_ordinates(
                t,
                steps,
                params,
                opts.exact.digit_cutoff,
                opts.exact.heavy_candidates,
            ));
            let candidates = sorted_dedup(candidates);
            let law = enumerate_law(t, steps, m, &opts.exact, &candidates)?;
            let (sup, argmax) = law.sup_scan(&grid, &candidates, m);
            ErrorReport {
                n_param: params.n(),
                t,
                steps,
                sup_error: sup,
                lower_bound: lower_bound(steps as u32, params),
                upper_bound: upper_bound(steps as u32, params),
                method: Method::ExactEnumeration,
                tolerance: law.tail + 1e-9,
                argmax,
                words_enumerated: Some(law.words),
                samples: None,
                discarded: None,
                refined_ordinates: Some(law.refined_count(grid.len())),
            }
        }
        Method::MonteCarlo => {
            let cdf = joint_cdf_mc(t, steps, m, &opts.mc, &grid, &grid)?;
            let mut sup = 0.0;
            let mut argmax = (0.0, 0.0);
            for (ix, &x) in grid.iter().enumerate() {
                for (iy, &y) in grid.iter().enumerate() {
                    let d = (cdf.value(ix, iy) - limit_cdf(x, y, m)).abs();
                    if d > sup {
                        sup = d;
                        argmax = (x, y);
                    }
                }
            }
            ErrorReport {
                n_param: params.n(),
                t,
                steps,
                sup_error: sup,
                lower_bound: lower_bound(steps as u32, params),
                upper_bound: upper_bound(steps as u32, params),
                method: Method::MonteCarlo,
                tolerance: cdf.tolerance,
                argmax,
                words_enumerated: None,
                samples: Some(opts.mc.samples),
                discarded: None,
                refined_ordinates: None,
            }
        }
    };
    Ok(report)
}

/// One row of the convergence-rate table.
#[derive(Debug, Clone, Copy)]
pub struct BoundsRow {
    pub n_param: u64,
    /// `1/N`.
    pub lower: f64,
    /// `1/N + K_N`.
    pub upper: f64,
}

/// The table of per-step rate bounds for a list of parameters.
pub fn bounds_table(ns: &[u64]) -> Result<Vec<BoundsRow>> {
    ns.iter()
        .map(|&n| {
            let params = CfParams::new(n)?;
            Ok(BoundsRow {
                n_param: n,
                lower: 1.0 / params.n_f64(),
                upper: contraction_factor(params),
            })
        })
        .collect()
}

/// A fitted per-step decay rate with a dispersion allowance.
#[derive(Debug, Clone, Copy)]
pub struct RateEstimate {
    /// `exp(slope)` of the least-squares fit of `log sup_error` against `n`.
    pub rate: f64,
    /// Allowance combining twice the slope standard error with the reported
    /// tolerances relative to the observed suprema.
    pub delta: f64,
    pub slope_stderr: f64,
}

impl RateEstimate {
    /// Whether the fitted rate lies inside `[1/N - delta, 1/N + K_N + delta]`.
    pub fn brackets(&self, params: CfParams) -> bool {
        let lo = 1.0 / params.n_f64() - self.delta;
        let hi = contraction_factor(params) + self.delta;
        self.rate >= lo && self.rate <= hi
    }
}

/// Least-squares rate from at least three reports sharing `(N, t, method)`
/// with strictly increasing step counts.
pub fn rate_estimate(reports: &[ErrorReport]) -> Result<RateEstimate> {
    if reports.len() < 3 {
        return Err(CfError::InsufficientData(format!(
            "rate fit needs at least 3 reports, got {}",
            reports.len()
        )));
    }
    let first = &reports[0];
    for r in reports {
        if r.n_param != first.n_param || r.t != first.t || r.method != first.method {
            return Err(CfError::InsufficientData(
                "rate fit needs reports sharing N, t, and method".into(),
            ));
        }
        if r.sup_error <= 0.0 {
            return Err(CfError::InsufficientData(
                "rate fit needs strictly positive sup errors".into(),
            ));
        }
    }
    if reports.windows(2).any(|w| w[1].steps <= w[0].steps) {
        return Err(CfError::InsufficientData(
            "rate fit needs strictly increasing step counts".into(),
        ));
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.steps as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.sup_error.ln()).collect();
    let len = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / len;
    let ybar = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = (rss / (len - 2.0) / sxx).max(0.0).sqrt();
    let rate = slope.exp();
    let rel_tol = reports
        .iter()
        .map(|r| r.tolerance / r.sup_error)
        .fold(0.0f64, f64::max);
    let delta = rate * ((2.0 * stderr).exp() - 1.0) + rate * rel_tol;
    Ok(RateEstimate {
        rate,
        delta,
        slope_stderr: stderr,
    })
}
