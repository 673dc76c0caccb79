//! The invertible two-dimensional extension of the map on the unit square,
//! extended digits, and the Markov chain of "past" states.

use crate::cf::{renyi_map, CfParams, DigitSequence};
use crate::error::{CfError, Result};
use crate::measures::{rho_bar_rect, MeasureParams};
use crate::transfer::{branch_weight, inverse_branch};

/// A point of the unit square carried by the two-dimensional map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedPoint {
    pub x: f64,
    pub y: f64,
}

impl ExtendedPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(CfError::InvalidParameter(format!(
                "point ({x}, {y}) outside the unit square"
            )));
        }
        Ok(ExtendedPoint { x, y })
    }
}

/// Forward step `(x, y) -> (R_N(x), u_{a_1(x)}(y))`.
pub fn extension_map(p: ExtendedPoint, params: CfParams) -> Result<ExtendedPoint> {
    let d = crate::cf::digit(p.x, params)?;
    Ok(ExtendedPoint {
        x: renyi_map(p.x, params),
        y: inverse_branch(p.y, d, params),
    })
}

/// Inverse step `(x, y) -> (u_{a_1(y)}(x), R_N(y))`.
pub fn extension_inverse(p: ExtendedPoint, params: CfParams) -> Result<ExtendedPoint> {
    let d = crate::cf::digit(p.y, params)?;
    Ok(ExtendedPoint {
        x: inverse_branch(p.x, d, params),
        y: renyi_map(p.y, params),
    })
}

/// Extended digit at index `l`: the first digit of the `x`-coordinate after
/// `l - 1` forward steps (negative indices walk the inverse map).
pub fn extended_digit(p: ExtendedPoint, l: i64, params: CfParams) -> Result<u64> {
    let mut cur = p;
    let steps = l - 1;
    if steps >= 0 {
        for _ in 0..steps {
            cur = extension_map(cur, params)?;
        }
    } else {
        for _ in 0..(-steps) {
            cur = extension_inverse(cur, params)?;
        }
    }
    crate::cf::digit(cur.x, params)
}

/// One state of the past-coordinate chain `s_n = 1 - N/(a_n + s_{n-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovState {
    pub s: f64,
    pub step: usize,
    pub seed_t: f64,
}

/// The chain seeded at `t` and driven by the word, including the seed state.
pub fn markov_chain(t: f64, digits: &DigitSequence) -> Vec<MarkovState> {
    let params = digits.params();
    let mut out = Vec::with_capacity(digits.len() + 1);
    let mut s = t;
    out.push(MarkovState {
        s,
        step: 0,
        seed_t: t,
    });
    for (k, &a) in digits.digits().iter().enumerate() {
        s = 1.0 - params.n_f64() / (a as f64 + s);
        out.push(MarkovState {
            s,
            step: k + 1,
            seed_t: t,
        });
    }
    out
}

/// Final state of the chain without the intermediate allocations.
pub fn markov_final_state(t: f64, digits: &DigitSequence) -> f64 {
    let n = digits.params().n_f64();
    digits
        .digits()
        .iter()
        .fold(t, |s, &a| 1.0 - n / (a as f64 + s))
}

/// Transition probability of the chain; shared with the transfer operator's
/// branch weights.
pub fn transition_prob(s: f64, i: u64, params: CfParams) -> Result<f64> {
    if i < params.n() {
        return Err(CfError::InvalidParameter(format!(
            "transition digit {i} below N = {}",
            params.n()
        )));
    }
    Ok(branch_weight(s, i, params))
}

/// `|rho_bar(inverse image of the rectangle) - rho_bar(rectangle)|`.
///
/// The preimage of `[x1,x2] x [y1,y2]` decomposes by the first digit `i` of
/// the new `x`-coordinate into `u_i([x1,x2]) x {y : u_i(y) in [y1,y2]}`. For
/// `y2 < 1` only finitely many digits contribute; for `y2 = 1` the remaining
/// digits carry the full `y`-fiber and their mass telescopes in closed form.
pub fn rho_bar_preservation_residual(
    x_range: (f64, f64),
    y_range: (f64, f64),
    m: &MeasureParams,
    truncation: u64,
    tolerance: Option<f64>,
) -> Result<f64> {
    let (x1, x2) = x_range;
    let (y1, y2) = y_range;
    if !(0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0) {
        return Err(CfError::InvalidParameter(format!(
            "rectangle [{x1},{x2}]x[{y1},{y2}] is not inside the unit square"
        )));
    }
    let params = m.params();
    let n = params.n();
    let nf = params.n_f64();
    if truncation < n {
        return Err(CfError::InvalidParameter(format!(
            "truncation {truncation} below N = {n}"
        )));
    }

    // Digits whose y-fiber is nonempty: u_i(y) <= y2 needs i <= N/(1-y2) when
    // y2 < 1. Past the truncation with y2 = 1 the fiber must be all of [0,1],
    // which requires i >= N/(1-y1).
    let i_needed: Option<u64> = if y2 < 1.0 {
        Some((nf / (1.0 - y2)).ceil() as u64 + 1)
    } else {
        None
    };
    let i_max = match i_needed {
        Some(need) => {
            if need > truncation {
                let missing = (x2 / truncation as f64).ln_1p() - (x1 / truncation as f64).ln_1p();
                let certified = missing * m.normalizer();
                return Err(CfError::TruncationTooCoarse {
                    certified,
                    tolerance: tolerance.unwrap_or(0.0),
                });
            }
            need
        }
        None => {
            if y1 > 0.0 {
                let full_fiber_from = (nf / (1.0 - y1)).ceil() as u64 + 1;
                if full_fiber_from > truncation {
                    return Err(CfError::TruncationTooCoarse {
                        certified: f64::INFINITY,
                        tolerance: tolerance.unwrap_or(0.0),
                    });
                }
            }
            truncation
        }
    };

    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for i in n..=i_max {
        let xa = inverse_branch(x1, i, params);
        let xb = inverse_branch(x2, i, params);
        // u_i(y) in [y1, y2]  <=>  y in [N/(1-y1) - i, N/(1-y2) - i]
        let ya = if y1 > 0.0 {
            (nf / (1.0 - y1) - i as f64).max(0.0)
        } else {
            0.0
        };
        let yb = if y2 < 1.0 {
            (nf / (1.0 - y2) - i as f64).min(1.0)
        } else {
            1.0
        };
        if ya < yb {
            let term = rho_bar_rect(xa, xb, ya, yb, m);
            let y = term - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
        }
    }
    if y2 >= 1.0 {
        // Branches past the truncation carry the full y-fiber; their
        // rho-mass telescopes exactly.
        let mf = i_max as f64;
        acc += ((x2 / mf).ln_1p() - (x1 / mf).ln_1p()) * m.normalizer();
    }
    let residual = (acc - rho_bar_rect(x1, x2, y1, y2, m)).abs();
    if let Some(tol) = tolerance {
        if residual > tol {
            return Err(CfError::TruncationTooCoarse {
                certified: residual,
                tolerance: tol,
            });
        }
    }
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::{expand, CfParams};
    use crate::measures::{invariance_residual, MeasureParams};
    use crate::transfer::cylinder_weight;
    use rand::prelude::*;

    fn params(n: u64) -> CfParams {
        CfParams::new(n).unwrap()
    }

    #[test]
    fn inverse_branch_is_right_inverse() {
        let p = params(3);
        for &(x, i) in &[(0.37f64, 5u64), (0.0, 3), (0.92, 11)] {
            let u = inverse_branch(x, i, p);
            assert!(
                (crate::cf::renyi_map(u, p) - x).abs() < 1e-12,
                "x={x} i={i}"
            );
        }
        // u_i(1) is the left endpoint of the next cylinder
        assert_eq!(inverse_branch(1.0, 3, p), 1.0 - 3.0 / 4.0);
    }

    #[test]
    fn extension_hand_examples() {
        let p = params(2);
        let fwd = extension_map(ExtendedPoint::new(0.5, 0.0).unwrap(), p).unwrap();
        assert_eq!((fwd.x, fwd.y), (0.0, 0.5));
        let back = extension_inverse(ExtendedPoint::new(0.0, 0.5).unwrap(), p).unwrap();
        assert_eq!((back.x, back.y), (0.5, 0.0));
        let origin = extension_map(ExtendedPoint::new(0.0, 0.0).unwrap(), p).unwrap();
        assert_eq!((origin.x, origin.y), (0.0, 0.0));
    }

    #[test]
    fn bijectivity_on_random_points() {
        // A round trip through branch i loses ~i^2 * eps in floats, so points
        // whose digit would exceed the cap count as boundary neighborhoods
        // and are skipped, exactly like a DigitOverflow.
        let p = params(3).with_digit_cap(768);
        let mut rng = StdRng::seed_from_u64(2024);
        let mut worst = 0.0f64;
        let mut kept = 0u32;
        for _ in 0..10_000 {
            let x = rng.gen::<f64>() * (1.0 - 1e-9);
            let y = rng.gen::<f64>() * (1.0 - 1e-9);
            let pt = ExtendedPoint::new(x, y).unwrap();
            let Ok(fwd) = extension_map(pt, p) else {
                continue;
            };
            let Ok(rt) = extension_inverse(fwd, p) else {
                continue;
            };
            let Ok(bwd) = extension_inverse(pt, p) else {
                continue;
            };
            let Ok(rt2) = extension_map(bwd, p) else {
                continue;
            };
            kept += 1;
            worst = worst.max((rt.x - x).abs().max((rt.y - y).abs()));
            worst = worst.max((rt2.x - x).abs().max((rt2.y - y).abs()));
        }
        assert!(kept > 9_900, "too many boundary skips: kept {kept}");
        assert!(worst < 1e-10, "worst round-trip deviation {worst:e}");
    }

    #[test]
    fn extended_digits_satisfy_index_identities() {
        let p = params(2);
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let x = rng.gen::<f64>() * 0.999;
            let y = rng.gen::<f64>() * 0.999;
            let pt = ExtendedPoint::new(x, y).unwrap();
            let ax = expand(x, 4, p).unwrap().digits;
            let ay = expand(y, 4, p).unwrap().digits;
            // positive indices read the x-expansion, zero and negative the y's
            for (idx, expected) in [(1i64, ax[0]), (2, ax[1]), (3, ax[2])] {
                assert_eq!(extended_digit(pt, idx, p).unwrap(), expected);
            }
            assert_eq!(extended_digit(pt, 0, p).unwrap(), ay[0]);
            for (idx, expected) in [(-1i64, ay[1]), (-2, ay[2]), (-3, ay[3])] {
                assert_eq!(extended_digit(pt, idx, p).unwrap(), expected);
            }
        }
    }

    #[test]
    fn markov_chain_examples() {
        let p = params(2);
        // All-minimal digits from seed 0 stay at the fixed point.
        let d = DigitSequence::all_min(6, p);
        for st in markov_chain(0.0, &d) {
            assert_eq!(st.s, 0.0);
        }
        // Single digit from seed 1: s_1 = 1 - N/(i+1).
        for i in 2..10u64 {
            let d = DigitSequence::new(vec![i], p).unwrap();
            let s1 = markov_chain(1.0, &d)[1].s;
            assert!((s1 - (1.0 - 2.0 / (i as f64 + 1.0))).abs() < 1e-15);
        }
    }

    #[test]
    fn markov_states_match_reversed_word_value() {
        let mut rng = StdRng::seed_from_u64(77);
        for &n in &[2u64, 3, 5] {
            let p = params(n);
            for _ in 0..200 {
                let len = rng.gen_range(2..=8);
                let word: Vec<u64> = (0..len).map(|_| n + rng.gen_range(0..25)).collect();
                let t: f64 = rng.gen();
                let d = DigitSequence::new(word.clone(), p).unwrap();
                let states = markov_chain(t, &d);
                for m in 2..=len {
                    // s_m = [a_m, ..., a_2, a_1 + t - 1]_R
                    let mut entries: Vec<f64> = word[..m].iter().rev().map(|&a| a as f64).collect();
                    *entries.last_mut().unwrap() = word[0] as f64 + t - 1.0;
                    let direct = crate::cf::finite_value(&entries, p);
                    assert!(
                        (states[m].s - direct).abs() < 1e-12,
                        "N={n} word={word:?} t={t} m={m}"
                    );
                }
                assert!(states.iter().all(|st| (0.0..=1.0).contains(&st.s)));
            }
        }
    }

    #[test]
    fn transition_prob_examples() {
        let p = params(5);
        assert!((transition_prob(0.0, 5, p).unwrap() - 0.2).abs() < 1e-15);
        assert!((transition_prob(1.0, 5, p).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(transition_prob(0.5, 4, p).is_err());
        let mut s = 0.0;
        for i in 5..=20_000u64 {
            s += transition_prob(0.37, i, p).unwrap();
        }
        s += crate::transfer::branch_weight_tail(0.37, 20_000, p);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn markov_distribution_matches_cylinder_weights() {
        // Stepwise chain propagation and the cylinder-weight product give the
        // same law of s_n: zero total-variation gap on the truncated support.
        for &n in &[2u64, 3] {
            let p = params(n);
            let cutoff = 50u64;
            let t = 0.5;
            let mut tv = 0.0f64;
            let mut word = Vec::new();
            dfs_tv(n, cutoff, 4, t, t, 1.0, p, &mut word, &mut tv);
            assert!(tv < 1e-12, "N={n}: tv={tv:e}");
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs_tv(
        n: u64,
        cutoff: u64,
        depth: usize,
        t: f64,
        s: f64,
        w: f64,
        p: CfParams,
        word: &mut Vec<u64>,
        tv: &mut f64,
    ) {
        if depth == 0 {
            let d = DigitSequence::new(word.clone(), p).unwrap();
            *tv += 0.5 * (w - cylinder_weight(&d, t)).abs();
            let z = markov_final_state(t, &d);
            assert!((0.0..=1.0).contains(&z));
            return;
        }
        for i in n..=cutoff {
            word.push(i);
            let step = transition_prob(s, i, p).unwrap();
            dfs_tv(
                n,
                cutoff,
                depth - 1,
                t,
                inverse_branch(s, i, p),
                w * step,
                p,
                word,
                tv,
            );
            word.pop();
        }
    }

    #[test]
    fn preservation_residual_whole_square() {
        let m = MeasureParams::new(params(2));
        let r = rho_bar_preservation_residual((0.0, 1.0), (0.0, 1.0), &m, 10_000, None).unwrap();
        assert!(r < 1e-12, "residual {r:e}");
    }

    #[test]
    fn preservation_residual_matches_invariance_on_strips() {
        let m = MeasureParams::new(params(2));
        for &x in &[0.25, 0.5, 0.8] {
            let strip =
                rho_bar_preservation_residual((0.0, x), (0.0, 1.0), &m, 100_000, None).unwrap();
            let inv = invariance_residual(x, &m, 100_000, None).unwrap();
            assert!(
                (strip - inv).abs() < 1e-12,
                "x={x}: strip {strip:e} vs invariance {inv:e}"
            );
        }
    }

    #[test]
    fn preservation_residual_generic_rectangles() {
        for &n in &[2u64, 3] {
            let m = MeasureParams::new(params(n));
            let mut rng = StdRng::seed_from_u64(123);
            for _ in 0..20 {
                let mut xs = [rng.gen::<f64>(), rng.gen::<f64>()];
                let mut ys = [rng.gen::<f64>() * 0.999, rng.gen::<f64>() * 0.999];
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let r =
                    rho_bar_preservation_residual((xs[0], xs[1]), (ys[0], ys[1]), &m, 10_000, None)
                        .unwrap();
                assert!(r < 1e-8, "N={n} rect {xs:?}x{ys:?}: residual {r:e}");
            }
        }
    }

    #[test]
    fn preservation_guard_fires_when_truncation_misses_branches() {
        let m = MeasureParams::new(params(2));
        // y2 = 0.999 needs digits up to ~2000; a truncation of 100 cannot cover them.
        assert!(matches!(
            rho_bar_preservation_residual((0.0, 0.5), (0.0, 0.999), &m, 100, None),
            Err(CfError::TruncationTooCoarse { .. })
        ));
    }
}
