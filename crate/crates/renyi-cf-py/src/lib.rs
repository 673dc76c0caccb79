//! Python bindings for the core library: map iteration, exact expansions and
//! convergents, measures, the transfer operator, and the distribution
//! error-term reports.

// fires inside the #[pyfunction] macro expansion on this pyo3 version
#![allow(clippy::useless_conversion)]

use num_bigint::BigInt;
use pyo3::exceptions::{PyOverflowError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use renyi_cf::cf;
use renyi_cf::error::CfError;
use renyi_cf::extension;
use renyi_cf::gauss_kuzmin::{self, ExactOptions, McOptions, Method, SupErrorOptions};
use renyi_cf::measures::{self, ConditionalParam, MeasureParams};
use renyi_cf::transfer::{self, PfoOptions, Weighting};

fn to_py_err(err: CfError) -> PyErr {
    match err {
        CfError::DigitOverflow { .. } => PyOverflowError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn params(n: u64) -> PyResult<cf::CfParams> {
    cf::CfParams::new(n).map_err(to_py_err)
}

fn measure(n: u64) -> PyResult<MeasureParams> {
    Ok(MeasureParams::new(params(n)?))
}

fn digit_sequence(digits: Vec<u64>, n: u64) -> PyResult<cf::DigitSequence> {
    cf::DigitSequence::new(digits, params(n)?).map_err(to_py_err)
}

/// One application of the map.
#[pyfunction]
fn renyi_map(x: f64, n: u64) -> PyResult<f64> {
    Ok(cf::renyi_map(x, params(n)?))
}

/// First digit of `x`.
#[pyfunction]
fn digit(x: f64, n: u64) -> PyResult<u64> {
    cf::digit(x, params(n)?).map_err(to_py_err)
}

/// First `count` digits of `x`, plus the termination step if the orbit hit 1.
#[pyfunction]
fn expand(x: f64, count: usize, n: u64) -> PyResult<(Vec<u64>, Option<usize>)> {
    let e = cf::expand(x, count, params(n)?).map_err(to_py_err)?;
    Ok((e.digits, e.terminated_at))
}

/// Exact expansion of the rational `num/den`.
#[pyfunction]
fn expand_rational(
    num: i64,
    den: i64,
    count: usize,
    n: u64,
) -> PyResult<(Vec<u64>, Option<usize>)> {
    if den == 0 {
        return Err(PyValueError::new_err("zero denominator"));
    }
    let x = num_rational::BigRational::new(BigInt::from(num), BigInt::from(den));
    let e = cf::expand_rational(&x, count, params(n)?).map_err(to_py_err)?;
    Ok((e.digits, e.terminated_at))
}

/// Exact convergents `(p_k, q_k)` of a digit word, as Python big integers.
#[pyfunction]
fn convergents(digits: Vec<u64>, n: u64) -> PyResult<Vec<(BigInt, BigInt)>> {
    let d = digit_sequence(digits, n)?;
    Ok(cf::convergents(&d)
        .into_iter()
        .map(|c| (c.p, c.q))
        .collect())
}

/// Exact cylinder endpoints of a digit word, as `(p, q)` fraction pairs.
#[pyfunction]
fn cylinder(digits: Vec<u64>, n: u64) -> PyResult<((BigInt, BigInt), (BigInt, BigInt))> {
    let d = digit_sequence(digits, n)?;
    let c = cf::cylinder(&d);
    Ok((
        (c.low.numer().clone(), c.low.denom().clone()),
        (c.high.numer().clone(), c.high.denom().clone()),
    ))
}

/// Inverse branch `u_i(x) = 1 - N/(x+i)`.
#[pyfunction]
fn inverse_branch(x: f64, i: u64, n: u64) -> PyResult<f64> {
    Ok(transfer::inverse_branch(x, i, params(n)?))
}

/// Invariant-measure CDF.
#[pyfunction]
fn rho_cdf(x: f64, n: u64) -> PyResult<f64> {
    Ok(measures::rho_cdf(x, &measure(n)?))
}

/// Extended-measure CDF, also the limit law of the error term.
#[pyfunction]
fn rho_bar_cdf(x: f64, y: f64, n: u64) -> PyResult<f64> {
    Ok(measures::rho_bar_cdf(x, y, &measure(n)?))
}

/// Conditional-measure CDF with seed `t`.
#[pyfunction]
fn rho_t_cdf(x: f64, t: f64, n: u64) -> PyResult<f64> {
    let cond = ConditionalParam::new(t).map_err(to_py_err)?;
    Ok(measures::rho_t_cdf(x, cond, &measure(n)?))
}

/// Inverse-CDF sampler of the conditional measure.
#[pyfunction]
fn sample_rho_t(u: f64, t: f64, n: u64) -> PyResult<f64> {
    let cond = ConditionalParam::new(t).map_err(to_py_err)?;
    Ok(measures::sample_rho_t(u, cond, &measure(n)?))
}

/// `|rho(R^{-1}[0,x]) - rho([0,x])|` with the analytic branch tail.
#[pyfunction]
#[pyo3(signature = (x, n, cutoff = 100_000))]
fn invariance_residual(x: f64, n: u64, cutoff: u64) -> PyResult<f64> {
    measures::invariance_residual(x, &measure(n)?, cutoff, None).map_err(to_py_err)
}

/// Variation constant `K_N`.
#[pyfunction]
fn k_constant(n: u64) -> PyResult<f64> {
    Ok(transfer::k_constant(params(n)?))
}

/// Per-step contraction factor `1/N + K_N`.
#[pyfunction]
fn contraction_factor(n: u64) -> PyResult<f64> {
    Ok(transfer::contraction_factor(params(n)?))
}

/// Transition weight `P^i_N(s)`.
#[pyfunction]
fn transition_prob(s: f64, i: u64, n: u64) -> PyResult<f64> {
    extension::transition_prob(s, i, params(n)?).map_err(to_py_err)
}

/// Conditional-measure weight of the cylinder of a digit word.
#[pyfunction]
fn cylinder_weight(digits: Vec<u64>, t: f64, n: u64) -> PyResult<f64> {
    Ok(transfer::cylinder_weight(&digit_sequence(digits, n)?, t))
}

/// States `s_0..s_k` of the past-coordinate chain driven by a digit word.
#[pyfunction]
fn markov_chain(t: f64, digits: Vec<u64>, n: u64) -> PyResult<Vec<f64>> {
    let d = digit_sequence(digits, n)?;
    Ok(extension::markov_chain(t, &d)
        .into_iter()
        .map(|s| s.s)
        .collect())
}

/// Forward step of the two-dimensional natural extension.
#[pyfunction]
fn extension_map(x: f64, y: f64, n: u64) -> PyResult<(f64, f64)> {
    let pt = extension::ExtendedPoint::new(x, y).map_err(to_py_err)?;
    let out = extension::extension_map(pt, params(n)?).map_err(to_py_err)?;
    Ok((out.x, out.y))
}

/// Inverse step of the two-dimensional natural extension.
#[pyfunction]
fn extension_inverse(x: f64, y: f64, n: u64) -> PyResult<(f64, f64)> {
    let pt = extension::ExtendedPoint::new(x, y).map_err(to_py_err)?;
    let out = extension::extension_inverse(pt, params(n)?).map_err(to_py_err)?;
    Ok((out.x, out.y))
}

/// One transfer-operator application to a piecewise-linear function given by
/// `(breakpoints, values)`; returns the new grid, values, and the certified
/// sup/variation errors of the analytic tail substitution.
#[pyfunction]
#[pyo3(signature = (breakpoints, values, n, cutoff = None, output_points = 1025, lebesgue = false))]
fn pfo_apply(
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    n: u64,
    cutoff: Option<u64>,
    output_points: usize,
    lebesgue: bool,
) -> PyResult<(Vec<f64>, Vec<f64>, f64, f64)> {
    let f = transfer::GridFunction::new(breakpoints, values).map_err(to_py_err)?;
    let opts = PfoOptions {
        truncation: cutoff,
        output_points,
        tolerance: None,
        weighting: if lebesgue {
            Weighting::Lebesgue
        } else {
            Weighting::Invariant
        },
    };
    let res = transfer::pfo_apply(&f, &measure(n)?, &opts).map_err(to_py_err)?;
    Ok((
        res.grid.breakpoints().to_vec(),
        res.grid.values().to_vec(),
        res.sup_cert,
        res.var_cert,
    ))
}

/// Exact total variation of a piecewise-linear function.
#[pyfunction]
fn variation(breakpoints: Vec<f64>, values: Vec<f64>) -> PyResult<f64> {
    Ok(transfer::GridFunction::new(breakpoints, values)
        .map_err(to_py_err)?
        .variation())
}

/// Integral of a piecewise-linear function against the invariant measure.
#[pyfunction]
fn pfo_fixed_functional(breakpoints: Vec<f64>, values: Vec<f64>, n: u64) -> PyResult<f64> {
    let f = transfer::GridFunction::new(breakpoints, values).map_err(to_py_err)?;
    Ok(transfer::pfo_fixed_functional(&f, &measure(n)?))
}

/// Rate-bound table rows `(N, 1/N, 1/N + K_N)`.
#[pyfunction]
fn bounds_table(ns: Vec<u64>) -> PyResult<Vec<(u64, f64, f64)>> {
    let rows = gauss_kuzmin::bounds_table(&ns).map_err(to_py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.n_param, r.lower, r.upper))
        .collect())
}

fn report_to_dict<'py>(
    py: Python<'py>,
    r: &gauss_kuzmin::ErrorReport,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("N", r.n_param)?;
    d.set_item("t", r.t)?;
    d.set_item("n", r.steps)?;
    d.set_item("method", r.method.as_str())?;
    d.set_item("sup_error", r.sup_error)?;
    d.set_item("lower_bound", r.lower_bound)?;
    d.set_item("upper_bound", r.upper_bound)?;
    d.set_item("tolerance", r.tolerance)?;
    d.set_item("argmax", r.argmax)?;
    d.set_item("words_enumerated", r.words_enumerated.map(|w| w as u64))?;
    d.set_item("samples", r.samples)?;
    Ok(d)
}

/// Supremum of the distribution error term with the sandwich bounds.
#[pyfunction]
#[pyo3(signature = (n, t, steps, method = "exact", cutoff = 60, resolution = 513,
                    samples = 1_000_000, seed = 1, word_budget = 100_000_000))]
#[allow(clippy::too_many_arguments)]
fn sup_error<'py>(
    py: Python<'py>,
    n: u64,
    t: f64,
    steps: usize,
    method: &str,
    cutoff: u64,
    resolution: usize,
    samples: u64,
    seed: u64,
    word_budget: u128,
) -> PyResult<Bound<'py, PyDict>> {
    let method = match method {
        "exact" | "exact-enumeration" => Method::ExactEnumeration,
        "mc" | "monte-carlo" => Method::MonteCarlo,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let opts = SupErrorOptions {
        method,
        resolution,
        exact: ExactOptions {
            digit_cutoff: cutoff,
            word_budget,
            ..ExactOptions::default()
        },
        mc: McOptions {
            samples,
            seed,
            confidence_delta: 0.01,
        },
    };
    let report = gauss_kuzmin::sup_error(t, steps, &measure(n)?, &opts).map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// Limit law `G(x, y)` of the joint distribution.
#[pyfunction]
fn limit_cdf(x: f64, y: f64, n: u64) -> PyResult<f64> {
    Ok(gauss_kuzmin::limit_cdf(x, y, &measure(n)?))
}

#[pymodule]
fn renyi_cf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(renyi_map, m)?)?;
    m.add_function(wrap_pyfunction!(digit, m)?)?;
    m.add_function(wrap_pyfunction!(expand, m)?)?;
    m.add_function(wrap_pyfunction!(expand_rational, m)?)?;
    m.add_function(wrap_pyfunction!(convergents, m)?)?;
    m.add_function(wrap_pyfunction!(cylinder, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_branch, m)?)?;
    m.add_function(wrap_pyfunction!(rho_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(rho_bar_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(rho_t_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(sample_rho_t, m)?)?;
    m.add_function(wrap_pyfunction!(invariance_residual, m)?)?;
    m.add_function(wrap_pyfunction!(k_constant, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_factor, m)?)?;
    m.add_function(wrap_pyfunction!(transition_prob, m)?)?;
    m.add_function(wrap_pyfunction!(cylinder_weight, m)?)?;
    m.add_function(wrap_pyfunction!(markov_chain, m)?)?;
    m.add_function(wrap_pyfunction!(extension_map, m)?)?;
    m.add_function(wrap_pyfunction!(extension_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(pfo_apply, m)?)?;
    m.add_function(wrap_pyfunction!(variation, m)?)?;
    m.add_function(wrap_pyfunction!(pfo_fixed_functional, m)?)?;
    m.add_function(wrap_pyfunction!(bounds_table, m)?)?;
    m.add_function(wrap_pyfunction!(sup_error, m)?)?;
    m.add_function(wrap_pyfunction!(limit_cdf, m)?)?;
    m.add("SCHEMA_VERSION", renyi_cf::report::SCHEMA_VERSION)?;
    Ok(())
}
