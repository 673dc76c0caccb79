//! Command-line front end: run configuration, dispatch, and artifact files.
//!
//! Every run emits one CSV or JSON document (stdout or `--output`). JSON
//! documents are `{config, schema, results, certificates}`; CSV documents
//! carry the schema version and a full configuration echo in `#` comments.
//! Given the same configuration and seed, output files are byte-identical.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::BigRational;

use crate::cf::{self, CfParams, DigitSequence};
use crate::error::{CfError, Result};
use crate::extension::{self, ExtendedPoint};
use crate::gauss_kuzmin::{self, ExactOptions, McOptions, Method, SupErrorOptions};
use crate::measures::{self, ConditionalParam, MeasureParams};
use crate::report::{CsvCell, CsvDoc, JsonValue, SCHEMA_VERSION};
use crate::transfer::{self, GridFunction, PfoOptions, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Mc,
}

impl MethodArg {
    fn to_method(self) -> Method {
        match self {
            MethodArg::Exact => Method::ExactEnumeration,
            MethodArg::Mc => Method::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Invariant,
    Lebesgue,
}

/// A point given either exactly as `p/q` or as a decimal (parsed as the
/// nearest binary float).
#[derive(Debug, Clone)]
pub enum PointInput {
    Rational(BigRational),
    Float(f64),
}

impl PointInput {
    pub fn as_f64(&self) -> f64 {
        match self {
            PointInput::Rational(r) => num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN),
            PointInput::Float(v) => *v,
        }
    }
}

impl FromStr for PointInput {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.contains('/') {
            let r = BigRational::from_str(s).map_err(|e| format!("bad rational '{s}': {e}"))?;
            Ok(PointInput::Rational(r))
        } else {
            let v: f64 = s.parse().map_err(|e| format!("bad number '{s}': {e}"))?;
            Ok(PointInput::Float(v))
        }
    }
}

/// Full configuration of one run.
#[derive(Debug, Parser)]
#[command(
    name = "renyi-cf",
    version,
    about = "Renyi-type continued fractions: expansions, measures, transfer operator, and convergence-rate reports"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Worker threads; 0 picks the machine default. Falls back to the
    /// RENYI_CF_THREADS environment variable.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Digit expansion of a point with convergents and error bounds.
    Expand {
        #[arg(long = "N")]
        n: u64,
        /// Point in [0,1]; `p/q` is honored exactly.
        #[arg(long)]
        x: PointInput,
        /// Number of digits.
        #[arg(long = "n", default_value_t = 10)]
        count: usize,
    },
    /// Convergents of an explicit digit word.
    Convergents {
        #[arg(long = "N")]
        n: u64,
        /// Comma-separated digits, each >= N.
        #[arg(long, value_delimiter = ',')]
        digits: Vec<u64>,
    },
    /// Exact cylinder interval of a digit word.
    Cylinder {
        #[arg(long = "N")]
        n: u64,
        #[arg(long, value_delimiter = ',')]
        digits: Vec<u64>,
    },
    /// Distribution functions and the invariance residual at a point.
    Measure {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        x: f64,
        /// Second coordinate for the extended measure.
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// Conditional seed.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Branch truncation for the invariance residual.
        #[arg(long, default_value_t = 100_000)]
        cutoff: u64,
    },
    /// Transfer-operator iterates with variation/deviation bound columns.
    Pfo {
        #[arg(long = "N")]
        n: u64,
        /// Number of iterates.
        #[arg(long = "n", default_value_t = 5)]
        steps: usize,
        /// Input function.
        #[arg(long, default_value = "ramp")]
        f: String,
        /// Output grid points per iterate.
        #[arg(long, default_value_t = 1025)]
        grid: usize,
        /// Branch truncation digit.
        #[arg(long)]
        cutoff: Option<u64>,
        #[arg(long, value_enum, default_value_t = WeightingArg::Invariant)]
        weighting: WeightingArg,
        /// Directory for per-iterate grid-function CSV files.
        #[arg(long)]
        emit_grids: Option<PathBuf>,
    },
    /// Orbit of the two-dimensional natural extension.
    Orbit2d {
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Walk the inverse map instead.
        #[arg(long, default_value_t = false)]
        inverse: bool,
    },
    /// Distribution error term against the limit law, with sandwich bounds.
    Gk {
        #[arg(long = "N")]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Iteration count.
        #[arg(long = "n", default_value_t = 3)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        /// Digit cutoff for exact enumeration.
        #[arg(long, default_value_t = 60)]
        cutoff: u64,
        /// Uniform grid resolution per axis.
        #[arg(long, default_value_t = 513)]
        grid: usize,
        /// Monte-Carlo sample count.
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// RNG seed; required for the Monte-Carlo method.
        #[arg(long)]
        seed: Option<u64>,
        /// Word budget for exact enumeration.
        #[arg(long, default_value_t = 100_000_000)]
        budget: u128,
    },
    /// Convergence-rate bound table over a list of parameters.
    Table {
        /// Comma-separated parameter list.
        #[arg(long = "N", value_delimiter = ',')]
        n: Vec<u64>,
    },
    /// Error-term reports over a range of iteration counts plus a fitted rate.
    Rate {
        #[arg(long = "N")]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        #[arg(long, default_value_t = 1)]
        n_from: usize,
        #[arg(long, default_value_t = 5)]
        n_to: usize,
        #[arg(long, default_value_t = 60)]
        cutoff: u64,
        #[arg(long, default_value_t = 257)]
        grid: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000_000)]
        budget: u128,
    },
}

/// Rendered outcome of a run: the main document plus any extra files written.
#[derive(Debug)]
pub struct RunArtifact {
    pub document: String,
    pub extra_files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl CfError {
    /// Stable machine-readable error kind for the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            CfError::InvalidParameter(_) => "InvalidParameter",
            CfError::DigitOverflow { .. } => "DigitOverflow",
            CfError::TruncationTooCoarse { .. } => "TruncationTooCoarse",
            CfError::ComplexityGuard { .. } => "ComplexityGuard",
            CfError::InsufficientData(_) => "InsufficientData",
        }
    }
}

/// `{"error": {...}}` emitted on stderr when a run fails.
pub fn error_object(err: &CfError) -> String {
    JsonValue::object(vec![(
        "error",
        JsonValue::object(vec![
            ("kind", JsonValue::Str(err.kind().into())),
            ("message", JsonValue::Str(err.to_string())),
            ("schema", JsonValue::Str(SCHEMA_VERSION.into())),
        ]),
    )])
    .render()
}

fn resolve_threads(config: &RunConfig) -> usize {
    config.threads.unwrap_or_else(|| {
        std::env::var("RENYI_CF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    })
}

/// Install the rayon pool once; 0 keeps the library default.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

struct ConfigEcho {
    pairs: Vec<(String, JsonValue)>,
}

impl ConfigEcho {
    fn new(command: &str, format: Format) -> Self {
        ConfigEcho {
            pairs: vec![
                ("command".into(), JsonValue::Str(command.into())),
                (
                    "format".into(),
                    JsonValue::Str(
                        match format {
                            Format::Csv => "csv",
                            Format::Json => "json",
                        }
                        .into(),
                    ),
                ),
            ],
        }
    }

    fn push(&mut self, key: &str, value: JsonValue) {
        self.pairs.push((key.into(), value));
    }

    fn csv_comment(&self) -> String {
        let mut line = String::from("config:");
        for (k, v) in &self.pairs {
            let mut rendered = String::new();
            v.write(&mut rendered);
            let _ = write!(line, " {k}={}", rendered.trim_matches('"'));
        }
        line
    }

    fn to_json(&self) -> JsonValue {
        JsonValue::Object(self.pairs.clone())
    }
}

fn document(
    format: Format,
    echo: &ConfigEcho,
    csv: CsvDoc,
    results: JsonValue,
    certificates: JsonValue,
) -> String {
    match format {
        Format::Csv => {
            let mut doc = csv;
            doc.comments.insert(1, echo.csv_comment());
            doc.render()
        }
        Format::Json => JsonValue::object(vec![
            ("config", echo.to_json()),
            ("schema", JsonValue::Str(SCHEMA_VERSION.into())),
            ("results", results),
            ("certificates", certificates),
        ])
        .render(),
    }
}

/// Execute one configured run and render its artifact.
pub fn run(config: &RunConfig) -> Result<RunArtifact> {
    init_threads(resolve_threads(config));
    let format = config.format;
    let mut warnings = Vec::new();
    let mut extra_files = Vec::new();

    let doc = match &config.command {
        Command::Expand { n, x, count } => run_expand(*n, x, *count, format)?,
        Command::Convergents { n, digits } => run_convergents(*n, digits, format)?,
        Command::Cylinder { n, digits } => run_cylinder(*n, digits, format)?,
        Command::Measure { n, x, y, t, cutoff } => run_measure(*n, *x, *y, *t, *cutoff, format)?,
        Command::Pfo {
            n,
            steps,
            f,
            grid,
            cutoff,
            weighting,
            emit_grids,
        } => run_pfo(
            *n,
            *steps,
            f,
            *grid,
            *cutoff,
            *weighting,
            emit_grids.as_deref(),
            format,
            &mut extra_files,
        )?,
        Command::Orbit2d {
            n,
            x,
            y,
            steps,
            inverse,
        } => run_orbit2d(*n, *x, *y, *steps, *inverse, format)?,
        Command::Gk {
            n,
            t,
            steps,
            method,
            cutoff,
            grid,
            samples,
            seed,
            budget,
        } => run_gk(
            *n,
            *t,
            *steps,
            *method,
            *cutoff,
            *grid,
            *samples,
            *seed,
            *budget,
            format,
            &mut warnings,
        )?,
        Command::Table { n } => run_table(n, format)?,
        Command::Rate {
            n,
            t,
            method,
            n_from,
            n_to,
            cutoff,
            grid,
            samples,
            seed,
            budget,
        } => run_rate(
            *n, *t, *method, *n_from, *n_to, *cutoff, *grid, *samples, *seed, *budget, format,
        )?,
    };

    Ok(RunArtifact {
        document: doc,
        extra_files,
        warnings,
    })
}

fn convergent_rows(
    digits: &DigitSequence,
    x: Option<&PointInput>,
    params: CfParams,
) -> Result<(CsvDoc, Vec<JsonValue>)> {
    let pairs = cf::convergents(digits);
    let mut csv = CsvDoc::new(&[
        "order",
        "digit",
        "p",
        "q",
        "value",
        "abs_error",
        "error_bound",
        "determinant_residual",
    ]);
    let mut json_rows = Vec::new();
    for (k, pair) in pairs.iter().enumerate() {
        let digit_cell = if k == 0 {
            CsvCell::Empty
        } else {
            CsvCell::UInt(digits.digits()[k - 1] as u128)
        };
        let (err, bound, residual) = if k == 0 {
            (None, None, None)
        } else {
            let residual = cf::determinant_residual(&pairs[k - 1], pair, params)?;
            let (err, bound) = match x {
                Some(p) => {
                    let (e, b) = cf::approximation_bound(p.as_f64(), &pairs[k - 1], pair, params)?;
                    (Some(e), Some(b))
                }
                None => (None, None),
            };
            (err, bound, Some(residual))
        };
        csv.row(vec![
            CsvCell::Int(k as i64),
            digit_cell,
            CsvCell::Str(pair.p.to_string()),
            CsvCell::Str(pair.q.to_string()),
            CsvCell::Float(pair.value_f64()),
            err.map_or(CsvCell::Empty, CsvCell::Float),
            bound.map_or(CsvCell::Empty, CsvCell::Float),
            residual
                .as_ref()
                .map_or(CsvCell::Empty, |r| CsvCell::Str(r.to_string())),
        ]);
        json_rows.push(JsonValue::object(vec![
            ("order", JsonValue::Int(k as i64)),
            (
                "digit",
                if k == 0 {
                    JsonValue::Null
                } else {
                    JsonValue::UInt(digits.digits()[k - 1] as u128)
                },
            ),
            ("p", JsonValue::Str(pair.p.to_string())),
            ("q", JsonValue::Str(pair.q.to_string())),
            ("value", JsonValue::Float(pair.value_f64())),
            ("abs_error", err.map_or(JsonValue::Null, JsonValue::Float)),
            (
                "error_bound",
                bound.map_or(JsonValue::Null, JsonValue::Float),
            ),
            (
                "determinant_residual",
                residual.map_or(JsonValue::Null, |r| JsonValue::Str(r.to_string())),
            ),
        ]));
    }
    Ok((csv, json_rows))
}

fn run_expand(n: u64, x: &PointInput, count: usize, format: Format) -> Result<String> {
    let params = CfParams::new(n)?;
    let expansion = match x {
        PointInput::Rational(r) => cf::expand_rational(r, count, params)?,
        PointInput::Float(v) => cf::expand(*v, count, params)?,
    };
    let digits = DigitSequence::new(expansion.digits.clone(), params)?;
    let (mut csv, json_rows) = convergent_rows(&digits, Some(x), params)?;

    let mut echo = ConfigEcho::new("expand", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push(
        "x",
        JsonValue::Str(match x {
            PointInput::Rational(r) => r.to_string(),
            PointInput::Float(v) => format!("{v}"),
        }),
    );
    echo.push("n", JsonValue::UInt(count as u128));
    if let Some(k) = expansion.terminated_at {
        csv.comment(format!("terminated_at: {k}"));
    }
    let results = JsonValue::object(vec![
        (
            "digits",
            JsonValue::Array(
                expansion
                    .digits
                    .iter()
                    .map(|&d| JsonValue::UInt(d as u128))
                    .collect(),
            ),
        ),
        (
            "terminated_at",
            expansion
                .terminated_at
                .map_or(JsonValue::Null, |k| JsonValue::UInt(k as u128)),
        ),
        ("convergents", JsonValue::Array(json_rows)),
    ]);
    Ok(document(
        format,
        &echo,
        csv,
        results,
        JsonValue::object(vec![]),
    ))
}

fn run_convergents(n: u64, digit_lists: &[u64], format: Format) -> Result<String> {
    let params = CfParams::new(n)?;
    let digits = DigitSequence::new(digit_lists.to_vec(), params)?;
    let (csv, json_rows) = convergent_rows(&digits, None, params)?;
    let mut echo = ConfigEcho::new("convergents", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push(
        "digits",
        JsonValue::Str(
            digit_lists
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
    );
    let results = JsonValue::object(vec![("convergents", JsonValue::Array(json_rows))]);
    Ok(document(
        format,
        &echo,
        csv,
        results,
        JsonValue::object(vec![]),
    ))
}

fn run_cylinder(n: u64, digit_list: &[u64], format: Format) -> Result<String> {
    let params = CfParams::new(n)?;
    let digits = DigitSequence::new(digit_list.to_vec(), params)?;
    let cyl = cf::cylinder(&digits);
    let mut echo = ConfigEcho::new("cylinder", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push(
        "digits",
        JsonValue::Str(
            digit_list
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
    );
    let low_f = num_traits::ToPrimitive::to_f64(&cyl.low).unwrap_or(f64::NAN);
    let high_f = num_traits::ToPrimitive::to_f64(&cyl.high).unwrap_or(f64::NAN);
    let len_f = num_traits::ToPrimitive::to_f64(&cyl.length()).unwrap_or(f64::NAN);
    let mut csv = CsvDoc::new(&["low", "high", "low_f64", "high_f64", "length_f64"]);
    csv.row(vec![
        CsvCell::Str(cyl.low.to_string()),
        CsvCell::Str(cyl.high.to_string()),
        CsvCell::Float(low_f),
        CsvCell::Float(high_f),
        CsvCell::Float(len_f),
    ]);
    let results = JsonValue::object(vec![
        ("low", JsonValue::Str(cyl.low.to_string())),
        ("high", JsonValue::Str(cyl.high.to_string())),
        ("low_f64", JsonValue::Float(low_f)),
        ("high_f64", JsonValue::Float(high_f)),
        ("length_f64", JsonValue::Float(len_f)),
    ]);
    Ok(document(
        format,
        &echo,
        csv,
        results,
        JsonValue::object(vec![]),
    ))
}

fn run_measure(n: u64, x: f64, y: f64, t: f64, cutoff: u64, format: Format) -> Result<String> {
    let params = CfParams::new(n)?;
    let m = MeasureParams::new(params);
    let cond = ConditionalParam::new(t)?;
    let rho = measures::rho_cdf(x, &m);
    let rho_bar = measures::rho_bar_cdf(x, y, &m);
    let rho_t = measures::rho_t_cdf(x, cond, &m);
    let residual = measures::invariance_residual(x, &m, cutoff, None)?;

    let mut echo = ConfigEcho::new("measure", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push("x", JsonValue::Float(x));
    echo.push("y", JsonValue::Float(y));
    echo.push("t", JsonValue::Float(t));
    echo.push("cutoff", JsonValue::UInt(cutoff as u128));

    let mut csv = CsvDoc::new(&["rho_cdf", "rho_bar_cdf", "rho_t_cdf", "invariance_residual"]);
    csv.row(vec![
        CsvCell::Float(rho),
        CsvCell::Float(rho_bar),
        CsvCell::Float(rho_t),
        CsvCell::Float(residual),
    ]);
    let results = JsonValue::object(vec![
        ("rho_cdf", JsonValue::Float(rho)),
        ("rho_bar_cdf", JsonValue::Float(rho_bar)),
        ("rho_t_cdf", JsonValue::Float(rho_t)),
        ("invariance_residual", JsonValue::Float(residual)),
    ]);
    Ok(document(
        format,
        &echo,
        csv,
        results,
        JsonValue::object(vec![]),
    ))
}

fn input_function(name: &str, m: &MeasureParams) -> Result<GridFunction> {
    match name {
        "ramp" => Ok(GridFunction::ramp()),
        "tent" => GridFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0]),
        "density" => GridFunction::sample_uniform(4097, |x| m.density(x)),
        other => {
            if let Some(c) = other.strip_prefix("const:") {
                let v: f64 = c.parse().map_err(|_| {
                    CfError::InvalidParameter(format!("bad constant in --f {other}"))
                })?;
                Ok(GridFunction::constant(v))
            } else {
                Err(CfError::InvalidParameter(format!(
                    "unknown input function '{other}' (ramp, tent, density, const:<v>)"
                )))
            }
        }
    }
}

/// CSV form of a grid function: `breakpoint,value` rows.
pub fn grid_function_csv(g: &GridFunction, echo: Option<&str>) -> String {
    let mut doc = CsvDoc::new(&["breakpoint", "value"]);
    if let Some(line) = echo {
        doc.comment(line);
    }
    for (&b, &v) in g.breakpoints().iter().zip(g.values()) {
        doc.row(vec![CsvCell::Float(b), CsvCell::Float(v)]);
    }
    doc.render()
}

#[allow(clippy::too_many_arguments)]
fn run_pfo(
    n: u64,
    steps: usize,
    f_name: &str,
    grid: usize,
    cutoff: Option<u64>,
    weighting: WeightingArg,
    emit_grids: Option<&std::path::Path>,
    format: Format,
    extra_files: &mut Vec<PathBuf>,
) -> Result<String> {
    let params = CfParams::new(n)?;
    let m = MeasureParams::new(params);
    let f = input_function(f_name, &m)?;
    let opts = PfoOptions {
        truncation: cutoff,
        output_points: grid,
        tolerance: None,
        weighting: match weighting {
            WeightingArg::Invariant => Weighting::Invariant,
            WeightingArg::Lebesgue => Weighting::Lebesgue,
        },
    };
    // Bound columns carry the invariant-weighting contraction bounds; the
    // Lebesgue-weighted trace instead reports the deviation from its fixed
    // point, the invariant density, and leaves the bound columns empty.
    struct PfoRow {
        step: usize,
        variation: f64,
        sup_deviation: f64,
        var_bound: Option<f64>,
        dev_bound: Option<f64>,
        sup_cert: f64,
        var_cert: f64,
    }
    let rows: Vec<PfoRow> = match opts.weighting {
        Weighting::Invariant => transfer::contraction_report(&f, &m, steps, &opts)?
            .into_iter()
            .map(|r| PfoRow {
                step: r.step,
                variation: r.variation,
                sup_deviation: r.sup_deviation,
                var_bound: Some(r.var_bound),
                dev_bound: Some(r.dev_bound),
                sup_cert: r.sup_cert,
                var_cert: r.var_cert,
            })
            .collect(),
        Weighting::Lebesgue => {
            let mut out = Vec::with_capacity(steps);
            let mut cur = f.clone();
            let (mut sup_cert, mut var_cert) = (0.0, 0.0);
            for step in 1..=steps {
                let res = transfer::pfo_apply(&cur, &m, &opts)?;
                sup_cert += res.sup_cert;
                var_cert += res.var_cert;
                cur = res.grid;
                let dev = cur
                    .breakpoints()
                    .iter()
                    .zip(cur.values())
                    .fold(0.0f64, |mx, (&x, &v)| mx.max((v - m.density(x)).abs()));
                out.push(PfoRow {
                    step,
                    variation: cur.variation(),
                    sup_deviation: dev,
                    var_bound: None,
                    dev_bound: None,
                    sup_cert,
                    var_cert,
                });
            }
            out
        }
    };

    if let Some(dir) = emit_grids {
        std::fs::create_dir_all(dir)
            .map_err(|e| CfError::InvalidParameter(format!("cannot create {dir:?}: {e}")))?;
        // re-run the iteration to materialize each iterate
        let mut cur = f.clone();
        for step in 1..=steps {
            cur = transfer::pfo_apply(&cur, &m, &opts)?.grid;
            let path = dir.join(format!("iterate_{step:03}.csv"));
            std::fs::write(
                &path,
                grid_function_csv(&cur, Some(&format!("step: {step}"))),
            )
            .map_err(|e| CfError::InvalidParameter(format!("cannot write {path:?}: {e}")))?;
            extra_files.push(path);
        }
    }

    let mut echo = ConfigEcho::new("pfo", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push("n", JsonValue::UInt(steps as u128));
    echo.push("f", JsonValue::Str(f_name.into()));
    echo.push("grid", JsonValue::UInt(grid as u128));
    echo.push(
        "cutoff",
        JsonValue::UInt(cutoff.unwrap_or_else(|| transfer::default_truncation(params)) as u128),
    );
    echo.push(
        "weighting",
        JsonValue::Str(
            match weighting {
                WeightingArg::Invariant => "invariant",
                WeightingArg::Lebesgue => "lebesgue",
            }
            .into(),
        ),
    );

    let mut csv = CsvDoc::new(&[
        "step",
        "variation",
        "sup_deviation",
        "var_bound",
        "dev_bound",
        "sup_cert",
        "var_cert",
    ]);
    let mut json_rows = Vec::new();
    for row in &rows {
        csv.row(vec![
            CsvCell::Int(row.step as i64),
            CsvCell::Float(row.variation),
            CsvCell::Float(row.sup_deviation),
            row.var_bound.map_or(CsvCell::Empty, CsvCell::Float),
            row.dev_bound.map_or(CsvCell::Empty, CsvCell::Float),
            CsvCell::Float(row.sup_cert),
            CsvCell::Float(row.var_cert),
        ]);
        json_rows.push(JsonValue::object(vec![
            ("step", JsonValue::Int(row.step as i64)),
            ("variation", JsonValue::Float(row.variation)),
            ("sup_deviation", JsonValue::Float(row.sup_deviation)),
            (
                "var_bound",
                row.var_bound.map_or(JsonValue::Null, JsonValue::Float),
            ),
            (
                "dev_bound",
                row.dev_bound.map_or(JsonValue::Null, JsonValue::Float),
            ),
            ("sup_cert", JsonValue::Float(row.sup_cert)),
            ("var_cert", JsonValue::Float(row.var_cert)),
        ]));
    }
    let certificates = JsonValue::object(vec![
        (
            "sup_cert_total",
            JsonValue::Float(rows.last().map_or(0.0, |r| r.sup_cert)),
        ),
        (
            "var_cert_total",
            JsonValue::Float(rows.last().map_or(0.0, |r| r.var_cert)),
        ),
    ]);
    Ok(document(
        format,
        &echo,
        csv,
        JsonValue::object(vec![("iterates", JsonValue::Array(json_rows))]),
        certificates,
    ))
}

fn run_orbit2d(
    n: u64,
    x: f64,
    y: f64,
    steps: usize,
    inverse: bool,
    format: Format,
) -> Result<String> {
    let params = CfParams::new(n)?;
    let mut point = ExtendedPoint::new(x, y)?;
    let mut csv = CsvDoc::new(&["step", "x", "y", "digit"]);
    let mut json_rows = Vec::new();
    for step in 0..=steps {
        // the digit consumed moving from this state, when a move follows
        let digit = if step == steps {
            None
        } else if inverse {
            Some(cf::digit(point.y, params)?)
        } else {
            Some(cf::digit(point.x, params)?)
        };
        csv.row(vec![
            CsvCell::Int(step as i64),
            CsvCell::Float(point.x),
            CsvCell::Float(point.y),
            digit.map_or(CsvCell::Empty, |d| CsvCell::UInt(d as u128)),
        ]);
        json_rows.push(JsonValue::object(vec![
            ("step", JsonValue::Int(step as i64)),
            ("x", JsonValue::Float(point.x)),
            ("y", JsonValue::Float(point.y)),
            (
                "digit",
                digit.map_or(JsonValue::Null, |d| JsonValue::UInt(d as u128)),
            ),
        ]));
        if step < steps {
            point = if inverse {
                extension::extension_inverse(point, params)?
            } else {
                extension::extension_map(point, params)?
            };
        }
    }
    let mut echo = ConfigEcho::new("orbit2d", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push("x", JsonValue::Float(x));
    echo.push("y", JsonValue::Float(y));
    echo.push("steps", JsonValue::UInt(steps as u128));
    echo.push("inverse", JsonValue::Bool(inverse));
    Ok(document(
        format,
        &echo,
        csv,
        JsonValue::object(vec![("orbit", JsonValue::Array(json_rows))]),
        JsonValue::object(vec![]),
    ))
}

fn report_csv_row(r: &gauss_kuzmin::ErrorReport) -> Vec<CsvCell> {
    vec![
        CsvCell::UInt(r.n_param as u128),
        CsvCell::Float(r.t),
        CsvCell::Int(r.steps as i64),
        CsvCell::Str(r.method.as_str().into()),
        CsvCell::Float(r.sup_error),
        CsvCell::Float(r.lower_bound),
        CsvCell::Float(r.upper_bound),
        CsvCell::Float(r.tolerance),
        CsvCell::Float(r.argmax.0),
        CsvCell::Float(r.argmax.1),
    ]
}

const REPORT_HEADER: [&str; 10] = [
    "N",
    "t",
    "n",
    "method",
    "sup_error",
    "lower_bound",
    "upper_bound",
    "tolerance",
    "argmax_x",
    "argmax_y",
];

fn report_json(r: &gauss_kuzmin::ErrorReport) -> JsonValue {
    JsonValue::object(vec![
        ("N", JsonValue::UInt(r.n_param as u128)),
        ("t", JsonValue::Float(r.t)),
        ("n", JsonValue::Int(r.steps as i64)),
        ("method", JsonValue::Str(r.method.as_str().into())),
        ("sup_error", JsonValue::Float(r.sup_error)),
        ("lower_bound", JsonValue::Float(r.lower_bound)),
        ("upper_bound", JsonValue::Float(r.upper_bound)),
        ("tolerance", JsonValue::Float(r.tolerance)),
        (
            "argmax",
            JsonValue::Array(vec![
                JsonValue::Float(r.argmax.0),
                JsonValue::Float(r.argmax.1),
            ]),
        ),
    ])
}

fn report_certificates(r: &gauss_kuzmin::ErrorReport) -> JsonValue {
    JsonValue::object(vec![
        ("tolerance", JsonValue::Float(r.tolerance)),
        (
            "words_enumerated",
            r.words_enumerated.map_or(JsonValue::Null, JsonValue::UInt),
        ),
        (
            "samples",
            r.samples
                .map_or(JsonValue::Null, |s| JsonValue::UInt(s as u128)),
        ),
        (
            "discarded",
            r.discarded
                .map_or(JsonValue::Null, |d| JsonValue::UInt(d as u128)),
        ),
        (
            "refined_ordinates",
            r.refined_ordinates
                .map_or(JsonValue::Null, |c| JsonValue::UInt(c as u128)),
        ),
    ])
}

#[allow(clippy::too_many_arguments)]
fn sup_opts(
    method: Method,
    cutoff: u64,
    grid: usize,
    samples: u64,
    seed: Option<u64>,
    budget: u128,
) -> Result<SupErrorOptions> {
    if method == Method::MonteCarlo && seed.is_none() {
        return Err(CfError::InvalidParameter(
            "--seed is required for the monte-carlo method (reproducibility)".into(),
        ));
    }
    Ok(SupErrorOptions {
        method,
        resolution: grid,
        exact: ExactOptions {
            digit_cutoff: cutoff,
            word_budget: budget,
            ..ExactOptions::default()
        },
        mc: McOptions {
            samples,
            seed: seed.unwrap_or(0),
            confidence_delta: 0.01,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn run_gk(
    n: u64,
    t: f64,
    steps: usize,
    method: MethodArg,
    cutoff: u64,
    grid: usize,
    samples: u64,
    seed: Option<u64>,
    budget: u128,
    format: Format,
    warnings: &mut Vec<String>,
) -> Result<String> {
    let params = CfParams::new(n)?;
    let m = MeasureParams::new(params);
    let mut opts = sup_opts(method.to_method(), cutoff, grid, samples, seed, budget)?;
    let report = match gauss_kuzmin::sup_error(t, steps, &m, &opts) {
        Err(CfError::ComplexityGuard { words, budget })
            if opts.method == Method::ExactEnumeration =>
        {
            // the documented fallback: too many words, sample instead
            warnings.push(format!(
                "exact enumeration needs {words} words (budget {budget}); switching to monte-carlo"
            ));
            if seed.is_none() {
                return Err(CfError::InvalidParameter(
                    "exact enumeration exceeds the word budget and no --seed was given for the monte-carlo fallback".into(),
                ));
            }
            opts.method = Method::MonteCarlo;
            gauss_kuzmin::sup_error(t, steps, &m, &opts)?
        }
        other => other?,
    };
    if let Some(d) = report.discarded {
        if d as f64 > 1e-4 * samples as f64 {
            warnings.push(format!("{d} orbits discarded near the boundary"));
        }
    }

    let mut echo = ConfigEcho::new("gk", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push("t", JsonValue::Float(t));
    echo.push("n", JsonValue::UInt(steps as u128));
    echo.push("method", JsonValue::Str(report.method.as_str().into()));
    echo.push("cutoff", JsonValue::UInt(cutoff as u128));
    echo.push("grid", JsonValue::UInt(grid as u128));
    echo.push("samples", JsonValue::UInt(samples as u128));
    echo.push(
        "seed",
        seed.map_or(JsonValue::Null, |s| JsonValue::UInt(s as u128)),
    );

    let mut csv = CsvDoc::new(&REPORT_HEADER);
    csv.row(report_csv_row(&report));
    Ok(document(
        format,
        &echo,
        csv,
        report_json(&report),
        report_certificates(&report),
    ))
}

fn run_table(ns: &[u64], format: Format) -> Result<String> {
    let rows = gauss_kuzmin::bounds_table(ns)?;
    let mut echo = ConfigEcho::new("table", format);
    echo.push(
        "N",
        JsonValue::Str(
            ns.iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
    );
    let mut csv = CsvDoc::new(&["N", "rate_lower", "rate_upper"]);
    let mut json_rows = Vec::new();
    for row in &rows {
        csv.row(vec![
            CsvCell::UInt(row.n_param as u128),
            CsvCell::Float(row.lower),
            CsvCell::Float(row.upper),
        ]);
        json_rows.push(JsonValue::object(vec![
            ("N", JsonValue::UInt(row.n_param as u128)),
            ("rate_lower", JsonValue::Float(row.lower)),
            ("rate_upper", JsonValue::Float(row.upper)),
        ]));
    }
    Ok(document(
        format,
        &echo,
        csv,
        JsonValue::object(vec![("table", JsonValue::Array(json_rows))]),
        JsonValue::object(vec![]),
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_rate(
    n: u64,
    t: f64,
    method: MethodArg,
    n_from: usize,
    n_to: usize,
    cutoff: u64,
    grid: usize,
    samples: u64,
    seed: Option<u64>,
    budget: u128,
    format: Format,
) -> Result<String> {
    if n_from >= n_to {
        return Err(CfError::InvalidParameter(format!(
            "rate needs n_from < n_to, got {n_from} >= {n_to}"
        )));
    }
    let params = CfParams::new(n)?;
    let m = MeasureParams::new(params);
    let opts = sup_opts(method.to_method(), cutoff, grid, samples, seed, budget)?;
    let reports: Vec<_> = (n_from..=n_to)
        .map(|steps| gauss_kuzmin::sup_error(t, steps, &m, &opts))
        .collect::<Result<_>>()?;
    let est = gauss_kuzmin::rate_estimate(&reports)?;

    let mut echo = ConfigEcho::new("rate", format);
    echo.push("N", JsonValue::UInt(n as u128));
    echo.push("t", JsonValue::Float(t));
    echo.push("method", JsonValue::Str(opts.method.as_str().into()));
    echo.push("n_from", JsonValue::UInt(n_from as u128));
    echo.push("n_to", JsonValue::UInt(n_to as u128));
    echo.push("cutoff", JsonValue::UInt(cutoff as u128));
    echo.push(
        "seed",
        seed.map_or(JsonValue::Null, |s| JsonValue::UInt(s as u128)),
    );

    let mut csv = CsvDoc::new(&REPORT_HEADER);
    for r in &reports {
        csv.row(report_csv_row(r));
    }
    csv.comment(format!(
        "fitted_rate: {} delta: {} brackets: {}",
        crate::report::fmt_f64_csv(est.rate),
        crate::report::fmt_f64_csv(est.delta),
        est.brackets(params)
    ));
    let results = JsonValue::object(vec![
        (
            "reports",
            JsonValue::Array(reports.iter().map(report_json).collect()),
        ),
        (
            "rate",
            JsonValue::object(vec![
                ("fitted", JsonValue::Float(est.rate)),
                ("delta", JsonValue::Float(est.delta)),
                ("slope_stderr", JsonValue::Float(est.slope_stderr)),
                ("brackets", JsonValue::Bool(est.brackets(params))),
                ("rate_lower", JsonValue::Float(1.0 / params.n_f64())),
                (
                    "rate_upper",
                    JsonValue::Float(transfer::contraction_factor(params)),
                ),
            ]),
        ),
    ]);
    Ok(document(
        format,
        &echo,
        csv,
        results,
        JsonValue::object(vec![]),
    ))
}

/// Entry point used by the binary: parse, run, write, report errors as a
/// machine-readable object on stderr with exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version through this path
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&config) {
        Ok(artifact) => {
            for w in &artifact.warnings {
                eprintln!("warning: {w}");
            }
            match &config.output {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &artifact.document) {
                        eprintln!(
                            "{}",
                            error_object(&CfError::InvalidParameter(format!(
                                "cannot write {path:?}: {e}"
                            )))
                        );
                        return 1;
                    }
                }
                None => print!("{}", artifact.document),
            }
            0
        }
        Err(err) => {
            eprint!("{}", error_object(&err));
            1
        }
    }
}
