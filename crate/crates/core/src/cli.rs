//! Command-line front end. Every command writes one JSON document and maps
//! its outcome onto a fixed exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::analysis::analyze_point;
use crate::error::{Error, Result};
use crate::field::{apply_gauge, operator_to_json, parse_gauge, parse_operator, OperatorSpec};
use crate::kernel::Mat;
use crate::model::{
    build_model, candidate_words, compare_atlases, compare_models, naturality_audit, operator_regularity, parse_models,
    parse_selection, select_natural_coordinates,
};
use crate::par::Exec;
use crate::random::random_symbol;
use crate::symbol::{
    default_max_len, frame_decompose, general_position, invariant_coframe, invariant_vector, verify_codimension,
};
use crate::tolerances::Tolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_EQUIVALENT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_REGULARITY: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "opgeom",
    version,
    about = "Invariants and gauge equivalence of first-order differential operators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Grid points per axis.
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u32).range(1..))]
    pub grid: u32,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override: a bare number sets the equivalence tolerance,
    /// `name=value` sets any named tolerance. Repeatable.
    #[arg(long)]
    pub tol: Vec<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run every grid point on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regularity flags, invariant coframe and trace invariants.
    Invariants {
        op: PathBuf,
        /// Single chart point `x1,…,xn`; the grid is used otherwise.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Symbol general position and rank of invariant differentials.
    Regularity {
        op: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Associated connection, subsymbol and Chern form.
    Connection {
        op: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Build a model file.
    Model {
        op: PathBuf,
        /// Reuse the coordinate selection of this model or selection file.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare two model files (or two atlases, as JSON arrays of models).
    Equiv {
        model1: PathBuf,
        model2: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a gauge transformation to an operator.
    Gauge {
        op: PathBuf,
        gauge: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Residuals of the naturality laws under a gauge.
    Audit {
        op: PathBuf,
        gauge: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Expected against numeric orbit codimension on random symbols.
    Codim {
        n: usize,
        m: usize,
        #[arg(default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Invariants { common, .. }
            | Command::Regularity { common, .. }
            | Command::Connection { common, .. }
            | Command::Model { common, .. }
            | Command::Equiv { common, .. }
            | Command::Gauge { common, .. }
            | Command::Audit { common, .. }
            | Command::Codim { common, .. } => common,
        }
    }
}

/// JSON object whose keys keep insertion order.
struct Ordered(Vec<(String, f64)>);

impl Serialize for Ordered {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn parse_tolerances(overrides: &[String]) -> Result<Tolerances> {
    let mut value = serde_json::to_value(Tolerances::default())?;
    for o in overrides {
        let (key, text) = o.split_once('=').unwrap_or(("equiv", o.as_str()));
        let slot = value
            .get_mut(key)
            .ok_or_else(|| Error::Parse(format!("unknown tolerance {key:?}")))?;
        *slot =
            serde_json::from_str(text).map_err(|_| Error::Parse(format!("bad value for tolerance {key}: {text:?}")))?;
    }
    Ok(serde_json::from_value(value)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_op(path: &Path) -> Result<OperatorSpec> {
    parse_operator(&read(path)?)
}

fn points(op: &OperatorSpec, point: &Option<Vec<f64>>, grid: u32) -> Result<Vec<Vec<f64>>> {
    match point {
        Some(x) if x.len() != op.n => Err(Error::DimensionMismatch {
            expected: op.n,
            got: x.len(),
        }),
        Some(x) => Ok(vec![x.clone()]),
        None => Ok(op.chart.grid(grid as usize)),
    }
}

/// An outcome: the document to write and the exit code.
struct Outcome {
    json: String,
    code: i32,
}

impl Outcome {
    fn new<T: Serialize>(value: &T, code: i32) -> Result<Self> {
        Ok(Self {
            json: crate::json::to_string(value)?,
            code,
        })
    }
}

#[derive(Serialize)]
struct CoframeReport {
    costar: Vec<Vec<f64>>,
    frame: Vec<Vec<f64>>,
    cond: f64,
    e2_norm_sign: f64,
}

#[derive(Serialize)]
struct InvariantsPoint {
    x: Vec<f64>,
    regularity: crate::symbol::RegularityReport,
    coframe: Option<CoframeReport>,
    invariants: Option<Ordered>,
    operator_invariants: Option<Ordered>,
    operator_error: Option<String>,
}

fn cmd_invariants(op: &OperatorSpec, xs: &[Vec<f64>], tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let mut all_general = true;
    let mut reports = Vec::with_capacity(xs.len());
    for x in xs {
        let sigma = op.symbol_at(x)?;
        let regularity = general_position(&sigma, tol, seed);
        let mut rep = InvariantsPoint {
            x: x.clone(),
            regularity,
            coframe: None,
            invariants: None,
            operator_invariants: None,
            operator_error: None,
        };
        if rep.regularity.general {
            let cf = invariant_coframe(&sigma, tol)?;
            let frame = frame_decompose(&sigma, &cf);
            let iv = invariant_vector(&frame, None, default_max_len(op.m));
            rep.invariants = Some(Ordered(iv.entries.iter().map(|(w, v)| (w.label(), *v)).collect()));
            rep.coframe = Some(CoframeReport {
                costar: rows(&cf.costar),
                frame: rows(&cf.frame),
                cond: cf.cond,
                e2_norm_sign: cf.e2_norm_sign,
            });
            let words = candidate_words(op.n, op.m);
            match analyze_point(op, x, tol).and_then(|pa| pa.invariants(&words)) {
                Ok(v) => {
                    rep.operator_invariants = Some(Ordered(
                        words.iter().zip(v).map(|(w, j)| (w.label(), j.value)).collect(),
                    ))
                }
                Err(e) => rep.operator_error = Some(e.to_string()),
            }
        } else {
            all_general = false;
        }
        reports.push(rep);
    }
    #[derive(Serialize)]
    struct Doc {
        n: usize,
        m: usize,
        seed: u64,
        points: Vec<InvariantsPoint>,
    }
    let code = if all_general { EXIT_OK } else { EXIT_REGULARITY };
    Outcome::new(
        &Doc {
            n: op.n,
            m: op.m,
            seed,
            points: reports,
        },
        code,
    )
}

fn cmd_regularity(op: &OperatorSpec, xs: &[Vec<f64>], tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let reports = xs
        .iter()
        .map(|x| operator_regularity(op, x, tol, seed))
        .collect::<Result<Vec<_>>>()?;
    let regular = reports.iter().filter(|r| r.regular).count();
    #[derive(Serialize)]
    struct Doc {
        seed: u64,
        regular: usize,
        total: usize,
        points: Vec<crate::model::OperatorRegularity>,
    }
    let code = if regular == reports.len() {
        EXIT_OK
    } else {
        EXIT_REGULARITY
    };
    Outcome::new(
        &Doc {
            seed,
            regular,
            total: reports.len(),
            points: reports,
        },
        code,
    )
}

#[derive(Serialize)]
struct ConnectionPoint {
    x: Vec<f64>,
    error: Option<String>,
    alpha: Vec<Vec<Vec<f64>>>,
    lambda: Vec<f64>,
    omega: Vec<Vec<Vec<f64>>>,
    sigma0: Vec<Vec<f64>>,
    gram_ratio: f64,
    gram_signature: (usize, usize),
    ch: Vec<Vec<f64>>,
    ch_frame: Vec<Vec<f64>>,
}

fn cmd_connection(op: &OperatorSpec, xs: &[Vec<f64>], tol: &Tolerances) -> Result<Outcome> {
    let mut failures = 0;
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        match analyze_point(op, x, tol) {
            Ok(pa) => {
                let c = &pa.connection;
                out.push(ConnectionPoint {
                    x: x.clone(),
                    error: None,
                    alpha: c.alpha.iter().map(|a| rows(&a.value)).collect(),
                    lambda: c.lambda.iter().map(|l| l.value).collect(),
                    omega: c.omega.iter().map(|w| rows(&w.value)).collect(),
                    sigma0: rows(&c.sigma0.value),
                    gram_ratio: c.gram_ratio,
                    gram_signature: c.gram_signature,
                    ch: rows(&pa.curvature.ch),
                    ch_frame: rows(&pa.ch_frame),
                })
            }
            Err(e) => {
                failures += 1;
                out.push(ConnectionPoint {
                    x: x.clone(),
                    error: Some(e.to_string()),
                    alpha: Vec::new(),
                    lambda: Vec::new(),
                    omega: Vec::new(),
                    sigma0: Vec::new(),
                    gram_ratio: 0.0,
                    gram_signature: (0, 0),
                    ch: Vec::new(),
                    ch_frame: Vec::new(),
                })
            }
        }
    }
    Outcome::new(&out, if failures == 0 { EXIT_OK } else { EXIT_REGULARITY })
}

fn cmd_codim(n: usize, m: usize, trials: usize, seed: u64) -> Result<Outcome> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidSpec(format!("codim needs n, m >= 2, got n={n}, m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    #[derive(Serialize)]
    struct Trial {
        expected: i64,
        numeric: i64,
    }
    let table: Vec<Trial> = (0..trials)
        .map(|_| {
            let (expected, numeric) = verify_codimension(&random_symbol(&mut rng, n, m));
            Trial { expected, numeric }
        })
        .collect();
    let all = table.iter().all(|t| t.expected == t.numeric);
    #[derive(Serialize)]
    struct Doc {
        n: usize,
        m: usize,
        seed: u64,
        all_match: bool,
        trials: Vec<Trial>,
    }
    Outcome::new(
        &Doc {
            n,
            m,
            seed,
            all_match: all,
            trials: table,
        },
        if all { EXIT_OK } else { EXIT_REGULARITY },
    )
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    let common = cmd.common();
    let tol = parse_tolerances(&common.tol)?;
    let exec = if common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let (grid, seed) = (common.grid as usize, common.seed);
    match cmd {
        Command::Invariants { op, point, .. } => {
            let op = load_op(op)?;
            cmd_invariants(&op, &points(&op, point, common.grid)?, &tol, seed)
        }
        Command::Regularity { op, point, .. } => {
            let op = load_op(op)?;
            cmd_regularity(&op, &points(&op, point, common.grid)?, &tol, seed)
        }
        Command::Connection { op, point, .. } => {
            let op = load_op(op)?;
            cmd_connection(&op, &points(&op, point, common.grid)?, &tol)
        }
        Command::Model { op, selection, .. } => {
            let op = load_op(op)?;
            let sel = match selection {
                Some(p) => parse_selection(&read(p)?, op.n)?,
                None => select_natural_coordinates(&op, grid, &tol, seed, exec)?,
            };
            let model = build_model(&op, grid, &sel, &tol, seed, exec)?;
            Ok(Outcome {
                json: model.to_json()?,
                code: EXIT_OK,
            })
        }
        Command::Equiv { model1, model2, .. } => {
            let a1 = parse_models(&read(model1)?)?;
            let a2 = parse_models(&read(model2)?)?;
            if a1.len() == 1 && a2.len() == 1 {
                let v = compare_models(&a1[0], &a2[0], &tol)?;
                let code = if v.equivalent { EXIT_OK } else { EXIT_NOT_EQUIVALENT };
                Outcome::new(&v, code)
            } else {
                let v = compare_atlases(&a1, &a2, &tol)?;
                let code = match (v.equivalent, v.inconclusive) {
                    (true, _) => EXIT_OK,
                    (false, true) => EXIT_INCONCLUSIVE,
                    (false, false) => EXIT_NOT_EQUIVALENT,
                };
                Outcome::new(&v, code)
            }
        }
        Command::Gauge { op, gauge, .. } => {
            let op = load_op(op)?;
            let g = parse_gauge(&read(gauge)?, op.n, op.m)?;
            Ok(Outcome {
                json: operator_to_json(&apply_gauge(&op, &g)?)?,
                code: EXIT_OK,
            })
        }
        Command::Audit { op, gauge, .. } => {
            let op = load_op(op)?;
            let g = parse_gauge(&read(gauge)?, op.n, op.m)?;
            Outcome::new(&naturality_audit(&op, &g, grid, &tol, exec)?, EXIT_OK)
        }
        Command::Codim { n, m, trials, .. } => cmd_codim(*n, *m, *trials, seed),
    }
}

/// Exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EmptyOverlap => EXIT_INCONCLUSIVE,
        Error::DegenerateMetric { .. }
        | Error::DependentCoframe { .. }
        | Error::ChiVanishes
        | Error::NotGeneral(_)
        | Error::Singular { .. }
        | Error::SingularGram { .. }
        | Error::InsufficientSamples { .. }
        | Error::RankDeficient { .. }
        | Error::TooFewSamples { .. } => EXIT_REGULARITY,
        _ => EXIT_INPUT,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("opgeom: {e}");
            if let Error::EmptyOverlap = e {
                #[derive(Serialize)]
                struct Inconclusive {
                    equivalent: bool,
                    inconclusive: bool,
                    reason: String,
                }
                let doc = Inconclusive {
                    equivalent: false,
                    inconclusive: true,
                    reason: e.to_string(),
                };
                if let Ok(o) = Outcome::new(&doc, EXIT_INCONCLUSIVE) {
                    return emit(&cli.command, o);
                }
            }
            return exit_code(&e);
        }
    };
    emit(&cli.command, outcome)
}

fn emit(cmd: &Command, o: Outcome) -> i32 {
    match &cmd.common().out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &o.json) {
                eprintln!("opgeom: {}: {e}", path.display());
                return EXIT_INPUT;
            }
        }
        None => print!("{}", o.json),
    }
    o.code
}
