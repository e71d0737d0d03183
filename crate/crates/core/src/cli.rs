//! Command-line front end. `run` returns the process exit code: 0 on success,
//! 1 when verification finds a mismatch, 2 on invalid input.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::arakelov::{divisor_set, gauge_fix, report_from, Cusp, VerticalDivisor, CSV_HEADER};
use crate::contract::minimal_model;
use crate::error::Error;
use crate::fiber::{edixhoven_fiber, Fiber};
use crate::numth::{is_prime, primes_in, PrimeContext};
use crate::paperforms::{paper_gauge, verify_with, Perturbation};
use crate::ratlin::ExactRational;

#[derive(Parser, Debug)]
#[command(
    name = "x0fiber",
    version,
    about = "Special fibers of X0(p^3) and X0(p^4) in exact arithmetic"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the intersection matrix of a special fiber.
    Fiber(FiberArgs),
    /// Solve for the vertical divisors V_0 and V_inf.
    Divisors(DivisorArgs),
    /// One CSV row of geometric data per prime in a range.
    Sweep(SweepArgs),
    /// Compare the constructive pipeline against the printed closed forms.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct Grid {
    /// Prime, comma list, or inclusive range a..b (primes >= 5 in the range).
    #[arg(long)]
    pub p: String,
    /// Exponent 3 or 4, or a comma list.
    #[arg(long, default_value = "3")]
    pub r: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Dot,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Edixhoven,
    Minimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Gauge {
    PinFreeVar,
    Paper,
}

#[derive(Args, Debug)]
pub struct FiberArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, value_enum, default_value_t = StageArg::Edixhoven)]
    pub stage: StageArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DivisorArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, value_enum, default_value_t = Gauge::PinFreeVar)]
    pub gauge: Gauge,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value = "3")]
    pub r: String,
    #[arg(long, default_value_t = 5)]
    pub pmin: u64,
    #[arg(long)]
    pub pmax: u64,
    /// Subset of 1,5,7,11; all four when omitted.
    #[arg(long)]
    pub residues: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Adds 1 to the built Edixhoven matrix at row,col before comparing.
    #[arg(long, hide = true)]
    pub perturb: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::InvalidInput(_)) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::InvalidInput(msg.into()))
}

fn parse_u64(s: &str) -> CliResult<u64> {
    s.trim()
        .parse()
        .map_err(|_| bad(format!("{s:?} is not a non-negative integer")))
}

/// Parses `--p`: a single value, a comma list, or an inclusive range `a..b`.
pub fn parse_primes(spec: &str) -> Result<Vec<u64>, Error> {
    parse_primes_inner(spec).map_err(|e| match e {
        CliError::Core(e) => e,
        other => Error::InvalidInput(other.to_string()),
    })
}

fn parse_primes_inner(spec: &str) -> CliResult<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (parse_u64(a)?, parse_u64(b)?);
        if a > b {
            return Err(bad(format!("empty range {spec}")));
        }
        return Ok(primes_in(a.max(5), b));
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let p = parse_u64(part)?;
        if !is_prime(p) {
            return Err(bad(format!("p = {p} is not prime")));
        }
        if p < 5 {
            return Err(bad(format!("p = {p} is excluded, need p >= 5")));
        }
        out.push(p);
    }
    Ok(out)
}

fn parse_rs(spec: &str) -> CliResult<Vec<u32>> {
    spec.split(',')
        .map(|s| match s.trim() {
            "3" => Ok(3),
            "4" => Ok(4),
            other => Err(bad(format!("r = {other} is unsupported, need 3 or 4"))),
        })
        .collect()
}

fn grid(g: &Grid) -> CliResult<Vec<PrimeContext>> {
    let ps = parse_primes_inner(&g.p)?;
    let rs = parse_rs(&g.r)?;
    let mut out = Vec::new();
    for &p in &ps {
        for &r in &rs {
            out.push(PrimeContext::new(p, r)?);
        }
    }
    Ok(out)
}

fn open(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(w: &mut dyn Write, items: Vec<Value>) -> CliResult<()> {
    let v = if items.len() == 1 {
        items.into_iter().next().expect("one item")
    } else {
        Value::Array(items)
    };
    serde_json::to_writer_pretty(&mut *w, &v)?;
    writeln!(w)?;
    Ok(())
}

fn matrix_csv(f: &Fiber) -> String {
    let labels = f.labels();
    let mut s = String::from("component");
    for l in &labels {
        s.push_str(&format!(",{l}"));
    }
    s.push('\n');
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&l.to_string());
        for x in f.matrix().row(i) {
            s.push(',');
            s.push_str(&x.to_short_string());
        }
        s.push('\n');
    }
    s
}

fn cmd_fiber(a: &FiberArgs) -> CliResult<()> {
    let ctxs = grid(&a.grid)?;
    let mut built = Vec::new();
    for ctx in &ctxs {
        let ed = edixhoven_fiber(ctx)?;
        // r = 3 fibers are already minimal, so "minimal" is just a relabel there
        built.push(match a.stage {
            StageArg::Edixhoven => (ed, None),
            StageArg::Minimal => {
                let (t, map) = minimal_model(&ed)?;
                (t, Some(map))
            }
        });
    }
    let mut w = open(&a.out)?;
    match a.format {
        Format::Json => {
            let mut items = Vec::new();
            for (f, map) in &built {
                let mut v = serde_json::to_value(f)?;
                if let (Some(map), Value::Object(o)) = (map, &mut v) {
                    o.insert("contraction".into(), serde_json::to_value(map)?);
                }
                items.push(v);
            }
            write_json(&mut w, items)?;
        }
        Format::Table => {
            for (f, _) in &built {
                let c = f.ctx();
                writeln!(w, "# p = {}, r = {}, stage = {}", c.p, c.r, f.stage())?;
                write!(w, "{}", f.to_table())?;
            }
        }
        Format::Dot => {
            for (f, _) in &built {
                write!(w, "{}", f.to_dot())?;
            }
        }
        Format::Csv => {
            for (f, _) in &built {
                write!(w, "{}", matrix_csv(f))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn label_map(v: &VerticalDivisor, values: &[ExactRational]) -> Value {
    let mut m = Map::new();
    for (l, x) in v.labels().iter().zip(values) {
        m.insert(l.to_string(), Value::String(x.to_string()));
    }
    Value::Object(m)
}

fn cmd_divisors(a: &DivisorArgs) -> CliResult<()> {
    let mut items = Vec::new();
    for ctx in grid(&a.grid)? {
        let set = divisor_set(&ctx)?;
        let (v0, vinf) = match a.gauge {
            Gauge::PinFreeVar => (set.v0.clone(), set.vinf.clone()),
            Gauge::Paper => {
                let zero = ExactRational::zero();
                (
                    gauge_fix(&set.v0, &paper_gauge(&ctx, Cusp::Zero), &zero)?,
                    gauge_fix(&set.vinf, &paper_gauge(&ctx, Cusp::Infinity), &zero)?,
                )
            }
        };
        let sys = &set.system;
        let rep = report_from(&set)?;
        items.push(json!({
            "p": ctx.p,
            "r": ctx.r,
            "residue": ctx.residue,
            "stage": sys.fiber.stage(),
            "genus": sys.genus.to_string(),
            "gauge": match a.gauge { Gauge::PinFreeVar => "pin-free-var", Gauge::Paper => "paper" },
            "canonical": label_map(&v0, &sys.canonical),
            "v0": v0,
            "vinf": vinf,
            "residual_v0": label_map(&v0, &sys.residual(&v0, Cusp::Zero)?),
            "residual_vinf": label_map(&vinf, &sys.residual(&vinf, Cusp::Infinity)?),
            "g_rat": rep.g_rat,
        }));
    }
    let mut w = open(&a.out)?;
    write_json(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    if a.pmin < 5 {
        return Err(bad(format!("pmin = {} is below 5", a.pmin)));
    }
    if a.pmin > a.pmax {
        return Err(bad(format!("pmin = {} exceeds pmax = {}", a.pmin, a.pmax)));
    }
    let rs = parse_rs(&a.r)?;
    let residues: Vec<u64> = match &a.residues {
        None => vec![1, 5, 7, 11],
        Some(s) => s
            .split(',')
            .map(|x| match parse_u64(x)? {
                v @ (1 | 5 | 7 | 11) => Ok(v),
                v => Err(bad(format!("residue {v} is not one of 1, 5, 7, 11"))),
            })
            .collect::<CliResult<_>>()?,
    };
    let work: Vec<(u64, u32)> = primes_in(a.pmin, a.pmax)
        .into_iter()
        .filter(|p| residues.contains(&(p % 12)))
        .flat_map(|p| rs.iter().map(move |&r| (p, r)))
        .collect();
    let mut rows = work
        .par_iter()
        .map(|&(p, r)| report_from(&divisor_set(&PrimeContext::new(p, r)?)?))
        .collect::<Result<Vec<_>, Error>>()?;
    rows.sort_by_key(|x| (x.p, x.r));

    let mut w = open(&a.out)?;
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &rows)?;
            writeln!(w)?;
        }
        Format::Csv => {
            writeln!(w, "{CSV_HEADER}")?;
            for row in &rows {
                writeln!(w, "{}", row.csv_row())?;
            }
        }
        other => return Err(bad(format!("sweep does not support {other:?} output"))),
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<bool> {
    let perturb = match &a.perturb {
        None => None,
        Some(s) => {
            let (i, j) = s.split_once(',').ok_or_else(|| bad("--perturb expects row,col"))?;
            Some(Perturbation {
                row: parse_u64(i)? as usize,
                col: parse_u64(j)? as usize,
            })
        }
    };
    let reports: Vec<_> = grid(&a.grid)?.iter().map(|ctx| verify_with(ctx, perturb)).collect();
    let ok = reports.iter().all(|r| r.all_passed());
    let mut w = open(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &json!({ "passed": ok, "reports": reports }))?;
    writeln!(w)?;
    w.flush()?;
    Ok(ok)
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let res = match &cli.command {
        Command::Fiber(a) => cmd_fiber(a).map(|_| true),
        Command::Divisors(a) => cmd_divisors(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
    };
    match res {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("verification failed");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
