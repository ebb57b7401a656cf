//! Command-line front end: `cuts`, `emit` and `verify`.
//!
//! Exit codes: 0 success, 1 a verification suite failed, 2 bad usage or an
//! instance that cannot be loaded.

pub mod expr;
pub mod instance;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envelope::{all_cuts, envelope_value, separate, AffineCut};
use crate::error::{Error, Result};
use crate::expansion::Side;
use crate::milp::{
    build_dcr, build_dcr_plus, build_incremental, build_log_formulation, build_mip_z, write_lp, LogMode, MilpModel,
    Relaxation,
};
use crate::oracle::{compare_relaxations, envelope_oracle, ideality_check};
use crate::simplotope::{s_from_z_rows, Table};

pub use instance::Instance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Most LP solves a single ideality or envelope check performs.
const MAX_SOLVES: usize = 200;
const SEPARATION_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "composite-relax", version, about = "Relaxations of composite functions phi(f(x))")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the staircase cuts of the instance.
    Cuts {
        #[arg(long)]
        spec: PathBuf,
        /// Only the cut of this direction vector, e.g. `1,2,1`.
        #[arg(long, value_delimiter = ',')]
        omega: Option<Vec<usize>>,
        /// Side of the bound; defaults to the instance side.
        #[arg(long)]
        side: Option<SideArg>,
        /// Print the most violated cut at an s-point, rows separated by `;`.
        #[arg(long)]
        separate: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write an LP model of the instance.
    Emit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum)]
        formulation: Formulation,
        /// LP file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run sampled checks and write a CSV report.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// CSV report; `<name>-verify.csv` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    Over,
    Under,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Formulation {
    Incremental,
    MipZ,
    Dcr,
    DcrPlus,
    LogEnvelope,
    LogW,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Validity,
    Envelope,
    Ideality,
    Ordering,
    All,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Cuts {
            spec,
            omega,
            side,
            separate,
            format,
            seed,
            samples,
        } => load_checked(&spec, seed, samples).and_then(|inst| {
            let side = side.map(|s| match s {
                SideArg::Over => Side::Over,
                SideArg::Under => Side::Under,
            });
            cmd_cuts(&inst, side, omega.as_deref(), separate.as_deref(), format == Format::Csv, out).map(|_| EXIT_OK)
        }),
        Command::Emit {
            spec,
            formulation,
            out: path,
            seed,
            samples,
        } => load_checked(&spec, seed, samples).and_then(|inst| {
            cmd_emit(&inst, formulation, path.as_deref(), out).map(|_| EXIT_OK)
        }),
        Command::Verify {
            spec,
            suite,
            out: path,
            seed,
            samples,
            tol,
        } => Instance::load(&spec).and_then(|mut inst| {
            override_run(&mut inst, seed, samples, tol);
            let path = path.unwrap_or_else(|| PathBuf::from(format!("{}-verify.csv", inst.name)));
            let report = cmd_verify(&inst, suite)?;
            for line in &report.lines {
                let _ = writeln!(out, "{line}");
            }
            std::fs::write(&path, report.csv()?).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
            let _ = writeln!(out, "report: {}", path.display());
            Ok(if report.passed() { EXIT_OK } else { EXIT_FAILED })
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn override_run(inst: &mut Instance, seed: Option<u64>, samples: Option<usize>, tol: Option<f64>) {
    if let Some(s) = seed {
        inst.seed = s;
    }
    if let Some(n) = samples {
        inst.samples = n;
    }
    if let Some(t) = tol {
        inst.tol = t;
    }
}

/// Loads and sample-validates the underestimator rows.
fn load_checked(path: &std::path::Path, seed: Option<u64>, samples: Option<usize>) -> Result<Instance> {
    let mut inst = Instance::load(path)?;
    override_run(&mut inst, seed, samples, None);
    inst.validate(inst.samples, inst.seed)?;
    Ok(inst)
}

fn parse_s_point(text: &str) -> Result<Table> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad number {:?} in the s-point", v.trim())))
                })
                .collect()
        })
        .collect()
}

fn cut_csv(cuts: &[&AffineCut]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(["omega", "side", "constant", "terms"]).map_err(io)?;
    for c in cuts {
        let terms: Vec<String> = c.terms().iter().map(|(i, j, v)| format!("{}:{}:{}", i + 1, j, v)).collect();
        w.write_record([c.omega.to_string(), c.side.to_string(), c.constant.to_string(), terms.join(" ")])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(format!("csv: {e}")))
}

pub fn cmd_cuts(
    inst: &Instance,
    side: Option<Side>,
    omega: Option<&[usize]>,
    separate_at: Option<&str>,
    as_csv: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let side = side.unwrap_or(inst.spec.side);
    let phi = &inst.spec.phi;
    let a = &inst.spec.a;
    let picked: Vec<AffineCut>;
    if let Some(text) = separate_at {
        let s = parse_s_point(text)?;
        let cut = separate(phi, a, &s, side)?;
        let value = envelope_value(phi, a, &s, side)?;
        if !as_csv {
            let _ = writeln!(out, "envelope {value} at {text}");
        }
        picked = vec![cut];
    } else {
        let cuts = all_cuts(phi, a, side)?;
        picked = match omega {
            Some(w) => cuts.into_iter().filter(|c| c.omega.one_based() == w).collect(),
            None => cuts,
        };
        if omega.is_some() && picked.is_empty() {
            return Err(Error::Invalid("no direction vector matches --omega".into()));
        }
    }
    let refs: Vec<&AffineCut> = picked.iter().collect();
    if as_csv {
        let _ = write!(out, "{}", cut_csv(&refs)?);
    } else {
        for c in refs {
            let _ = writeln!(out, "omega={} {}: {c}", c.omega, c.side);
        }
    }
    Ok(())
}

/// Sides that carry a supermodularity declaration.
fn declared_sides(inst: &Instance) -> Vec<Side> {
    let sides: Vec<Side> = [Side::Over, Side::Under]
        .into_iter()
        .filter(|&s| inst.spec.phi.switch_set(s).is_some())
        .collect();
    if sides.is_empty() {
        vec![inst.spec.side]
    } else {
        sides
    }
}

pub fn build_model(inst: &Instance, formulation: Formulation) -> Result<MilpModel> {
    let spec = &inst.spec;
    match formulation {
        Formulation::Incremental => build_incremental(&spec.a),
        Formulation::MipZ => build_mip_z(&spec.phi, &spec.a, &declared_sides(inst)),
        Formulation::Dcr => build_dcr(spec),
        Formulation::DcrPlus => build_dcr_plus(spec, &inst.local_bounds(inst.samples, inst.seed)?),
        Formulation::LogEnvelope => build_log_formulation(&spec.phi, &spec.a, LogMode::Envelope(declared_sides(inst))),
        Formulation::LogW => {
            if spec.phi.terms().is_none() {
                return Err(Error::Invalid("log-w needs an outer function given by multilinear terms".into()));
            }
            build_log_formulation(&spec.phi, &spec.a, LogMode::MultilinearW)
        }
    }
}

pub fn cmd_emit(inst: &Instance, formulation: Formulation, path: Option<&std::path::Path>, out: &mut dyn Write) -> Result<()> {
    let m = build_model(inst, formulation)?;
    let text = write_lp(&m);
    let summary = format!(
        "{}: {} variables ({} continuous, {} binary), {} constraints",
        m.tag,
        m.num_vars(),
        m.num_continuous(),
        m.num_binaries(),
        m.constraints().len()
    );
    match path {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            let _ = writeln!(out, "{summary}");
            for s in m.separators() {
                let _ = writeln!(out, "separated family {} ({} rows)", s.family, s.size);
            }
            let _ = writeln!(out, "wrote {}", p.display());
        }
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(())
}

/// One line of the CSV report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub suite: &'static str,
    pub index: usize,
    pub point: String,
    pub quantity: String,
    pub value: f64,
    pub reference: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub failures: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn verdict(&mut self, suite: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        self.lines.push(format!("{} {suite}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(["suite", "index", "point", "quantity", "value", "reference", "pass"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.suite.to_string(),
                r.index.to_string(),
                r.point.clone(),
                r.quantity.clone(),
                r.value.to_string(),
                r.reference.to_string(),
                r.pass.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(format!("csv: {e}")))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_table(t: &Table) -> String {
    t.iter().map(|r| join(r)).collect::<Vec<_>>().join(";")
}

pub fn cmd_verify(inst: &Instance, suite: Suite) -> Result<Report> {
    let mut report = Report::default();
    let all = suite == Suite::All;
    if all || suite == Suite::Validity {
        suite_validity(inst, &mut report)?;
    }
    if all || suite == Suite::Envelope {
        suite_envelope(inst, &mut report)?;
    }
    if all || suite == Suite::Ideality {
        suite_ideality(inst, &mut report)?;
    }
    if all || suite == Suite::Ordering {
        suite_ordering(inst, &mut report)?;
    }
    Ok(report)
}

fn suite_validity(inst: &Instance, report: &mut Report) -> Result<()> {
    match inst.validate(inst.samples, inst.seed) {
        Ok(()) => {}
        Err(Error::Ordering { i, j, detail }) => {
            report.rows.push(ReportRow {
                suite: "validity",
                index: 0,
                point: String::new(),
                quantity: format!("u_{i}_{j}"),
                value: f64::NAN,
                reference: f64::NAN,
                pass: false,
            });
            report.verdict("validity", false, format!("underestimator (i={i}, j={j}): {detail}"));
            return Ok(());
        }
        Err(e) => return Err(e),
    }
    let comp = inst.composite(Some(inst.local_bounds(inst.samples, inst.seed)?));
    let rows = compare_relaxations(&comp, inst.samples, inst.seed, inst.tol)?;
    let mut worst = f64::NEG_INFINITY;
    let mut bad = 0;
    for r in &rows {
        let bound = r.h_plus.unwrap_or(r.h);
        let gap = inst.spec.side.sign() * (r.truth - bound);
        worst = worst.max(gap);
        let pass = !r.failures.contains(&"truth_vs_bound");
        if !pass {
            bad += 1;
        }
        report.rows.push(ReportRow {
            suite: "validity",
            index: r.index,
            point: join(&r.x),
            quantity: "truth-bound".into(),
            value: r.truth,
            reference: bound,
            pass,
        });
    }
    report.verdict(
        "validity",
        bad == 0,
        format!("{} samples, worst violation {worst:.3e}, {bad} failing", rows.len()),
    );
    Ok(())
}

/// Uniform point of `Delta`: each row a sorted vector of draws below `z_{i0} = 1`.
fn random_z(rng: &mut ChaCha8Rng, a: &Table) -> Table {
    a.iter()
        .map(|row| {
            let mut z: Vec<f64> = (1..row.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            z.sort_by(|p, q| q.total_cmp(p));
            let mut out = vec![1.0];
            out.extend(z);
            out
        })
        .collect()
}

fn suite_envelope(inst: &Instance, report: &mut Report) -> Result<()> {
    let phi = &inst.spec.phi;
    let a = &inst.spec.a;
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
    let trials = inst.samples.min(MAX_SOLVES);
    for side in declared_sides(inst) {
        let mut bad = 0;
        let mut worst: f64 = 0.0;
        for index in 0..trials {
            let s = s_from_z_rows(a.rows(), &random_z(&mut rng, a.rows()));
            let value = envelope_value(phi, a, &s, side)?;
            let oracle = envelope_oracle(phi, a, &s, side)?;
            let cut = separate(phi, a, &s, side)?.eval(&s);
            let scale = 1.0 + oracle.abs();
            let pass = (value - oracle).abs() <= inst.tol * scale && (cut - value).abs() <= SEPARATION_TOL * scale;
            worst = worst.max((value - oracle).abs());
            if !pass {
                bad += 1;
            }
            report.rows.push(ReportRow {
                suite: "envelope",
                index,
                point: join_table(&s),
                quantity: format!("envelope_{side}"),
                value,
                reference: oracle,
                pass,
            });
        }
        report.verdict(
            "envelope",
            bad == 0,
            format!("{side}: {trials} points, worst gap to the vertex LP {worst:.3e}, {bad} failing"),
        );
    }
    Ok(())
}

fn suite_ideality(inst: &Instance, report: &mut Report) -> Result<()> {
    let trials = inst.samples.min(MAX_SOLVES);
    let sign = inst.spec.side.sign();
    for f in [Formulation::MipZ, Formulation::LogEnvelope] {
        let m = build_model(inst, f)?;
        if !m.separators().is_empty() {
            report.verdict("ideality", false, format!("{}: cut family too large to solve in full", m.tag));
            continue;
        }
        let r = ideality_check(&m, trials, inst.seed, sign)?;
        let pass = r.worst_fraction <= inst.tol;
        report.rows.push(ReportRow {
            suite: "ideality",
            index: 0,
            point: String::new(),
            quantity: m.tag.clone(),
            value: r.worst_fraction,
            reference: 0.0,
            pass,
        });
        report.verdict(
            "ideality",
            pass,
            format!("{}: {} solves, worst binary fraction {:.3e}", m.tag, r.trials, r.worst_fraction),
        );
    }
    Ok(())
}

fn suite_ordering(inst: &Instance, report: &mut Report) -> Result<()> {
    let comp = inst.composite(Some(inst.local_bounds(inst.samples, inst.seed)?));
    let ev = comp.evaluator();
    for (k, x) in inst.points.iter().enumerate() {
        let f = comp.f(x);
        let u = comp.u(x, &f);
        let mut vals = Vec::new();
        for r in Relaxation::ALL {
            vals.push(format!("{}={}", r.label(), ev.closed_form(r, &u, &f)?));
        }
        report
            .lines
            .push(format!("point {} x=({}) {} truth={}", k + 1, join(x).replace(' ', ", "), vals.join(" "), comp.truth(x)));
    }
    let rows = compare_relaxations(&comp, inst.samples, inst.seed, inst.tol)?;
    let mut bad = 0;
    for r in &rows {
        let failing: Vec<&str> = r.failures.iter().copied().filter(|f| *f != "truth_vs_bound").collect();
        if !failing.is_empty() {
            bad += 1;
        }
        let checks = [
            ("phi", r.plain, "h_vs_plain"),
            ("phi_h_minus", r.h_minus, "h_vs_h_minus"),
            ("phi_h_plus", r.h_plus.unwrap_or(r.h), "h_plus_vs_h"),
        ];
        for (q, v, flag) in checks {
            report.rows.push(ReportRow {
                suite: "ordering",
                index: r.index,
                point: join(&r.x),
                quantity: q.into(),
                value: v,
                reference: r.h,
                pass: !r.failures.contains(&flag),
            });
        }
    }
    report.verdict(
        "ordering",
        bad == 0,
        format!("{} samples, {bad} with an ordering violated", rows.len()),
    );
    Ok(())
}
