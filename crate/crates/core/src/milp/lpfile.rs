//! LP text format.
//!
//! ```text
//! \ formulation: incremental
//! Maximize
//!  obj: + 1 phi
//! Subject To
//!  inc_1_1_a: + 1 z_1_1 - 1 d_1_1 >= 0
//! Bounds
//!  0 <= z_1_1 <= 1
//! Binaries
//!  d_1_1
//! End
//! ```
//!
//! Every variable is listed under `Bounds` in index order, so a parsed file
//! reproduces the variable numbering. Numbers use the shortest decimal form
//! that round-trips.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lp::Sense;

use super::model::{Constraint, MilpModel, VarKind, Variable};

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == 0.0 {
        // no "-0"
        "0".into()
    } else {
        format!("{v}")
    }
}

fn linear(out: &mut String, m: &MilpModel, terms: &[(usize, f64)]) {
    for &(j, c) in terms {
        let sign = if c.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", num(c.abs()), m.variables()[j].name);
    }
}

fn sense_token(s: Sense) -> &'static str {
    match s {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    }
}

/// Renders the model. Separated families are not written; their notes are.
pub fn write_lp(m: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ formulation: {}", m.tag);
    for n in &m.notes {
        let _ = writeln!(out, "\\ note: {n}");
    }
    out.push_str(if m.maximize { "Maximize\n" } else { "Minimize\n" });
    out.push_str(" obj:");
    linear(&mut out, m, &m.objective);
    out.push('\n');
    out.push_str("Subject To\n");
    for c in m.constraints() {
        let _ = write!(out, " {}:", c.name);
        linear(&mut out, m, &c.terms);
        let _ = writeln!(out, " {} {}", sense_token(c.sense), num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in m.variables() {
        let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), v.name, num(v.upper));
    }
    out.push_str("Binaries\n");
    for v in m.variables().iter().filter(|v| v.kind == VarKind::Binary) {
        let _ = writeln!(out, " {}", v.name);
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Head,
    Objective,
    Rows,
    Bounds,
    Binaries,
    Done,
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..k], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(k);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: s + 1 });
    }
    out
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_num(t: &Tok<'_>, line: usize) -> Result<f64> {
    match t.text {
        "+inf" | "inf" | "+infinity" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        s => s
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| perr(line, t.col, format!("expected a number, found {s:?}"))),
    }
}

fn parse_sense(t: &Tok<'_>) -> Option<Sense> {
    match t.text {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

type RawTerms = Vec<(String, f64, usize, usize)>;

/// `name: (+|-) c var ... [sense rhs]`.
fn parse_linear<'a>(toks: &'a [Tok<'a>], line: usize, with_sense: bool) -> Result<(String, RawTerms, Option<(Sense, f64)>)> {
    let first = toks.first().ok_or_else(|| perr(line, 1, "empty line"))?;
    let name = first
        .text
        .strip_suffix(':')
        .ok_or_else(|| perr(line, first.col, "expected `name:`"))?
        .to_string();
    let mut terms = Vec::new();
    let mut k = 1;
    while k < toks.len() {
        if let Some(sense) = parse_sense(&toks[k]) {
            if !with_sense {
                return Err(perr(line, toks[k].col, "unexpected relation in the objective"));
            }
            let rhs = toks.get(k + 1).ok_or_else(|| perr(line, toks[k].col, "missing right-hand side"))?;
            let v = parse_num(rhs, line)?;
            if let Some(extra) = toks.get(k + 2) {
                return Err(perr(line, extra.col, "trailing input"));
            }
            return Ok((name, terms, Some((sense, v))));
        }
        let sign = match toks[k].text {
            "+" => 1.0,
            "-" => -1.0,
            other => return Err(perr(line, toks[k].col, format!("expected + or -, found {other:?}"))),
        };
        let c = toks.get(k + 1).ok_or_else(|| perr(line, toks[k].col, "missing coefficient"))?;
        let v = toks.get(k + 2).ok_or_else(|| perr(line, c.col, "missing variable"))?;
        let coeff = parse_num(c, line)?;
        terms.push((v.text.to_string(), sign * coeff, line, v.col));
        k += 3;
    }
    if with_sense {
        return Err(perr(line, toks[toks.len() - 1].col, "row has no relation"));
    }
    Ok((name, terms, None))
}

/// Parses text produced by [`write_lp`] (and the same subset written by hand).
pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut tag = String::new();
    let mut notes = Vec::new();
    let mut maximize = None;
    let mut objective: RawTerms = Vec::new();
    let mut rows: Vec<(String, RawTerms, Sense, f64)> = Vec::new();
    let mut vars: Vec<Variable> = Vec::new();
    let mut binaries: Vec<(String, usize, usize)> = Vec::new();
    let mut section = Section::Head;
    let mut last = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        last = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('\\') {
            let c = c.trim();
            if let Some(t) = c.strip_prefix("formulation:") {
                tag = t.trim().to_string();
            } else if let Some(n) = c.strip_prefix("note:") {
                notes.push(n.trim().to_string());
            }
            continue;
        }
        if section == Section::Done {
            return Err(perr(line, 1, "input after End"));
        }
        match trimmed.to_ascii_lowercase().as_str() {
            "maximize" | "minimize" => {
                if section != Section::Head {
                    return Err(perr(line, 1, "objective sense must come first"));
                }
                maximize = Some(trimmed.eq_ignore_ascii_case("maximize"));
                section = Section::Objective;
                continue;
            }
            "subject to" => {
                if section != Section::Objective {
                    return Err(perr(line, 1, "Subject To must follow the objective"));
                }
                section = Section::Rows;
                continue;
            }
            "bounds" => {
                if section != Section::Rows {
                    return Err(perr(line, 1, "Bounds must follow Subject To"));
                }
                section = Section::Bounds;
                continue;
            }
            "binaries" => {
                if section != Section::Bounds {
                    return Err(perr(line, 1, "Binaries must follow Bounds"));
                }
                section = Section::Binaries;
                continue;
            }
            "end" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        let toks = tokens(raw);
        match section {
            Section::Head => return Err(perr(line, toks[0].col, "expected Maximize or Minimize")),
            Section::Objective => {
                if !objective.is_empty() {
                    return Err(perr(line, toks[0].col, "second objective line"));
                }
                let (_, terms, _) = parse_linear(&toks, line, false)?;
                objective = terms;
            }
            Section::Rows => {
                let (name, terms, rel) = parse_linear(&toks, line, true)?;
                let (sense, rhs) = rel.expect("rows carry a relation");
                rows.push((name, terms, sense, rhs));
            }
            Section::Bounds => {
                if toks.len() != 5 || toks[1].text != "<=" || toks[3].text != "<=" {
                    return Err(perr(line, toks[0].col, "expected `lo <= name <= hi`"));
                }
                vars.push(Variable {
                    name: toks[2].text.to_string(),
                    kind: VarKind::Continuous,
                    lower: parse_num(&toks[0], line)?,
                    upper: parse_num(&toks[4], line)?,
                });
            }
            Section::Binaries => {
                for t in &toks {
                    binaries.push((t.text.to_string(), line, t.col));
                }
            }
            Section::Done => unreachable!(),
        }
    }
    if section != Section::Done {
        return Err(perr(last + 1, 1, "missing End"));
    }
    let index: std::collections::HashMap<String, usize> =
        vars.iter().enumerate().map(|(j, v)| (v.name.clone(), j)).collect();
    let resolve = |terms: &RawTerms| -> Result<Vec<(usize, f64)>> {
        terms
            .iter()
            .map(|(n, c, line, col)| {
                index
                    .get(n)
                    .map(|&j| (j, *c))
                    .ok_or_else(|| perr(*line, *col, format!("variable {n} has no bounds entry")))
            })
            .collect()
    };
    let objective = resolve(&objective)?;
    let constraints = rows
        .iter()
        .map(|(name, terms, sense, rhs)| {
            Ok(Constraint {
                name: name.clone(),
                terms: resolve(terms)?,
                sense: *sense,
                rhs: *rhs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut vars = vars;
    for (n, line, col) in binaries {
        let j = *index
            .get(&n)
            .ok_or_else(|| perr(line, col, format!("binary {n} has no bounds entry")))?;
        vars[j].kind = VarKind::Binary;
    }
    MilpModel::from_parts(tag, notes, maximize.unwrap_or(true), objective, vars, constraints)
}
