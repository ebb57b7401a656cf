//! JSON instance files (`"schema": 1`).
//!
//! ```json
//! {
//!   "schema": 1,
//!   "name": "square-product",
//!   "variables": ["x1", "x2"],
//!   "lower": [0, 0], "upper": [3, 2],
//!   "inner": ["x1^2", "x2^2"],
//!   "breakpoints": [[0, 5, 8, 9], [0, 4]],
//!   "selector": [[1, 2, 4], [1, 2]],
//!   "underestimators": [[null, {"constant": -1, "coeff": [2, 0]}, null, null], [null, null]],
//!   "outer": {"builtin": "product", "over_switch": [], "under_switch": [1]},
//!   "side": "under"
//! }
//! ```
//!
//! Coordinates, breakpoint positions in `selector` and switched indices are
//! 1-based. `underestimators[i]` has one slot per breakpoint; the first and
//! last must be `null`.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expansion::{MultilinearTerm, OuterSpec, Side};
use crate::lp::Sense;
use crate::milp::dcr::{AffineFn, DcrSpec, LocalBoundTable, WRow};
use crate::oracle::{CompositeInstance, ScalarFn};
use crate::simplotope::Breakpoints;

use super::expr::Expr;

pub const SCHEMA: u32 = 1;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    schema: u32,
    name: String,
    variables: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    inner: Vec<String>,
    breakpoints: Vec<Vec<f64>>,
    #[serde(default)]
    selector: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    underestimators: Option<Vec<Vec<Option<RawAffine>>>>,
    outer: RawOuter,
    side: RawSide,
    #[serde(default)]
    bounds_table: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    w_rows: Vec<RawWRow>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    points: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAffine {
    constant: f64,
    coeff: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    coeff: f64,
    vars: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOuter {
    #[serde(default)]
    builtin: Option<String>,
    #[serde(default)]
    terms: Option<Vec<RawTerm>>,
    #[serde(default)]
    over_switch: Option<Vec<usize>>,
    #[serde(default)]
    under_switch: Option<Vec<usize>>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawSide {
    Over,
    Under,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWRow {
    x_coeff: Vec<f64>,
    f_coeff: Vec<f64>,
    sense: String,
    rhs: f64,
}

/// A parsed instance. Nothing is sampled yet; see [`Instance::validate`].
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub variables: Vec<String>,
    pub inner: Vec<Expr>,
    pub spec: DcrSpec,
    pub bounds_table: Option<Vec<Vec<Vec<f64>>>>,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub points: Vec<Vec<f64>>,
}

/// Line and column of byte `offset` in `text`, both 1-based.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn switch_set(d: usize, raw: Option<Vec<usize>>, what: &str) -> Result<Option<Vec<usize>>> {
    raw.map(|t| {
        t.into_iter()
            .map(|c| {
                if c == 0 || c > d {
                    Err(invalid(format!("{what} entry {c} is not a coordinate in 1..={d}")))
                } else {
                    Ok(c - 1)
                }
            })
            .collect()
    })
    .transpose()
}

impl Instance {
    pub fn load(path: &Path) -> Result<Instance> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Instance::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Instance> {
        let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if raw.schema != SCHEMA {
            return Err(invalid(format!("unsupported schema {}; expected {SCHEMA}", raw.schema)));
        }
        let nx = raw.variables.len();
        if raw.lower.len() != nx || raw.upper.len() != nx {
            return Err(Error::Dimension(format!("{nx} variables but {} / {} box bounds", raw.lower.len(), raw.upper.len())));
        }
        let d = raw.breakpoints.len();
        if raw.inner.len() != d {
            return Err(Error::Dimension(format!("{} inner functions for {d} breakpoint rows", raw.inner.len())));
        }
        let mut inner = Vec::with_capacity(d);
        for src in &raw.inner {
            let e = Expr::parse(src, &raw.variables).map_err(|e| {
                // point at the character inside the JSON string when it can be found
                let quoted = format!("\"{src}\"");
                let (line, column) = match text.find(&quoted) {
                    Some(at) => {
                        let (l, c) = position(text, at);
                        (l, c + e.column)
                    }
                    None => (0, e.column),
                };
                Error::Parse {
                    line,
                    column,
                    message: format!("in {src:?}: {}", e.message),
                }
            })?;
            inner.push(e);
        }
        let a = match raw.selector {
            None => Breakpoints::fully_split(raw.breakpoints)?,
            Some(sel) => {
                let tau = sel
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|p| p.checked_sub(1).ok_or_else(|| invalid("selector positions are 1-based")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Breakpoints::with_selector(raw.breakpoints, tau)?
            }
        };
        let under = match raw.underestimators {
            None => (0..d).map(|i| vec![None; a.segments(i) + 1]).collect(),
            Some(rows) => {
                if rows.len() != d {
                    return Err(Error::Dimension(format!("{} underestimator rows for d = {d}", rows.len())));
                }
                let mut out = Vec::with_capacity(d);
                for (i, row) in rows.into_iter().enumerate() {
                    let n = a.segments(i);
                    if row.len() != n + 1 {
                        return Err(Error::Dimension(format!("coordinate {} needs {} underestimator slots", i + 1, n + 1)));
                    }
                    if row[0].is_some() || row[n].is_some() {
                        return Err(invalid(format!("coordinate {}: the first and last underestimator slots must be null", i + 1)));
                    }
                    out.push(
                        row.into_iter()
                            .map(|u| u.map(|u| AffineFn { constant: u.constant, coeff: u.coeff }))
                            .collect(),
                    );
                }
                out
            }
        };
        let over = switch_set(d, raw.outer.over_switch, "over_switch")?;
        let under_sw = switch_set(d, raw.outer.under_switch, "under_switch")?;
        let mut phi = match (raw.outer.builtin.as_deref(), raw.outer.terms) {
            (Some("product"), None) => OuterSpec::product(d),
            (Some(other), None) => return Err(invalid(format!("unknown builtin outer function {other:?}"))),
            (None, Some(terms)) => {
                let terms = terms
                    .into_iter()
                    .map(|t| {
                        let vars = t
                            .vars
                            .into_iter()
                            .map(|v| {
                                if v == 0 || v > d {
                                    Err(invalid(format!("term variable {v} is not in 1..={d}")))
                                } else {
                                    Ok(v - 1)
                                }
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(MultilinearTerm::new(t.coeff, vars))
                    })
                    .collect::<Result<Vec<_>>>()?;
                OuterSpec::multilinear(d, terms)?
            }
            _ => return Err(invalid("outer needs exactly one of `builtin` and `terms`")),
        };
        if let Some(t) = over {
            phi = phi.with_over_switch(t);
        }
        if let Some(t) = under_sw {
            phi = phi.with_under_switch(t);
        }
        let w_rows = raw
            .w_rows
            .into_iter()
            .map(|w| {
                let sense = match w.sense.as_str() {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    "=" | "==" => Sense::Eq,
                    other => return Err(invalid(format!("unknown relation {other:?} in w_rows"))),
                };
                Ok(WRow {
                    x_coeff: w.x_coeff,
                    f_coeff: w.f_coeff,
                    sense,
                    rhs: w.rhs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let side = match raw.side {
            RawSide::Over => Side::Over,
            RawSide::Under => Side::Under,
        };
        for p in &raw.points {
            if p.len() != nx {
                return Err(Error::Dimension(format!("point {p:?} needs {nx} coordinates")));
            }
        }
        let spec = DcrSpec {
            phi,
            a,
            side,
            x_lower: raw.lower,
            x_upper: raw.upper,
            under,
            w_rows,
        };
        Ok(Instance {
            name: raw.name,
            variables: raw.variables,
            inner,
            spec,
            bounds_table: raw.bounds_table,
            seed: raw.seed.unwrap_or(0),
            samples: raw.samples.unwrap_or(DEFAULT_SAMPLES),
            tol: raw.tol.unwrap_or(DEFAULT_TOL),
            points: raw.points,
        })
    }

    pub fn inner_fns(&self) -> Vec<ScalarFn> {
        self.inner
            .iter()
            .map(|e| {
                let e = e.clone();
                let f: ScalarFn = Arc::new(move |x: &[f64]| e.eval(x));
                f
            })
            .collect()
    }

    /// Samples the ordering `u_{ij} <= min(f_i, a_{ij})` and the range of `f`.
    pub fn validate(&self, samples: usize, seed: u64) -> Result<()> {
        let fns = self.inner_fns();
        let refs: Vec<&dyn Fn(&[f64]) -> f64> = fns.iter().map(|f| f.as_ref() as &dyn Fn(&[f64]) -> f64).collect();
        self.spec.validate_underestimators(&refs, samples, seed)
    }

    /// Piece bounds: the given table after tightening, or sampled ones.
    pub fn local_bounds(&self, samples: usize, seed: u64) -> Result<LocalBoundTable> {
        match &self.bounds_table {
            Some(bd) => LocalBoundTable::tightened(&self.spec.a, bd.clone()),
            None => self.composite(None).sampled_bounds(samples, seed, 0.01),
        }
    }

    pub fn composite(&self, bounds: Option<LocalBoundTable>) -> CompositeInstance {
        CompositeInstance::from_dcr(self.name.clone(), &self.spec, self.inner_fns(), bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
  "schema": 1,
  "name": "small",
  "variables": ["x"],
  "lower": [0], "upper": [1],
  "inner": ["x + x^2"],
  "breakpoints": [[0, 1, 2]],
  "underestimators": [[null, {"constant": 0, "coeff": [1]}, null]],
  "outer": {"builtin": "product", "over_switch": []},
  "side": "over"
}"#;

    #[test]
    fn parses_and_validates() {
        let inst = Instance::parse(SMALL).unwrap();
        assert_eq!(inst.spec.a.segments(0), 2);
        assert_eq!(inst.samples, DEFAULT_SAMPLES);
        inst.validate(200, 1).unwrap();
    }

    #[test]
    fn expression_errors_point_into_the_file() {
        let bad = SMALL.replace("x + x^2", "x + y");
        match Instance::parse(&bad) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (6, 18)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_errors_carry_positions() {
        let bad = SMALL.replace("\"lower\": [0]", "\"lower\": [0,]");
        assert!(matches!(Instance::parse(&bad), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn corrupted_row_is_named() {
        let bad = SMALL.replace("\"constant\": 0", "\"constant\": 0.5");
        let inst = Instance::parse(&bad).unwrap();
        match inst.validate(200, 1) {
            Err(Error::Ordering { i, j, .. }) => assert_eq!((i, j), (1, 1)),
            other => panic!("{other:?}"),
        }
    }
}
