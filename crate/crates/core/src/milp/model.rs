use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lp::{solve, DenseLp, Sense, Solution, Status};

/// Cuts above this count are separated on demand instead of written out.
pub const FULL_FAMILY_LIMIT: u128 = 512;

const MAX_CUT_ROUNDS: usize = 10_000;
const CUT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)`, in insertion order, no repeats.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Amount by which `x` violates the row (negative when slack).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.sense {
            Sense::Le => l - self.rhs,
            Sense::Ge => self.rhs - l,
            Sense::Eq => (l - self.rhs).abs(),
        }
    }
}

/// Returns a violated row for a point, or `None` when the point satisfies
/// every row of the family.
pub type SeparatorFn = dyn Fn(&[f64]) -> Option<Constraint> + Send + Sync;

#[derive(Clone)]
pub struct Separator {
    pub family: String,
    pub size: String,
    func: Arc<SeparatorFn>,
}

impl Separator {
    pub fn new(family: impl Into<String>, size: impl Into<String>, func: Arc<SeparatorFn>) -> Self {
        Self {
            family: family.into(),
            size: size.into(),
            func,
        }
    }

    pub fn separate(&self, x: &[f64]) -> Option<Constraint> {
        (self.func)(x)
    }
}

impl fmt::Debug for Separator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Separator({}, {} rows)", self.family, self.size)
    }
}

/// A MILP model: named variables, linear rows and an objective.
#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    pub tag: String,
    pub notes: Vec<String>,
    pub maximize: bool,
    pub objective: Vec<(usize, f64)>,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    index: HashMap<String, usize>,
    row_names: HashMap<String, usize>,
    separators: Vec<Separator>,
}

impl PartialEq for MilpModel {
    fn eq(&self, other: &Self) -> bool {
        self.tag == other.tag
            && self.notes == other.notes
            && self.maximize == other.maximize
            && self.objective == other.objective
            && self.variables == other.variables
            && self.constraints == other.constraints
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    !matches!(name, "free" | "inf" | "infinity" | "End" | "end")
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl MilpModel {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            maximize: true,
            ..Self::default()
        }
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn separators(&self) -> &[Separator] {
        &self.separators
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.num_vars() - self.num_binaries()
    }

    /// Number of variables whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.variables.iter().filter(|v| v.name.starts_with(prefix)).count()
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn expect_var(&self, name: &str) -> Result<usize> {
        self.var(name)
            .ok_or_else(|| Error::Model(format!("unknown variable {name}")))
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Result<usize> {
        let name = name.into();
        if !valid_name(&name) {
            return Err(Error::Model(format!("invalid variable name {name:?}")));
        }
        if self.index.contains_key(&name) {
            return Err(Error::Model(format!("variable {name} declared twice")));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lower, upper),
        };
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Model(format!("variable {name} has bounds [{lower}, {upper}]")));
        }
        self.index.insert(name.clone(), self.variables.len());
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(self.variables.len() - 1)
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: &[(usize, f64)], sense: Sense, rhs: f64) -> Result<()> {
        let name = name.into();
        if !valid_name(&name) {
            return Err(Error::Model(format!("invalid row name {name:?}")));
        }
        if self.row_names.contains_key(&name) {
            return Err(Error::Model(format!("row {name} declared twice")));
        }
        if !rhs.is_finite() {
            return Err(Error::Model(format!("row {name} has a non-finite right-hand side")));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(j, c) in terms {
            if j >= self.variables.len() {
                return Err(Error::Model(format!("row {name} references variable #{j}")));
            }
            if !c.is_finite() {
                return Err(Error::Model(format!("row {name} has a non-finite coefficient")));
            }
            match merged.iter_mut().find(|t| t.0 == j) {
                Some(t) => t.1 += c,
                None => merged.push((j, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.row_names.insert(name.clone(), self.constraints.len());
        self.constraints.push(Constraint {
            name,
            terms: merged,
            sense,
            rhs,
        });
        Ok(())
    }

    /// Row helper taking variable names.
    pub fn add_named_row(&mut self, name: impl Into<String>, terms: &[(&str, f64)], sense: Sense, rhs: f64) -> Result<()> {
        let idx: Vec<(usize, f64)> = terms
            .iter()
            .map(|&(v, c)| self.expect_var(v).map(|j| (j, c)))
            .collect::<Result<_>>()?;
        self.add_row(name, &idx, sense, rhs)
    }

    pub fn add_separator(&mut self, sep: Separator) {
        self.notes
            .push(format!("separated family {}: {} rows not listed", sep.family, sep.size));
        self.separators.push(sep);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.variables[j].lower = lower;
        self.variables[j].upper = upper;
    }

    /// Copy with the named variables fixed.
    pub fn fixed(&self, values: &[(usize, f64)]) -> Self {
        let mut m = self.clone();
        for &(j, v) in values {
            m.set_bounds(j, v, v);
        }
        m
    }

    /// LP relaxation (binaries relaxed to `[0, 1]`) with the given objective.
    pub fn relaxation(&self, objective: &[f64], maximize: bool) -> DenseLp {
        let k = self.num_vars();
        let mut lp = DenseLp::new(k, maximize);
        lp.objective = objective.to_vec();
        for (j, v) in self.variables.iter().enumerate() {
            lp.lower[j] = v.lower;
            lp.upper[j] = v.upper;
        }
        for c in &self.constraints {
            lp.add_sparse(&c.terms, c.sense, c.rhs);
        }
        lp
    }

    /// Solves the LP relaxation; separated families are added lazily until
    /// the optimum violates none of them.
    pub fn solve_relaxation(&self, objective: &[f64], maximize: bool) -> Result<Solution> {
        let mut lp = self.relaxation(objective, maximize);
        for _ in 0..MAX_CUT_ROUNDS {
            let sol = solve(&lp)?;
            if sol.status != Status::Optimal {
                return Ok(sol);
            }
            let mut added = false;
            for sep in &self.separators {
                if let Some(row) = sep.separate(&sol.x) {
                    if row.violation(&sol.x) > CUT_TOL {
                        lp.add_sparse(&row.terms, row.sense, row.rhs);
                        added = true;
                    }
                }
            }
            if !added {
                return Ok(sol);
            }
        }
        Err(Error::Lp(format!("cut loop did not settle in {MAX_CUT_ROUNDS} rounds")))
    }

    /// Largest violation of rows, bounds and separated families at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        for (j, v) in self.variables.iter().enumerate() {
            worst = worst.max(v.lower - x[j]).max(x[j] - v.upper);
        }
        for s in &self.separators {
            if let Some(r) = s.separate(x) {
                worst = worst.max(r.violation(x));
            }
        }
        worst
    }

    pub(crate) fn from_parts(
        tag: String,
        notes: Vec<String>,
        maximize: bool,
        objective: Vec<(usize, f64)>,
        variables: Vec<Variable>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let mut m = Self::new(tag);
        m.notes = notes;
        m.maximize = maximize;
        for v in variables {
            let j = m.add_var(v.name, v.kind, v.lower, v.upper)?;
            m.variables[j].lower = v.lower;
            m.variables[j].upper = v.upper;
        }
        for c in constraints {
            m.add_row(c.name, &c.terms, c.sense, c.rhs)?;
        }
        m.objective = objective;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_checked() {
        let mut m = MilpModel::new("t");
        m.add_var("x_1", VarKind::Continuous, 0.0, 1.0).unwrap();
        assert!(m.add_var("x_1", VarKind::Continuous, 0.0, 1.0).is_err());
        assert!(m.add_var("1x", VarKind::Continuous, 0.0, 1.0).is_err());
        assert!(m.add_var("free", VarKind::Continuous, 0.0, 1.0).is_err());
        m.add_named_row("r", &[("x_1", 1.0), ("x_1", 2.0)], Sense::Le, 1.0).unwrap();
        assert_eq!(m.constraints()[0].terms, vec![(0, 3.0)]);
        assert!(m.add_named_row("r", &[("x_1", 1.0)], Sense::Le, 1.0).is_err());
        assert!(m.add_named_row("q", &[("y", 1.0)], Sense::Le, 1.0).is_err());
    }
}
