//! Staircase cut families over chains of model variables.
//!
//! Each coordinate contributes a chain `1 >= y_{i1} >= ... >= y_{im_i} >= 0`
//! whose entries are affine in the model variables (`z` entries, suffix sums
//! of `lambda`, or the `(z, delta)` chain of the refined model). A family
//! knows the value of coordinate `i` at every chain level and emits the
//! interpolated cut of each staircase, or separates one on demand.

use std::sync::Arc;

use crate::envelope::{chain_cut, containing_staircase, reversed_mask};
use crate::error::Result;
use crate::expansion::{OuterSpec, Side};
use crate::grid::{enumerate_with_cap, DirectionVector, GridShape};
use crate::lp::Sense;
use crate::simplotope::Table;

use super::model::{Constraint, MilpModel, Separator, FULL_FAMILY_LIMIT};

const SEPARATION_TOL: f64 = 1e-9;

/// `constant + sum_k coeff_k * x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(j: usize) -> Self {
        Self {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct ChainFamily {
    /// Row-name prefix.
    pub name: String,
    pub phi: OuterSpec,
    pub phi_var: usize,
    /// `chains[i][k - 1]` is the chain entry `y_{ik}`, `k = 1..=m_i`.
    pub chains: Vec<Vec<LinExpr>>,
    /// `levels[i][k]`: value of coordinate `i` at chain level `k = 0..=m_i`.
    pub levels: Table,
    pub switch: Vec<usize>,
    pub side: Side,
}

impl ChainFamily {
    pub fn shape(&self) -> GridShape {
        GridShape::ragged(self.chains.iter().map(|c| c.len()).collect()).expect("nonempty chains")
    }

    fn lengths(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c.len()).collect()
    }

    pub fn count(&self) -> Option<u128> {
        self.shape().staircase_count()
    }

    /// Cut row of one staircase, named `name`.
    pub fn row(&self, omega: &DirectionVector, name: String) -> Constraint {
        let d = self.chains.len();
        let mut point = vec![0.0; d];
        let (constant, coeff) = chain_cut(&self.lengths(), &reversed_mask(d, &self.switch), omega, |p| {
            for (i, &k) in p.iter().enumerate() {
                point[i] = self.levels[i][k];
            }
            self.phi.eval(&point)
        });
        // phi - sum c_k y_k  (<= | >=)  constant
        let mut terms = vec![(self.phi_var, 1.0)];
        let mut rhs = constant;
        for (i, row) in coeff.iter().enumerate() {
            for k in 1..row.len() {
                let c = row[k];
                if c == 0.0 {
                    continue;
                }
                let e = &self.chains[i][k - 1];
                rhs += c * e.constant;
                for &(j, w) in &e.terms {
                    terms.push((j, -c * w));
                }
            }
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, c) in terms {
            match merged.iter_mut().find(|t| t.0 == j) {
                Some(t) => t.1 += c,
                None => merged.push((j, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        Constraint {
            name,
            terms: merged,
            sense: match self.side {
                Side::Over => Sense::Le,
                Side::Under => Sense::Ge,
            },
            rhs,
        }
    }

    /// Chain values `y` at a model point, column 0 set to 1.
    pub fn chain_values(&self, x: &[f64]) -> Table {
        self.chains
            .iter()
            .map(|c| {
                let mut row = Vec::with_capacity(c.len() + 1);
                row.push(1.0);
                row.extend(c.iter().map(|e| e.eval(x)));
                row
            })
            .collect()
    }

    /// The cut of the staircase simplex containing the chain point of `x`.
    pub fn separate(&self, x: &[f64]) -> Constraint {
        let y = self.chain_values(x);
        let omega = containing_staircase(&self.shape(), &y, &reversed_mask(self.chains.len(), &self.switch));
        self.row(&omega, format!("{}_sep", self.name))
    }

    /// Adds every cut as a row when the family is small, otherwise a
    /// separation routine.
    pub fn attach(self, m: &mut MilpModel) -> Result<()> {
        let count = self.count();
        match count {
            Some(c) if c <= FULL_FAMILY_LIMIT => {
                for (k, omega) in enumerate_with_cap(&self.shape(), FULL_FAMILY_LIMIT)?.iter().enumerate() {
                    let row = self.row(omega, format!("{}_{}", self.name, k + 1));
                    m.add_row(row.name, &row.terms, row.sense, row.rhs)?;
                }
            }
            _ => {
                let size = count.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string());
                let family = self.name.clone();
                let fam = Arc::new(self);
                let func = move |x: &[f64]| {
                    let row = fam.separate(x);
                    (row.violation(x) > SEPARATION_TOL).then_some(row)
                };
                m.add_separator(Separator::new(family, size, Arc::new(func)));
            }
        }
        Ok(())
    }
}
