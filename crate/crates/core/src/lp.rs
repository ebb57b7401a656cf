//! Dense two-phase primal simplex for the small LPs behind the oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-9;
const MAX_DIM: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `max/min c'x` subject to `A x (<=|>=|=) b` and `l <= x <= u` (bounds may
/// be infinite).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLp {
    pub maximize: bool,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseLp {
    /// Empty problem over `k` nonnegative variables.
    pub fn new(k: usize, maximize: bool) -> Self {
        Self {
            maximize,
            objective: vec![0.0; k],
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; k],
            upper: vec![f64::INFINITY; k],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, row: Vec<f64>, sense: Sense, rhs: f64) {
        self.rows.push(row);
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    /// Sparse row helper.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, c) in terms {
            row[j] += c;
        }
        self.add_row(row, sense, rhs);
    }

    fn validate(&self) -> Result<()> {
        let k = self.num_vars();
        if k > MAX_DIM || self.rows.len() > MAX_DIM {
            return Err(Error::Lp(format!(
                "{} rows x {k} columns exceeds the {MAX_DIM} limit",
                self.rows.len()
            )));
        }
        if self.lower.len() != k || self.upper.len() != k {
            return Err(Error::Lp("bound vectors do not match the variable count".into()));
        }
        if self.senses.len() != self.rows.len() || self.rhs.len() != self.rows.len() {
            return Err(Error::Lp("row, sense and rhs counts differ".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::Lp(format!("row {i} has {} entries, expected {k}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) || !self.rhs[i].is_finite() {
                return Err(Error::Lp(format!("row {i} has a non-finite entry")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Lp("objective has a non-finite entry".into()));
        }
        for j in 0..k {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::Lp(format!("variable {j} has empty or invalid bounds")));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("variable {j} has an infinite bound on the wrong side")));
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            let lhs: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match self.senses[i] {
                Sense::Le => lhs - self.rhs[i],
                Sense::Ge => self.rhs[i] - lhs,
                Sense::Eq => (lhs - self.rhs[i]).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// Bland's smallest-index rule throughout.
    Bland,
    /// Largest reduced cost, switching to Bland after a run of degenerate pivots.
    DantzigBland,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub rule: PivotRule,
    pub max_iterations: usize,
    pub degenerate_streak: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rule: PivotRule::DantzigBland,
            max_iterations: 50_000,
            degenerate_streak: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// Objective value in the caller's sense; NaN unless optimal.
    pub value: f64,
    /// Primal point; empty unless optimal.
    pub x: Vec<f64>,
    /// Basic columns of the internal standard form.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

/// How an original variable maps to standard-form columns.
#[derive(Clone, Copy)]
enum Map {
    /// `x = offset + col`
    Shift(usize, f64),
    /// `x = offset - col`
    Reflect(usize, f64),
    /// `x = pos - neg`
    Split(usize, usize),
}

struct Tableau {
    m: usize,
    width: usize,
    /// `m` rows of `width` entries; the last entry is the rhs.
    a: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let w = self.width;
        let p = self.a[r * w + c];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let prow: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                let row = &mut self.a[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Maximizes the objective row `obj` (reduced costs, `obj[j] > 0` improves).
    /// `obj[width-1]` accumulates minus the objective value.
    fn run(&mut self, obj: &mut [f64], allowed: &[bool], opts: &SolverOptions) -> Result<bool> {
        let mut streak = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(Error::Lp(format!(
                    "iteration limit reached after {} pivots",
                    self.iterations
                )));
            }
            let bland = opts.rule == PivotRule::Bland || streak >= opts.degenerate_streak;
            let mut enter = None;
            let mut best = OPT_TOL;
            for j in 0..self.width - 1 {
                if !allowed[j] || obj[j] <= OPT_TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if obj[j] > best {
                    best = obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.at(i, c);
                if v > PIVOT_TOL {
                    let ratio = self.rhs(i) / v;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio.abs() <= FEAS_TOL {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, c, obj);
        }
    }
}

/// Solves with default options.
pub fn solve(lp: &DenseLp) -> Result<Solution> {
    solve_with(lp, &SolverOptions::default())
}

pub fn solve_with(lp: &DenseLp, opts: &SolverOptions) -> Result<Solution> {
    lp.validate()?;
    let k = lp.num_vars();
    // standard form columns
    let mut maps = Vec::with_capacity(k);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..k {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            maps.push(Map::Shift(ncols, l));
            if u.is_finite() {
                extra_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(Map::Reflect(ncols, u));
            ncols += 1;
        } else {
            maps.push(Map::Split(ncols, ncols + 1));
            ncols += 2;
        }
    }
    let nstruct = ncols;
    // rows over structural columns
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(lp.rows.len() + extra_rows.len());
    for (i, r) in lp.rows.iter().enumerate() {
        let mut row = vec![0.0; nstruct];
        let mut b = lp.rhs[i];
        for (j, &v) in r.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            match maps[j] {
                Map::Shift(c, off) => {
                    row[c] += v;
                    b -= v * off;
                }
                Map::Reflect(c, off) => {
                    row[c] -= v;
                    b -= v * off;
                }
                Map::Split(p, q) => {
                    row[p] += v;
                    row[q] -= v;
                }
            }
        }
        rows.push((row, lp.senses[i], b));
    }
    for &(c, cap) in &extra_rows {
        let mut row = vec![0.0; nstruct];
        row[c] = 1.0;
        rows.push((row, Sense::Le, cap));
    }
    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            for v in r.0.iter_mut() {
                *v = -*v;
            }
            r.2 = -r.2;
            r.1 = match r.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let nart = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let total = nstruct + nslack + nart;
    let width = total + 1;
    let mut a = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let mut is_art = vec![false; total];
    let (mut sc, mut ac) = (nstruct, nstruct + nslack);
    for (i, (row, sense, b)) in rows.iter().enumerate() {
        a[i * width..i * width + nstruct].copy_from_slice(row);
        a[i * width + total] = *b;
        match sense {
            Sense::Le => {
                a[i * width + sc] = 1.0;
                basis[i] = sc;
                sc += 1;
            }
            Sense::Ge => {
                a[i * width + sc] = -1.0;
                sc += 1;
                a[i * width + ac] = 1.0;
                basis[i] = ac;
                is_art[ac] = true;
                ac += 1;
            }
            Sense::Eq => {
                a[i * width + ac] = 1.0;
                basis[i] = ac;
                is_art[ac] = true;
                ac += 1;
            }
        }
    }
    let mut t = Tableau {
        m,
        width,
        a,
        basis,
        iterations: 0,
    };
    // phase 1: maximize -sum(artificials)
    if nart > 0 {
        let mut obj = vec![0.0; width];
        for i in 0..m {
            if is_art[t.basis[i]] {
                for j in 0..width {
                    obj[j] += t.at(i, j);
                }
            }
        }
        for j in 0..total {
            if is_art[j] {
                obj[j] = 0.0;
            }
        }
        let allowed = vec![true; total];
        t.run(&mut obj, &allowed, opts)?;
        let infeas = obj[width - 1];
        if infeas > FEAS_TOL * (1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
            return Ok(Solution {
                status: Status::Infeasible,
                value: f64::NAN,
                x: Vec::new(),
                basis: t.basis.clone(),
                iterations: t.iterations,
            });
        }
        // drive artificials out of the basis where possible
        for i in 0..m {
            if is_art[t.basis[i]] {
                if let Some(c) = (0..total).find(|&j| !is_art[j] && t.at(i, j).abs() > PIVOT_TOL) {
                    let mut dummy = vec![0.0; width];
                    t.pivot(i, c, &mut dummy);
                }
            }
        }
    }
    // phase 2
    let sign = if lp.maximize { 1.0 } else { -1.0 };
    let mut cost = vec![0.0; width];
    for j in 0..k {
        let c = sign * lp.objective[j];
        match maps[j] {
            Map::Shift(col, _) => {
                cost[col] += c;
            }
            Map::Reflect(col, _) => {
                cost[col] -= c;
            }
            Map::Split(p, q) => {
                cost[p] += c;
                cost[q] -= c;
            }
        }
    }
    let mut obj = cost.clone();
    for i in 0..m {
        let cb = cost[t.basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                obj[j] -= cb * t.at(i, j);
            }
        }
    }
    let allowed: Vec<bool> = (0..total).map(|j| !is_art[j]).collect();
    let bounded = t.run(&mut obj, &allowed, opts)?;
    if !bounded {
        return Ok(Solution {
            status: Status::Unbounded,
            value: f64::NAN,
            x: Vec::new(),
            basis: t.basis.clone(),
            iterations: t.iterations,
        });
    }
    let mut col = vec![0.0; total];
    for i in 0..m {
        col[t.basis[i]] = t.rhs(i).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| match *mp {
            Map::Shift(c, off) => off + col[c],
            Map::Reflect(c, off) => off - col[c],
            Map::Split(p, q) => col[p] - col[q],
        })
        .collect();
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Solution {
        status: Status::Optimal,
        value,
        x,
        basis: t.basis,
        iterations: t.iterations,
    })
}

/// Solves `lp` under `trials` random objectives (entries uniform in
/// `[-1, 1]`, seeded) and returns the distinct optimal points.
pub fn vertex_sample(lp: &DenseLp, trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut probe = lp.clone();
    probe.maximize = true;
    for _ in 0..trials {
        for c in probe.objective.iter_mut() {
            *c = rng.gen_range(-1.0..=1.0);
        }
        let sol = solve(&probe)?;
        match sol.status {
            Status::Optimal => {
                if !out
                    .iter()
                    .any(|v| v.iter().zip(&sol.x).all(|(a, b)| (a - b).abs() <= 1e-9))
                {
                    out.push(sol.x);
                }
            }
            Status::Unbounded => {
                return Err(Error::Lp("unbounded direction found while sampling vertices".into()))
            }
            Status::Infeasible => return Err(Error::Lp("sampling an infeasible region".into())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable() {
        let mut lp = DenseLp::new(1, true);
        lp.objective[0] = 1.0;
        lp.add_row(vec![1.0], Sense::Le, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = DenseLp::new(1, true);
        lp.objective[0] = 1.0;
        assert_eq!(solve(&lp).unwrap().status, Status::Unbounded);
        lp.add_row(vec![1.0], Sense::Ge, 2.0);
        lp.add_row(vec![1.0], Sense::Le, 1.0);
        assert_eq!(solve(&lp).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn bounds_and_free_variables() {
        // min x + y, x in [-3, 5], y free, x + y >= -1, y <= 4 - x... => value -1
        let mut lp = DenseLp::new(2, false);
        lp.objective = vec![1.0, 2.0];
        lp.lower = vec![-3.0, f64::NEG_INFINITY];
        lp.upper = vec![5.0, f64::INFINITY];
        lp.add_row(vec![1.0, 1.0], Sense::Ge, -1.0);
        lp.add_row(vec![0.0, 1.0], Sense::Ge, -10.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        // y as small as possible: x = 5, y = -6 gives 5 - 12 = -7
        assert!((s.value + 7.0).abs() < 1e-9, "{}", s.value);
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn upper_only_bound() {
        let mut lp = DenseLp::new(1, true);
        lp.objective[0] = 1.0;
        lp.lower[0] = f64::NEG_INFINITY;
        lp.upper[0] = -2.5;
        let s = solve(&lp).unwrap();
        assert_eq!(s.x, vec![-2.5]);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let mut lp = DenseLp::new(4, true);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0);
        lp.add_row(vec![0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        for rule in [PivotRule::Bland, PivotRule::DantzigBland] {
            let opts = SolverOptions {
                rule,
                degenerate_streak: 3,
                ..SolverOptions::default()
            };
            let s = solve_with(&lp, &opts).unwrap();
            assert!((s.value - 0.05).abs() < 1e-9, "{}", s.value);
        }
    }

    #[test]
    fn square_vertices() {
        let mut lp = DenseLp::new(2, true);
        lp.upper = vec![1.0, 1.0];
        let v = vertex_sample(&lp, 100, 7).unwrap();
        assert!(v.len() <= 4);
        for p in v {
            assert!(p.iter().all(|&c| c == 0.0 || c == 1.0));
        }
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = DenseLp::new(2, true);
        lp.objective = vec![1.0, 1.0];
        lp.add_row(vec![1.0, 1.0], Sense::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0], Sense::Eq, 2.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
    }
}
