//! Brute-force references: sampled validity, the vertex-combination LP for
//! envelopes, the factorable (McCormick) baseline, random composite
//! instances and the side-by-side comparison of the discretized relaxations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expansion::{apply_switching, termwise_underestimator, MultilinearTerm, OuterSpec, Side, UnderestimatorTable};
use crate::grid::{DirectionVector, GridShape};
use crate::lp::{solve, DenseLp, Sense, Status};
use crate::milp::dcr::{DcrSpec, Evaluator, LocalBoundTable, Relaxation};
use crate::milp::model::{MilpModel, VarKind};
use crate::simplotope::{Breakpoints, Table};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Largest sampled violation of a bound and where it happened.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidityReport {
    pub samples: usize,
    /// `truth - bound` for overestimators, `bound - truth` for
    /// underestimators; nonpositive when valid everywhere sampled.
    pub max_violation: f64,
    pub worst: Vec<f64>,
}

impl ValidityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Uniform box samples from a seeded stream.
pub fn box_samples(lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| lo.iter().zip(hi).map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l }).collect())
        .collect()
}

pub fn validity_sample(
    bound: &dyn Fn(&[f64]) -> Result<f64>,
    truth: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    samples: usize,
    seed: u64,
    side: Side,
) -> Result<ValidityReport> {
    if lo.len() != hi.len() {
        return Err(Error::Dimension("box bounds differ in length".into()));
    }
    let mut report = ValidityReport {
        samples,
        max_violation: f64::NEG_INFINITY,
        worst: Vec::new(),
    };
    for x in box_samples(lo, hi, samples, seed) {
        let gap = side.sign() * (truth(&x) - bound(&x)?);
        if gap > report.max_violation {
            report.max_violation = gap;
            report.worst = x;
        }
    }
    Ok(report)
}

/// Envelope of `phi-bar` over `Q` at `s` from the LP over convex
/// combinations of the vertices of `Q`.
pub fn envelope_oracle(phi: &OuterSpec, a: &Breakpoints, s: &Table, side: Side) -> Result<f64> {
    let pts = a.shape().points();
    let mut lp = DenseLp::new(pts.len(), side == Side::Over);
    lp.objective = pts.iter().map(|p| phi.eval(&a.at(p))).collect();
    lp.add_row(vec![1.0; pts.len()], Sense::Eq, 1.0);
    for i in 0..a.dim() {
        let row = a.row(i);
        if s[i].len() != row.len() {
            return Err(Error::Dimension(format!("s_{} has the wrong length", i + 1)));
        }
        for j in 1..row.len() {
            lp.add_row(pts.iter().map(|p| row[p[i].min(j)]).collect(), Sense::Eq, s[i][j]);
        }
    }
    let sol = solve(&lp)?;
    match sol.status {
        Status::Optimal => Ok(sol.value),
        other => Err(Error::Membership {
            set: "Q",
            detail: format!("vertex LP is {other:?}"),
        }),
    }
}

/// Recursive McCormick relaxation of `g_1 g_2` or `(g_1 g_2) g_3` over a box
/// of nonnegative factors.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorableProduct {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn mc_under(x: f64, y: f64, xl: f64, xu: f64, yl: f64, yu: f64) -> f64 {
    (xl * y + yl * x - xl * yl).max(xu * y + yu * x - xu * yu)
}

fn mc_over(x: f64, y: f64, xl: f64, xu: f64, yl: f64, yu: f64) -> f64 {
    (xu * y + yl * x - xu * yl).min(xl * y + yu * x - xl * yu)
}

pub fn mccormick_baseline(lo: &[f64], hi: &[f64]) -> Result<FactorableProduct> {
    if lo.len() != hi.len() || !(2..=3).contains(&lo.len()) {
        return Err(Error::Invalid("the factorable baseline covers two or three factors".into()));
    }
    if lo.iter().zip(hi).any(|(&l, &h)| l < 0.0 || l > h) {
        return Err(Error::Invalid("factor bounds must be nonnegative and ordered".into()));
    }
    Ok(FactorableProduct {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
    })
}

impl FactorableProduct {
    /// Convex underestimator at factor values `g`.
    pub fn under(&self, g: &[f64]) -> f64 {
        let (l, u) = (&self.lo, &self.hi);
        let t = mc_under(g[0], g[1], l[0], u[0], l[1], u[1]);
        if g.len() == 2 {
            return t;
        }
        // t carries a positive coefficient in both rows, so its own
        // underestimator is the right substitute
        mc_under(t, g[2], l[0] * l[1], u[0] * u[1], l[2], u[2])
    }

    /// Concave overestimator at factor values `g`.
    pub fn over(&self, g: &[f64]) -> f64 {
        let (l, u) = (&self.lo, &self.hi);
        let t = mc_over(g[0], g[1], l[0], u[0], l[1], u[1]);
        if g.len() == 2 {
            return t;
        }
        mc_over(t, g[2], l[0] * l[1], u[0] * u[1], l[2], u[2])
    }
}

/// Affine form `constant + sum coeff_i x_i^2` of an underestimator of
/// `x_1^2 x_2^2 x_3^2` on `[1, 2]^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaresCut {
    pub constant: f64,
    pub coeff: [f64; 3],
}

impl SquaresCut {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + (0..3).map(|i| self.coeff[i] * x[i] * x[i]).sum::<f64>()
    }
}

/// The staircase underestimator of `g h` with `g = x_1^2 x_2^2` carried by
/// `(1, e, g)` over `(1, 7, 16)` and `h = x_3^2` over `(1, 4)`, switched in
/// `h`, followed by `e = x_1^2 + x_2^2 - 1` and `g >= 4 x_1^2 + 4 x_2^2 - 16`.
pub fn squares_cut() -> Result<SquaresCut> {
    let phi = OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]);
    let shape = GridShape::ragged(vec![2, 1])?;
    let omega = DirectionVector::from_one_based(&shape, &[1, 2, 1])?;
    let value = |e: f64, g: f64, h: f64| -> Result<f64> {
        let t = UnderestimatorTable::new(vec![vec![1.0, e, g], vec![1.0, h]], vec![vec![1.0, 7.0, 16.0], vec![1.0, 4.0]])?;
        termwise_underestimator(&phi, &apply_switching(&t, &[1])?, &omega)
    };
    // affine in (e, g, h) for a fixed staircase: read it off four tables
    let base = value(2.0, 9.0, 2.0)?;
    let ce = value(3.0, 9.0, 2.0)? - base;
    let cg = value(2.0, 10.0, 2.0)? - base;
    let ch = value(2.0, 9.0, 3.0)? - base;
    let c0 = base - 2.0 * ce - 9.0 * cg - 2.0 * ch;
    let check = value(5.0, 12.0, 3.5)?;
    if (check - (c0 + 5.0 * ce + 12.0 * cg + 3.5 * ch)).abs() > 1e-9 {
        return Err(Error::Invalid("staircase bound is not affine in the table".into()));
    }
    if cg < 0.0 {
        return Err(Error::Invalid("g enters negatively; its underestimator cannot be substituted".into()));
    }
    Ok(SquaresCut {
        constant: c0 - ce - 16.0 * cg,
        coeff: [ce + 4.0 * cg, ce + 4.0 * cg, ch],
    })
}

/// A composite instance `phi(f(x))` with numeric inner functions and
/// underestimators.
#[derive(Clone)]
pub struct CompositeInstance {
    pub name: String,
    pub phi: OuterSpec,
    pub a: Breakpoints,
    pub side: Side,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub inner: Vec<ScalarFn>,
    /// `under[i][j]` for `0 < j < n_i`; other slots are ignored.
    pub under: Vec<Vec<Option<ScalarFn>>>,
    pub bounds: Option<LocalBoundTable>,
}

impl std::fmt::Debug for CompositeInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeInstance")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("side", &self.side)
            .finish_non_exhaustive()
    }
}

impl CompositeInstance {
    /// Wraps an emitted-model spec; `inner` supplies `f_i(x)`.
    pub fn from_dcr(name: impl Into<String>, spec: &DcrSpec, inner: Vec<ScalarFn>, bounds: Option<LocalBoundTable>) -> Self {
        let under = spec
            .under
            .iter()
            .map(|row| {
                row.iter()
                    .map(|u| {
                        u.clone().map(|u| {
                            let f: ScalarFn = Arc::new(move |x: &[f64]| u.eval(x));
                            f
                        })
                    })
                    .collect()
            })
            .collect();
        Self {
            name: name.into(),
            phi: spec.phi.clone(),
            a: spec.a.clone(),
            side: spec.side,
            x_lower: spec.x_lower.clone(),
            x_upper: spec.x_upper.clone(),
            inner,
            under,
            bounds,
        }
    }

    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        self.inner.iter().map(|g| g(x)).collect()
    }

    /// Underestimator table at `x`, `-inf` where none is given.
    pub fn u(&self, x: &[f64], f: &[f64]) -> Table {
        (0..self.a.dim())
            .map(|i| {
                let n = self.a.segments(i);
                (0..=n)
                    .map(|j| {
                        if j == 0 {
                            self.a.row(i)[0]
                        } else if j == n {
                            f[i]
                        } else {
                            self.under[i][j].as_ref().map_or(f64::NEG_INFINITY, |u| u(x))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn truth(&self, x: &[f64]) -> f64 {
        self.phi.eval(&self.f(x))
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator::new(self.phi.clone(), self.a.clone(), self.side, self.bounds.clone())
    }

    /// Piece bounds from `samples` box points plus `slack` of the piece width.
    pub fn sampled_bounds(&self, samples: usize, seed: u64, slack: f64) -> Result<LocalBoundTable> {
        let pts: Vec<(Vec<f64>, Table)> = box_samples(&self.x_lower, &self.x_upper, samples, seed)
            .into_iter()
            .map(|x| {
                let f = self.f(&x);
                let u = self.u(&x, &f);
                (f, u)
            })
            .collect();
        LocalBoundTable::sampled(&self.a, &pts, slack)
    }
}

/// Relaxation values at one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub index: usize,
    pub x: Vec<f64>,
    pub truth: f64,
    pub plain: f64,
    pub h_minus: f64,
    pub h: f64,
    pub h_plus: Option<f64>,
    /// Names of the orderings that failed at this sample.
    pub failures: Vec<&'static str>,
}

/// `x` is at least as tight as `y` on `side`.
fn tighter(side: Side, x: f64, y: f64, tol: f64) -> bool {
    side.sign() * (x - y) <= tol
}

/// Evaluates the four relaxations at seeded samples and checks
/// `truth` within `h_plus` within `h`, and `h` within both `plain` and
/// `h_minus`, where "within" follows the side of the bound.
pub fn compare_relaxations(inst: &CompositeInstance, samples: usize, seed: u64, tol: f64) -> Result<Vec<CompareRow>> {
    let ev = inst.evaluator();
    let mut rows = Vec::with_capacity(samples);
    for (index, x) in box_samples(&inst.x_lower, &inst.x_upper, samples, seed).into_iter().enumerate() {
        let f = inst.f(&x);
        let u = inst.u(&x, &f);
        let truth = inst.phi.eval(&f);
        let plain = ev.closed_form(Relaxation::Plain, &u, &f)?;
        let h_minus = ev.closed_form(Relaxation::HMinus, &u, &f)?;
        let h = ev.closed_form(Relaxation::H, &u, &f)?;
        let h_plus = match inst.bounds {
            Some(_) => Some(ev.closed_form(Relaxation::HPlus, &u, &f)?),
            None => None,
        };
        let side = inst.side;
        let mut failures = Vec::new();
        if !tighter(side, h, plain, tol) {
            failures.push("h_vs_plain");
        }
        if !tighter(side, h, h_minus, tol) {
            failures.push("h_vs_h_minus");
        }
        let inner = h_plus.unwrap_or(h);
        if let Some(hp) = h_plus {
            if !tighter(side, hp, h, tol) {
                failures.push("h_plus_vs_h");
            }
        }
        if !tighter(side, truth, inner, tol) {
            failures.push("truth_vs_bound");
        }
        rows.push(CompareRow {
            index,
            x,
            truth,
            plain,
            h_minus,
            h,
            h_plus,
            failures,
        });
    }
    Ok(rows)
}

/// CSV with one line per sample; numbers in shortest round-trip form.
pub fn compare_csv(rows: &[CompareRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(["index", "x", "truth", "phi", "phi_h_minus", "phi_h", "phi_h_plus", "failures"])
        .map_err(io)?;
    for r in rows {
        let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        w.write_record([
            r.index.to_string(),
            x.join(" "),
            r.truth.to_string(),
            r.plain.to_string(),
            r.h_minus.to_string(),
            r.h.to_string(),
            r.h_plus.map_or_else(String::new, |v| v.to_string()),
            r.failures.join(" "),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(format!("csv: {e}")))
}

/// Which family a random instance comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomKind {
    /// `prod f_i`, `d <= 3`, bounded from above.
    Product,
    /// `f_1 f_2` bounded from below.
    Bilinear,
    /// `f_1 f_2 + f_2 f_3` bounded from below.
    Path,
}

fn random_breakpoints(rng: &mut ChaCha8Rng, d: usize, max_n: usize) -> Result<Breakpoints> {
    let mut rows = Vec::with_capacity(d);
    let mut taus = Vec::with_capacity(d);
    for _ in 0..d {
        let n = rng.gen_range(1..=max_n);
        let mut row = vec![rng.gen_range(0.0..1.0)];
        for _ in 0..n {
            let last = *row.last().unwrap();
            row.push(last + rng.gen_range(0.5..2.0));
        }
        let mut tau = vec![0];
        tau.extend((1..n).filter(|_| rng.gen_bool(0.5)));
        tau.push(n);
        rows.push(row);
        taus.push(tau);
    }
    Breakpoints::with_selector(rows, taus)
}

/// Instance on `[0, 1]^d` with `f_i = a_{i0} + (a_{in} - a_{i0}) x_i^{p_i}`
/// and `u_{ij} = alpha (f_i - (a_{in} - a_{ij})) + (1 - alpha) a_{i0}`.
/// The piece bounds are the exact maxima of the underestimators per piece.
pub fn random_instance(kind: RandomKind, seed: u64) -> Result<CompositeInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, phi, side) = match kind {
        RandomKind::Product => {
            let d = rng.gen_range(1..=3);
            (d, OuterSpec::product(d).with_over_switch(vec![]), Side::Over)
        }
        RandomKind::Bilinear => (
            2,
            OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]),
            Side::Under,
        ),
        RandomKind::Path => (
            3,
            OuterSpec::multilinear(3, vec![MultilinearTerm::new(1.0, vec![0, 1]), MultilinearTerm::new(1.0, vec![1, 2])])?
                .with_over_switch(vec![])
                .with_under_switch(vec![1]),
            Side::Under,
        ),
    };
    let a = random_breakpoints(&mut rng, d, 3)?;
    let mut inner: Vec<ScalarFn> = Vec::with_capacity(d);
    let mut under: Vec<Vec<Option<ScalarFn>>> = Vec::with_capacity(d);
    let mut bd = Vec::with_capacity(d);
    for i in 0..d {
        let row = a.row(i).to_vec();
        let n = row.len() - 1;
        let (lo, hi) = (row[0], row[n]);
        let p: f64 = rng.gen_range(0.5..3.0);
        let alpha: f64 = rng.gen_range(0.2..1.0);
        inner.push(Arc::new(move |x: &[f64]| lo + (hi - lo) * x[i].clamp(0.0, 1.0).powf(p)));
        let ui = |f: f64, j: usize| alpha * (f - (hi - row[j])) + (1.0 - alpha) * lo;
        let mut urow: Vec<Option<ScalarFn>> = vec![None; n + 1];
        for (j, slot) in urow.iter_mut().enumerate().take(n).skip(1) {
            if rng.gen_bool(0.8) {
                let rj = row[j];
                *slot = Some(Arc::new(move |x: &[f64]| {
                    let f = lo + (hi - lo) * x[i].clamp(0.0, 1.0).powf(p);
                    alpha * (f - (hi - rj)) + (1.0 - alpha) * lo
                }));
            }
        }
        // u is increasing in f, so its piece maximum sits at the right end
        let tau = a.selector(i);
        let mut bi = vec![vec![0.0; a.pieces(i)]; n + 1];
        for k in 0..a.pieces(i) {
            let top = row[tau[k + 1]];
            let mut run = row[tau[k]];
            for j in 0..=n {
                if j > 0 && j < n && urow[j].is_some() {
                    run = run.max(ui(top, j));
                }
                bi[j][k] = run;
            }
        }
        bd.push(bi);
        under.push(urow);
    }
    let bounds = LocalBoundTable::tightened(&a, bd)?;
    Ok(CompositeInstance {
        name: format!("{kind:?}-{seed}").to_lowercase(),
        phi,
        a,
        side,
        x_lower: vec![0.0; d],
        x_upper: vec![1.0; d],
        inner,
        under,
        bounds: Some(bounds),
    })
}

/// Largest distance to `{0, 1}` of the binaries at LP optima for seeded
/// random objectives. `phi_sign` fixes the sign of the `phi` coefficient so
/// one-sided models stay bounded.
#[derive(Clone, Debug, PartialEq)]
pub struct IdealityReport {
    pub trials: usize,
    pub worst_fraction: f64,
}

fn random_objective(m: &MilpModel, rng: &mut ChaCha8Rng, phi_sign: f64) -> Vec<f64> {
    let phi = m.var("phi");
    (0..m.num_vars())
        .map(|j| {
            if Some(j) == phi {
                phi_sign * rng.gen_range(0.5..1.5)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect()
}

pub fn ideality_check(m: &MilpModel, trials: usize, seed: u64, phi_sign: f64) -> Result<IdealityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins: Vec<usize> = (0..m.num_vars()).filter(|&j| m.variables()[j].kind == VarKind::Binary).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let obj = random_objective(m, &mut rng, phi_sign);
        let sol = m.solve_relaxation(&obj, true)?;
        if sol.status != Status::Optimal {
            return Err(Error::Lp(format!("relaxation of {} is {:?}", m.tag, sol.status)));
        }
        for &j in &bins {
            let v = sol.x[j];
            worst = worst.max(v.min(1.0 - v).max(0.0).max(-v).max(v - 1.0));
        }
    }
    Ok(IdealityReport {
        trials,
        worst_fraction: worst,
    })
}

/// Largest distance of the `w` block from a unit vector over LP optima for
/// seeded random objectives.
pub fn w_vertex_check(m: &MilpModel, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws: Vec<usize> = (0..m.num_vars()).filter(|&j| m.variables()[j].name.starts_with("w_")).collect();
    if ws.is_empty() {
        return Err(Error::Model(format!("{} has no w variables", m.tag)));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let obj: Vec<f64> = (0..m.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = m.solve_relaxation(&obj, true)?;
        if sol.status != Status::Optimal {
            return Err(Error::Lp(format!("relaxation of {} is {:?}", m.tag, sol.status)));
        }
        let top = ws.iter().copied().max_by(|&p, &q| sol.x[p].total_cmp(&sol.x[q])).expect("nonempty");
        for &j in &ws {
            let target = if j == top { 1.0 } else { 0.0 };
            worst = worst.max((sol.x[j] - target).abs());
        }
    }
    Ok(worst)
}
