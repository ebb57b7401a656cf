//! Staircase expansions of composite functions and their termwise relaxations.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::grid::{DirectionVector, GridShape};
use crate::simplotope::{upper_hull_values, Table};

const IDENTITY_TOL: f64 = 1e-9;
/// Tolerance for Loewner-order checks.
pub const PSD_TOL: f64 = 1e-8;

/// Which side of the composite function a bound estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Overestimator / concave side.
    Over,
    /// Underestimator / convex side.
    Under,
}

impl Side {
    /// `+1` for `Over`, `-1` for `Under`.
    pub fn sign(self) -> f64 {
        match self {
            Side::Over => 1.0,
            Side::Under => -1.0,
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Over => Side::Under,
            Side::Under => Side::Over,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Over => "over",
            Side::Under => "under",
        })
    }
}

/// Curvature of the outer function in one argument with the others fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
    Linear,
    Unknown,
}

impl Curvature {
    fn negate(self) -> Self {
        match self {
            Curvature::Convex => Curvature::Concave,
            Curvature::Concave => Curvature::Convex,
            c => c,
        }
    }
}

/// `coeff * prod_{i in vars} f_i`, with 0-based indices.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MultilinearTerm {
    pub coeff: f64,
    pub vars: Vec<usize>,
}

impl MultilinearTerm {
    pub fn new(coeff: f64, vars: Vec<usize>) -> Self {
        Self { coeff, vars }
    }

    pub fn eval(&self, f: &[f64]) -> f64 {
        self.vars.iter().fold(self.coeff, |acc, &i| acc * f[i])
    }
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// An outer function `phi : R^d -> R` with the structural facts the
/// relaxations rely on.
///
/// `over_switch = Some(T)` declares `phi(T)` supermodular on the box, which
/// licenses overestimators; `under_switch = Some(T)` declares `-phi(T)`
/// supermodular, which licenses underestimators.
#[derive(Clone)]
pub struct OuterSpec {
    arity: usize,
    eval: Evaluator,
    terms: Option<Vec<MultilinearTerm>>,
    over_switch: Option<Vec<usize>>,
    under_switch: Option<Vec<usize>>,
    componentwise: Vec<Curvature>,
    extendable: bool,
}

impl fmt::Debug for OuterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OuterSpec")
            .field("arity", &self.arity)
            .field("terms", &self.terms)
            .field("over_switch", &self.over_switch)
            .field("under_switch", &self.under_switch)
            .field("componentwise", &self.componentwise)
            .field("extendable", &self.extendable)
            .finish()
    }
}

impl OuterSpec {
    /// A general outer function. No structural flags are set.
    pub fn new(arity: usize, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            arity,
            eval: Arc::new(eval),
            terms: None,
            over_switch: None,
            under_switch: None,
            componentwise: vec![Curvature::Unknown; arity],
            extendable: false,
        }
    }

    /// `sum_k c_k prod_{i in I_k} f_i`. Multilinear functions are linear in
    /// each argument and concave-extendable from vertices.
    pub fn multilinear(arity: usize, terms: Vec<MultilinearTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.vars.iter().any(|&i| i >= arity)) {
            return Err(Error::Dimension(format!(
                "multilinear term {:?} refers past arity {arity}",
                t.vars
            )));
        }
        for t in &terms {
            let set: BTreeSet<_> = t.vars.iter().collect();
            if set.len() != t.vars.len() {
                return Err(Error::Invalid(format!(
                    "multilinear term {:?} repeats a variable",
                    t.vars
                )));
            }
        }
        let stored = terms.clone();
        let mut spec = Self::new(arity, move |f| terms.iter().map(|t| t.eval(f)).sum());
        spec.terms = Some(stored);
        spec.componentwise = vec![Curvature::Linear; arity];
        spec.extendable = true;
        Ok(spec)
    }

    /// `prod_i f_i`.
    pub fn product(arity: usize) -> Self {
        Self::multilinear(arity, vec![MultilinearTerm::new(1.0, (0..arity).collect())])
            .expect("valid product")
    }

    /// Declare `phi(T)` supermodular on the box.
    pub fn with_over_switch(mut self, t: Vec<usize>) -> Self {
        self.over_switch = Some(normalize_set(t));
        self
    }

    /// Declare `-phi(T)` supermodular on the box.
    pub fn with_under_switch(mut self, t: Vec<usize>) -> Self {
        self.under_switch = Some(normalize_set(t));
        self
    }

    pub fn with_componentwise(mut self, c: Vec<Curvature>) -> Self {
        assert_eq!(c.len(), self.arity, "one curvature flag per argument");
        self.componentwise = c;
        self
    }

    /// Assert concave-extendability of `phi-bar` from the vertices of `Q`.
    pub fn with_extendable(mut self, yes: bool) -> Self {
        self.extendable = yes;
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, f: &[f64]) -> f64 {
        (self.eval)(f)
    }

    pub fn terms(&self) -> Option<&[MultilinearTerm]> {
        self.terms.as_deref()
    }

    pub fn over_switch(&self) -> Option<&[usize]> {
        self.over_switch.as_deref()
    }

    pub fn under_switch(&self) -> Option<&[usize]> {
        self.under_switch.as_deref()
    }

    /// Declared switch set for `side`.
    pub fn switch_set(&self, side: Side) -> Option<&[usize]> {
        match side {
            Side::Over => self.over_switch(),
            Side::Under => self.under_switch(),
        }
    }

    pub fn componentwise(&self) -> &[Curvature] {
        &self.componentwise
    }

    pub fn is_extendable(&self) -> bool {
        self.extendable
    }

    /// `-phi`, with flags transformed accordingly.
    pub fn negated(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            arity: self.arity,
            eval: Arc::new(move |f| -inner(f)),
            terms: self.terms.as_ref().map(|ts| {
                ts.iter()
                    .map(|t| MultilinearTerm::new(-t.coeff, t.vars.clone()))
                    .collect()
            }),
            over_switch: self.under_switch.clone(),
            under_switch: self.over_switch.clone(),
            componentwise: self.componentwise.iter().map(|c| c.negate()).collect(),
            extendable: self.extendable,
        }
    }

    /// Compares the evaluator against the term list at random box points.
    pub fn check_terms(&self, lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Result<()> {
        let Some(terms) = &self.terms else {
            return Ok(());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let f: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            let direct: f64 = terms.iter().map(|t| t.eval(&f)).sum();
            let got = self.eval(&f);
            if (direct - got).abs() > IDENTITY_TOL * (1.0 + direct.abs()) {
                return Err(Error::Premise(format!(
                    "evaluator {got} disagrees with term list {direct} at {f:?}"
                )));
            }
        }
        Ok(())
    }

    /// Spot-checks the lattice inequality for `sign * phi(T)` at random pairs.
    pub fn spot_check_supermodular(
        &self,
        side: Side,
        lo: &[f64],
        hi: &[f64],
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        let t = self.switch_set(side).ok_or_else(|| {
            Error::Premise(format!("no supermodularity declaration for the {side} side"))
        })?;
        let sign = side.sign();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let x: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            let y: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            let mut join = x.clone();
            let mut meet = x.clone();
            for i in 0..x.len() {
                let (big, small) = (x[i].max(y[i]), x[i].min(y[i]));
                if t.contains(&i) {
                    join[i] = small;
                    meet[i] = big;
                } else {
                    join[i] = big;
                    meet[i] = small;
                }
            }
            let gap = sign
                * (self.eval(&join) + self.eval(&meet) - self.eval(&x) - self.eval(&y));
            if gap < -IDENTITY_TOL * (1.0 + self.eval(&x).abs()) {
                return Err(Error::Premise(format!(
                    "lattice inequality fails by {} at {x:?}, {y:?}",
                    -gap
                )));
            }
        }
        Ok(())
    }
}

/// For a multilinear `phi`, certifies that `sign * phi(T)` is supermodular on
/// the box by checking every mixed second derivative at every corner.
pub fn certify_multilinear_supermodular(
    terms: &[MultilinearTerm],
    t: &[usize],
    side: Side,
    lo: &[f64],
    hi: &[f64],
) -> bool {
    let d = lo.len();
    if d > 20 {
        return false;
    }
    let flip = |i: usize| if t.contains(&i) { -1.0 } else { 1.0 };
    for mask in 0u64..(1u64 << d) {
        let corner: Vec<f64> = (0..d)
            .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
            .collect();
        for i in 0..d {
            for j in i + 1..d {
                let mixed: f64 = terms
                    .iter()
                    .filter(|term| term.vars.contains(&i) && term.vars.contains(&j))
                    .map(|term| {
                        term.vars
                            .iter()
                            .filter(|&&k| k != i && k != j)
                            .fold(term.coeff, |acc, &k| acc * corner[k])
                    })
                    .sum();
                if side.sign() * flip(i) * flip(j) * mixed < -IDENTITY_TOL {
                    return false;
                }
            }
        }
    }
    true
}

fn normalize_set(t: Vec<usize>) -> Vec<usize> {
    let set: BTreeSet<usize> = t.into_iter().collect();
    set.into_iter().collect()
}

/// Underestimator values `u` with bounding values `a` at one point, satisfying
/// the ordering system
/// `a_{i0} <= ... <= a_{in}`, `u_{i0} = a_{i0}`, `u_{ij} <= min(u_{in}, a_{ij})`.
///
/// Switched rows hold `(U(T)u, A(T)a)` and satisfy the reflected system.
#[derive(Clone, Debug, PartialEq)]
pub struct UnderestimatorTable {
    u: Table,
    a: Table,
    switched: Vec<bool>,
}

impl UnderestimatorTable {
    pub fn new(u: Table, a: Table) -> Result<Self> {
        if u.len() != a.len() || u.is_empty() {
            return Err(Error::Dimension("u and a need the same number of rows".into()));
        }
        for (i, (ur, ar)) in u.iter().zip(&a).enumerate() {
            if ur.len() != ar.len() || ur.len() < 2 {
                return Err(Error::Dimension(format!(
                    "row {} has {} u-entries and {} a-entries",
                    i + 1,
                    ur.len(),
                    ar.len()
                )));
            }
        }
        let t = Self {
            switched: vec![false; u.len()],
            u,
            a,
        };
        t.validate(IDENTITY_TOL)?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &Table {
        &self.u
    }

    pub fn a(&self) -> &Table {
        &self.a
    }

    pub fn shape(&self) -> GridShape {
        GridShape::ragged(self.u.iter().map(|r| r.len() - 1).collect()).expect("validated rows")
    }

    /// Coordinates currently held in switched form.
    pub fn switched(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.switched[i]).collect()
    }

    /// Last column, `f(x)` in both orientations.
    pub fn values(&self) -> Vec<f64> {
        self.u.iter().map(|r| *r.last().unwrap()).collect()
    }

    /// Checks the ordering system (reflected for switched rows). Tolerances
    /// scale with the magnitude of the row.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for i in 0..self.dim() {
            let (u, a) = (&self.u[i], &self.a[i]);
            let n = u.len() - 1;
            let scale = tol * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let s = if self.switched[i] { -1.0 } else { 1.0 };
            for j in 1..=n {
                if s * (a[j] - a[j - 1]) < -scale {
                    return Err(Error::Ordering {
                        i: i + 1,
                        j,
                        detail: format!(
                            "bounds not {} at a_{j} = {}",
                            if s > 0.0 { "nondecreasing" } else { "nonincreasing" },
                            a[j]
                        ),
                    });
                }
            }
            if (u[0] - a[0]).abs() > scale {
                return Err(Error::Ordering {
                    i: i + 1,
                    j: 0,
                    detail: format!("u_0 = {} differs from a_0 = {}", u[0], a[0]),
                });
            }
            for j in 1..n {
                if s * (u[j] - u[n]) > scale {
                    return Err(Error::Ordering {
                        i: i + 1,
                        j,
                        detail: format!("u_{j} = {} against u_{n} = {}", u[j], u[n]),
                    });
                }
                if s * (u[j] - a[j]) > scale {
                    return Err(Error::Ordering {
                        i: i + 1,
                        j,
                        detail: format!("u_{j} = {} against a_{j} = {}", u[j], a[j]),
                    });
                }
            }
            let (lo, hi) = (a[0].min(a[n]), a[0].max(a[n]));
            if u[n] < lo - scale || u[n] > hi + scale {
                return Err(Error::Ordering {
                    i: i + 1,
                    j: n,
                    detail: format!("u_{n} = {} outside [{lo}, {hi}]", u[n]),
                });
            }
        }
        Ok(())
    }
}

/// Switching `(u, a) -> (U(T)u, A(T)a)`:
/// `u'_{ij} = a_{i,n-j} - u_{i,n-j} + u_{in}`, `a'_{ij} = a_{i,n-j}` for `i in T`.
/// Applying it twice with the same `T` is the identity.
pub fn apply_switching(table: &UnderestimatorTable, t: &[usize]) -> Result<UnderestimatorTable> {
    let mut out = table.clone();
    for &i in t {
        if i >= table.dim() {
            return Err(Error::Dimension(format!(
                "switch set names coordinate {} but d = {}",
                i + 1,
                table.dim()
            )));
        }
        let (u, a) = (&table.u[i], &table.a[i]);
        let n = u.len() - 1;
        out.u[i] = (0..=n).map(|j| a[n - j] - u[n - j] + u[n]).collect();
        out.a[i] = (0..=n).map(|j| a[n - j]).collect();
        out.switched[i] = !out.switched[i];
    }
    Ok(out)
}

fn check_omega(shape: &GridShape, omega: &DirectionVector) -> Result<()> {
    let counts = {
        let mut c = vec![0usize; shape.dim()];
        for &w in omega.omega() {
            if w >= c.len() {
                return Err(Error::Dimension("direction vector exceeds dimension".into()));
            }
            c[w] += 1;
        }
        c
    };
    if counts != shape.segments() {
        return Err(Error::Dimension(format!(
            "direction vector moves {counts:?} but the table has {:?} segments",
            shape.segments()
        )));
    }
    Ok(())
}

fn pick(rows: &Table, p: &[usize]) -> Vec<f64> {
    p.iter().enumerate().map(|(i, &j)| rows[i][j]).collect()
}

/// `D^omega(phi)(u)`, the telescoping sum along the staircase.
pub fn telescoping_expansion(
    phi: &OuterSpec,
    table: &UnderestimatorTable,
    omega: &DirectionVector,
) -> Result<f64> {
    check_omega(&table.shape(), omega)?;
    let pts = omega.points();
    let mut total = phi.eval(&pick(&table.u, &pts[0]));
    for t in 1..pts.len() {
        total += phi.eval(&pick(&table.u, &pts[t])) - phi.eval(&pick(&table.u, &pts[t - 1]));
    }
    Ok(total)
}

/// Parts of `B^omega(phi)(u, a)`: the constant `phi(Pi(a; p^0))` and the
/// separable pieces `B_i^omega(phi)(u_i; a)`.
pub fn termwise_parts(phi: &OuterSpec, u: &Table, a: &Table, omega: &DirectionVector) -> (f64, Vec<f64>) {
    let pts = omega.points();
    let constant = phi.eval(&pick(a, &pts[0]));
    let mut parts = vec![0.0; u.len()];
    let mut point = pick(a, &pts[0]);
    for (c, prev, cur) in omega.steps() {
        for (i, &j) in cur.iter().enumerate() {
            point[i] = a[i][j];
        }
        point[c] = u[c][cur[c]];
        let hi = phi.eval(&point);
        point[c] = u[c][prev[c]];
        let lo = phi.eval(&point);
        parts[c] += hi - lo;
    }
    (constant, parts)
}

/// `B^omega(phi)(u, a)` without any premise checks.
pub fn termwise_value(phi: &OuterSpec, u: &Table, a: &Table, omega: &DirectionVector) -> f64 {
    let (c, parts) = termwise_parts(phi, u, a, omega);
    c + parts.iter().sum::<f64>()
}

fn termwise_checked(
    phi: &OuterSpec,
    table: &UnderestimatorTable,
    omega: &DirectionVector,
    side: Side,
) -> Result<f64> {
    check_omega(&table.shape(), omega)?;
    if phi.arity() != table.dim() {
        return Err(Error::Dimension(format!(
            "outer function has arity {} but the table has {} rows",
            phi.arity(),
            table.dim()
        )));
    }
    let declared = phi.switch_set(side).ok_or_else(|| {
        Error::Premise(format!(
            "outer function carries no supermodularity declaration for the {side} side"
        ))
    })?;
    let held = table.switched();
    if declared != held.as_slice() {
        return Err(Error::Premise(format!(
            "{side} side is declared for switch set {:?} but the table is switched on {:?}",
            one_based(declared),
            one_based(&held)
        )));
    }
    table.validate(IDENTITY_TOL)?;
    Ok(termwise_value(phi, &table.u, &table.a, omega))
}

fn one_based(t: &[usize]) -> Vec<usize> {
    t.iter().map(|i| i + 1).collect()
}

/// `B^omega(phi)(u, a) >= phi(u_{.n})` when `phi(T)` is supermodular, `T`
/// being the switch set the table is held in.
pub fn termwise_overestimator(
    phi: &OuterSpec,
    table: &UnderestimatorTable,
    omega: &DirectionVector,
) -> Result<f64> {
    termwise_checked(phi, table, omega, Side::Over)
}

/// `B^omega(phi)(u, a) <= phi(u_{.n})` when `-phi(T)` is supermodular.
pub fn termwise_underestimator(
    phi: &OuterSpec,
    table: &UnderestimatorTable,
    omega: &DirectionVector,
) -> Result<f64> {
    termwise_checked(phi, table, omega, Side::Under)
}

/// Concave overestimator of a supermodular `phi` over `[fl, fu]` built from
/// a permutation of the coordinates (0-based).
pub fn sup_concave_overestimator(
    phi: &OuterSpec,
    fl: &[f64],
    fu: &[f64],
    perm: &[usize],
) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync> {
    let d = phi.arity();
    if fl.len() != d || fu.len() != d {
        return Err(Error::Dimension("bounds do not match the arity".into()));
    }
    let mut seen = vec![false; d];
    if perm.len() != d || perm.iter().any(|&i| i >= d || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Invalid(format!("{perm:?} is not a permutation of 0..{d}")));
    }
    let phi = phi.clone();
    let (fl, fu, perm) = (fl.to_vec(), fu.to_vec(), perm.to_vec());
    Ok(move |f: &[f64]| {
        let mut base = fl.clone();
        let mut total = phi.eval(&base);
        for &i in &perm {
            let lo = phi.eval(&base);
            base[i] = f[i];
            let hi = phi.eval(&base);
            total += hi - lo;
            base[i] = fu[i];
        }
        total
    })
}

/// One coordinate of a decomposition bound: a univariate function of `x_i`
/// producing the underestimator row `u_i(x_i)`.
pub struct CoordinateRows<'a> {
    pub lo: f64,
    pub hi: f64,
    pub rows: &'a dyn Fn(f64) -> Vec<f64>,
}

/// Piecewise-linear per-coordinate envelopes of `B_i^omega(phi) o u_i` plus
/// the constant `phi(Pi(a; p^0))`.
#[derive(Clone, Debug)]
pub struct DecompositionBound {
    pub side: Side,
    pub constant: f64,
    grids: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl DecompositionBound {
    /// Value of the bound at `x` (one entry per coordinate).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .grids
                .iter()
                .zip(&self.values)
                .zip(x)
                .map(|((g, v), &xi)| interpolate(g, v, xi))
                .sum::<f64>()
    }

    /// Envelope of coordinate `i` at `xi`.
    pub fn coordinate(&self, i: usize, xi: f64) -> f64 {
        interpolate(&self.grids[i], &self.values[i], xi)
    }
}

fn interpolate(g: &[f64], v: &[f64], x: f64) -> f64 {
    if g.len() == 1 {
        return v[0];
    }
    let x = x.clamp(g[0], g[g.len() - 1]);
    let k = g.partition_point(|&p| p < x).clamp(1, g.len() - 1);
    let (x0, x1) = (g[k - 1], g[k]);
    v[k - 1] + (v[k] - v[k - 1]) * (x - x0) / (x1 - x0)
}

/// Decomposition bound: `phi(Pi(a;p^0)) + sum_i env(B_i^omega(phi) o u_i)`
/// where `env` is the concave majorant (`Over`) or convex minorant (`Under`)
/// of `samples` equally spaced points per coordinate.
pub fn decomposition_bound(
    phi: &OuterSpec,
    a: &Table,
    coords: &[CoordinateRows<'_>],
    omega: &DirectionVector,
    side: Side,
    samples: usize,
) -> Result<DecompositionBound> {
    if samples == 0 {
        return Err(Error::Invalid("empty sample grid".into()));
    }
    if coords.len() != a.len() || phi.arity() != a.len() {
        return Err(Error::Dimension("one coordinate function per row of a".into()));
    }
    if phi.switch_set(side).is_none() {
        return Err(Error::Premise(format!(
            "outer function carries no supermodularity declaration for the {side} side"
        )));
    }
    let shape = GridShape::ragged(a.iter().map(|r| r.len() - 1).collect())?;
    check_omega(&shape, omega)?;
    let pts = omega.points();
    let constant = phi.eval(&pick(a, &pts[0]));
    let mut grids = Vec::with_capacity(a.len());
    let mut values = Vec::with_capacity(a.len());
    for (i, c) in coords.iter().enumerate() {
        let grid: Vec<f64> = if samples == 1 || c.hi <= c.lo {
            vec![c.lo]
        } else {
            (0..samples)
                .map(|k| c.lo + (c.hi - c.lo) * k as f64 / (samples - 1) as f64)
                .collect()
        };
        let raw: Vec<f64> = grid
            .iter()
            .map(|&xi| {
                let mut u = a.clone();
                u[i] = (c.rows)(xi);
                termwise_parts(phi, &u, a, omega).1[i]
            })
            .collect();
        let env = match side {
            Side::Over => upper_hull_values(&grid, &raw),
            Side::Under => {
                let neg: Vec<f64> = raw.iter().map(|v| -v).collect();
                upper_hull_values(&grid, &neg).into_iter().map(|v| -v).collect()
            }
        };
        grids.push(grid);
        values.push(env);
    }
    Ok(DecompositionBound {
        side,
        constant,
        grids,
        values,
    })
}

/// Square matrix chains for the Kronecker relaxation of `F (x) G`.
#[derive(Clone, Debug)]
pub struct KroneckerChains {
    pub u: Vec<DMatrix<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn require_psd(label: String, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > PSD_TOL * (1.0 + m.amax()) {
        return Err(Error::Premise(format!("{label} is not symmetric")));
    }
    let ev = min_eigenvalue(m);
    if ev < -PSD_TOL {
        return Err(Error::Premise(format!(
            "{label} is not positive semidefinite (min eigenvalue {ev:e})"
        )));
    }
    Ok(())
}

impl KroneckerChains {
    pub fn len(&self) -> usize {
        self.u.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks every Loewner-order premise and reports the first failure.
    pub fn check(&self) -> Result<()> {
        let n1 = self.u.len();
        if n1 < 2 || self.a.len() != n1 || self.v.len() != n1 || self.b.len() != n1 {
            return Err(Error::Dimension(
                "all four chains need the same length of at least two".into(),
            ));
        }
        let square = |m: &DMatrix<f64>| m.is_square();
        if !self.u.iter().chain(&self.a).chain(&self.v).chain(&self.b).all(square) {
            return Err(Error::Dimension("chain matrices must be square".into()));
        }
        let zero = |m: &DMatrix<f64>| m.amax();
        if zero(&(&self.u[0] - &self.a[0])) > PSD_TOL {
            return Err(Error::Premise("U^0 must equal A^0".into()));
        }
        if zero(&(&self.v[0] - &self.b[0])) > PSD_TOL {
            return Err(Error::Premise("V^0 must equal B^0".into()));
        }
        for i in 1..n1 {
            require_psd(format!("U^{i} - U^{}", i - 1), &(&self.u[i] - &self.u[i - 1]))?;
            require_psd(format!("V^{i} - V^{}", i - 1), &(&self.v[i] - &self.v[i - 1]))?;
            require_psd(format!("A^{i} - A^{}", i - 1), &(&self.a[i] - &self.a[i - 1]))?;
            require_psd(format!("B^{i} - B^{}", i - 1), &(&self.b[i] - &self.b[i - 1]))?;
        }
        for i in 0..n1 {
            require_psd(format!("A^{i} - U^{i}"), &(&self.a[i] - &self.u[i]))?;
            require_psd(format!("B^{i} - V^{i}"), &(&self.b[i] - &self.v[i]))?;
        }
        Ok(())
    }

    /// `F (x) G = U^n (x) V^n`.
    pub fn product(&self) -> DMatrix<f64> {
        self.u.last().unwrap().kronecker(self.v.last().unwrap())
    }
}

/// Loewner overestimator of `F (x) G` along a staircase on `{0..n}^2`.
pub fn kronecker_overestimator(chains: &KroneckerChains, omega: &DirectionVector) -> Result<DMatrix<f64>> {
    chains.check()?;
    let n = chains.len();
    check_omega(&GridShape::uniform(2, n)?, omega)?;
    let mut m = chains.a[0].kronecker(&chains.b[0]);
    for (c, prev, cur) in omega.steps() {
        if c == 0 {
            let du = &chains.u[cur[0]] - &chains.u[prev[0]];
            m += du.kronecker(&chains.b[cur[1]]);
        } else {
            let dv = &chains.v[cur[1]] - &chains.v[prev[1]];
            m += chains.a[cur[0]].kronecker(&dv);
        }
    }
    Ok(m)
}

/// Random chains satisfying the premises: `U^0 = A^0` and `V^0 = B^0` random
/// symmetric, every later step adds a random positive semidefinite matrix.
pub fn random_kronecker_chains(size_f: usize, size_g: usize, n: usize, rng: &mut impl Rng) -> KroneckerChains {
    fn sym(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }
    fn psd(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        &m * m.transpose() * 0.5
    }
    let chain = |k: usize, rng: &mut ChaCha8Rng| {
        let base = sym(k, rng);
        let mut u = vec![base.clone()];
        let mut a = vec![base];
        for i in 1..=n {
            let step = psd(k, rng);
            u.push(&u[i - 1] + &step);
            a.push(&a[i - 1] + &step + psd(k, rng));
        }
        (u, a)
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let (u, a) = chain(size_f, &mut local);
    let (v, b) = chain(size_g, &mut local);
    KroneckerChains { u, a, v, b }
}
