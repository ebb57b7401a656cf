//! Discretized composite relaxations: the envelope over `Q` tied to the
//! incremental model and to underestimator rows, and the refined model whose
//! breakpoints move with the selected piece.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envelope::{envelope_value, premise};
use crate::error::{Error, Result};
use crate::expansion::{OuterSpec, Side};
use crate::lp::{Sense, Status};
use crate::simplotope::{absent_value, eval_points_on, Breakpoints, Table};

use super::family::{ChainFamily, LinExpr};
use super::incremental::{add_incremental, delta_pattern, side_tag, IncrementalVars};
use super::model::{MilpModel, VarKind};

const BOUND_TOL: f64 = 1e-9;
const SAMPLE_TOL: f64 = 1e-9;

/// `constant + coeff . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFn {
    pub constant: f64,
    pub coeff: Vec<f64>,
}

impl AffineFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeff.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Row `x_coeff . x + f_coeff . s_{.n}  (sense)  rhs` of the outer
/// approximation `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct WRow {
    pub x_coeff: Vec<f64>,
    pub f_coeff: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Instance data for the emitted models. `under[i][j]` is `u_{ij}` for
/// `0 < j < n_i`; entries at `j = 0` and `j = n_i` are ignored.
#[derive(Clone, Debug)]
pub struct DcrSpec {
    pub phi: OuterSpec,
    pub a: Breakpoints,
    pub side: Side,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub under: Vec<Vec<Option<AffineFn>>>,
    pub w_rows: Vec<WRow>,
}

impl DcrSpec {
    fn check(&self) -> Result<()> {
        let d = self.a.dim();
        let nx = self.x_lower.len();
        if self.x_upper.len() != nx {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if let Some(k) = (0..nx).find(|&k| self.x_lower[k] > self.x_upper[k]) {
            return Err(Error::Invalid(format!("x_{} has an empty range", k + 1)));
        }
        if self.under.len() != d {
            return Err(Error::Dimension(format!("{} underestimator rows for d = {d}", self.under.len())));
        }
        for i in 0..d {
            if self.under[i].len() != self.a.segments(i) + 1 {
                return Err(Error::Dimension(format!(
                    "coordinate {} needs {} underestimator slots",
                    i + 1,
                    self.a.segments(i) + 1
                )));
            }
            for u in self.under[i].iter().flatten() {
                if u.coeff.len() != nx {
                    return Err(Error::Dimension(format!("underestimator of coordinate {} has the wrong arity", i + 1)));
                }
            }
        }
        for w in &self.w_rows {
            if w.x_coeff.len() != nx || w.f_coeff.len() != d {
                return Err(Error::Dimension("W row has the wrong length".into()));
            }
        }
        Ok(())
    }

    /// `u_{ij}(x)`, with `a_{i0}` at `j = 0`, `f_i` at `j = n_i` and
    /// `-inf` where no underestimator is given.
    pub fn ubar(&self, x: &[f64], f: &[f64]) -> Table {
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
                            self.under[i][j].as_ref().map_or(f64::NEG_INFINITY, |u| u.eval(x))
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Checks `u_{ij}(x) <= min(f_i(x), a_{ij})` at seeded box samples.
    pub fn validate_underestimators(
        &self,
        inner: &[&dyn Fn(&[f64]) -> f64],
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        self.check()?;
        if inner.len() != self.a.dim() {
            return Err(Error::Dimension("one inner function per coordinate".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.x_lower.len()];
        for _ in 0..samples {
            for (k, v) in x.iter_mut().enumerate() {
                *v = rng.gen_range(self.x_lower[k]..=self.x_upper[k]);
            }
            for (i, fi) in inner.iter().enumerate() {
                let f = fi(&x);
                let row = self.a.row(i);
                let tol = SAMPLE_TOL * (1.0 + f.abs());
                if f < row[0] - tol || f > row[row.len() - 1] + tol {
                    return Err(Error::Ordering {
                        i: i + 1,
                        j: row.len() - 1,
                        detail: format!("f = {f} leaves [{}, {}] at x = {x:?}", row[0], row[row.len() - 1]),
                    });
                }
                for (j, u) in self.under[i].iter().enumerate() {
                    let Some(u) = u else { continue };
                    if j == 0 || j + 1 == row.len() {
                        continue;
                    }
                    let v = u.eval(&x);
                    if v > f.min(row[j]) + tol {
                        return Err(Error::Ordering {
                            i: i + 1,
                            j,
                            detail: format!("u = {v} exceeds min(f, a) = {} at x = {x:?}", f.min(row[j])),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Piece-local bounds `bd_{ijk}` on the running maximum of the
/// underestimators and the increments `b_{ijk}` derived from them.
///
/// Indices: `i` coordinate, `j = 0..=n_i`, `k = 0..l_i - 1` the piece
/// `(a_{tau(k)}, a_{tau(k+1)}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBoundTable {
    a0: Vec<f64>,
    tau: Vec<Vec<usize>>,
    bd: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<Vec<f64>>>,
}

impl LocalBoundTable {
    /// From user bounds; `bd` must be nondecreasing in `j` for every piece.
    /// `b_{ijk} = max_{k' <= k} bd_{ijk'} - max_{k' < k} bd_{ijk'}` with the
    /// running maximum started at `a_{i0}`.
    pub fn from_bd(a: &Breakpoints, bd: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let d = a.dim();
        if bd.len() != d {
            return Err(Error::Dimension(format!("{} bound rows for d = {d}", bd.len())));
        }
        let mut b = Vec::with_capacity(d);
        for i in 0..d {
            let n = a.segments(i);
            let l = a.pieces(i);
            if bd[i].len() != n + 1 || bd[i].iter().any(|r| r.len() != l) {
                return Err(Error::Dimension(format!(
                    "bounds of coordinate {} must be {} x {l}",
                    i + 1,
                    n + 1
                )));
            }
            let a0 = a.row(i)[0];
            let mut bi = vec![vec![0.0; l]; n + 1];
            for j in 0..=n {
                let mut run = a0;
                for k in 0..l {
                    let v = bd[i][j][k];
                    if !v.is_finite() {
                        return Err(Error::Invalid(format!("bd_({}, {j}, {k}) is not finite", i + 1)));
                    }
                    if j > 0 && v < bd[i][j - 1][k] - BOUND_TOL {
                        return Err(Error::Ordering {
                            i: i + 1,
                            j,
                            detail: format!("bd decreases in j on piece {k}: {} > {v}", bd[i][j - 1][k]),
                        });
                    }
                    let next = run.max(v);
                    bi[j][k] = next - run;
                    run = next;
                }
            }
            b.push(bi);
        }
        Ok(Self {
            a0: a.lower(),
            tau: a.selectors().to_vec(),
            bd,
            b,
        })
    }

    /// Clamps `bd` into `[a_{tau(k)}, min(a_{tau(k+1)}, max(a_j, a_{tau(k)}))]`
    /// after taking running maxima in `j`, pins `j = 0` to `a_{tau(k)}` and
    /// every `j >= tau(k+1)` to `a_{tau(k+1)}`. Without the second pin `s_n`
    /// could not reach the right end of the piece.
    pub fn tightened(a: &Breakpoints, bd: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut out = bd;
        for (i, rows) in out.iter_mut().enumerate() {
            if i >= a.dim() {
                break;
            }
            let ar = a.row(i);
            let n = ar.len() - 1;
            let tau = a.selector(i);
            if rows.len() != n + 1 {
                return Err(Error::Dimension(format!("bounds of coordinate {} need {} rows", i + 1, n + 1)));
            }
            for k in 0..a.pieces(i) {
                let lo = ar[tau[k]];
                let top = ar[tau[k + 1]];
                let mut run = f64::NEG_INFINITY;
                for j in 0..=n {
                    let Some(v) = rows[j].get_mut(k) else {
                        return Err(Error::Dimension(format!("bounds of coordinate {} need {} pieces", i + 1, a.pieces(i))));
                    };
                    run = run.max(*v);
                    let hi = top.min(ar[j].max(lo));
                    *v = if j == 0 {
                        lo
                    } else if j >= tau[k + 1] {
                        top
                    } else {
                        run.clamp(lo, hi)
                    };
                }
            }
        }
        Self::from_bd(a, out)
    }

    /// `bd_{ijk} = a_{ij}` for every piece: the breakpoints never move.
    pub fn degenerate(a: &Breakpoints) -> Self {
        let bd = (0..a.dim())
            .map(|i| a.row(i).iter().map(|&v| vec![v; a.pieces(i)]).collect())
            .collect();
        Self::from_bd(a, bd).expect("breakpoints are increasing")
    }

    /// Bounds from samples `(f, u)`: per piece the largest running maximum
    /// seen, plus `slack` times the piece width, then tightened. Pieces
    /// without samples keep their widest admissible bounds.
    pub fn sampled(a: &Breakpoints, samples: &[(Vec<f64>, Table)], slack: f64) -> Result<Self> {
        let d = a.dim();
        let mut bd: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|i| vec![vec![f64::NEG_INFINITY; a.pieces(i)]; a.segments(i) + 1])
            .collect();
        for (f, u) in samples {
            for i in 0..d {
                let ar = a.row(i);
                let tau = a.selector(i);
                let k = (1..tau.len())
                    .find(|&t| f[i] <= ar[tau[t]])
                    .unwrap_or(tau.len() - 1)
                    - 1;
                let mut run = f64::NEG_INFINITY;
                for j in 0..ar.len() {
                    run = run.max(u[i][j]);
                    bd[i][j][k] = bd[i][j][k].max(run);
                }
            }
        }
        for (i, rows) in bd.iter_mut().enumerate() {
            let ar = a.row(i);
            let tau = a.selector(i);
            for k in 0..a.pieces(i) {
                let width = ar[tau[k + 1]] - ar[tau[k]];
                for (j, r) in rows.iter_mut().enumerate() {
                    r[k] = if r[k] == f64::NEG_INFINITY {
                        ar[tau[k + 1]].min(ar[j].max(ar[tau[k]]))
                    } else {
                        r[k] + slack * width
                    };
                }
            }
        }
        Self::tightened(a, bd)
    }

    pub fn dim(&self) -> usize {
        self.bd.len()
    }

    pub fn bd(&self, i: usize, j: usize, k: usize) -> f64 {
        self.bd[i][j][k]
    }

    pub fn b(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b[i][j][k]
    }

    pub fn pieces(&self, i: usize) -> usize {
        self.tau[i].len() - 1
    }

    /// `a'_i` when piece `k` (0-based) of coordinate `i` is selected.
    /// The increments telescope to a running maximum, taken directly so that
    /// equal entries stay exactly equal.
    pub fn a_prime(&self, i: usize, k: usize) -> Vec<f64> {
        let mut floor = f64::NEG_INFINITY;
        self.bd[i]
            .iter()
            .map(|row| {
                let v = row[..=k].iter().fold(self.a0[i], |m, &x| m.max(x)).max(floor);
                floor = v;
                v
            })
            .collect()
    }

    /// On piece `k`, `a'_{tau(k)} = a_{tau(k)}` and `a'_{tau(k+1)} = a_{tau(k+1)}`,
    /// so `s_n` sweeps exactly the piece.
    pub fn check_endpoints(&self, a: &Breakpoints) -> Result<()> {
        for i in 0..self.dim() {
            let ar = a.row(i);
            let tol = BOUND_TOL * (1.0 + ar[ar.len() - 1].abs());
            let tau = a.selector(i);
            for k in 0..self.pieces(i) {
                let ap = self.a_prime(i, k);
                for j in [tau[k], tau[k + 1]] {
                    if (ap[j] - ar[j]).abs() > tol {
                        return Err(Error::Ordering {
                            i: i + 1,
                            j,
                            detail: format!("piece {k}: a' = {} but the piece ends at {}", ap[j], ar[j]),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `theta(j) = min{k : tau(k) >= j}`.
    fn theta(&self, i: usize, j: usize) -> usize {
        self.tau[i].iter().position(|&t| t >= j).expect("j <= n")
    }

    /// `G_{ij}` as `(constant, z coefficients for j' = 0..=j, delta
    /// coefficients for k = 1..l_i - 1)`; the `j' = 0` entry is zero.
    pub fn g_coefficients(&self, i: usize, j: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let l = self.pieces(i);
        let b = &self.b[i];
        let constant = self.a0[i] + b[0][0];
        let mut dz = vec![0.0; j + 1];
        let mut dd: Vec<f64> = (1..l).map(|k| b[0][k]).collect();
        for jp in 1..=j {
            let th = self.theta(i, jp);
            for k in 0..l {
                let diff = b[jp][k] - b[jp - 1][k];
                if k < th {
                    dz[jp] += diff;
                } else {
                    dd[k - 1] += diff;
                }
            }
        }
        (constant, dz, dd)
    }
}

/// `s = G(z, delta)`; `delta[i]` holds `delta_{i1}, ..., delta_{i,l_i-1}`
/// and must be nonincreasing with entries in `[0, 1]`.
pub fn g_map(z: &Table, delta: &[Vec<f64>], b: &LocalBoundTable) -> Result<Table> {
    if z.len() != b.dim() || delta.len() != b.dim() {
        return Err(Error::Dimension("z, delta and the bound table disagree on d".into()));
    }
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let di = &delta[i];
        if di.len() + 1 != b.pieces(i) {
            return Err(Error::Dimension(format!("coordinate {} needs {} delta entries", i + 1, b.pieces(i) - 1)));
        }
        let mut prev = 1.0;
        for (t, &v) in di.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || v > prev + BOUND_TOL {
                return Err(Error::Ordering {
                    i: i + 1,
                    j: t + 1,
                    detail: "delta must be nonincreasing in [0, 1]".into(),
                });
            }
            prev = v;
        }
        let n = z[i].len() - 1;
        out.push(
            (0..=n)
                .map(|j| {
                    let (c, dz, dd) = b.g_coefficients(i, j);
                    c + dz.iter().zip(&z[i]).map(|(w, v)| w * v).sum::<f64>()
                        + dd.iter().zip(di).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Variable indices of a relaxation core.
#[derive(Clone, Debug)]
pub struct CoreVars {
    pub inc: IncrementalVars,
    /// `s[i][j]`; `None` where the column is a constant (`j = 0` without
    /// moving breakpoints).
    pub s: Vec<Vec<Option<usize>>>,
    pub phi: usize,
}

fn chain_entries(tau: &[usize]) -> Vec<(bool, usize)> {
    // (is_delta, index)
    let l = tau.len() - 1;
    let mut out = Vec::new();
    for t in 1..=l {
        for j in tau[t - 1] + 1..=tau[t] {
            out.push((false, j));
        }
        if t < l {
            out.push((true, t));
        }
    }
    out
}

fn add_core(
    m: &mut MilpModel,
    phi: &OuterSpec,
    a: &Breakpoints,
    side: Side,
    bounds: Option<&LocalBoundTable>,
) -> Result<CoreVars> {
    let switch = premise(phi, a.dim(), side)?;
    let inc = add_incremental(m, a, false)?;
    let d = a.dim();
    let mut s = Vec::with_capacity(d);
    for i in 0..d {
        let first = if bounds.is_some() { 0 } else { 1 };
        let mut si = vec![None; a.segments(i) + 1];
        for (j, slot) in si.iter_mut().enumerate().skip(first) {
            *slot = Some(m.add_var(format!("s_{}_{j}", i + 1), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?);
        }
        s.push(si);
    }
    let p = m.add_var("phi", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?;
    m.objective = vec![(p, 1.0)];
    m.maximize = side == Side::Over;
    let family = match bounds {
        None => {
            // s = Z^{-1}(z); cuts are read over s
            let mut chains = Vec::with_capacity(d);
            for i in 0..d {
                let ar = a.row(i);
                let n = ar.len() - 1;
                let mut terms = Vec::with_capacity(n + 1);
                for j in 1..=n {
                    terms.push((inc.z[i][j], -(ar[j] - ar[j - 1])));
                    let mut row = vec![(s[i][j].unwrap(), 1.0)];
                    row.extend_from_slice(&terms);
                    m.add_row(format!("sdef_{}_{j}", i + 1), &row, Sense::Eq, ar[0])?;
                }
                chains.push(
                    (1..=n)
                        .map(|j| {
                            let w = 1.0 / (ar[j] - ar[j - 1]);
                            let mut e = LinExpr {
                                terms: vec![(s[i][j].unwrap(), w)],
                                constant: 0.0,
                            };
                            match s[i][j - 1] {
                                Some(v) => e.terms.push((v, -w)),
                                None => e.constant = -w * ar[0],
                            }
                            e
                        })
                        .collect(),
                );
            }
            ChainFamily {
                name: format!("env_{}", side_tag(side)),
                phi: phi.clone(),
                phi_var: p,
                chains,
                levels: a.rows().clone(),
                switch,
                side,
            }
        }
        Some(b) => {
            if b.dim() != d || (0..d).any(|i| b.pieces(i) != a.pieces(i) || b.tau[i] != a.selector(i)) {
                return Err(Error::Dimension("bound table does not match the selector".into()));
            }
            b.check_endpoints(a)?;
            let mut chains = Vec::with_capacity(d);
            let mut levels = Vec::with_capacity(d);
            for i in 0..d {
                let n = a.segments(i);
                for j in 0..=n {
                    let (c, dz, dd) = b.g_coefficients(i, j);
                    let mut row = vec![(s[i][j].unwrap(), 1.0)];
                    for (jp, w) in dz.iter().enumerate().skip(1) {
                        row.push((inc.z[i][jp], -w));
                    }
                    for (k, w) in dd.iter().enumerate() {
                        row.push((inc.delta[i][k], -w));
                    }
                    m.add_row(format!("gdef_{}_{j}", i + 1), &row, Sense::Eq, c)?;
                }
                let entries = chain_entries(a.selector(i));
                chains.push(
                    entries
                        .iter()
                        .map(|&(is_d, idx)| LinExpr::var(if is_d { inc.delta[i][idx - 1] } else { inc.z[i][idx] }))
                        .collect::<Vec<_>>(),
                );
                let primes: Vec<Vec<f64>> = (0..a.pieces(i)).map(|k| b.a_prime(i, k)).collect();
                let mut lv = vec![primes[0][0]];
                let (mut nz, mut nd) = (0usize, 0usize);
                for &(is_d, _) in &entries {
                    if is_d {
                        nd += 1;
                    } else {
                        nz += 1;
                    }
                    lv.push(primes[nd][nz]);
                }
                levels.push(lv);
            }
            ChainFamily {
                name: format!("envd_{}", side_tag(side)),
                phi: phi.clone(),
                phi_var: p,
                chains,
                levels,
                switch,
                side,
            }
        }
    };
    family.attach(m)?;
    Ok(CoreVars { inc, s, phi: p })
}

fn add_instance_rows(m: &mut MilpModel, spec: &DcrSpec, core: &CoreVars) -> Result<Vec<usize>> {
    spec.check()?;
    let xs: Vec<usize> = (0..spec.x_lower.len())
        .map(|k| m.add_var(format!("x_{}", k + 1), VarKind::Continuous, spec.x_lower[k], spec.x_upper[k]))
        .collect::<Result<_>>()?;
    for (i, row) in spec.under.iter().enumerate() {
        let n = row.len() - 1;
        for (j, u) in row.iter().enumerate() {
            let Some(u) = u else { continue };
            if j == 0 || j == n {
                continue;
            }
            let mut terms = vec![(core.s[i][j].expect("interior column"), 1.0)];
            for (k, &c) in u.coeff.iter().enumerate() {
                terms.push((xs[k], -c));
            }
            m.add_row(format!("under_{}_{j}", i + 1), &terms, Sense::Ge, u.constant)?;
        }
    }
    for (r, w) in spec.w_rows.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = w.x_coeff.iter().enumerate().map(|(k, &c)| (xs[k], c)).collect();
        for (i, &c) in w.f_coeff.iter().enumerate() {
            let n = core.s[i].len() - 1;
            terms.push((core.s[i][n].expect("last column"), c));
        }
        m.add_row(format!("w_row_{}", r + 1), &terms, w.sense, w.rhs)?;
    }
    Ok(xs)
}

/// The relaxation over `(x, phi, s, z, delta)` with `s = Z^{-1}(z)`.
pub fn build_dcr(spec: &DcrSpec) -> Result<MilpModel> {
    spec.check()?;
    let mut m = MilpModel::new("dcr");
    let core = add_core(&mut m, &spec.phi, &spec.a, spec.side, None)?;
    add_instance_rows(&mut m, spec, &core)?;
    Ok(m)
}

/// The refined relaxation with `s = G(z, delta)` and cuts over the `(z, delta)` chains.
pub fn build_dcr_plus(spec: &DcrSpec, b: &LocalBoundTable) -> Result<MilpModel> {
    spec.check()?;
    let mut m = MilpModel::new("dcr-plus");
    let core = add_core(&mut m, &spec.phi, &spec.a, spec.side, Some(b))?;
    add_instance_rows(&mut m, spec, &core)?;
    Ok(m)
}

/// The four pointwise relaxation values compared at a fixed `(x, f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relaxation {
    /// Underestimators only, no discretization.
    Plain,
    /// Discretization only.
    HMinus,
    /// Discretization and underestimators.
    H,
    /// Discretization, underestimators and piece-local bounds.
    HPlus,
}

impl Relaxation {
    pub const ALL: [Relaxation; 4] = [Relaxation::Plain, Relaxation::HMinus, Relaxation::H, Relaxation::HPlus];

    pub fn label(self) -> &'static str {
        match self {
            Relaxation::Plain => "phi",
            Relaxation::HMinus => "phi_h_minus",
            Relaxation::H => "phi_h",
            Relaxation::HPlus => "phi_h_plus",
        }
    }
}

/// Pointwise evaluation of the relaxations at numeric `(u(x), f)`.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub phi: OuterSpec,
    pub a: Breakpoints,
    pub side: Side,
    pub bounds: Option<LocalBoundTable>,
}

fn best(side: Side, x: f64, y: f64) -> f64 {
    match side {
        Side::Over => x.max(y),
        Side::Under => x.min(y),
    }
}

/// Piece vectors (1-based) whose box contains `f`; two choices per
/// coordinate when `f` sits on a piece boundary.
pub fn candidate_pieces(a: &Breakpoints, f: &[f64]) -> Result<Vec<Vec<usize>>> {
    let mut per = Vec::with_capacity(a.dim());
    for (i, &fi) in f.iter().enumerate() {
        let ar = a.row(i);
        let tau = a.selector(i);
        let tol = 1e-12 * (1.0 + ar[ar.len() - 1].abs());
        let c: Vec<usize> = (1..tau.len())
            .filter(|&t| fi >= ar[tau[t - 1]] - tol && fi <= ar[tau[t]] + tol)
            .collect();
        if c.is_empty() {
            return Err(Error::Invalid(format!("f_{} = {fi} lies outside [{}, {}]", i + 1, ar[0], ar[ar.len() - 1])));
        }
        per.push(c);
    }
    let mut out = vec![Vec::new()];
    for c in per {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                c.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

fn fill_absent(a: &Table, u: &Table) -> Table {
    u.iter()
        .zip(a)
        .map(|(r, ar)| {
            let lo = absent_value(ar);
            r.iter().map(|&v| if v.is_finite() { v } else { lo }).collect()
        })
        .collect()
}

/// Drops repeated breakpoints, keeping the matching columns of `s`.
fn compress(a: &[f64], s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ca = Vec::new();
    let mut cs = Vec::new();
    for (&x, &y) in a.iter().zip(s) {
        if ca.last() == Some(&x) {
            continue;
        }
        ca.push(x);
        cs.push(y);
    }
    (ca, cs)
}

impl Evaluator {
    pub fn new(phi: OuterSpec, a: Breakpoints, side: Side, bounds: Option<LocalBoundTable>) -> Self {
        Self { phi, a, side, bounds }
    }

    fn bounds(&self) -> Result<&LocalBoundTable> {
        self.bounds
            .as_ref()
            .ok_or_else(|| Error::Invalid("the refined relaxation needs a bound table".into()))
    }

    /// Value from the lifted points and the envelope over `Q` (or `Q'`).
    /// `u` is `d x (n_i + 1)`; non-finite entries mean "no underestimator".
    pub fn closed_form(&self, r: Relaxation, u: &Table, f: &[f64]) -> Result<f64> {
        let rows = self.a.rows();
        let u = fill_absent(rows, u);
        if r == Relaxation::Plain {
            let single: Vec<Vec<usize>> = rows.iter().map(|row| vec![0, row.len() - 1]).collect();
            let pts = eval_points_on(rows, &single, &vec![1; rows.len()], &u, f)?;
            return envelope_value(&self.phi, &self.a, &pts.sbar, self.side);
        }
        let mut acc: Option<f64> = None;
        for piece in candidate_pieces(&self.a, f)? {
            let v = match r {
                Relaxation::HMinus => {
                    let pts = eval_points_on(rows, self.a.selectors(), &piece, &u, f)?;
                    envelope_value(&self.phi, &self.a, &pts.shat, self.side)?
                }
                Relaxation::H => {
                    let pts = eval_points_on(rows, self.a.selectors(), &piece, &u, f)?;
                    envelope_value(&self.phi, &self.a, &pts.sstar, self.side)?
                }
                Relaxation::HPlus => {
                    let b = self.bounds()?;
                    let primes: Table = (0..rows.len()).map(|i| b.a_prime(i, piece[i] - 1)).collect();
                    let pts = eval_points_on(&primes, self.a.selectors(), &piece, &u, f)?;
                    let mut ca = Vec::new();
                    let mut cs = Vec::new();
                    for (ar, sr) in primes.iter().zip(&pts.sstar) {
                        let (x, y) = compress(ar, sr);
                        ca.push(x);
                        cs.push(y);
                    }
                    envelope_value(&self.phi, &Breakpoints::new(ca)?, &cs, self.side)?
                }
                Relaxation::Plain => unreachable!(),
            };
            acc = Some(acc.map_or(v, |w| best(self.side, v, w)));
        }
        Ok(acc.expect("at least one candidate piece"))
    }

    /// Value from the LP over the model with `u(x) <= s`, `s_{.n} = f` and
    /// `delta` fixed to each candidate piece.
    pub fn by_lp(&self, r: Relaxation, u: &Table, f: &[f64]) -> Result<f64> {
        let a = if r == Relaxation::Plain {
            self.a.reselect(self.a.rows().iter().map(|row| vec![0, row.len() - 1]).collect())?
        } else {
            self.a.clone()
        };
        let bounds = if r == Relaxation::HPlus { Some(self.bounds()?) } else { None };
        let mut m = MilpModel::new("eval");
        let core = add_core(&mut m, &self.phi, &a, self.side, bounds)?;
        for i in 0..a.dim() {
            let n = a.segments(i);
            let sn = core.s[i][n].expect("last column");
            m.set_bounds(sn, f[i], f[i]);
            if r != Relaxation::HMinus {
                for j in 1..n {
                    if u[i][j].is_finite() {
                        m.set_bounds(core.s[i][j].expect("interior column"), u[i][j], f64::INFINITY);
                    }
                }
            }
        }
        let mut obj = vec![0.0; m.num_vars()];
        obj[core.phi] = 1.0;
        let pieces = if r == Relaxation::Plain {
            vec![vec![1; a.dim()]]
        } else {
            candidate_pieces(&a, f)?
        };
        let mut acc: Option<f64> = None;
        for piece in pieces {
            let pattern = delta_pattern(&a, &piece);
            let mut fixes = Vec::new();
            for (i, row) in pattern.iter().enumerate() {
                for (t, &v) in row.iter().enumerate() {
                    fixes.push((core.inc.delta[i][t], v));
                }
            }
            let sol = m.fixed(&fixes).solve_relaxation(&obj, self.side == Side::Over)?;
            if sol.status != Status::Optimal {
                return Err(Error::Lp(format!("evaluation LP is {:?} for pieces {piece:?}", sol.status)));
            }
            acc = Some(acc.map_or(sol.value, |w| best(self.side, sol.value, w)));
        }
        Ok(acc.expect("at least one piece"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mip_ex_1() -> DcrSpec {
        let a = Breakpoints::with_selector(
            vec![vec![0.0, 5.0, 8.0, 9.0], vec![0.0, 4.0]],
            vec![vec![0, 1, 3], vec![0, 1]],
        )
        .unwrap();
        let lin = |c: f64, k: f64| Some(AffineFn { constant: c, coeff: vec![k, 0.0] });
        DcrSpec {
            phi: OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]),
            a,
            side: Side::Under,
            x_lower: vec![0.0, 0.0],
            x_upper: vec![3.0, 2.0],
            under: vec![vec![None, lin(-1.0, 2.0), lin(-4.0, 4.0), None], vec![None, None]],
            w_rows: vec![],
        }
    }

    #[test]
    fn mip_ex_1_closed_and_lp() {
        let spec = mip_ex_1();
        let ev = Evaluator::new(spec.phi.clone(), spec.a.clone(), Side::Under, None);
        let x = [2.5, 1.5];
        let f = [6.25, 2.25];
        let u = spec.ubar(&x, &f);
        for (r, want) in [(Relaxation::Plain, 10.0), (Relaxation::H, 11.25)] {
            assert!((ev.closed_form(r, &u, &f).unwrap() - want).abs() < 1e-9);
            assert!((ev.by_lp(r, &u, &f).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn emitted_model_evaluates_like_the_closed_form() {
        let spec = mip_ex_1();
        let m = build_dcr(&spec).unwrap();
        let fixes = [
            (m.var("x_1").unwrap(), 2.5),
            (m.var("x_2").unwrap(), 1.5),
            (m.var("s_1_3").unwrap(), 6.25),
            (m.var("s_2_1").unwrap(), 2.25),
            (m.var("d_1_1").unwrap(), 1.0),
        ];
        let mut obj = vec![0.0; m.num_vars()];
        obj[m.var("phi").unwrap()] = 1.0;
        let sol = m.fixed(&fixes).solve_relaxation(&obj, false).unwrap();
        assert!((sol.value - 11.25).abs() < 1e-9);
    }

    #[test]
    fn degenerate_table_is_the_inverse_map() {
        let a = Breakpoints::with_selector(vec![vec![0.0, 1.0, 3.0, 4.0]], vec![vec![0, 2, 3]]).unwrap();
        let b = LocalBoundTable::degenerate(&a);
        let z = vec![vec![1.0, 0.7, 0.2, 0.1]];
        let s = g_map(&z, &[vec![0.4]], &b).unwrap();
        let want = [0.0, 0.7, 1.1, 1.2];
        for (x, y) in s[0].iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tightened_piece_clips_breakpoints() {
        // a = (0, 1, 3, 4), pieces [0, 3] and (3, 4]
        let a = Breakpoints::with_selector(vec![vec![0.0, 1.0, 3.0, 4.0]], vec![vec![0, 2, 3]]).unwrap();
        let bd = vec![vec![vec![0.0, 3.0], vec![0.5, 3.0], vec![2.0, 3.0], vec![3.0, 4.0]]];
        let b = LocalBoundTable::tightened(&a, bd).unwrap();
        b.check_endpoints(&a).unwrap();
        assert_eq!(b.a_prime(0, 0), vec![0.0, 0.5, 3.0, 3.0]);
        assert_eq!(b.a_prime(0, 1), vec![3.0, 3.0, 3.0, 4.0]);
        let s = g_map(&vec![vec![1.0, 1.0, 0.5, 0.0]], &[vec![0.0]], &b).unwrap();
        assert_eq!(s[0], vec![0.0, 0.5, 1.75, 1.75]);
        let s = g_map(&vec![vec![1.0, 1.0, 1.0, 0.0]], &[vec![0.0]], &b).unwrap();
        assert_eq!(s[0], vec![0.0, 0.5, 3.0, 3.0]);
        let s = g_map(&vec![vec![1.0, 1.0, 1.0, 0.5]], &[vec![1.0]], &b).unwrap();
        assert_eq!(s[0], vec![3.0, 3.0, 3.0, 3.5]);
        assert!(g_map(&vec![vec![1.0, 1.0, 0.5, 0.0]], &[vec![1.5]], &b).is_err());
    }

    fn mip_ex_1_samples(spec: &DcrSpec, count: usize) -> Vec<(Vec<f64>, Table)> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..count)
            .map(|_| {
                let x = [rng.gen_range(0.0..=3.0), rng.gen_range(0.0..=2.0)];
                let f = vec![x[0] * x[0], x[1] * x[1]];
                let u = spec.ubar(&x, &f);
                (f, u)
            })
            .collect()
    }

    #[test]
    fn refined_model_two_paths() {
        let spec = mip_ex_1();
        let samples = mip_ex_1_samples(&spec, 1000);
        let b = LocalBoundTable::sampled(&spec.a, &samples, 0.01).unwrap();
        let ev = Evaluator::new(spec.phi.clone(), spec.a.clone(), Side::Under, Some(b.clone()));
        let deg = Evaluator::new(spec.phi.clone(), spec.a.clone(), Side::Under, Some(LocalBoundTable::degenerate(&spec.a)));
        for (f, u) in samples.iter().take(40) {
            let c = ev.closed_form(Relaxation::HPlus, u, f).unwrap();
            let l = ev.by_lp(Relaxation::HPlus, u, f).unwrap();
            assert!((c - l).abs() < 1e-7, "{c} {l}");
            let h = ev.closed_form(Relaxation::H, u, f).unwrap();
            assert!(c >= h - 1e-7, "{c} {h}");
            let dh = deg.closed_form(Relaxation::HPlus, u, f).unwrap();
            assert!((dh - h).abs() < 1e-9, "{dh} {h}");
        }
        let m = build_dcr_plus(&spec, &b).unwrap();
        assert!(m.var("s_1_0").is_some());
    }
}
