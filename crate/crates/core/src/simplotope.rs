//! Breakpoint tables, the simplotope `Q` and its affine images `Delta`
//! (z-coordinates) and `Lambda` (convex multipliers), plus the discrete
//! concave lift used to evaluate discretized relaxations in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridShape;

/// A `d x (n_i + 1)` table of reals, one row per coordinate.
pub type Table = Vec<Vec<f64>>;
/// Point of `Q`.
pub type SPoint = Table;
/// Point of `Delta`; column 0 is always 1.
pub type ZPoint = Table;
/// Point of `Lambda`; rows are convex multipliers.
pub type LambdaPoint = Table;

const MEMBER_TOL: f64 = 1e-9;

/// Breakpoints `a_{i0} < ... < a_{in_i}` per coordinate, with the selector
/// `0 = tau(i,0) < ... < tau(i,l_i) = n_i` describing which breakpoints
/// delimit discretization pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    a: Table,
    tau: Vec<Vec<usize>>,
}

impl Breakpoints {
    /// Breakpoints with a single piece per coordinate (`l_i = 1`).
    pub fn new(a: Table) -> Result<Self> {
        let tau = a.iter().map(|r| vec![0, r.len().saturating_sub(1)]).collect();
        Self::with_selector(a, tau)
    }

    /// Breakpoints where every segment is its own piece (`tau(i,t) = t`).
    pub fn fully_split(a: Table) -> Result<Self> {
        let tau = a.iter().map(|r| (0..r.len()).collect()).collect();
        Self::with_selector(a, tau)
    }

    pub fn with_selector(a: Table, tau: Vec<Vec<usize>>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Breakpoints("no coordinates".into()));
        }
        if tau.len() != a.len() {
            return Err(Error::Breakpoints(format!(
                "{} breakpoint rows but {} selector rows",
                a.len(),
                tau.len()
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() < 2 {
                return Err(Error::Breakpoints(format!(
                    "coordinate {} needs at least two breakpoints",
                    i + 1
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Breakpoints(format!(
                    "coordinate {} has a non-finite breakpoint",
                    i + 1
                )));
            }
            if let Some(j) = (1..row.len()).find(|&j| row[j] <= row[j - 1]) {
                return Err(Error::Breakpoints(format!(
                    "coordinate {} is not strictly increasing at j={j}",
                    i + 1
                )));
            }
            let t = &tau[i];
            let n = row.len() - 1;
            if t.len() < 2 || t[0] != 0 || *t.last().unwrap() != n {
                return Err(Error::Breakpoints(format!(
                    "selector of coordinate {} must run from 0 to {n}",
                    i + 1
                )));
            }
            if t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Breakpoints(format!(
                    "selector of coordinate {} is not strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(Self { a, tau })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `n_i`, the number of segments of coordinate `i`.
    pub fn segments(&self, i: usize) -> usize {
        self.a[i].len() - 1
    }

    pub fn shape(&self) -> GridShape {
        GridShape::ragged(self.a.iter().map(|r| r.len() - 1).collect())
            .expect("validated breakpoints")
    }

    pub fn rows(&self) -> &Table {
        &self.a
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i]
    }

    pub fn selector(&self, i: usize) -> &[usize] {
        &self.tau[i]
    }

    pub fn selectors(&self) -> &[Vec<usize>] {
        &self.tau
    }

    /// `l_i`, the number of pieces of coordinate `i`.
    pub fn pieces(&self, i: usize) -> usize {
        self.tau[i].len() - 1
    }

    pub fn lower(&self) -> Vec<f64> {
        self.a.iter().map(|r| r[0]).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.a.iter().map(|r| *r.last().unwrap()).collect()
    }

    /// `Pi(a; p) = (a_{1 p_1}, ..., a_{d p_d})`.
    pub fn at(&self, p: &[usize]) -> Vec<f64> {
        p.iter().enumerate().map(|(i, &j)| self.a[i][j]).collect()
    }

    /// Vertex `v_{ij} = (a_{i0}, ..., a_{ij}, a_{ij}, ..., a_{ij})` of `Q_i`.
    pub fn vertex(&self, i: usize, j: usize) -> Vec<f64> {
        let row = &self.a[i];
        (0..row.len()).map(|k| row[k.min(j)]).collect()
    }

    /// Same breakpoints with a different selector.
    pub fn reselect(&self, tau: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_selector(self.a.clone(), tau)
    }

    /// Interval `[a_{i tau(i,t-1)}, a_{i tau(i,t)}]` of piece `t` (1-based).
    pub fn piece_bounds(&self, i: usize, t: usize) -> (f64, f64) {
        let tau = &self.tau[i];
        (self.a[i][tau[t - 1]], self.a[i][tau[t]])
    }
}

/// Checks `s in Q` for strictly increasing rows.
pub fn check_in_q(a: &Breakpoints, s: &SPoint, tol: f64) -> Result<()> {
    check_shape(a, s, "Q")?;
    for (i, row) in s.iter().enumerate() {
        let ar = a.row(i);
        if (row[0] - ar[0]).abs() > tol {
            return Err(Error::Membership {
                set: "Q",
                detail: format!("s_{{{},0}} = {} differs from a_{{{},0}} = {}", i + 1, row[0], i + 1, ar[0]),
            });
        }
        let mut prev = 1.0;
        for j in 1..row.len() {
            let z = (row[j] - row[j - 1]) / (ar[j] - ar[j - 1]);
            if z < -tol || z > prev + tol {
                return Err(Error::Membership {
                    set: "Q",
                    detail: format!("slope {z} at (i={}, j={j}) outside [0, {prev}]", i + 1),
                });
            }
            prev = z;
        }
    }
    Ok(())
}

/// Checks `z in Delta`.
pub fn check_in_delta(z: &ZPoint, tol: f64) -> Result<()> {
    for (i, row) in z.iter().enumerate() {
        if row.is_empty() || (row[0] - 1.0).abs() > tol {
            return Err(Error::Membership {
                set: "Delta",
                detail: format!("z_{{{},0}} must equal 1", i + 1),
            });
        }
        for j in 1..row.len() {
            if row[j] > row[j - 1] + tol || row[j] < -tol {
                return Err(Error::Membership {
                    set: "Delta",
                    detail: format!("z not monotone in [0,1] at (i={}, j={j})", i + 1),
                });
            }
        }
    }
    Ok(())
}

/// Checks `lambda in Lambda`.
pub fn check_in_lambda(l: &LambdaPoint, tol: f64) -> Result<()> {
    for (i, row) in l.iter().enumerate() {
        if row.iter().any(|&v| v < -tol) {
            return Err(Error::Membership {
                set: "Lambda",
                detail: format!("negative multiplier in row {}", i + 1),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Membership {
                set: "Lambda",
                detail: format!("row {} sums to {sum}", i + 1),
            });
        }
    }
    Ok(())
}

fn check_shape(a: &Breakpoints, t: &Table, set: &'static str) -> Result<()> {
    if t.len() != a.dim() || t.iter().enumerate().any(|(i, r)| r.len() != a.row(i).len()) {
        return Err(Error::Dimension(format!(
            "{set} point shape does not match the breakpoints"
        )));
    }
    Ok(())
}

/// `Z(s)`: `z_{i0} = 1`, `z_{ij} = (s_{ij} - s_{i,j-1}) / (a_{ij} - a_{i,j-1})`.
pub fn z_from_s(a: &Breakpoints, s: &SPoint) -> Result<ZPoint> {
    check_in_q(a, s, MEMBER_TOL)?;
    Ok(z_from_s_rows(a.rows(), s))
}

/// `Z(s)` for possibly repeated breakpoints. A zero-width segment copies the
/// previous slope; its value never affects envelope cuts.
pub fn z_from_s_rows(a: &Table, s: &SPoint) -> ZPoint {
    a.iter()
        .zip(s)
        .map(|(ar, sr)| {
            let mut z = vec![1.0; ar.len()];
            for j in 1..ar.len() {
                let w = ar[j] - ar[j - 1];
                z[j] = if w > 0.0 {
                    (sr[j] - sr[j - 1]) / w
                } else {
                    z[j - 1]
                };
            }
            z
        })
        .collect()
}

/// `Z^{-1}(z)`: `s_{ij} = a_{i0} + sum_{k<=j} (a_{ik} - a_{i,k-1}) z_{ik}`.
pub fn s_from_z(a: &Breakpoints, z: &ZPoint) -> Result<SPoint> {
    check_shape(a, z, "Delta")?;
    check_in_delta(z, MEMBER_TOL)?;
    Ok(s_from_z_rows(a.rows(), z))
}

pub fn s_from_z_rows(a: &Table, z: &ZPoint) -> SPoint {
    a.iter()
        .zip(z)
        .map(|(ar, zr)| {
            let mut s = vec![ar[0]; ar.len()];
            for j in 1..ar.len() {
                s[j] = s[j - 1] + (ar[j] - ar[j - 1]) * zr[j];
            }
            s
        })
        .collect()
}

/// `T(z)`: `lambda_{ij} = z_{ij} - z_{i,j+1}`, `lambda_{in} = z_{in}`.
pub fn lambda_from_z(z: &ZPoint) -> Result<LambdaPoint> {
    check_in_delta(z, MEMBER_TOL)?;
    Ok(z.iter()
        .map(|r| {
            let n = r.len() - 1;
            (0..=n)
                .map(|j| if j < n { r[j] - r[j + 1] } else { r[n] })
                .collect()
        })
        .collect())
}

/// `T^{-1}(lambda)`: `z_{ij} = sum_{k>=j} lambda_{ik}`.
pub fn z_from_lambda(l: &LambdaPoint) -> Result<ZPoint> {
    check_in_lambda(l, MEMBER_TOL)?;
    Ok(l.iter()
        .map(|r| {
            let mut z = vec![0.0; r.len()];
            let mut acc = 0.0;
            for j in (0..r.len()).rev() {
                acc += r[j];
                z[j] = acc;
            }
            z[0] = 1.0;
            z
        })
        .collect())
}

/// `V(lambda) = sum_j lambda_{ij} v_{ij}`.
pub fn s_from_lambda(a: &Breakpoints, l: &LambdaPoint) -> Result<SPoint> {
    check_shape(a, l, "Lambda")?;
    check_in_lambda(l, MEMBER_TOL)?;
    Ok(a.rows()
        .iter()
        .zip(l)
        .map(|(ar, lr)| {
            (0..ar.len())
                .map(|j| lr.iter().enumerate().map(|(k, &w)| w * ar[k.min(j)]).sum())
                .collect()
        })
        .collect())
}

/// Stand-in for an absent underestimator: strictly below every chord of the
/// row, so it never touches the upper hull.
pub fn absent_value(a_row: &[f64]) -> f64 {
    let lo = a_row[0];
    let hi = *a_row.last().unwrap();
    lo - 2.0 * (hi - lo).abs() - 1.0
}

/// Values at `xs` of the upper concave envelope of `{(xs[j], ys[j])}`.
///
/// `xs` must be nondecreasing; repeated abscissae keep the larger ordinate.
pub fn upper_hull_values(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        match pts.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(y),
            _ => pts.push((x, y)),
        }
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let m = hull[hull.len() - 1];
            // drop m when it lies on or below the segment o -> p
            let cross = (m.0 - o.0) * (p.1 - o.1) - (m.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    xs.iter()
        .map(|&x| {
            let k = hull.partition_point(|h| h.0 < x);
            if k < hull.len() && hull[k].0 == x {
                hull[k].1
            } else {
                let (l, r) = (hull[k - 1], hull[k]);
                l.1 + (r.1 - l.1) * (x - l.0) / (r.0 - l.0)
            }
        })
        .collect()
}

/// Lift a row of underestimator values to `Q_i`: the upper concave envelope
/// of `(a_{ij}, u_{ij})` read back at each breakpoint.
pub fn discrete_concave_lift(a_row: &[f64], u_row: &[f64]) -> Result<Vec<f64>> {
    if a_row.len() != u_row.len() || a_row.len() < 2 {
        return Err(Error::Dimension("lift needs matching rows of length >= 2".into()));
    }
    let n = a_row.len() - 1;
    let tol = 1e-9 * (1.0 + a_row[n].abs().max(a_row[0].abs()));
    if (u_row[0] - a_row[0]).abs() > tol {
        return Err(Error::Ordering {
            i: 0,
            j: 0,
            detail: format!("u_0 = {} must equal a_0 = {}", u_row[0], a_row[0]),
        });
    }
    for j in 1..n {
        if u_row[j] > u_row[n].min(a_row[j]) + tol {
            return Err(Error::Ordering {
                i: 0,
                j,
                detail: format!(
                    "u_j = {} exceeds min(u_n, a_j) = {}",
                    u_row[j],
                    u_row[n].min(a_row[j])
                ),
            });
        }
    }
    if u_row[n] < a_row[0] - tol || u_row[n] > a_row[n] + tol {
        return Err(Error::Ordering {
            i: 0,
            j: n,
            detail: format!("u_n = {} outside [a_0, a_n]", u_row[n]),
        });
    }
    Ok(upper_hull_values(a_row, u_row))
}

/// Piece index `t_i` (1-based) with `f_i` in `(a_{tau(t-1)}, a_{tau(t)}]`,
/// the first piece also taking its left endpoint.
pub fn select_piece(fbar: &[f64], a: &Breakpoints) -> Result<Vec<usize>> {
    if fbar.len() != a.dim() {
        return Err(Error::Dimension("f has the wrong length".into()));
    }
    let mut out = Vec::with_capacity(fbar.len());
    for (i, &f) in fbar.iter().enumerate() {
        let row = a.row(i);
        let tol = 1e-12 * (1.0 + row[row.len() - 1].abs());
        if f < row[0] - tol || f > row[row.len() - 1] + tol {
            return Err(Error::Invalid(format!(
                "f_{} = {f} lies outside [{}, {}]",
                i + 1,
                row[0],
                row[row.len() - 1]
            )));
        }
        let tau = a.selector(i);
        let t = (1..tau.len())
            .find(|&t| f <= row[tau[t]])
            .unwrap_or(tau.len() - 1);
        out.push(t);
    }
    Ok(out)
}

/// The three lifted points used to evaluate discretized relaxations at a
/// fixed `(x, f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoints {
    pub piece: Vec<usize>,
    pub ubar: Table,
    pub uhat: Table,
    pub ustar: Table,
    pub sbar: SPoint,
    pub shat: SPoint,
    pub sstar: SPoint,
}

/// Builds `u-bar`, `u-hat`, `u* = u-bar v u-hat` and lifts each of them.
///
/// `u` holds `u_{ij}(x)`; its last column is replaced by `fbar`.
pub fn prop_eval_points(a: &Breakpoints, u: &Table, fbar: &[f64]) -> Result<EvalPoints> {
    let piece = select_piece(fbar, a)?;
    eval_points_on(a.rows(), a.selectors(), &piece, u, fbar)
}

/// [`prop_eval_points`] against arbitrary (possibly repeated) breakpoint rows
/// and a given piece selection.
pub fn eval_points_on(
    a: &Table,
    tau: &[Vec<usize>],
    piece: &[usize],
    u: &Table,
    fbar: &[f64],
) -> Result<EvalPoints> {
    if u.len() != a.len() || u.iter().zip(a).any(|(ur, ar)| ur.len() != ar.len()) {
        return Err(Error::Dimension("underestimator table shape".into()));
    }
    let d = a.len();
    let mut ubar = Vec::with_capacity(d);
    let mut uhat = Vec::with_capacity(d);
    let mut ustar = Vec::with_capacity(d);
    let (mut sbar, mut shat, mut sstar) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..d {
        let ar = &a[i];
        let n = ar.len() - 1;
        let mut ub = u[i].clone();
        ub[0] = ar[0];
        ub[n] = fbar[i];
        let lo = tau[i][piece[i] - 1];
        let hi = tau[i][piece[i]];
        let absent = absent_value(ar);
        let uh: Vec<f64> = (0..=n)
            .map(|j| {
                if j <= lo {
                    ar[j]
                } else if j >= hi {
                    fbar[i]
                } else {
                    absent
                }
            })
            .collect();
        let us: Vec<f64> = ub.iter().zip(&uh).map(|(x, y)| x.max(*y)).collect();
        let lift = |row: &[f64]| -> Result<Vec<f64>> {
            discrete_concave_lift(ar, row).map_err(|e| match e {
                Error::Ordering { j, detail, .. } => Error::Ordering { i: i + 1, j, detail },
                other => other,
            })
        };
        sbar.push(lift(&ub)?);
        shat.push(upper_hull_values(ar, &uh));
        sstar.push(upper_hull_values(ar, &us));
        ubar.push(ub);
        uhat.push(uh);
        ustar.push(us);
    }
    Ok(EvalPoints {
        piece: piece.to_vec(),
        ubar,
        uhat,
        ustar,
        sbar,
        shat,
        sstar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mip_ex_1() -> Breakpoints {
        Breakpoints::with_selector(
            vec![vec![0.0, 5.0, 8.0, 9.0], vec![0.0, 4.0]],
            vec![vec![0, 1, 3], vec![0, 1]],
        )
        .unwrap()
    }

    #[test]
    fn z_of_lifted_point() {
        let a = mip_ex_1();
        let s = vec![vec![0.0, 5.0, 6.0, 6.25], vec![0.0, 2.25]];
        let z = z_from_s(&a, &s).unwrap();
        let want = [1.0, 1.0, 1.0 / 3.0, 0.25];
        for (got, w) in z[0].iter().zip(want) {
            assert!((got - w).abs() < 1e-15);
        }
    }

    #[test]
    fn vertices_map_to_prefix_indicators() {
        let a = mip_ex_1();
        for j in 0..=3 {
            let s = vec![a.vertex(0, j), a.vertex(1, 1)];
            let z = z_from_s(&a, &s).unwrap();
            let want: Vec<f64> = (0..=3).map(|k| if k <= j { 1.0 } else { 0.0 }).collect();
            assert_eq!(z[0], want);
            let l = lambda_from_z(&z).unwrap();
            assert_eq!(l[0].iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(l[0][j], 1.0);
        }
    }

    #[test]
    fn lambda_of_simple_z() {
        let l = lambda_from_z(&vec![vec![1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(l, vec![vec![0.0, 1.0, 0.0]]);
        assert_eq!(z_from_lambda(&l).unwrap(), vec![vec![1.0, 1.0, 0.0]]);
    }

    #[test]
    fn lift_examples() {
        let a = [0.0, 5.0, 8.0, 9.0];
        assert_eq!(
            discrete_concave_lift(&a, &[0.0, 4.0, 6.0, 6.25]).unwrap(),
            vec![0.0, 4.0, 6.0, 6.25]
        );
        let gap = absent_value(&a);
        let s = discrete_concave_lift(&a, &[0.0, gap, 6.0, 6.25]).unwrap();
        assert!((s[1] - 3.75).abs() < 1e-12);
        assert!(discrete_concave_lift(&a, &[0.0, 7.0, 6.0, 6.25]).is_err());
    }

    #[test]
    fn mip_ex_1_points() {
        let a = mip_ex_1();
        let x = [2.5, 1.5];
        let u = vec![
            vec![0.0, 2.0 * x[0] - 1.0, 4.0 * x[0] - 4.0, x[0] * x[0]],
            vec![0.0, x[1] * x[1]],
        ];
        let f = [x[0] * x[0], x[1] * x[1]];
        let ep = prop_eval_points(&a, &u, &f).unwrap();
        assert_eq!(ep.piece, vec![2, 1]);
        assert_eq!(ep.sbar[0], vec![0.0, 4.0, 6.0, 6.25]);
        assert_eq!(ep.sstar[0], vec![0.0, 5.0, 6.0, 6.25]);
        assert_eq!(ep.sbar[1], vec![0.0, 2.25]);
    }

    #[test]
    fn piece_ties_go_down() {
        let a = mip_ex_1();
        assert_eq!(select_piece(&[6.25, 1.0], &a).unwrap(), vec![2, 1]);
        assert_eq!(select_piece(&[5.0, 0.0], &a).unwrap(), vec![1, 1]);
        assert_eq!(select_piece(&[0.0, 0.0], &a).unwrap(), vec![1, 1]);
        assert!(select_piece(&[9.5, 0.0], &a).is_err());
    }

    #[test]
    fn bad_breakpoints() {
        assert!(Breakpoints::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(Breakpoints::with_selector(vec![vec![0.0, 1.0, 2.0]], vec![vec![0, 1]]).is_err());
    }
}
