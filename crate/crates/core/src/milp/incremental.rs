//! Incremental selection of subcubes and the `z`-space envelope model built
//! on it.

use crate::envelope::premise;
use crate::error::Result;
use crate::expansion::{OuterSpec, Side};
use crate::lp::{solve, DenseLp, Sense, Status};
use crate::simplotope::Breakpoints;

use super::family::{ChainFamily, LinExpr};
use super::model::{MilpModel, VarKind};

/// Indices of the incremental variables inside a model.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementalVars {
    /// `z[i][j]`, `j = 0..=n_i`.
    pub z: Vec<Vec<usize>>,
    /// `delta[i][t - 1]`, `t = 1..l_i - 1`.
    pub delta: Vec<Vec<usize>>,
    /// `f[i]` when requested.
    pub f: Vec<usize>,
}

/// Adds `z`, `delta` and the ordering rows; with `with_f` also `f = F(z)`.
pub(crate) fn add_incremental(m: &mut MilpModel, a: &Breakpoints, with_f: bool) -> Result<IncrementalVars> {
    let d = a.dim();
    let mut vars = IncrementalVars {
        z: Vec::with_capacity(d),
        delta: Vec::with_capacity(d),
        f: Vec::new(),
    };
    for i in 0..d {
        let n = a.segments(i);
        let mut zi = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let lo = if j == 0 { 1.0 } else { 0.0 };
            zi.push(m.add_var(format!("z_{}_{j}", i + 1), VarKind::Continuous, lo, 1.0)?);
        }
        let tau = a.selector(i);
        let mut di = Vec::new();
        for t in 1..a.pieces(i) {
            di.push(m.add_var(format!("d_{}_{t}", i + 1), VarKind::Binary, 0.0, 1.0)?);
        }
        for j in 1..n {
            match tau[1..tau.len() - 1].iter().position(|&p| p == j) {
                Some(t0) => {
                    let t = t0 + 1;
                    let dv = di[t0];
                    m.add_row(format!("inc_{}_{t}_a", i + 1), &[(zi[j], 1.0), (dv, -1.0)], Sense::Ge, 0.0)?;
                    m.add_row(format!("inc_{}_{t}_b", i + 1), &[(dv, 1.0), (zi[j + 1], -1.0)], Sense::Ge, 0.0)?;
                }
                None => {
                    m.add_row(format!("mono_{}_{j}", i + 1), &[(zi[j], 1.0), (zi[j + 1], -1.0)], Sense::Ge, 0.0)?;
                }
            }
        }
        if with_f {
            let row = a.row(i);
            let fv = m.add_var(format!("f_{}", i + 1), VarKind::Continuous, row[0], row[n])?;
            let mut terms = vec![(fv, 1.0), (zi[0], -row[0])];
            for j in 1..=n {
                terms.push((zi[j], -(row[j] - row[j - 1])));
            }
            m.add_row(format!("fdef_{}", i + 1), &terms, Sense::Eq, 0.0)?;
            vars.f.push(fv);
        }
        vars.z.push(zi);
        vars.delta.push(di);
    }
    Ok(vars)
}

/// The incremental model over `(z, delta, f)`.
pub fn build_incremental(a: &Breakpoints) -> Result<MilpModel> {
    let mut m = MilpModel::new("incremental");
    add_incremental(&mut m, a, true)?;
    Ok(m)
}

/// Binary pattern of `delta` selecting piece `t` (1-based) of every coordinate.
pub fn delta_pattern(a: &Breakpoints, pieces: &[usize]) -> Vec<Vec<f64>> {
    (0..a.dim())
        .map(|i| (1..a.pieces(i)).map(|t| if t < pieces[i] { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Staircase family over the `z` chains of an incremental fragment.
pub(crate) fn z_family(
    phi: &OuterSpec,
    a: &Breakpoints,
    vars: &IncrementalVars,
    phi_var: usize,
    side: Side,
) -> Result<ChainFamily> {
    let switch = premise(phi, a.dim(), side)?;
    Ok(ChainFamily {
        name: format!("env_{}", side_tag(side)),
        phi: phi.clone(),
        phi_var,
        chains: vars
            .z
            .iter()
            .map(|zi| zi[1..].iter().map(|&j| LinExpr::var(j)).collect())
            .collect(),
        levels: a.rows().clone(),
        switch,
        side,
    })
}

pub(crate) fn side_tag(side: Side) -> &'static str {
    match side {
        Side::Over => "over",
        Side::Under => "under",
    }
}

/// Incremental model plus `phi <= conc(phi o F)(z)` (and `>=` the convex
/// envelope for each further side requested).
pub fn build_mip_z(phi: &OuterSpec, a: &Breakpoints, sides: &[Side]) -> Result<MilpModel> {
    let mut m = MilpModel::new("mip-z");
    let vars = add_incremental(&mut m, a, true)?;
    let p = m.add_var("phi", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?;
    m.objective = vec![(p, 1.0)];
    let mut fams = Vec::new();
    for &side in sides {
        fams.push(z_family(phi, a, &vars, p, side)?);
    }
    for f in fams {
        f.attach(&mut m)?;
    }
    Ok(m)
}

/// Outcome of checking the one-dimensional non-ideal instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ZDeltaReport {
    /// `(phi, z_0, z_1, z_2, delta)`.
    pub point: [f64; 5],
    /// Sampled concave envelope of `psi(z) = phi(z_1 + z_2)` over `Delta` at the point.
    pub envelope_z: f64,
    /// `envelope_z - phi`; nonnegative means the point satisfies the `z`-space model.
    pub margin_z: f64,
    /// `sqrt((1 - delta)(z_1 - delta)) + z_2`, the bound without its `delta` term.
    pub nodelta_bound: f64,
    /// `phi - nodelta_bound`.
    pub nodelta_violation: f64,
    /// The concave envelope over `(z, delta)`: `sqrt((1 - delta)(z_1 - delta)) + delta + z_2`.
    pub envelope_zdelta: f64,
    /// `phi - envelope_zdelta`.
    pub zdelta_violation: f64,
}

/// `phi(f) = sqrt(f)` on `[0, 1]` and `f` on `(1, 2]`.
pub fn sqrt_then_linear(f: f64) -> f64 {
    if f <= 1.0 {
        f.max(0.0).sqrt()
    } else {
        f
    }
}

const ZDELTA_GRID: usize = 20;

/// Concave envelope of `psi(z_1, z_2) = phi(z_1 + z_2)` over
/// `{1 >= z_1 >= z_2 >= 0}`, from the vertex-combination LP on a grid.
pub fn sampled_envelope_z(z1: f64, z2: f64) -> Result<f64> {
    let mut pts = Vec::new();
    for p in 0..=ZDELTA_GRID {
        for q in 0..=p {
            pts.push((p as f64 / ZDELTA_GRID as f64, q as f64 / ZDELTA_GRID as f64));
        }
    }
    let mut lp = DenseLp::new(pts.len(), true);
    lp.objective = pts.iter().map(|&(a, b)| sqrt_then_linear(a + b)).collect();
    lp.add_row(vec![1.0; pts.len()], Sense::Eq, 1.0);
    lp.add_row(pts.iter().map(|p| p.0).collect(), Sense::Eq, z1);
    lp.add_row(pts.iter().map(|p| p.1).collect(), Sense::Eq, z2);
    let sol = solve(&lp)?;
    if sol.status != Status::Optimal {
        return Err(crate::Error::Invalid(format!("({z1}, {z2}) lies outside the z-simplex")));
    }
    Ok(sol.value)
}

/// `sqrt((1 - delta)(z_1 - delta)) + delta + z_2`, the concave envelope of
/// `phi o F` over the `(z, delta)` polytope of the instance.
pub fn zdelta_envelope(z1: f64, z2: f64, delta: f64) -> f64 {
    ((1.0 - delta) * (z1 - delta)).max(0.0).sqrt() + delta + z2
}

/// Checks a point `(phi, z_0, z_1, z_2, delta)` of the `sqrt` instance with
/// breakpoints `(0, 1, 2)` against both envelope models.
pub fn check_zdelta_point(point: [f64; 5]) -> Result<ZDeltaReport> {
    let [phi, _, z1, z2, delta] = point;
    let envelope_z = sampled_envelope_z(z1, z2)?;
    let nodelta_bound = ((1.0 - delta) * (z1 - delta)).max(0.0).sqrt() + z2;
    let envelope_zdelta = zdelta_envelope(z1, z2, delta);
    Ok(ZDeltaReport {
        point,
        envelope_z,
        margin_z: envelope_z - phi,
        nodelta_bound,
        nodelta_violation: phi - nodelta_bound,
        envelope_zdelta,
        zdelta_violation: phi - envelope_zdelta,
    })
}

/// The fractional extreme point `(1/sqrt 2, 1, 1/2, 0, 1/2)`.
pub fn check_zdelta_counterexample() -> Result<ZDeltaReport> {
    check_zdelta_point([std::f64::consts::FRAC_1_SQRT_2, 1.0, 0.5, 0.0, 0.5])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_incremental() {
        let a = Breakpoints::fully_split(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let m = build_incremental(&a).unwrap();
        assert_eq!(m.constraints().len(), 3);
        assert_eq!(m.num_binaries(), 1);
    }

    #[test]
    fn all_ones_pattern_selects_top_piece() {
        let a = Breakpoints::fully_split(vec![vec![0.0, 1.0, 2.0, 4.0]]).unwrap();
        let m = build_incremental(&a).unwrap();
        let fixes: Vec<(usize, f64)> = ["d_1_1", "d_1_2"].iter().map(|n| (m.var(n).unwrap(), 1.0)).collect();
        let fixed = m.fixed(&fixes);
        let f = m.var("f_1").unwrap();
        let mut obj = vec![0.0; m.num_vars()];
        obj[f] = 1.0;
        let lo = fixed.solve_relaxation(&obj, false).unwrap();
        let hi = fixed.solve_relaxation(&obj, true).unwrap();
        assert!((lo.value - 2.0).abs() < 1e-9 && (hi.value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn counterexample_point() {
        let r = check_zdelta_counterexample().unwrap();
        assert!(r.margin_z >= -1e-6, "{r:?}");
        assert!(r.nodelta_bound.abs() < 1e-12);
        assert!(r.nodelta_violation >= 0.7);
        assert!((r.zdelta_violation - (std::f64::consts::FRAC_1_SQRT_2 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn binary_points_satisfy_both() {
        for p in [[1.0, 1.0, 1.0, 0.0, 0.0], [2.0, 1.0, 1.0, 1.0, 1.0]] {
            let r = check_zdelta_point(p).unwrap();
            assert!(r.margin_z >= -1e-9, "{r:?}");
            assert!(r.zdelta_violation <= 1e-12, "{r:?}");
        }
    }
}
