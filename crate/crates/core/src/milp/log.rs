//! Logarithmic SOS2 encodings over `lambda` and the models built on them.

use crate::envelope::premise;
use crate::error::{Error, Result};
use crate::expansion::{OuterSpec, Side};
use crate::lp::Sense;
use crate::simplotope::Breakpoints;

use super::family::{ChainFamily, LinExpr};
use super::incremental::side_tag;
use super::model::{MilpModel, VarKind};

/// Default cap on `|E| = prod (n_i + 1)` for the `w` models.
pub const W_CAP: usize = 4096;

/// Reflected binary code on `m` bits, most significant bit first.
pub fn gray_code(m: usize) -> Vec<Vec<u8>> {
    (0..1usize << m)
        .map(|t| {
            let g = t ^ (t >> 1);
            (0..m).rev().map(|b| ((g >> b) & 1) as u8).collect()
        })
        .collect()
}

fn bits(n: usize) -> usize {
    let mut m = 0;
    while (1usize << m) < n {
        m += 1;
    }
    m
}

/// Index sets `(L_k, R_k)` over `lambda_0..lambda_n`: `L_k` holds `j` when
/// interval `j` or `j + 1` has bit `k` set, `R_k` when it has bit `k` clear.
pub fn sos2_sets(n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let m = bits(n);
    let codes = gray_code(m);
    // eta[t] is the code of interval t (1-based), padded at both ends
    let eta = |t: usize| &codes[t.clamp(1, n) - 1];
    (0..m)
        .map(|k| {
            let l = (0..=n).filter(|&j| eta(j)[k] == 1 || eta(j + 1)[k] == 1).collect();
            let r = (0..=n).filter(|&j| eta(j)[k] == 0 || eta(j + 1)[k] == 0).collect();
            (l, r)
        })
        .collect()
}

/// Indices of `lambda` allowed to be nonzero under a binary `delta`.
pub fn sos2_support(n: usize, delta: &[u8]) -> Vec<usize> {
    let sets = sos2_sets(n);
    (0..=n)
        .filter(|j| {
            sets.iter()
                .zip(delta)
                .all(|((l, r), &dk)| if dk == 0 { l.contains(j) } else { r.contains(j) })
        })
        .collect()
}

fn add_sos2(m: &mut MilpModel, i: usize, lam: &[usize]) -> Result<Vec<usize>> {
    let n = lam.len() - 1;
    let sets = sos2_sets(n);
    let mut ds = Vec::with_capacity(sets.len());
    for (k, (l, r)) in sets.iter().enumerate() {
        let d = m.add_var(format!("d_{i}_{}", k + 1), VarKind::Binary, 0.0, 1.0)?;
        let mut left: Vec<(usize, f64)> = (0..=n).filter(|j| !l.contains(j)).map(|j| (lam[j], 1.0)).collect();
        left.push((d, -1.0));
        m.add_row(format!("sos_{i}_{}_l", k + 1), &left, Sense::Le, 0.0)?;
        let mut right: Vec<(usize, f64)> = (0..=n).filter(|j| !r.contains(j)).map(|j| (lam[j], 1.0)).collect();
        right.push((d, 1.0));
        m.add_row(format!("sos_{i}_{}_r", k + 1), &right, Sense::Le, 1.0)?;
        ds.push(d);
    }
    Ok(ds)
}

fn add_lambda(m: &mut MilpModel, i: usize, n: usize) -> Result<Vec<usize>> {
    let lam: Vec<usize> = (0..=n)
        .map(|j| m.add_var(format!("l_{i}_{j}"), VarKind::Continuous, 0.0, 1.0))
        .collect::<Result<_>>()?;
    let terms: Vec<(usize, f64)> = lam.iter().map(|&v| (v, 1.0)).collect();
    m.add_row(format!("lsum_{i}"), &terms, Sense::Eq, 1.0)?;
    Ok(lam)
}

/// SOS2 on `lambda_0..lambda_n` with `ceil(log2 n)` binaries.
pub fn build_sos2_log(n: usize) -> Result<MilpModel> {
    if n < 1 {
        return Err(Error::Invalid("need at least one segment".into()));
    }
    let mut m = MilpModel::new("sos2-log");
    let lam = add_lambda(&mut m, 1, n)?;
    add_sos2(&mut m, 1, &lam)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogMode {
    /// `phi` bounded by the staircase cuts over `lambda` for each side.
    Envelope(Vec<Side>),
    /// `phi` defined through `w` over the breakpoint grid.
    MultilinearW,
}

/// Variables of the `lambda` part shared by both modes.
struct LambdaVars {
    lam: Vec<Vec<usize>>,
}

fn add_lambda_block(m: &mut MilpModel, a: &Breakpoints, sos: bool) -> Result<LambdaVars> {
    let mut lam = Vec::with_capacity(a.dim());
    for i in 0..a.dim() {
        let row = a.row(i);
        let n = row.len() - 1;
        let l = add_lambda(m, i + 1, n)?;
        if sos {
            let f = m.add_var(format!("f_{}", i + 1), VarKind::Continuous, row[0], row[n])?;
            let mut terms = vec![(f, 1.0)];
            terms.extend(l.iter().zip(row).map(|(&v, &aj)| (v, -aj)));
            m.add_row(format!("fdef_{}", i + 1), &terms, Sense::Eq, 0.0)?;
            add_sos2(m, i + 1, &l)?;
        }
        lam.push(l);
    }
    Ok(LambdaVars { lam })
}

fn grid_points(a: &Breakpoints, cap: usize) -> Result<Vec<Vec<usize>>> {
    let count = (0..a.dim()).try_fold(1usize, |acc, i| acc.checked_mul(a.segments(i) + 1));
    match count {
        Some(c) if c <= cap => Ok(a.shape().points()),
        _ => Err(Error::CapExceeded {
            count: count.map_or_else(|| "overflow".into(), |c| c.to_string()),
            cap: cap as u128,
        }),
    }
}

fn w_name(p: &[usize]) -> String {
    let mut s = String::from("w");
    for j in p {
        s.push('_');
        s.push_str(&j.to_string());
    }
    s
}

/// `w` over the grid with marginals `lambda` and one `theta_k` per term.
/// Returns the `theta` variables.
fn add_w_block(m: &mut MilpModel, phi: &OuterSpec, a: &Breakpoints, lv: &LambdaVars) -> Result<Vec<usize>> {
    let terms = phi
        .terms()
        .ok_or_else(|| Error::Premise("the w model needs a multilinear term list".into()))?
        .to_vec();
    let pts = grid_points(a, W_CAP)?;
    let w: Vec<usize> = pts
        .iter()
        .map(|p| m.add_var(w_name(p), VarKind::Continuous, 0.0, 1.0))
        .collect::<Result<_>>()?;
    let all: Vec<(usize, f64)> = w.iter().map(|&v| (v, 1.0)).collect();
    m.add_row("wsum", &all, Sense::Eq, 1.0)?;
    for i in 0..a.dim() {
        for j in 0..=a.segments(i) {
            let mut row: Vec<(usize, f64)> = pts
                .iter()
                .zip(&w)
                .filter(|(p, _)| p[i] == j)
                .map(|(_, &v)| (v, 1.0))
                .collect();
            row.push((lv.lam[i][j], -1.0));
            m.add_row(format!("marg_{}_{j}", i + 1), &row, Sense::Eq, 0.0)?;
        }
    }
    let mut thetas = Vec::with_capacity(terms.len());
    for (k, t) in terms.iter().enumerate() {
        let th = m.add_var(format!("theta_{}", k + 1), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?;
        let mut row = vec![(th, 1.0)];
        for (p, &v) in pts.iter().zip(&w) {
            let val: f64 = t.vars.iter().map(|&i| a.row(i)[p[i]]).product();
            row.push((v, -val));
        }
        m.add_row(format!("thdef_{}", k + 1), &row, Sense::Eq, 0.0)?;
        thetas.push(th);
    }
    Ok(thetas)
}

/// `lambda`-space model with the logarithmic SOS2 encoding.
pub fn build_log_formulation(phi: &OuterSpec, a: &Breakpoints, mode: LogMode) -> Result<MilpModel> {
    if phi.arity() != a.dim() {
        return Err(Error::Dimension(format!("outer arity {} but d = {}", phi.arity(), a.dim())));
    }
    match mode {
        LogMode::Envelope(sides) => {
            let switches: Vec<Vec<usize>> = sides.iter().map(|&s| premise(phi, a.dim(), s)).collect::<Result<_>>()?;
            let mut m = MilpModel::new("log-envelope");
            let lv = add_lambda_block(&mut m, a, true)?;
            let p = m.add_var("phi", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?;
            m.objective = vec![(p, 1.0)];
            for (&side, switch) in sides.iter().zip(switches) {
                // z_k = lambda_k + ... + lambda_n
                let chains = lv
                    .lam
                    .iter()
                    .map(|l| {
                        (1..l.len())
                            .map(|k| LinExpr {
                                terms: l[k..].iter().map(|&v| (v, 1.0)).collect(),
                                constant: 0.0,
                            })
                            .collect()
                    })
                    .collect();
                ChainFamily {
                    name: format!("env_{}", side_tag(side)),
                    phi: phi.clone(),
                    phi_var: p,
                    chains,
                    levels: a.rows().clone(),
                    switch,
                    side,
                }
                .attach(&mut m)?;
            }
            Ok(m)
        }
        LogMode::MultilinearW => {
            let terms = phi
                .terms()
                .ok_or_else(|| Error::Premise("the w model needs a multilinear term list".into()))?
                .to_vec();
            let mut m = MilpModel::new("log-w");
            let lv = add_lambda_block(&mut m, a, true)?;
            let thetas = add_w_block(&mut m, phi, a, &lv)?;
            let p = m.add_var("phi", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)?;
            let mut row = vec![(p, 1.0)];
            row.extend(thetas.iter().zip(&terms).map(|(&th, t)| (th, -t.coeff)));
            m.add_row("phidef", &row, Sense::Eq, 0.0)?;
            m.objective = vec![(p, 1.0)];
            Ok(m)
        }
    }
}

/// Extended description of the hull of the graph of the terms over `Q`:
/// `w`, `lambda` marginals, `s_{ij} = sum_p a_{i,min(p,j)} lambda_{ip}`
/// and `theta_k`.
pub fn build_w_hull(a: &Breakpoints, phi: &OuterSpec) -> Result<MilpModel> {
    let mut m = MilpModel::new("w-hull");
    let lv = add_lambda_block(&mut m, a, false)?;
    add_w_block(&mut m, phi, a, &lv)?;
    for i in 0..a.dim() {
        let row = a.row(i);
        let n = row.len() - 1;
        for j in 1..=n {
            let s = m.add_var(format!("s_{}_{j}", i + 1), VarKind::Continuous, row[0], row[n])?;
            let mut terms = vec![(s, 1.0)];
            terms.extend((0..=n).map(|p| (lv.lam[i][p], -row[p.min(j)])));
            m.add_row(format!("sdef_{}_{j}", i + 1), &terms, Sense::Eq, 0.0)?;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bit_code() {
        let g = gray_code(2);
        assert_eq!(g, vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 0]]);
    }

    #[test]
    fn two_segments() {
        // delta = 0 keeps the second interval
        assert_eq!(sos2_support(2, &[0]), vec![1, 2]);
        assert_eq!(sos2_support(2, &[1]), vec![0, 1]);
        let m = build_sos2_log(4).unwrap();
        assert_eq!(m.num_binaries(), 2);
    }

    #[test]
    fn bilinear_counts() {
        let a = Breakpoints::new(vec![vec![0.0, 3.0, 4.0]; 2]).unwrap();
        let phi = OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]);
        let m = build_log_formulation(&phi, &a, LogMode::Envelope(vec![Side::Over, Side::Under])).unwrap();
        assert_eq!(m.count_prefix("l_"), 6);
        assert_eq!(m.num_binaries(), 2);
        assert_eq!(m.constraints().iter().filter(|c| c.name.starts_with("env_")).count(), 12);
        let w = build_log_formulation(&phi, &a, LogMode::MultilinearW).unwrap();
        assert_eq!(w.count_prefix("w_"), 9);
    }
}
