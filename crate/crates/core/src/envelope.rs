//! Interpolated staircase cuts and envelopes of `phi(s_{1n}, ..., s_{dn})`
//! over the simplotope `Q`.
//!
//! Every cut is produced by one routine working on chains: coordinate `i`
//! is a chain of `m_i + 1` levels with indicator variables
//! `1 = y_{i0} >= y_{i1} >= ... >= y_{im_i} >= 0`, and a staircase through the
//! level grid interpolates a function `h` given on grid points. In `z`
//! coordinates of `Q` the chain is the breakpoint row itself; switched
//! coordinates read their chain backwards through `y'_{ik} = 1 - y_{i,m-k+1}`.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::expansion::{OuterSpec, Side};
use crate::grid::{enumerate_direction_vectors, enumeration_cap, DirectionVector, GridShape};
use crate::simplotope::{check_in_q, z_from_s_rows, Breakpoints, Table};

const MEMBER_TOL: f64 = 1e-9;

/// Variables a cut is written over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutSpace {
    /// `s_{ij}`; column 0 is folded into the constant.
    S,
    /// `z_{ij}`; column 0 is the constant 1 and carries no coefficient.
    Z,
    /// `lambda_{ij}`; column 0 carries no coefficient.
    Lambda,
}

/// `constant + sum_{ij} coeff_{ij} * var_{ij}`, an overestimator of `phi-bar`
/// for `Side::Over` and an underestimator for `Side::Under`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCut {
    pub constant: f64,
    pub coeff: Table,
    pub omega: DirectionVector,
    pub side: Side,
    pub space: CutSpace,
}

impl AffineCut {
    pub fn eval(&self, point: &Table) -> f64 {
        self.constant
            + self
                .coeff
                .iter()
                .zip(point)
                .map(|(c, p)| c.iter().zip(p).map(|(x, y)| x * y).sum::<f64>())
                .sum::<f64>()
    }

    /// Nonzero terms as `(i, j, coefficient)`.
    pub fn terms(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.coeff.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    out.push((i, j, c));
                }
            }
        }
        out
    }

    fn var_name(&self) -> &'static str {
        match self.space {
            CutSpace::S => "s",
            CutSpace::Z => "z",
            CutSpace::Lambda => "l",
        }
    }
}

impl fmt::Display for AffineCut {
    /// Renders `c*s_1_1 + ... + k` with 1-based coordinates.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j, c) in self.terms() {
            let name = format!("{}_{}_{}", self.var_name(), i + 1, j);
            if first {
                write!(f, "{c} {name}")?;
                first = false;
            } else if c < 0.0 {
                write!(f, " - {} {name}", -c)?;
            } else {
                write!(f, " + {c} {name}")?;
            }
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant < 0.0 {
            write!(f, " - {}", -self.constant)
        } else if self.constant > 0.0 {
            write!(f, " + {}", self.constant)
        } else {
            Ok(())
        }
    }
}

/// Interpolates `h` along the staircase `omega` on the chain grid with the
/// given lengths. Coordinates with `reversed[i]` are walked from their top
/// level down. Returns the constant and the coefficient table over `y`
/// (column 0 left at zero).
pub fn chain_cut(
    lengths: &[usize],
    reversed: &[bool],
    omega: &DirectionVector,
    mut h: impl FnMut(&[usize]) -> f64,
) -> (f64, Table) {
    let d = lengths.len();
    let level = |p: &[usize]| -> Vec<usize> {
        (0..d)
            .map(|i| if reversed[i] { lengths[i] - p[i] } else { p[i] })
            .collect()
    };
    let pts = omega.points();
    let mut coeff: Table = lengths.iter().map(|&m| vec![0.0; m + 1]).collect();
    let mut prev = h(&level(&pts[0]));
    let mut constant = prev;
    for (c, _, cur) in omega.steps() {
        let val = h(&level(cur));
        let diff = val - prev;
        prev = val;
        let k = cur[c];
        if reversed[c] {
            constant += diff;
            coeff[c][lengths[c] - k + 1] -= diff;
        } else {
            coeff[c][k] += diff;
        }
    }
    (constant, coeff)
}

/// Direction vector of the simplex of the chain triangulation containing `y`:
/// all chain entries sorted by decreasing value, ties by coordinate then level.
pub fn containing_staircase(shape: &GridShape, y: &Table, reversed: &[bool]) -> DirectionVector {
    let mut keys: Vec<(f64, usize, usize)> = Vec::with_capacity(shape.path_len());
    for (i, row) in y.iter().enumerate() {
        let m = row.len() - 1;
        for k in 1..=m {
            let v = if reversed[i] { 1.0 - row[m - k + 1] } else { row[k] };
            keys.push((v, i, k));
        }
    }
    keys.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    DirectionVector::new(shape, keys.into_iter().map(|k| k.1).collect())
        .expect("every chain entry appears once")
}

pub(crate) fn reversed_mask(d: usize, switch: &[usize]) -> Vec<bool> {
    let mut r = vec![false; d];
    for &i in switch {
        r[i] = true;
    }
    r
}

fn shape_of(a: &Table) -> GridShape {
    GridShape::ragged(a.iter().map(|r| r.len() - 1).collect()).expect("rows of length >= 2")
}

/// Staircase cut in `z` coordinates for breakpoint rows `a` (repeats allowed).
pub fn z_cut(phi: &OuterSpec, a: &Table, omega: &DirectionVector, switch: &[usize], side: Side) -> AffineCut {
    let lengths: Vec<usize> = a.iter().map(|r| r.len() - 1).collect();
    let reversed = reversed_mask(a.len(), switch);
    let mut point = vec![0.0; a.len()];
    let (constant, coeff) = chain_cut(&lengths, &reversed, omega, |p| {
        for (i, &j) in p.iter().enumerate() {
            point[i] = a[i][j];
        }
        phi.eval(&point)
    });
    AffineCut {
        constant,
        coeff,
        omega: omega.clone(),
        side,
        space: CutSpace::Z,
    }
}

/// Rewrites a `z`-space cut over `s` using `z_{ij} = (s_{ij} - s_{i,j-1}) / (a_{ij} - a_{i,j-1})`
/// and `s_{i0} = a_{i0}`.
pub fn z_cut_to_s(cut: &AffineCut, a: &Breakpoints) -> AffineCut {
    let mut coeff: Table = a.rows().iter().map(|r| vec![0.0; r.len()]).collect();
    let mut constant = cut.constant;
    for (i, row) in cut.coeff.iter().enumerate() {
        let ar = a.row(i);
        for j in 1..row.len() {
            let w = row[j] / (ar[j] - ar[j - 1]);
            coeff[i][j] += w;
            coeff[i][j - 1] -= w;
        }
        constant += coeff[i][0] * ar[0];
        coeff[i][0] = 0.0;
    }
    AffineCut {
        constant,
        coeff,
        omega: cut.omega.clone(),
        side: cut.side,
        space: CutSpace::S,
    }
}

/// Rewrites a `z`-space cut over `lambda` using `z_{ik} = sum_{j>=k} lambda_{ij}`.
pub fn z_cut_to_lambda(cut: &AffineCut) -> AffineCut {
    let coeff = cut
        .coeff
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .enumerate()
                .map(|(j, &c)| {
                    if j > 0 {
                        acc += c;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    AffineCut {
        constant: cut.constant,
        coeff,
        omega: cut.omega.clone(),
        side: cut.side,
        space: CutSpace::Lambda,
    }
}

pub(crate) fn premise(phi: &OuterSpec, dim: usize, side: Side) -> Result<Vec<usize>> {
    if phi.arity() != dim {
        return Err(Error::Dimension(format!(
            "outer function has arity {} but there are {dim} breakpoint rows",
            phi.arity()
        )));
    }
    let t = phi.switch_set(side).ok_or_else(|| {
        Error::Premise(format!(
            "outer function carries no supermodularity declaration for the {side} side"
        ))
    })?;
    if !phi.is_extendable() {
        return Err(Error::Premise(
            "envelope from staircase cuts needs a concave-extendable outer function".into(),
        ));
    }
    Ok(t.to_vec())
}

/// Interpolated cut `B-hat^omega(phi)(s; a)` for a supermodular `phi` (no switching).
pub fn interpolated_cut(phi: &OuterSpec, a: &Breakpoints, omega: &DirectionVector) -> Result<AffineCut> {
    check_grid(a, omega)?;
    Ok(z_cut_to_s(&z_cut(phi, a.rows(), omega, &[], Side::Over), a))
}

/// Staircase cut for `side`, switched on the set declared for that side.
pub fn staircase_cut(phi: &OuterSpec, a: &Breakpoints, omega: &DirectionVector, side: Side) -> Result<AffineCut> {
    let t = premise(phi, a.dim(), side)?;
    check_grid(a, omega)?;
    Ok(z_cut_to_s(&z_cut(phi, a.rows(), omega, &t, side), a))
}

fn check_grid(a: &Breakpoints, omega: &DirectionVector) -> Result<()> {
    let mut counts = vec![0usize; a.dim()];
    for &c in omega.omega() {
        if c >= counts.len() {
            return Err(Error::Dimension("direction vector exceeds dimension".into()));
        }
        counts[c] += 1;
    }
    if counts != a.shape().segments() {
        return Err(Error::Dimension(format!(
            "direction vector moves {counts:?} but the breakpoints have {:?} segments",
            a.shape().segments()
        )));
    }
    Ok(())
}

/// The interpolated cut written directly from its defining sum over `s`,
/// evaluated on switched data `(U(T)s, A(T)a)` and mapped back to `s`.
/// Kept separate from [`staircase_cut`] so the two can be compared.
pub fn interpolated_cut_direct(
    phi: &OuterSpec,
    a: &Breakpoints,
    omega: &DirectionVector,
    switch: &[usize],
    side: Side,
) -> AffineCut {
    let d = a.dim();
    let rev = reversed_mask(d, switch);
    let at: Table = (0..d)
        .map(|i| {
            let r = a.row(i);
            if rev[i] {
                r.iter().rev().cloned().collect()
            } else {
                r.to_vec()
            }
        })
        .collect();
    let pts = omega.points();
    let val = |p: &[usize]| -> f64 {
        let f: Vec<f64> = p.iter().enumerate().map(|(i, &j)| at[i][j]).collect();
        phi.eval(&f)
    };
    // coefficients over switched variables s~
    let mut ct: Table = at.iter().map(|r| vec![0.0; r.len()]).collect();
    let constant0 = val(&pts[0]);
    for (c, prev, cur) in omega.steps() {
        let slope = (val(cur) - val(prev)) / (at[c][cur[c]] - at[c][prev[c]]);
        ct[c][cur[c]] += slope;
        ct[c][prev[c]] -= slope;
    }
    // s~_{ij} = a_{i,n-j} - s_{i,n-j} + s_{in} on switched rows
    let mut constant = constant0;
    let mut coeff: Table = at.iter().map(|r| vec![0.0; r.len()]).collect();
    for i in 0..d {
        let n = at[i].len() - 1;
        for j in 0..=n {
            let c = ct[i][j];
            if rev[i] {
                constant += c * a.row(i)[n - j];
                coeff[i][n - j] -= c;
                coeff[i][n] += c;
            } else {
                coeff[i][j] += c;
            }
        }
        constant += coeff[i][0] * a.row(i)[0];
        coeff[i][0] = 0.0;
    }
    AffineCut {
        constant,
        coeff,
        omega: omega.clone(),
        side,
        space: CutSpace::S,
    }
}

/// All staircase cuts for `side`, in lexicographic order of `omega`.
pub fn all_cuts(phi: &OuterSpec, a: &Breakpoints, side: Side) -> Result<Vec<AffineCut>> {
    let t = premise(phi, a.dim(), side)?;
    Ok(enumerate_direction_vectors(&a.shape())?
        .iter()
        .map(|w| z_cut_to_s(&z_cut(phi, a.rows(), w, &t, side), a))
        .collect())
}

pub(crate) fn pick_best(side: Side, vals: impl Iterator<Item = f64>) -> f64 {
    match side {
        Side::Over => vals.fold(f64::INFINITY, f64::min),
        Side::Under => vals.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Concave (`Over`) or convex (`Under`) envelope of `phi-bar` over `Q` at `s`:
/// the best value over all staircase cuts. Falls back to separation when the
/// number of staircases exceeds the enumeration cap.
pub fn envelope_value(phi: &OuterSpec, a: &Breakpoints, s: &Table, side: Side) -> Result<f64> {
    let t = premise(phi, a.dim(), side)?;
    check_in_q(a, s, MEMBER_TOL)?;
    let z = z_from_s_rows(a.rows(), s);
    match enumerate_direction_vectors(&a.shape()) {
        Ok(all) => Ok(pick_best(
            side,
            all.iter().map(|w| z_cut(phi, a.rows(), w, &t, side).eval(&z)),
        )),
        Err(Error::CapExceeded { .. }) => Ok(separate(phi, a, s, side)?.eval(s)),
        Err(e) => Err(e),
    }
}

/// Cut of the staircase simplex containing `s`; attains the envelope value.
pub fn separate(phi: &OuterSpec, a: &Breakpoints, s: &Table, side: Side) -> Result<AffineCut> {
    let t = premise(phi, a.dim(), side)?;
    check_in_q(a, s, MEMBER_TOL)?;
    let z = z_from_s_rows(a.rows(), s);
    Ok(z_cut_to_s(&separate_z(phi, a.rows(), &z, &t, side), a))
}

/// Separation in `z` coordinates for arbitrary breakpoint rows.
pub fn separate_z(phi: &OuterSpec, a: &Table, z: &Table, switch: &[usize], side: Side) -> AffineCut {
    let shape = shape_of(a);
    let omega = containing_staircase(&shape, z, &reversed_mask(a.len(), switch));
    z_cut(phi, a, &omega, switch, side)
}

/// Envelope cuts of `s_{1n} s_{2n}` over `Q` from the closed-form sums.
#[derive(Clone, Debug)]
pub struct BilinearEnvelopes {
    /// Underestimators; their maximum is the convex envelope.
    pub convex: Vec<AffineCut>,
    /// Overestimators; their minimum is the concave envelope.
    pub concave: Vec<AffineCut>,
}

/// Closed-form bilinear envelope cuts over `Q` (`d = 2`), one pair per staircase.
pub fn bilinear_envelopes(a: &Breakpoints) -> Result<BilinearEnvelopes> {
    if a.dim() != 2 {
        return Err(Error::Dimension(format!("bilinear envelopes need d = 2, got {}", a.dim())));
    }
    let (a1, a2) = (a.row(0), a.row(1));
    let n2 = a2.len() - 1;
    let mut convex = Vec::new();
    let mut concave = Vec::new();
    for omega in enumerate_direction_vectors(&a.shape())? {
        let mut lo = vec![vec![0.0; a1.len()], vec![0.0; a2.len()]];
        let mut hi = lo.clone();
        let mut lo_c = a1[0] * a2[n2];
        let hi_c = a1[0] * a2[0];
        for (c, prev, cur) in omega.steps() {
            if c == 0 {
                let (j, jp) = (cur[0], prev[0]);
                let w = a2[n2 - cur[1]];
                lo[0][j] += w;
                lo[0][jp] -= w;
                hi[0][j] += a2[cur[1]];
                hi[0][jp] -= a2[cur[1]];
            } else {
                let (q, qp) = (n2 - cur[1], n2 - prev[1]);
                let w = a1[cur[0]];
                lo_c += w * (a2[q] - a2[qp]);
                lo[1][q] -= w;
                lo[1][qp] += w;
                hi[1][cur[1]] += w;
                hi[1][prev[1]] -= w;
            }
        }
        let mut hi_c = hi_c;
        for i in 0..2 {
            lo_c += lo[i][0] * a.row(i)[0];
            lo[i][0] = 0.0;
            hi_c += hi[i][0] * a.row(i)[0];
            hi[i][0] = 0.0;
        }
        convex.push(AffineCut {
            constant: lo_c,
            coeff: lo,
            omega: omega.clone(),
            side: Side::Under,
            space: CutSpace::S,
        });
        concave.push(AffineCut {
            constant: hi_c,
            coeff: hi,
            omega,
            side: Side::Over,
            space: CutSpace::S,
        });
    }
    Ok(BilinearEnvelopes { convex, concave })
}

/// Lovasz extension of a set function given on `{0,1}^d`: the minimum over
/// permutations of the chain interpolation. `phi` receives 0/1 vectors.
pub fn lovasz_extension(phi: &OuterSpec, f: &[f64]) -> f64 {
    let d = f.len();
    let shape = GridShape::uniform(d, 1).expect("d >= 1");
    let y: Table = f.iter().map(|&v| vec![1.0, v]).collect();
    let omega = containing_staircase(&shape, &y, &vec![false; d]);
    let mut point = vec![0.0; d];
    let (c, coeff) = chain_cut(&vec![1; d], &vec![false; d], &omega, |p| {
        for (i, &j) in p.iter().enumerate() {
            point[i] = j as f64;
        }
        phi.eval(&point)
    });
    c + coeff.iter().zip(f).map(|(r, v)| r[1] * v).sum::<f64>()
}

/// Lovasz extension as the explicit minimum over all `d!` permutations.
pub fn lovasz_extension_enumerated(phi: &OuterSpec, f: &[f64]) -> Result<f64> {
    let d = f.len();
    let shape = GridShape::uniform(d, 1)?;
    let mut best = f64::INFINITY;
    let mut point = vec![0.0; d];
    for omega in enumerate_direction_vectors(&shape)? {
        let (c, coeff) = chain_cut(&vec![1; d], &vec![false; d], &omega, |p| {
            for (i, &j) in p.iter().enumerate() {
                point[i] = j as f64;
            }
            phi.eval(&point)
        });
        best = best.min(c + coeff.iter().zip(f).map(|(r, v)| r[1] * v).sum::<f64>());
    }
    Ok(best)
}

/// Staircase cut over `lambda` (`s = V(lambda)`).
pub fn lambda_envelope_cut(phi: &OuterSpec, a: &Breakpoints, omega: &DirectionVector, side: Side) -> Result<AffineCut> {
    let t = premise(phi, a.dim(), side)?;
    check_grid(a, omega)?;
    Ok(z_cut_to_lambda(&z_cut(phi, a.rows(), omega, &t, side)))
}

/// Number of staircases for the breakpoint grid, if it fits the cap.
pub fn cut_count(a: &Breakpoints) -> Option<u128> {
    a.shape().staircase_count().filter(|&c| c <= enumeration_cap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplotope::s_from_lambda;

    fn bilinear() -> OuterSpec {
        OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1])
    }

    fn mip_ex_1() -> Breakpoints {
        Breakpoints::new(vec![vec![0.0, 5.0, 8.0, 9.0], vec![0.0, 4.0]]).unwrap()
    }

    fn render(c: &AffineCut) -> String {
        c.to_string()
    }

    #[test]
    fn mip_ex_1_convex_cuts() {
        let a = mip_ex_1();
        let cuts = all_cuts(&bilinear(), &a, Side::Under).unwrap();
        let mut got: Vec<String> = cuts.iter().map(render).collect();
        got.sort();
        got.dedup();
        assert!(got.contains(&"4 s_1_1 + 5 s_2_1 - 20".to_string()), "{got:?}");
        assert!(got.contains(&"4 s_1_2 + 8 s_2_1 - 32".to_string()), "{got:?}");
        assert!(got.contains(&"4 s_1_3 + 9 s_2_1 - 36".to_string()), "{got:?}");
        assert!(got.contains(&"0".to_string()), "{got:?}");
    }

    #[test]
    fn mip_ex_1_values() {
        let a = mip_ex_1();
        let s = vec![vec![0.0, 4.0, 6.0, 6.25], vec![0.0, 2.25]];
        assert_eq!(envelope_value(&bilinear(), &a, &s, Side::Under).unwrap(), 10.0);
        let s = vec![vec![0.0, 5.0, 6.0, 6.25], vec![0.0, 2.25]];
        assert_eq!(envelope_value(&bilinear(), &a, &s, Side::Under).unwrap(), 11.25);
        assert_eq!(separate(&bilinear(), &a, &s, Side::Under).unwrap().eval(&s), 11.25);
    }

    #[test]
    fn single_coordinate_is_chord() {
        let phi = OuterSpec::new(1, |f| f[0] * f[0]).with_over_switch(vec![]).with_extendable(true);
        let a = Breakpoints::new(vec![vec![0.0, 1.0, 3.0]]).unwrap();
        let cuts = all_cuts(&phi, &a, Side::Over).unwrap();
        assert_eq!(cuts.len(), 1);
        // z-interpolation: 1*(s1 - 0)/1 + (9-1)/2*(s2 - s1)
        assert_eq!(cuts[0].coeff[0], vec![0.0, -3.0, 4.0]);
    }

    #[test]
    fn benson_inequality_n1() {
        let phi = OuterSpec::product(3).with_over_switch(vec![]);
        let lo = [1.0, 2.0, 0.5];
        let hi = [3.0, 5.0, 2.0];
        let a = Breakpoints::new((0..3).map(|i| vec![lo[i], hi[i]]).collect()).unwrap();
        for omega in enumerate_direction_vectors(&a.shape()).unwrap() {
            let cut = interpolated_cut(&phi, &a, &omega).unwrap();
            let w = omega.omega();
            let f = [2.0, 3.0, 1.0];
            let s: Table = (0..3).map(|i| vec![lo[i], f[i]]).collect();
            let mut want = lo.iter().product::<f64>();
            for k in 0..3 {
                let mut term = f[w[k]] - lo[w[k]];
                for (m, &i) in w.iter().enumerate() {
                    if m < k {
                        term *= hi[i];
                    } else if m > k {
                        term *= lo[i];
                    }
                }
                want += term;
            }
            assert!((cut.eval(&s) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lovasz_of_product() {
        let phi = OuterSpec::product(2);
        for &(x, y) in &[(0.2, 0.7), (0.9, 0.1), (0.5, 0.5), (1.0, 0.0)] {
            assert_eq!(lovasz_extension(&phi, &[x, y]), f64::min(x, y));
        }
    }

    #[test]
    fn bilinear_lambda_rows() {
        let a = Breakpoints::new(vec![vec![0.0, 3.0, 4.0], vec![0.0, 3.0, 4.0]]).unwrap();
        let phi = bilinear();
        let mut lower: Vec<String> = enumerate_direction_vectors(&a.shape())
            .unwrap()
            .iter()
            .map(|w| lambda_envelope_cut(&phi, &a, w, Side::Under).unwrap().to_string())
            .collect();
        lower.sort();
        assert!(lower.contains(&"12 l_1_1 + 15 l_1_2 + 12 l_2_1 + 15 l_2_2 - 15".to_string()), "{lower:?}");
        let l = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]];
        let s = s_from_lambda(&a, &l).unwrap();
        for w in enumerate_direction_vectors(&a.shape()).unwrap() {
            let lc = lambda_envelope_cut(&phi, &a, &w, Side::Over).unwrap();
            let sc = staircase_cut(&phi, &a, &w, Side::Over).unwrap();
            assert!((lc.eval(&l) - sc.eval(&s)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_generic() {
        let a = Breakpoints::new(vec![vec![0.0, 3.0, 4.0], vec![1.0, 2.0, 6.0]]).unwrap();
        let env = bilinear_envelopes(&a).unwrap();
        let phi = bilinear();
        for (k, w) in enumerate_direction_vectors(&a.shape()).unwrap().iter().enumerate() {
            let hi = staircase_cut(&phi, &a, w, Side::Over).unwrap();
            assert_eq!(hi.coeff, env.concave[k].coeff);
            assert_eq!(hi.constant, env.concave[k].constant);
        }
        let mut lo_generic: Vec<String> = all_cuts(&phi, &a, Side::Under).unwrap().iter().map(render).collect();
        let mut lo_closed: Vec<String> = env.convex.iter().map(render).collect();
        lo_generic.sort();
        lo_closed.sort();
        assert_eq!(lo_generic, lo_closed);
    }

    #[test]
    fn direct_formula_agrees() {
        let a = Breakpoints::new(vec![vec![0.0, 5.0, 8.0, 9.0], vec![0.0, 4.0]]).unwrap();
        let phi = bilinear();
        for w in enumerate_direction_vectors(&a.shape()).unwrap() {
            for (side, t) in [(Side::Over, vec![]), (Side::Under, vec![1])] {
                let c1 = staircase_cut(&phi, &a, &w, side).unwrap();
                let c2 = interpolated_cut_direct(&phi, &a, &w, &t, side);
                assert!((c1.constant - c2.constant).abs() < 1e-9);
                for (r1, r2) in c1.coeff.iter().zip(&c2.coeff) {
                    for (x, y) in r1.iter().zip(r2) {
                        assert!((x - y).abs() < 1e-9, "{c1} vs {c2}");
                    }
                }
            }
        }
    }
}
