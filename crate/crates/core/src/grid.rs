//! Staircases on the grid `{0..n_1} x ... x {0..n_d}`.
//!
//! A direction vector lists, move by move, which coordinate advances. Every
//! other module walks these paths, so the ordering here is fixed
//! (lexicographic on the 0-based coordinate sequence).

use crate::error::{Error, Result};

/// Default bound on the number of staircases materialized at once.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// Environment variable overriding [`DEFAULT_CAP`].
pub const CAP_ENV: &str = "COMPOSITE_RELAX_CAP";

/// Current enumeration cap, honouring `COMPOSITE_RELAX_CAP`.
pub fn enumeration_cap() -> u128 {
    std::env::var(CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u128>().ok())
        .unwrap_or(DEFAULT_CAP)
}

/// Number of segments along each coordinate.
///
/// The uniform case `n_i = n` is the usual one; ragged shapes show up when
/// inner functions carry different numbers of underestimators.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridShape {
    segments: Vec<usize>,
}

impl GridShape {
    pub fn uniform(d: usize, n: usize) -> Result<Self> {
        Self::ragged(vec![n; d])
    }

    pub fn ragged(segments: Vec<usize>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Invalid("grid needs at least one coordinate".into()));
        }
        if let Some(i) = segments.iter().position(|&n| n == 0) {
            return Err(Error::Invalid(format!(
                "coordinate {} has no segments",
                i + 1
            )));
        }
        Ok(Self { segments })
    }

    pub fn dim(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    /// Length of every staircase, `sum n_i`.
    pub fn path_len(&self) -> usize {
        self.segments.iter().sum()
    }

    /// `(sum n_i)! / prod n_i!`, or `None` on `u128` overflow.
    pub fn staircase_count(&self) -> Option<u128> {
        let mut total: u128 = 1;
        let mut placed: u128 = 0;
        for &n in &self.segments {
            for k in 1..=n as u128 {
                placed += 1;
                // C(placed, k) built incrementally stays integral
                total = total.checked_mul(placed)? / k;
            }
        }
        Some(total)
    }

    /// Number of grid points, `prod (n_i + 1)`.
    pub fn point_count(&self) -> Option<usize> {
        self.segments
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n + 1))
    }

    /// All grid points in lexicographic order.
    pub fn points(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut p = vec![0usize; self.dim()];
        loop {
            out.push(p.clone());
            let mut i = self.dim();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if p[i] < self.segments[i] {
                    p[i] += 1;
                    break;
                }
                p[i] = 0;
            }
        }
    }
}

/// A lattice path from the origin to `(n_1, ..., n_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DirectionVector {
    omega: Vec<usize>,
    points: Vec<Vec<usize>>,
}

impl DirectionVector {
    /// Build from 0-based coordinate indices.
    pub fn new(shape: &GridShape, omega: Vec<usize>) -> Result<Self> {
        let d = shape.dim();
        let mut counts = vec![0usize; d];
        for &c in &omega {
            if c >= d {
                return Err(Error::Invalid(format!(
                    "direction vector names coordinate {} but d = {d}",
                    c + 1
                )));
            }
            counts[c] += 1;
        }
        if counts != shape.segments() {
            return Err(Error::Invalid(format!(
                "direction vector move counts {counts:?} do not match grid {:?}",
                shape.segments()
            )));
        }
        let points = trace(d, &omega);
        Ok(Self { omega, points })
    }

    /// Build from 1-based coordinate indices, as written in the literature.
    pub fn from_one_based(shape: &GridShape, omega: &[usize]) -> Result<Self> {
        if omega.contains(&0) {
            return Err(Error::Invalid("1-based direction vector contains 0".into()));
        }
        Self::new(shape, omega.iter().map(|&c| c - 1).collect())
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.omega.iter().map(|&c| c + 1).collect()
    }

    /// Staircase points `p^0, ..., p^T`.
    pub fn points(&self) -> &[Vec<usize>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Moves as `(coordinate, p^{t-1}, p^t)` for `t = 1..T`.
    pub fn steps(&self) -> impl Iterator<Item = (usize, &[usize], &[usize])> + '_ {
        self.omega
            .iter()
            .enumerate()
            .map(move |(t, &c)| (c, self.points[t].as_slice(), self.points[t + 1].as_slice()))
    }
}

impl std::fmt::Display for DirectionVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn trace(d: usize, omega: &[usize]) -> Vec<Vec<usize>> {
    let mut p = vec![0usize; d];
    let mut points = Vec::with_capacity(omega.len() + 1);
    points.push(p.clone());
    for &c in omega {
        p[c] += 1;
        points.push(p.clone());
    }
    points
}

/// Staircase points of a direction vector.
pub fn staircase_points(omega: &DirectionVector) -> &[Vec<usize>] {
    omega.points()
}

/// All direction vectors of `shape` in lexicographic order, bounded by
/// [`enumeration_cap`].
pub fn enumerate_direction_vectors(shape: &GridShape) -> Result<Vec<DirectionVector>> {
    enumerate_with_cap(shape, enumeration_cap())
}

/// As [`enumerate_direction_vectors`] with an explicit cap.
pub fn enumerate_with_cap(shape: &GridShape, cap: u128) -> Result<Vec<DirectionVector>> {
    match shape.staircase_count() {
        Some(c) if c <= cap => {}
        Some(c) => {
            return Err(Error::CapExceeded {
                count: c.to_string(),
                cap,
            })
        }
        None => {
            return Err(Error::CapExceeded {
                count: "more than 2^128".into(),
                cap,
            })
        }
    }
    let mut seq: Vec<usize> = shape
        .segments()
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i).take(n))
        .collect();
    let d = shape.dim();
    let mut out = Vec::new();
    loop {
        out.push(DirectionVector {
            points: trace(d, &seq),
            omega: seq.clone(),
        });
        if !next_permutation(&mut seq) {
            break;
        }
    }
    Ok(out)
}

/// Rearranges into the next lexicographic permutation; false once the
/// sequence is non-increasing.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_grid_has_six_paths() {
        let shape = GridShape::uniform(2, 2).unwrap();
        let all = enumerate_direction_vectors(&shape).unwrap();
        assert_eq!(all.len(), 6);
        let listed: Vec<Vec<usize>> = all.iter().map(|w| w.one_based()).collect();
        for want in [[2, 2, 1, 1], [2, 1, 2, 1], [1, 2, 1, 2]] {
            assert!(listed.contains(&want.to_vec()));
        }
        assert_eq!(listed[0], vec![1, 1, 2, 2]);
    }

    #[test]
    fn single_coordinate_and_permutations() {
        let one = enumerate_direction_vectors(&GridShape::uniform(1, 3).unwrap()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].one_based(), vec![1, 1, 1]);
        let perms = enumerate_direction_vectors(&GridShape::uniform(3, 1).unwrap()).unwrap();
        assert_eq!(perms.len(), 6);
    }

    #[test]
    fn points_follow_moves() {
        let shape = GridShape::uniform(2, 2).unwrap();
        let w = DirectionVector::from_one_based(&shape, &[2, 2, 1, 1]).unwrap();
        let pts: Vec<Vec<usize>> = w.points().to_vec();
        assert_eq!(
            pts,
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 2], vec![2, 2]]
        );
        let w = DirectionVector::from_one_based(&GridShape::uniform(2, 1).unwrap(), &[1, 2]).unwrap();
        assert_eq!(w.points().to_vec(), vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn cap_is_enforced() {
        let shape = GridShape::uniform(4, 3).unwrap();
        let err = enumerate_with_cap(&shape, 10).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
        assert!(err.to_string().contains("369600"));
    }

    #[test]
    fn ragged_shape() {
        let shape = GridShape::ragged(vec![3, 1]).unwrap();
        let all = enumerate_direction_vectors(&shape).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(shape.staircase_count(), Some(4));
    }

    #[test]
    fn bad_direction_vector() {
        let shape = GridShape::uniform(2, 2).unwrap();
        assert!(DirectionVector::from_one_based(&shape, &[1, 1, 1, 2]).is_err());
        assert!(DirectionVector::from_one_based(&shape, &[1, 3, 2, 2]).is_err());
    }
}
