use composite_relax::cli::expr::Expr;
use composite_relax::envelope::{envelope_value, lovasz_extension, lovasz_extension_enumerated, separate};
use composite_relax::expansion::{telescoping_expansion, termwise_overestimator, OuterSpec, Side, UnderestimatorTable};
use composite_relax::grid::{enumerate_direction_vectors, GridShape};
use composite_relax::milp::log::sos2_support;
use composite_relax::milp::{build_incremental, build_mip_z, g_map, gray_code, parse_lp, write_lp, LocalBoundTable};
use composite_relax::oracle::envelope_oracle;
use composite_relax::simplotope::{lambda_from_z, s_from_z_rows, z_from_lambda, z_from_s_rows, Breakpoints, Table};
use proptest::prelude::*;

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

fn rows(d: std::ops::RangeInclusive<usize>, lo: f64) -> impl Strategy<Value = Table> {
    prop::collection::vec(
        (lo..lo + 2.0, prop::collection::vec(0.1f64..2.0, 1..=3)).prop_map(|(a0, inc)| {
            let mut r = vec![a0];
            for v in inc {
                let last = *r.last().unwrap();
                r.push(last + v);
            }
            r
        }),
        d,
    )
}

/// Rows plus one draw in `[0, 1]` per breakpoint, for points and tables.
fn rows_with_draws(d: std::ops::RangeInclusive<usize>, lo: f64) -> impl Strategy<Value = (Table, Table)> {
    rows(d, lo).prop_flat_map(|a| {
        let draws: Vec<_> = a.iter().map(|r| prop::collection::vec(0.0f64..=1.0, r.len())).collect();
        (Just(a), draws)
    })
}

/// A point of `Delta` from raw draws: `z_0 = 1`, the rest sorted downwards.
fn delta_point(draws: &Table) -> Table {
    draws
        .iter()
        .map(|r| {
            let mut z: Vec<f64> = r[1..].to_vec();
            z.sort_by(|p, q| q.total_cmp(p));
            let mut out = vec![1.0];
            out.extend(z);
            out
        })
        .collect()
}

/// A feasible underestimator table: `f` inside the range, `u_j` below `min(f, a_j)`.
fn table_from(a: &Table, draws: &Table) -> (Table, Vec<f64>) {
    let mut f = Vec::new();
    let u = a
        .iter()
        .zip(draws)
        .map(|(ar, dr)| {
            let n = ar.len() - 1;
            let fi = ar[0] + dr[0] * (ar[n] - ar[0]);
            f.push(fi);
            (0..=n)
                .map(|j| {
                    if j == 0 {
                        ar[0]
                    } else if j == n {
                        fi
                    } else {
                        ar[0] + dr[j] * (fi.min(ar[j]) - ar[0])
                    }
                })
                .collect()
        })
        .collect();
    (u, f)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn staircase_count_is_multinomial(segs in prop::collection::vec(1usize..=3, 1..=3)) {
        let shape = GridShape::ragged(segs.clone()).unwrap();
        let all = enumerate_direction_vectors(&shape).unwrap();
        let total: usize = segs.iter().sum();
        let want = segs.iter().fold(factorial(total), |acc, &n| acc / factorial(n));
        prop_assert_eq!(all.len() as u128, want);
        for w in &all {
            let pts = w.points();
            prop_assert_eq!(pts.len(), total + 1);
            prop_assert!(pts[0].iter().all(|&p| p == 0));
            prop_assert_eq!(pts.last().unwrap(), &segs);
            for t in 1..pts.len() {
                let moved: usize = pts[t].iter().zip(&pts[t - 1]).map(|(x, y)| x - y).sum();
                prop_assert_eq!(moved, 1);
            }
        }
    }

    #[test]
    fn telescoping_collapses((a, draws) in rows_with_draws(1..=3, -1.0), c in -1.0f64..1.0) {
        let (u, f) = table_from(&a, &draws);
        let d = a.len();
        let phi = OuterSpec::new(d, move |v: &[f64]| v.iter().product::<f64>() + c * v.iter().map(|x| x * x).sum::<f64>());
        let table = UnderestimatorTable::new(u, a.clone()).unwrap();
        let shape = GridShape::ragged(a.iter().map(|r| r.len() - 1).collect()).unwrap();
        let want = phi.eval(&f);
        for w in enumerate_direction_vectors(&shape).unwrap() {
            let v = telescoping_expansion(&phi, &table, &w).unwrap();
            prop_assert!((v - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn product_overestimator_is_valid((a, draws) in rows_with_draws(1..=3, 0.0)) {
        let (u, f) = table_from(&a, &draws);
        let d = a.len();
        let phi = OuterSpec::product(d).with_over_switch(vec![]);
        let table = UnderestimatorTable::new(u, a.clone()).unwrap();
        let shape = GridShape::ragged(a.iter().map(|r| r.len() - 1).collect()).unwrap();
        let truth = phi.eval(&f);
        for w in enumerate_direction_vectors(&shape).unwrap() {
            let v = termwise_overestimator(&phi, &table, &w).unwrap();
            prop_assert!(v >= truth - 1e-9 * (1.0 + truth.abs()), "{} < {}", v, truth);
        }
    }

    #[test]
    fn coordinate_maps_round_trip((a, draws) in rows_with_draws(1..=3, -1.0)) {
        let z = delta_point(&draws);
        let s = s_from_z_rows(&a, &z);
        let back = z_from_s_rows(&a, &s);
        let lam = lambda_from_z(&z).unwrap();
        let z2 = z_from_lambda(&lam).unwrap();
        for i in 0..a.len() {
            prop_assert!((lam[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..a[i].len() {
                prop_assert!((back[i][j] - z[i][j]).abs() < 1e-9);
                prop_assert!((z2[i][j] - z[i][j]).abs() < 1e-12);
                prop_assert!(lam[i][j] >= -1e-15);
            }
        }
    }

    #[test]
    fn envelope_matches_vertex_lp((a, draws) in rows_with_draws(1..=3, 0.0)) {
        let d = a.len();
        let bp = Breakpoints::new(a.clone()).unwrap();
        let s = s_from_z_rows(&a, &delta_point(&draws));
        let mut cases = vec![(OuterSpec::product(d).with_over_switch(vec![]), Side::Over)];
        if d == 2 {
            cases.push((OuterSpec::product(2).with_under_switch(vec![1]), Side::Under));
        }
        for (phi, side) in cases {
            let v = envelope_value(&phi, &bp, &s, side).unwrap();
            let o = envelope_oracle(&phi, &bp, &s, side).unwrap();
            prop_assert!((v - o).abs() <= 1e-6 * (1.0 + o.abs()), "{} vs {}", v, o);
            let cut = separate(&phi, &bp, &s, side).unwrap().eval(&s);
            prop_assert!((cut - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn lovasz_is_the_permutation_minimum(f in prop::collection::vec(0.0f64..=1.0, 1..=4)) {
        let phi = OuterSpec::product(f.len());
        let fast = lovasz_extension(&phi, &f);
        let slow = lovasz_extension_enumerated(&phi, &f).unwrap();
        prop_assert!((fast - slow).abs() < 1e-12);
        let m = f.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((fast - m).abs() < 1e-12);
    }

    #[test]
    fn lp_text_round_trips(a in rows(1..=3, -1.0)) {
        let bp = Breakpoints::new(a.clone()).unwrap();
        let d = a.len();
        for m in [
            build_incremental(&bp).unwrap(),
            build_mip_z(&OuterSpec::product(d).with_over_switch(vec![]), &bp, &[Side::Over]).unwrap(),
        ] {
            let text = write_lp(&m);
            let back = parse_lp(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(write_lp(&back), text);
        }
    }

    #[test]
    fn degenerate_bounds_never_move((a, draws) in rows_with_draws(1..=2, -1.0), sel in prop::collection::vec(any::<bool>(), 4)) {
        let tau: Vec<Vec<usize>> = a
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let n = r.len() - 1;
                let mut t = vec![0];
                t.extend((1..n).filter(|&j| sel[(i + j) % sel.len()]));
                t.push(n);
                t
            })
            .collect();
        let bp = Breakpoints::with_selector(a.clone(), tau).unwrap();
        let table = LocalBoundTable::degenerate(&bp);
        let z = delta_point(&draws);
        // any monotone delta consistent or not: the map ignores it
        let delta: Vec<Vec<f64>> = (0..a.len()).map(|i| vec![0.5; bp.pieces(i) - 1]).collect();
        let s = g_map(&z, &delta, &table).unwrap();
        let want = s_from_z_rows(&a, &z);
        for i in 0..a.len() {
            for j in 0..a[i].len() {
                prop_assert!((s[i][j] - want[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn expressions_match_direct_evaluation(c in prop::collection::vec(-3.0f64..3.0, 4), x in prop::collection::vec(-2.0f64..2.0, 2)) {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let src = format!("{} + {} * x1 - ({}) * x1^2 * x2 + {} * (x1 + x2)^3", c[0], c[1], c[2], c[3]);
        let e = Expr::parse(&src, &vars).unwrap();
        let want = c[0] + c[1] * x[0] - c[2] * x[0] * x[0] * x[1] + c[3] * (x[0] + x[1]).powi(3);
        prop_assert!((e.eval(&x) - want).abs() < 1e-9 * (1.0 + want.abs()));
    }
}

#[test]
fn gray_code_steps_one_bit() {
    for m in 0..=6 {
        let codes = gray_code(m);
        assert_eq!(codes.len(), 1 << m);
        for t in 1..codes.len() {
            let diff = codes[t].iter().zip(&codes[t - 1]).filter(|(x, y)| x != y).count();
            assert_eq!(diff, 1);
        }
        let mut sorted = codes.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
    }
}

#[test]
fn every_code_allows_one_segment() {
    for n in 1..=9usize {
        let m = (0..).find(|&m| (1usize << m) >= n).unwrap();
        let mut seen = Vec::new();
        for code in gray_code(m) {
            let sup = sos2_support(n, &code);
            // codes past the last segment may admit nothing
            assert!(sup.len() <= 2, "n = {n} code {code:?} support {sup:?}");
            if sup.len() == 2 {
                assert_eq!(sup[1], sup[0] + 1);
                seen.push(sup[0]);
            }
        }
        seen.sort();
        seen.dedup();
        assert_eq!(seen, (0..n).collect::<Vec<_>>(), "n = {n}");
    }
}
