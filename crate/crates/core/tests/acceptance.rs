//! Acceptance checks. Prints one PASS/FAIL line per criterion with its
//! runtime and exits nonzero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use composite_relax::cli::run;
use composite_relax::envelope::{all_cuts, bilinear_envelopes, envelope_value, lovasz_extension, separate};
use composite_relax::expansion::{
    kronecker_overestimator, min_eigenvalue, random_kronecker_chains, telescoping_expansion, termwise_overestimator,
    MultilinearTerm, OuterSpec, Side, UnderestimatorTable,
};
use composite_relax::grid::{enumerate_direction_vectors, enumerate_with_cap, GridShape};
use composite_relax::milp::{
    build_log_formulation, build_mip_z, build_w_hull, check_zdelta_counterexample, AffineFn, DcrSpec, Evaluator,
    LocalBoundTable, LogMode, Relaxation,
};
use composite_relax::oracle::{
    box_samples, compare_relaxations, envelope_oracle, ideality_check, mccormick_baseline, random_instance,
    squares_cut, w_vertex_check, RandomKind,
};
use composite_relax::simplotope::{s_from_z_rows, Breakpoints, Table};

type Outcome = Result<(bool, String), String>;

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

/// Number of monotone lattice paths from `0` to `(n, ..., n)` by dynamic
/// programming over the grid points.
fn lattice_paths(d: usize, n: usize) -> u128 {
    let side = n + 1;
    let total = side.pow(d as u32);
    let mut count = vec![0u128; total];
    count[0] = 1;
    for idx in 1..total {
        let mut rest = idx;
        let mut stride = 1;
        let mut acc = 0u128;
        for _ in 0..d {
            if rest % side > 0 {
                acc += count[idx - stride];
            }
            rest /= side;
            stride *= side;
        }
        count[idx] = acc;
    }
    count[total - 1]
}

fn c1_direction_vectors() -> Outcome {
    let six = enumerate_direction_vectors(&GridShape::uniform(2, 2).map_err(e2s)?).map_err(e2s)?.len();
    let mut ok = six == 6;
    let mut enumerated = 0;
    let mut checked = 0;
    for d in 1..=12usize {
        for n in 1..=12 / d {
            let shape = GridShape::uniform(d, n).map_err(e2s)?;
            let formula = factorial(d * n) / factorial(n).pow(d as u32);
            let dp = lattice_paths(d, n);
            ok &= shape.staircase_count() == Some(formula) && dp == formula;
            // list the paths whenever that is cheap
            if formula <= 50_000 {
                let all = enumerate_with_cap(&shape, formula).map_err(e2s)?;
                ok &= all.len() as u128 == formula;
                enumerated += 1;
            }
            checked += 1;
        }
    }
    Ok((ok, format!("d=2,n=2 gives {six}; {checked} shapes with d*n <= 12 match, {enumerated} enumerated")))
}

fn random_table(rng: &mut ChaCha8Rng, d: usize, max_n: usize, nonneg: bool) -> (Table, Table, Vec<f64>) {
    let mut a = Vec::with_capacity(d);
    let mut u = Vec::with_capacity(d);
    let mut f = Vec::with_capacity(d);
    for _ in 0..d {
        let n = rng.gen_range(1..=max_n);
        let mut row: Vec<f64> = vec![if nonneg { rng.gen_range(0.0..1.0) } else { rng.gen_range(-2.0..2.0) }];
        for _ in 0..n {
            let last = *row.last().unwrap();
            row.push(last + rng.gen_range(0.1..2.0));
        }
        let fi: f64 = rng.gen_range(row[0]..=row[n]);
        let ui: Vec<f64> = (0..=n)
            .map(|j| {
                if j == 0 {
                    row[0]
                } else if j == n {
                    fi
                } else {
                    rng.gen_range(row[0]..=fi.min(row[j]))
                }
            })
            .collect();
        a.push(row);
        u.push(ui);
        f.push(fi);
    }
    (a, u, f)
}

fn c2_telescoping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut evals = 0usize;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=3);
        let (a, u, f) = random_table(&mut rng, d, 3, false);
        let c: f64 = rng.gen_range(-1.0..1.0);
        let phi = OuterSpec::new(d, move |v: &[f64]| {
            v.iter().product::<f64>() + c * v.iter().map(|x| x.powi(3)).sum::<f64>()
        });
        let table = UnderestimatorTable::new(u, a).map_err(e2s)?;
        let want = phi.eval(&f);
        for w in enumerate_direction_vectors(&table.shape()).map_err(e2s)? {
            let v = telescoping_expansion(&phi, &table, &w).map_err(e2s)?;
            worst = worst.max((v - want).abs());
            evals += 1;
        }
    }
    Ok((worst <= 1e-9, format!("{evals} (table, omega) pairs, max |D - phi| = {worst:.3e}")))
}

fn c3_theorem_validity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0usize;
    for k in 0..20u64 {
        let inst = random_instance(RandomKind::Product, 300 + k).map_err(e2s)?;
        let shape = inst.a.shape();
        let omegas = enumerate_direction_vectors(&shape).map_err(e2s)?;
        let a0 = inst.a.lower();
        for x in box_samples(&inst.x_lower, &inst.x_upper, 1000, 3 + k) {
            let f = inst.f(&x);
            // absent or negative underestimators replaced by a_{i0}, which is valid
            let u: Table = inst
                .u(&x, &f)
                .into_iter()
                .enumerate()
                .map(|(i, r)| r.into_iter().map(|v| v.max(a0[i])).collect())
                .collect();
            let table = UnderestimatorTable::new(u, inst.a.rows().clone()).map_err(e2s)?;
            let truth = inst.phi.eval(&f);
            for w in &omegas {
                let b = termwise_overestimator(&inst.phi, &table, w).map_err(e2s)?;
                worst = worst.max(truth - b);
                pairs += 1;
            }
        }
    }
    Ok((worst <= 1e-7, format!("20 instances, {pairs} (sample, omega) pairs, max violation {worst:.3e}")))
}

fn c4_squares_cut() -> Outcome {
    let cut = squares_cut().map_err(e2s)?;
    let coeff_ok = cut.coeff.iter().all(|&c| (c - 7.0).abs() < 1e-9) && (cut.constant + 47.0).abs() < 1e-9;
    let base = mccormick_baseline(&[1.0; 3], &[4.0; 3]).map_err(e2s)?;
    let mut worst = f64::NEG_INFINITY;
    let mut best_gain = f64::NEG_INFINITY;
    for x in box_samples(&[1.0; 3], &[2.0; 3], 10_000, 4) {
        let truth: f64 = x.iter().map(|v| v * v).product();
        let c = cut.eval(&x);
        worst = worst.max(c - truth);
        let g: Vec<f64> = x.iter().map(|v| v * v).collect();
        best_gain = best_gain.max(c - base.under(&g));
    }
    Ok((
        coeff_ok && worst <= 1e-9 && best_gain > 1e-3,
        format!(
            "cut {}*(x1^2+x2^2+x3^2) {}; max violation {worst:.3e}; best gain over McCormick {best_gain:.4}",
            cut.coeff[0], cut.constant
        ),
    ))
}

fn random_delta_point(rng: &mut ChaCha8Rng, a: &Table) -> Table {
    let z: Table = a
        .iter()
        .map(|row| {
            let mut z: Vec<f64> = (1..row.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            z.sort_by(|p, q| q.total_cmp(p));
            let mut out = vec![1.0];
            out.extend(z);
            out
        })
        .collect();
    s_from_z_rows(a, &z)
}

fn c5_envelope() -> Outcome {
    let kinds = [RandomKind::Product, RandomKind::Bilinear, RandomKind::Path];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gap: f64 = 0.0;
    let mut sep: f64 = 0.0;
    for k in 0..20u64 {
        let inst = random_instance(kinds[k as usize % 3], 500 + k).map_err(e2s)?;
        let bp = Breakpoints::new(inst.a.rows().clone()).map_err(e2s)?;
        for _ in 0..1000 {
            let s = random_delta_point(&mut rng, bp.rows());
            let v = envelope_value(&inst.phi, &bp, &s, inst.side).map_err(e2s)?;
            let o = envelope_oracle(&inst.phi, &bp, &s, inst.side).map_err(e2s)?;
            let c = separate(&inst.phi, &bp, &s, inst.side).map_err(e2s)?.eval(&s);
            gap = gap.max((v - o).abs());
            sep = sep.max((c - v).abs());
        }
    }
    Ok((
        gap <= 1e-6 && sep <= 1e-9,
        format!("20 instances x 1000 points; max |cuts - LP| {gap:.3e}; max |separated - min| {sep:.3e}"),
    ))
}

fn square_product_spec() -> Result<DcrSpec, String> {
    let a = Breakpoints::with_selector(vec![vec![0.0, 5.0, 8.0, 9.0], vec![0.0, 4.0]], vec![vec![0, 1, 3], vec![0, 1]])
        .map_err(e2s)?;
    let lin = |c: f64, k: f64| Some(AffineFn { constant: c, coeff: vec![k, 0.0] });
    Ok(DcrSpec {
        phi: OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]),
        a,
        side: Side::Under,
        x_lower: vec![0.0, 0.0],
        x_upper: vec![3.0, 2.0],
        under: vec![vec![None, lin(-1.0, 2.0), lin(-4.0, 4.0), None], vec![None, None]],
        w_rows: vec![],
    })
}

fn c6_example_numbers() -> Outcome {
    let spec = square_product_spec()?;
    let ev = Evaluator::new(spec.phi.clone(), spec.a.clone(), Side::Under, None);
    let x = [2.5, 1.5];
    let f = [x[0] * x[0], x[1] * x[1]];
    let u = spec.ubar(&x, &f);
    let plain = ev.closed_form(Relaxation::Plain, &u, &f).map_err(e2s)?;
    let h = ev.closed_form(Relaxation::H, &u, &f).map_err(e2s)?;
    let plain_lp = ev.by_lp(Relaxation::Plain, &u, &f).map_err(e2s)?;
    let h_lp = ev.by_lp(Relaxation::H, &u, &f).map_err(e2s)?;
    let truth = spec.phi.eval(&f);
    let ok = (plain - 10.0).abs() <= 1e-9
        && (h - 11.25).abs() <= 1e-9
        && (plain_lp - 10.0).abs() <= 1e-9
        && (h_lp - 11.25).abs() <= 1e-9
        && (truth - 14.0625).abs() <= 1e-9;
    Ok((ok, format!("phi={plain} (lp {plain_lp}) phi_h={h} (lp {h_lp}) truth={truth}")))
}

fn c7_bilinear() -> Outcome {
    let a = Breakpoints::new(vec![vec![0.0, 3.0, 4.0], vec![0.0, 3.0, 4.0]]).map_err(e2s)?;
    let closed = bilinear_envelopes(&a).map_err(e2s)?;
    let phi = OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]);
    let mut rows = 0;
    let mut ok = true;
    for (side, list) in [(Side::Under, &closed.convex), (Side::Over, &closed.concave)] {
        let generic = all_cuts(&phi, &a, side).map_err(e2s)?;
        ok &= generic.len() == list.len();
        for c in list {
            let g = generic.iter().find(|g| g.omega == c.omega);
            match g {
                Some(g) if g.constant == c.constant && g.coeff == c.coeff => rows += 1,
                _ => ok = false,
            }
        }
    }
    ok &= rows == 12;
    let lov = OuterSpec::product(2);
    let mut worst: f64 = 0.0;
    for p in 0..=100 {
        for q in 0..=100 {
            let f = [p as f64 / 100.0, q as f64 / 100.0];
            worst = worst.max((lovasz_extension(&lov, &f) - f[0].min(f[1])).abs());
        }
    }
    ok &= worst <= 1e-12;
    Ok((ok, format!("{rows} of 12 rows identical; Lovasz max |L - min| {worst:.3e} on 101^2 points")))
}

fn multilinear_cases() -> Result<Vec<(String, OuterSpec, Breakpoints, Vec<Side>, f64)>, String> {
    let grid = |rows: Vec<Vec<f64>>| Breakpoints::new(rows).map_err(e2s);
    let both = OuterSpec::product(2).with_over_switch(vec![]).with_under_switch(vec![1]);
    let path = OuterSpec::multilinear(3, vec![MultilinearTerm::new(1.0, vec![0, 1]), MultilinearTerm::new(1.0, vec![1, 2])])
        .map_err(e2s)?
        .with_under_switch(vec![1]);
    Ok(vec![
        (
            "d=1 n=3".into(),
            OuterSpec::product(1).with_over_switch(vec![]).with_under_switch(vec![]),
            grid(vec![vec![0.0, 1.0, 2.5, 3.0]])?,
            vec![Side::Over, Side::Under],
            1.0,
        ),
        (
            "d=2 n=3".into(),
            both.clone(),
            grid(vec![vec![0.0, 1.0, 3.0, 4.0], vec![0.5, 1.0, 2.0, 4.0]])?,
            vec![Side::Over, Side::Under],
            1.0,
        ),
        (
            "d=3 n=(3,2,2)".into(),
            OuterSpec::product(3).with_over_switch(vec![]),
            grid(vec![vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 2.0, 3.0], vec![0.0, 0.5, 2.0]])?,
            vec![Side::Over],
            1.0,
        ),
        (
            "path d=3 n=2".into(),
            path,
            grid(vec![vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0], vec![1.0, 1.5, 3.0]])?,
            vec![Side::Under],
            -1.0,
        ),
    ])
}

fn c8_ideality() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut solves = 0;
    let mut seed = 80;
    for (_, phi, a, sides, sign) in multilinear_cases()? {
        let models = [
            build_mip_z(&phi, &a, &sides).map_err(e2s)?,
            build_log_formulation(&phi, &a, LogMode::Envelope(sides.clone())).map_err(e2s)?,
        ];
        for m in models {
            if !m.separators().is_empty() {
                return Err(format!("{} was not emitted in full", m.tag));
            }
            seed += 1;
            let r = ideality_check(&m, 200, seed, sign).map_err(e2s)?;
            worst = worst.max(r.worst_fraction);
            solves += r.trials;
        }
    }
    Ok((worst <= 1e-7, format!("{solves} solves over mip-z and log models, worst binary fraction {worst:.3e}")))
}

fn c9_zdelta() -> Outcome {
    let r = check_zdelta_counterexample().map_err(e2s)?;
    Ok((
        r.margin_z >= -1e-6 && r.nodelta_violation >= 0.7,
        format!(
            "margin in the z model {:.3e}; violation of the (z, delta) cut {:.4}; against the exact (z, delta) envelope {:.4}",
            r.margin_z, r.nodelta_violation, r.zdelta_violation
        ),
    ))
}

fn c10_dominance() -> Outcome {
    let kinds = [RandomKind::Product, RandomKind::Bilinear, RandomKind::Path];
    let mut failing = 0;
    let mut worst_degenerate: f64 = 0.0;
    let mut worst_two_path: f64 = 0.0;
    for k in 0..50u64 {
        let mut inst = random_instance(kinds[k as usize % 3], 1000 + k).map_err(e2s)?;
        let rows = compare_relaxations(&inst, 100, 10 + k, 1e-7).map_err(e2s)?;
        failing += rows.iter().filter(|r| !r.failures.is_empty()).count();
        if k < 6 {
            let ev = inst.evaluator();
            for x in box_samples(&inst.x_lower, &inst.x_upper, 10, 20 + k) {
                let f = inst.f(&x);
                let u = inst.u(&x, &f);
                for r in Relaxation::ALL {
                    let c = ev.closed_form(r, &u, &f).map_err(e2s)?;
                    let l = ev.by_lp(r, &u, &f).map_err(e2s)?;
                    worst_two_path = worst_two_path.max((c - l).abs());
                }
            }
        }
        inst.bounds = Some(LocalBoundTable::degenerate(&inst.a));
        for r in compare_relaxations(&inst, 100, 10 + k, 1e-7).map_err(e2s)? {
            worst_degenerate = worst_degenerate.max((r.h_plus.unwrap_or(f64::NAN) - r.h).abs());
        }
    }
    Ok((
        failing == 0 && worst_degenerate <= 1e-9 && worst_two_path <= 1e-7,
        format!(
            "50 x 100 samples, {failing} with an ordering violated; degenerate |h_plus - h| {worst_degenerate:.3e}; closed form vs LP {worst_two_path:.3e}"
        ),
    ))
}

fn c11_w_hull() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut solves = 0;
    for (d, n) in [(2usize, 1usize), (2, 2), (3, 1), (3, 2)] {
        let rows: Table = (0..d).map(|i| (0..=n).map(|j| (i + 1) as f64 * 0.5 + j as f64).collect()).collect();
        let a = Breakpoints::new(rows).map_err(e2s)?;
        let m = build_w_hull(&a, &OuterSpec::product(d)).map_err(e2s)?;
        worst = worst.max(w_vertex_check(&m, 200, 110 + (d * 10 + n) as u64).map_err(e2s)?);
        solves += 200;
    }
    Ok((worst <= 1e-7, format!("{solves} solves, max distance of w from an indicator {worst:.3e}")))
}

fn c12_kronecker() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let (p, q, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=2));
        let chains = random_kronecker_chains(p, q, n, &mut rng);
        let target = chains.product();
        for w in enumerate_direction_vectors(&GridShape::uniform(2, n).map_err(e2s)?).map_err(e2s)? {
            let over = kronecker_overestimator(&chains, &w).map_err(e2s)?;
            worst = worst.min(min_eigenvalue(&(over - &target)));
        }
    }
    Ok((worst >= -1e-8, format!("100 chain instances, smallest eigenvalue {worst:.3e}")))
}

fn capture(args: &[String]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(args.iter().cloned(), &mut out, &mut err);
    out.extend(err);
    (code, out)
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let spec = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("instances").join("square_product.json");
    let spec = spec.to_string_lossy().to_string();
    let mut runs: Vec<Vec<Vec<u8>>> = Vec::new();
    for k in 0..2 {
        let mut bytes = Vec::new();
        for f in ["incremental", "mip-z", "dcr", "dcr-plus", "log-envelope", "log-w"] {
            let lp = dir.path().join(format!("{f}-{k}.lp")).to_string_lossy().to_string();
            let args: Vec<String> = ["composite-relax", "emit", "--spec", &spec, "--formulation", f, "--out", &lp, "--seed", "13"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let (code, out) = capture(&args);
            if code != 0 {
                return Err(format!("emit {f} exited {code}"));
            }
            bytes.push(std::fs::read(&lp).map_err(e2s)?);
            bytes.push(String::from_utf8_lossy(&out).replace(&lp, "<lp>").into_bytes());
        }
        let csv = dir.path().join(format!("verify-{k}.csv")).to_string_lossy().to_string();
        let args: Vec<String> = ["composite-relax", "verify", "--spec", &spec, "--out", &csv, "--seed", "13"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (code, out) = capture(&args);
        if code != 0 {
            return Err(format!("verify exited {code}"));
        }
        let text = String::from_utf8_lossy(&out).replace(&csv, "<report>");
        bytes.push(text.into_bytes());
        bytes.push(std::fs::read(&csv).map_err(e2s)?);
        runs.push(bytes);
    }
    let same = runs[0] == runs[1];
    let total: usize = runs[0].iter().map(|b| b.len()).sum();
    Ok((same, format!("6 LP files, verify output and CSV identical across two runs ({total} bytes)")))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Duration, Check); 13] = [
        ("1 direction vectors", Duration::from_secs(1), c1_direction_vectors),
        ("2 telescoping identity", Duration::from_secs(5), c2_telescoping),
        ("3 staircase overestimator validity", Duration::from_secs(10), c3_theorem_validity),
        ("4 sum-of-squares cut", Duration::from_secs(5), c4_squares_cut),
        ("5 envelope exactness", Duration::from_secs(30), c5_envelope),
        ("6 two-piece example values", Duration::from_secs(1), c6_example_numbers),
        ("7 bilinear specialization", Duration::from_secs(2), c7_bilinear),
        ("8 ideality sampling", Duration::from_secs(60), c8_ideality),
        ("9 non-ideal (z, delta) point", Duration::from_secs(1), c9_zdelta),
        ("10 dominance orderings", Duration::from_secs(60), c10_dominance),
        ("11 w-hull vertices", Duration::from_secs(30), c11_w_hull),
        ("12 Kronecker PSD", Duration::from_secs(5), c12_kronecker),
        ("13 determinism", Duration::from_secs(60), c13_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && took <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.3} s, budget {} s]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 13 criteria passed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
