//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::Gen;
use hmp_series::backend::{Backend, Value};
use hmp_series::cli;
use hmp_series::expansion::{
    self, first_order_am, first_order_high_snr, increment_table, multisite_derivative, rate_series,
    reference_series, settling_threshold, site_increment, values_agree, MultiSiteSpec,
};
use hmp_series::model::{PerturbationMatrix, RegimeSpec, StochasticMatrix};
use hmp_series::radius::{self, bounds_scan, linear_grid, GridAxis, Position, ScanOptions};
use hmp_series::rational::{int, ratio, Rational};
use hmp_series::series::LogLinearValue;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exact(v: &Value) -> &LogLinearValue {
    v.as_exact().expect("exact backend")
}

const MUS: [(i64, i64); 5] = [(0, 1), (1, 5), (1, 2), (3, 5), (1, 1)];

fn criterion_1() -> Outcome {
    let mut slowest = Duration::ZERO;
    for (a, b) in MUS {
        let mu = ratio(a, b);
        let start = Instant::now();
        let out = cli::run(["hmp-series", "expand", "--regime", "am", "--mu", &format!("{a}/{b}"), "--order", "13"]);
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        ensure(out.code == 0, || format!("mu={mu}: exit {} {}", out.code, out.stderr))?;
        let coefficients: Vec<String> = out
            .stdout
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().to_string())
            .collect();
        let reference = reference_series(&mu, 13).unwrap();
        ensure(coefficients.len() == 14, || format!("mu={mu}: {} rows", coefficients.len()))?;
        for (k, text) in coefficients.iter().enumerate() {
            ensure(*text == reference.values[k].to_string(), || {
                format!("mu={mu} order {k}: got {text}, expected {}", reference.values[k])
            })?;
        }
        ensure(coefficients[0] == "log(2)", || format!("mu={mu}: constant {}", coefficients[0]))?;
        ensure(coefficients.iter().skip(1).step_by(2).all(|c| c == "0"), || format!("mu={mu}: odd orders nonzero"))?;

        let spec = RegimeSpec::symmetric_binary_almost_memoryless(&((int(1) - &mu) / int(2))).unwrap();
        let table = rate_series(&spec, 13, Backend::Exact).unwrap();
        for k in 0..=13 {
            ensure(exact(&table.values[k]) == exact(&reference.values[k]), || format!("mu={mu} order {k}: value mismatch"))?;
        }
        ensure(elapsed < Duration::from_secs(60), || format!("mu={mu}: {elapsed:?}"))?;
    }
    Ok(format!("5 values of mu, orders 0..13 exact; slowest {:.2?}", slowest))
}

fn criterion_2() -> Outcome {
    let spec = RegimeSpec::symmetric_binary_almost_memoryless(&int(0)).unwrap();
    let table = rate_series(&spec, 13, Backend::Exact).unwrap();
    // H_b(1/2 - d) = log 2 - sum_k (2d)^{2k} / (2k (2k - 1)).
    let hand = |k: i64| -(int(4).pow(k as i32)) / int(2 * k * (2 * k - 1));
    for (k, expected) in [(1, ratio(-2, 1)), (2, ratio(-4, 3)), (3, ratio(-32, 15))] {
        ensure(hand(k) == expected, || format!("hand expansion at k={k}"))?;
        let got = exact(&table.values[2 * k as usize]);
        ensure(got.is_rational() && *got.rational_part() == expected, || format!("delta^{}: {got}", 2 * k))?;
    }
    for k in 4..=6 {
        let got = exact(&table.values[2 * k as usize]);
        ensure(*got.rational_part() == hand(k) && got.is_rational(), || format!("delta^{}: {got}", 2 * k))?;
    }
    Ok("delta^2, delta^4, delta^6 = -2, -4/3, -32/15 (and through delta^12)".into())
}

fn settling_models() -> Vec<RegimeSpec> {
    let mut g = Gen::new(0x5e771e);
    let mut specs: Vec<RegimeSpec> = (0..10).map(|_| g.high_snr(2)).collect();
    specs.extend((0..10).map(|_| g.almost_memoryless(2)));
    specs
}

fn criterion_3(tables: &[(RegimeSpec, Vec<Vec<Value>>)]) -> Outcome {
    for (idx, (_, table)) in tables.iter().enumerate() {
        for k in 0..=6 {
            let reference = &table[7][k];
            for n in settling_threshold(k)..=8 {
                ensure(exact(&table[n - 1][k]) == exact(reference), || {
                    format!("model {idx}, k={k}: C_{n} differs from C_8")
                })?;
            }
        }
    }
    Ok(format!("{} models, k=0..6, N from threshold to 8", tables.len()))
}

fn criterion_4() -> Outcome {
    let mut g = Gen::new(0x1e77a);
    let specs: Vec<RegimeSpec> = (0..5).map(|_| g.high_snr(2)).collect();

    for trial in 0..10 {
        let spec = &specs[trial % specs.len()];
        let n = g.range(3, 5) as usize;
        let j = g.range(2, n as i64 - 1) as usize - 1;
        let i = g.index(j);
        let mut kvec = vec![0usize; n];
        kvec[i] = g.range(1, 2) as usize;
        kvec[j] = g.range(0, 1) as usize;
        let mut budget = 4 - kvec[i] - kvec[j];
        for site in (0..n).filter(|&s| s != i && s != j) {
            let add = g.range(0, budget.min(2) as i64) as usize;
            kvec[site] = add;
            budget -= add;
        }
        let ms = MultiSiteSpec::new(kvec.clone()).unwrap();
        let v = multisite_derivative(spec, &ms, Backend::Exact).unwrap();
        ensure(v.is_zero(), || format!("hole {kvec:?}: {v}"))?;
    }

    for trial in 0..10 {
        let spec = &specs[trial % specs.len()];
        // Padding invariance needs k_1 <= 1 and, when k_1 = 1, a later site.
        let len = g.range(1, 2) as usize;
        let mut kvec: Vec<usize> = (0..len).map(|_| g.range(0, 1) as usize).collect();
        kvec.push(g.range(1, 2) as usize);
        let base = MultiSiteSpec::new(kvec.clone()).unwrap();
        let v0 = multisite_derivative(spec, &base, Backend::Exact).unwrap();
        for r in 1..=3 {
            let padded = base.padded(r).unwrap();
            let v = multisite_derivative(spec, &padded, Backend::Exact).unwrap();
            ensure(v == v0, || format!("padding {kvec:?} by {r}: {v} vs {v0}"))?;
        }
    }

    let mut worst = 0.0f64;
    for trial in 0..10 {
        let spec = &specs[trial % specs.len()];
        let n = g.range(3, 5) as usize;
        let j = g.range(2, n as i64 - 1) as usize - 1;
        let mut eps: Vec<Rational> = (0..n).map(|_| g.positive(9, 60)).collect();
        eps[j] = int(0);
        let full = site_increment(spec, &eps, Backend::Float64).unwrap().to_f64();
        let tail = site_increment(spec, &eps[j..], Backend::Float64).unwrap().to_f64();
        let rel = (full - tail).abs() / full.abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || format!("blocking at site {} of {n}: {full} vs {tail}", j + 1))?;
    }
    Ok(format!("10 holes vanish, 10 paddings invariant, 10 blockings agree (worst rel {worst:.1e})"))
}

fn criterion_5() -> Outcome {
    let mut g = Gen::new(0xc105ed);
    for trial in 0..20 {
        let s = 2 + trial % 2;
        for spec in [g.high_snr(s), g.almost_memoryless(s)] {
            let fo = match &spec {
                RegimeSpec::HighSnr { m, t } => first_order_high_snr(m, t, Backend::Exact),
                RegimeSpec::AlmostMemoryless { r, t } => first_order_am(r, t, Backend::Exact),
            }
            .unwrap();
            let jet = rate_series(&spec, 1, Backend::Exact).unwrap();
            ensure(exact(&fo.h0) == exact(&jet.values[0]) && exact(&fo.h1) == exact(&jet.values[1]), || {
                format!("{} model {trial} (s={s}): closed form {} + {} x, jet {} + {} x", spec.kind(), fo.h0, fo.h1, jet.values[0], jet.values[1])
            })?;
        }
    }
    for (a, b) in [(1, 10), (1, 5), (1, 3), (1, 2), (0, 1)] {
        let spec = RegimeSpec::symmetric_binary_almost_memoryless(&ratio(a, b)).unwrap();
        let RegimeSpec::AlmostMemoryless { r, t } = &spec else { unreachable!() };
        let fo = first_order_am(r, t, Backend::Exact).unwrap();
        ensure(fo.h1.is_zero(), || format!("symmetric eps={a}/{b}: h1 = {}", fo.h1))?;
    }
    let r = StochasticMatrix::new("R", vec![vec![int(1), int(0)], vec![ratio(1, 2), ratio(1, 2)]]).unwrap();
    let t = PerturbationMatrix::new("T", vec![vec![int(1), int(-1)], vec![int(1), int(-1)]]).unwrap();
    let fo = first_order_am(&r, &t, Backend::Exact).unwrap();
    ensure(*exact(&fo.h1) == LogLinearValue::log_prime(3, ratio(-1, 2)), || format!("asymmetric h1 = {}", fo.h1))?;
    let jet = rate_series(&RegimeSpec::almost_memoryless(r, t).unwrap(), 1, Backend::Exact).unwrap();
    ensure(exact(&jet.values[1]) == exact(&fo.h1), || "asymmetric jet mismatch".into())?;
    Ok(format!("40 random models agree; symmetric h1 = 0; asymmetric h1 = {}", fo.h1))
}

fn criterion_6() -> Outcome {
    let am = RegimeSpec::symmetric_binary_almost_memoryless(&ratio(1, 5)).unwrap();
    let grid = linear_grid(&ratio(1, 100), &ratio(49, 100), 50);
    let opts = ScanOptions {
        axis: GridAxis::FlipProbability,
        ..ScanOptions::default()
    };
    let scan = bounds_scan(&am, &grid, &[8, 10, 12], &opts).unwrap();
    ensure(scan.rows.len() == 150, || format!("{} rows", scan.rows.len()))?;
    if let Some(r) = scan.rows.iter().find(|r| !r.inside()) {
        return Err(format!("A-M order {} at p={} outside: {:?}", r.order, r.grid_value, r));
    }

    let hs = RegimeSpec::symmetric_binary_high_snr(&ratio(1, 5)).unwrap();
    let grid = linear_grid(&ratio(1, 100), &ratio(45, 100), 45);
    let scan = bounds_scan(&hs, &grid, &[9, 10, 11], &ScanOptions::default()).unwrap();
    let mut exits = Vec::new();
    for order in [9, 10, 11] {
        let first = scan
            .rows_for_order(order)
            .find(|r| !r.inside())
            .ok_or_else(|| format!("High-SNR order {order} never leaves the bounds"))?;
        exits.push((order, first.position, first.grid_value));
    }
    let odd = exits[0].1;
    for &(order, pos, _) in &exits {
        let want_odd = order % 2 == 1;
        ensure((pos == odd) == want_odd && pos != Position::Inside, || format!("exit directions {exits:?}"))?;
    }
    let describe: Vec<String> = exits
        .iter()
        .map(|(o, p, x)| format!("{o}:{}@{x}", if *p == Position::Above { "above" } else { "below" }))
        .collect();
    Ok(format!("A-M 150 points inside; High-SNR exits {}", describe.join(" ")))
}

fn criterion_7() -> Outcome {
    let am = rate_series(&RegimeSpec::symmetric_binary_almost_memoryless(&ratio(1, 5)).unwrap(), 13, Backend::Exact).unwrap();
    let hs = rate_series(&RegimeSpec::symmetric_binary_high_snr(&ratio(1, 5)).unwrap(), 13, Backend::Exact).unwrap();
    let mut parts = Vec::new();
    for (a, h) in radius::estimate_all(&am).into_iter().zip(radius::estimate_all(&hs)) {
        let (a, h) = (a.map_err(|e| e.to_string())?, h.map_err(|e| e.to_string())?);
        let (ra, rh) = (a.value.ok_or("A-M indeterminate")?, h.value.ok_or("High-SNR indeterminate")?);
        ensure(ra > rh, || format!("{}: A-M {ra} <= High-SNR {rh}", a.method))?;
        parts.push(format!("{} {ra:.4}>{rh:.4}", a.method));
    }
    for rho in [0.5f64, 0.25, 2.0, 0.9] {
        let c: Vec<f64> = (0..=13).map(|k| rho.powi(-k)).collect();
        for est in [radius::ratio_estimate(&c), radius::cauchy_hadamard_estimate(&c), radius::domb_sykes_estimate(&c)] {
            let est = est.map_err(|e| e.to_string())?;
            let v = est.value.ok_or("geometric table indeterminate")?;
            ensure((v - rho).abs() <= 1e-12, || format!("{} on rho={rho}: {v}", est.method))?;
        }
    }
    Ok(format!("{}; geometric rho recovered to 1e-12", parts.join(", ")))
}

fn criterion_8(tables: &[(RegimeSpec, Vec<Vec<Value>>)]) -> Outcome {
    let mut compared = 0;
    for (idx, (spec, table)) in tables.iter().enumerate() {
        let float = increment_table(spec, 8, 6, Backend::Float64).unwrap();
        for (n, (er, fr)) in table.iter().zip(&float).enumerate() {
            for (k, (e, f)) in er.iter().zip(fr).enumerate() {
                compared += 1;
                ensure(values_agree(e, f, 1e-10), || format!("model {idx} C_{}^({k}): {e} vs {f}", n + 1))?;
            }
        }
    }
    let mut g = Gen::new(0x5111);
    let mut checked = 0;
    for s in [2, 3] {
        let order = if s == 2 { 6 } else { 3 };
        for spec in [g.high_snr(s), g.almost_memoryless(s), g.high_snr(s), g.almost_memoryless(s)] {
            for n in 1..=8 {
                let mass = expansion::probability_mass_jet(&spec, n, order).unwrap();
                let unit = mass.coeffs().iter().enumerate().all(|(k, c)| *c == if k == 0 { int(1) } else { int(0) });
                ensure(unit, || format!("{} s={s} N={n}: mass {:?}", spec.kind(), mass.coeffs()))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{compared} coefficients within 1e-10; {checked} mass jets equal 1 exactly"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    // Exact tables shared by the settling and coherence criteria.
    let build = Instant::now();
    let tables: Result<Vec<(RegimeSpec, Vec<Vec<Value>>)>, String> = panic::catch_unwind(|| {
        settling_models()
            .into_iter()
            .map(|spec| {
                let t = increment_table(&spec, 8, 6, Backend::Exact).unwrap();
                (spec, t)
            })
            .collect()
    })
    .map_err(|_| "building the exact settling tables panicked".to_string());
    println!("built {} exact settling tables (N=8, K=6) in {:.2?}", tables.as_ref().map_or(0, Vec::len), build.elapsed());
    let with_tables = |f: fn(&[(RegimeSpec, Vec<Vec<Value>>)]) -> Outcome| -> Outcome {
        f(tables.as_ref().map_err(Clone::clone)?)
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 series reproduction", Box::new(criterion_1)),
        ("2 binary entropy cross-check", Box::new(criterion_2)),
        ("3 settling suite", Box::new(|| with_tables(criterion_3))),
        ("4 multisite identities", Box::new(criterion_4)),
        ("5 first-order closed forms", Box::new(criterion_5)),
        ("6 bounds behavior", Box::new(criterion_6)),
        ("7 radius comparison", Box::new(criterion_7)),
        ("8 backend coherence", Box::new(|| with_tables(criterion_8))),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.2?}]", t.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{:.2?}]", t.elapsed());
            }
        }
    }
    println!("{} of {} criteria passed in {:.2?}", criteria.len() - failed, criteria.len(), start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
