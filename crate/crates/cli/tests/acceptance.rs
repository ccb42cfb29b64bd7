//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if any fail.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use sha2::{Digest, Sha256};

use ensemble_cli::{cmd_run, RunArgs};
use ensemble_core::analysis::EnactedShares;
use ensemble_core::chain::{chain_rng, ChainRng};
use ensemble_core::diagnostics::{
    cross_chain_mean_se, fit_inverse_sqrt, ks_two_sample, required_sample_size, sample_size_report, DiagnosticsConfig,
    MeasureSeries,
};
use ensemble_core::metrics::{plan_perimeter, CompetitiveBand};
use ensemble_core::partition::{canonical_labels, is_contiguous, is_valid, save_plan};
use ensemble_core::synthetic::{county_grid, grid_graph, unit_pops};
use ensemble_core::{
    run_chains, save_graph, seed_plan, BalanceSpec, Chain, ChainConfig, DualGraph, Execution, MetricsSpec, Plan,
};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn seeded(graph: &DualGraph, k: usize, tol: f64, seed: u64) -> Plan {
    let spec = BalanceSpec::for_graph(graph, k, tol).unwrap();
    seed_plan(graph, k, &spec, &mut chain_rng(seed, 0)).unwrap()
}

fn enacted_fixture() {
    let shares: EnactedShares =
        serde_json::from_reader(std::fs::File::open(fixture("colorado_2018_enacted.json")).unwrap()).unwrap();
    let m = shares.to_metrics(CompetitiveBand::default()).unwrap();
    let get = |e: &str| &m.per_election[e];
    assert_eq!([get("gov").seats, get("treas").seats, get("sos").seats], [4, 4, 4]);
    assert_eq!(
        [get("gov").competitive, get("treas").competitive, get("sos").competitive],
        [1, 2, 1]
    );
    assert_eq!(get("gov").competitive_shifted, 2);
}

fn chain_validity() {
    let g = county_grid(10, 10, 2);
    let cfg = ChainConfig::new(4, 20.0, 0.05, 2000, 11);
    let spec = BalanceSpec::for_graph(&g, 4, 0.05).unwrap();
    let mut chain = Chain::new(
        &g,
        seeded(&g, 4, 0.05, 1),
        cfg,
        MetricsSpec::for_graph(&g, None).unwrap(),
    )
    .unwrap();
    for _ in 0..2000 {
        chain.advance().unwrap();
        let plan = chain.plan();
        assert!(is_contiguous(&g, plan), "step {} not contiguous", chain.step());
        // recount from the assignment rather than trusting cached totals
        let pops = plan.recount_populations(&g);
        assert!(pops
            .iter()
            .all(|&p| (p as f64 - spec.ideal).abs() <= 0.05 * spec.ideal + 1e-9));
        assert!(is_valid(&g, plan, &spec));
    }
}

fn weighting_effect() {
    let g = county_grid(10, 10, 2);
    let seed = seeded(&g, 4, 0.05, 2);
    let metrics = MetricsSpec::for_graph(&g, None).unwrap();
    let cfgs: Vec<ChainConfig> = [1.0, 20.0]
        .iter()
        .flat_map(|&w| (0..3).map(move |s| ChainConfig::new(4, w, 0.05, 50_000, 100 + s)))
        .collect();
    let seeds = vec![seed; cfgs.len()];
    let runs = run_chains(&g, &seeds, &cfgs, &metrics, Execution::Parallel);
    let splits: Vec<Vec<f64>> = runs
        .into_iter()
        .map(|r| r.unwrap().iter().map(|rec| rec.counties_split as f64).collect())
        .collect();
    let (m1, se1) = cross_chain_mean_se(&splits[..3]).unwrap();
    let (m20, se20) = cross_chain_mean_se(&splits[3..]).unwrap();
    let se = (se1 * se1 + se20 * se20).sqrt();
    println!("    w=1 mean {m1:.4} (se {se1:.4}); w=20 mean {m20:.4} (se {se20:.4})");
    assert!(m20 < m1);
    assert!(m1 - m20 > 3.0 * se);
}

fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    a.iter()
        .chain(b)
        .map(|&x| {
            let fa = a.iter().filter(|&&v| v <= x).count() as f64 / n;
            let fb = b.iter().filter(|&&v| v <= x).count() as f64 / m;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

fn ks_oracle() {
    let mut rng = chain_rng(4, 0);
    for trial in 0..500 {
        let (n, m) = (rng.gen_range(1..=50), rng.gen_range(1..=50));
        // every other trial draws from a small integer set to force ties
        let draw = |rng: &mut ChainRng| -> f64 {
            if trial % 2 == 0 {
                rng.gen()
            } else {
                rng.gen_range(0..6) as f64
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        assert_eq!(ks_two_sample(&a, &b).unwrap(), brute_ks(&a, &b), "trial {trial}");
    }
}

fn smirnov_constant() {
    let mut rng = chain_rng(5, 0);
    let n = 1000;
    let mut total = 0.0;
    for _ in 0..200 {
        let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        total += ks_two_sample(&a, &b).unwrap() * (n as f64).sqrt();
    }
    let mean = total / 200.0;
    println!("    mean D*sqrt(n) = {mean:.4}");
    assert!((1.0..=1.5).contains(&mean));
    let req = required_sample_size(1.22852, 0.01);
    println!("    required_sample_size(1.22852) = {req}");
    assert!((15091..=15096).contains(&req));
}

fn fit_exactness() {
    let a = 3.7;
    let points: Vec<(f64, f64)> = [100.0, 400.0, 900.0, 2500.0, 10_000.0]
        .iter()
        .map(|&n: &f64| (n, a / n.sqrt()))
        .collect();
    let fit = fit_inverse_sqrt(&points).unwrap();
    assert!((fit.coefficient - a).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    let req = required_sample_size(17.65, 0.01);
    assert_eq!(req, 3_115_225);
    assert!((req as f64 - 3_116_814.0).abs() / 3_116_814.0 < 1e-3);
}

fn perimeter_identity() {
    let g = grid_graph(6, 6, &unit_pops(36), |r, c| format!("c{}{}", r / 3, c / 3));
    let mut rng = chain_rng(7, 0);
    for _ in 0..1000 {
        let k = rng.gen_range(1..=6usize);
        let mut assignment: Vec<u32> = (0..36).map(|_| rng.gen_range(0..k as u32)).collect();
        // every label used at least once
        for (d, slot) in assignment.iter_mut().take(k).enumerate() {
            *slot = d as u32;
        }
        let plan = Plan::new(&g, k, assignment).unwrap();
        let exterior: f64 = g.nodes().iter().map(|n| n.exterior_perimeter).sum();
        let cut: f64 = g
            .edges()
            .iter()
            .filter(|e| plan.district_of(e.a) != plan.district_of(e.b))
            .map(|e| e.shared_perimeter)
            .sum();
        assert!((plan_perimeter(&g, &plan) - (exterior + 2.0 * cut)).abs() < 1e-9);
    }
}

fn run_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let g = county_grid(8, 8, 2);
    save_graph(&g, dir.path().join("g.json")).unwrap();
    save_plan(&g, &seeded(&g, 4, 0.05, 3), dir.path().join("p.csv")).unwrap();
    let digest = |out: &str| {
        let args = RunArgs {
            graph: dir.path().join("g.json"),
            plan: dir.path().join("p.csv"),
            steps: 500,
            weight: 20.0,
            tol: 0.05,
            rng_seed: 42,
            chain_index: 0,
            elections: None,
            out: dir.path().join(out),
            snapshot_every: 100_000,
            snapshot_dir: None,
        };
        assert_eq!(cmd_run(&args, &mut std::io::sink()).unwrap(), 0);
        Sha256::digest(std::fs::read(dir.path().join(out)).unwrap())
    };
    assert_eq!(digest("a.jsonl"), digest("b.jsonl"));
}

/// Every balanced, contiguous two-district split of a unit-population graph.
fn brute_force_pairs(g: &DualGraph, size: usize) -> BTreeSet<Vec<u32>> {
    let n = g.node_count();
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let assignment: Vec<u32> = (0..n).map(|i| (mask >> i) & 1).collect();
        let plan = Plan::new(g, 2, assignment.clone()).unwrap();
        if is_contiguous(g, &plan) {
            out.insert(canonical_labels(&assignment));
        }
    }
    out
}

fn exhaustive_support() {
    let g = county_grid(2, 4, 2);
    let expected = brute_force_pairs(&g, 4);
    let cfg = ChainConfig::new(2, 20.0, 0.01, 100_000, 9);
    let mut chain = Chain::new(
        &g,
        seeded(&g, 2, 0.01, 9),
        cfg,
        MetricsSpec::for_graph(&g, None).unwrap(),
    )
    .unwrap();
    let mut seen = BTreeSet::new();
    for _ in 0..100_000 {
        chain.advance().unwrap();
        seen.insert(canonical_labels(chain.plan().assignment()));
    }
    println!("    visited {} of {} partitions", seen.len(), expected.len());
    assert!(seen.is_subset(&expected));
    assert_eq!(seen, expected);
}

fn diagnostics_workflow() {
    let len = 4000;
    let mut rng = chain_rng(10, 0);
    let mut white = Vec::new();
    let mut ar = Vec::new();
    for _ in 0..10 {
        white.push((0..len).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        let mut x = 0.0;
        ar.push(
            (0..len)
                .map(|_| {
                    x = 0.9 * x + rng.gen::<f64>() - 0.5;
                    x + 0.5 * rng.gen::<f64>()
                })
                .collect::<Vec<_>>(),
        );
    }
    let measures = vec![
        MeasureSeries {
            name: "white".into(),
            chains: white,
        },
        MeasureSeries {
            name: "ar1".into(),
            chains: ar,
        },
    ];
    let cfg = DiagnosticsConfig::for_length(len);
    let report = sample_size_report(&measures, &cfg, Execution::Parallel).unwrap();
    for (name, m) in &report.per_measure {
        assert_eq!(m.points.len(), cfg.grid.len(), "{name}");
        assert!(m.points.iter().all(|p| p.values.len() == 45), "{name}");
        assert!(m.a.coefficient > 0.0);
        let fitted: Vec<f64> = cfg.grid.iter().map(|&n| m.a.predict(n as f64)).collect();
        assert!(
            fitted.windows(2).all(|w| w[1] < w[0]),
            "{name}: fitted means not decreasing"
        );
        assert_eq!(m.recommended_n, m.required_n_ks.max(m.required_n_autocorr));
        println!(
            "    {name}: a={:.3} n_ks={} lag={} n_ac={} n={}",
            m.a.coefficient, m.required_n_ks, m.decay_lag, m.required_n_autocorr, m.recommended_n
        );
    }
    let worst = report.per_measure.values().map(|m| m.recommended_n).max().unwrap();
    assert_eq!(report.recommended_n, worst);
    assert!(report.per_measure["ar1"].decay_lag > report.per_measure["white"].decay_lag);
}

fn main() {
    let checks: [(&str, fn()); 10] = [
        ("enacted-plan fixture seats and competitive counts", enacted_fixture),
        ("chain validity on a 10x10 county grid", chain_validity),
        ("county weighting lowers counties split", weighting_effect),
        ("KS statistic matches brute force", ks_oracle),
        ("Smirnov constant and required sample size", smirnov_constant),
        ("inverse-sqrt fit exactness", fit_exactness),
        ("perimeter identity on random 6x6 plans", perimeter_identity),
        ("run output is byte-identical on rerun", run_determinism),
        (
            "chain visits every balanced 2-partition of a 2x4 grid",
            exhaustive_support,
        ),
        ("diagnostics workflow structure", diagnostics_workflow),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let label = format!("{}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "acceptance {label} ... {} ({secs:.1}s)",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
