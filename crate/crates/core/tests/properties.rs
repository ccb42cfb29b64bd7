use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use ensemble_core::chain::recom_step;
use ensemble_core::graph::parse_graph;
use ensemble_core::metrics::{county_splits, plan_perimeter};
use ensemble_core::partition::{canonical_labels, is_valid};
use ensemble_core::synthetic::{grid_graph, SYNTHETIC_ELECTION};
use ensemble_core::{seed_plan, BalanceSpec, ChainConfig, DualGraph, Plan};

/// Grid with populations in 1..=5 and counties from a coarse block pattern.
fn random_grid() -> impl Strategy<Value = DualGraph> {
    (2usize..6, 2usize..6, 1usize..4).prop_flat_map(|(rows, cols, blocks)| {
        prop::collection::vec(1u64..=5, rows * cols).prop_map(move |pops| {
            grid_graph(rows, cols, &pops, |r, c| {
                format!("c{}{}", r * blocks / rows, c * blocks / cols)
            })
        })
    })
}

fn graph_and_assignment() -> impl Strategy<Value = (DualGraph, usize, Vec<u32>)> {
    random_grid().prop_flat_map(|g| {
        let n = g.node_count();
        (1usize..=n.min(5)).prop_flat_map(move |k| {
            let g = g.clone();
            prop::collection::vec(0..k as u32, n).prop_map(move |mut a| {
                for (d, slot) in a.iter_mut().take(k).enumerate() {
                    *slot = d as u32;
                }
                (g.clone(), k, a)
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_json_round_trip(g in random_grid()) {
        let mut buf = Vec::new();
        ensemble_core::graph::write_graph(&g, &mut buf).unwrap();
        let back = parse_graph(buf.as_slice()).unwrap();
        prop_assert_eq!(back.nodes(), g.nodes());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.counties(), g.counties());
    }

    #[test]
    fn merging_conserves_totals(g in random_grid(), threshold in 0u64..40) {
        let m = g.merge_small_counties(threshold);
        prop_assert_eq!(m.total_population(), g.total_population());
        prop_assert!((m.total_exterior_perimeter() - g.total_exterior_perimeter()).abs() < 1e-9);
        let e = g.election_index(SYNTHETIC_ELECTION).unwrap();
        prop_assert_eq!(m.total_votes(e), g.total_votes(e));
        prop_assert_eq!(m.counties(), g.counties());
        let all: Vec<usize> = (0..m.node_count()).collect();
        prop_assert_eq!(m.induced_components(&all), 1);

        // each county at or above the threshold is untouched
        let mut pop: BTreeMap<&str, u64> = BTreeMap::new();
        for (i, n) in g.nodes().iter().enumerate() {
            *pop.entry(g.county_name(i)).or_default() += n.population;
        }
        let expected: usize = g
            .counties()
            .iter()
            .map(|c| {
                let members = (0..g.node_count()).filter(|&i| g.county_name(i) == c).count();
                if pop[c.as_str()] < threshold { 1 } else { members }
            })
            .sum();
        prop_assert_eq!(m.node_count(), expected);

        // a plan that keeps merged counties whole has the same perimeter
        let whole = Plan::new(&g, g.counties().len(), (0..g.node_count()).map(|i| g.nodes()[i].county as u32).collect()).unwrap();
        let merged = Plan::new(&m, m.counties().len(), (0..m.node_count()).map(|i| m.nodes()[i].county as u32).collect()).unwrap();
        prop_assert!((plan_perimeter(&g, &whole) - plan_perimeter(&m, &merged)).abs() < 1e-9);
    }

    #[test]
    fn county_splits_match_set_counting((g, k, a) in graph_and_assignment()) {
        let plan = Plan::new(&g, k, a.clone()).unwrap();
        let mut touched: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for (i, &d) in a.iter().enumerate() {
            touched.entry(g.nodes()[i].county).or_default().insert(d);
        }
        let split = touched.values().filter(|s| s.len() > 1).count();
        let total: usize = touched.values().map(|s| s.len() - 1).sum();
        prop_assert_eq!(county_splits(&g, &plan), (split, total));
    }

    #[test]
    fn joining_districts_never_raises_perimeter((g, k, a) in graph_and_assignment(), pick in any::<(u32, u32)>()) {
        prop_assume!(k >= 2);
        let (x, y) = (pick.0 % k as u32, pick.1 % k as u32);
        prop_assume!(x != y);
        let fine = Plan::new(&g, k, a.clone()).unwrap();
        let (lo, hi) = (x.min(y), x.max(y));
        // fold `hi` into `lo` and close the label gap
        let coarse: Vec<u32> = a
            .iter()
            .map(|&d| if d == hi { lo } else if d > hi { d - 1 } else { d })
            .collect();
        let coarse = Plan::new(&g, k - 1, coarse).unwrap();
        prop_assert!(plan_perimeter(&g, &coarse) <= plan_perimeter(&g, &fine) + 1e-9);
    }

    #[test]
    fn canonical_labels_identify_relabelings(a in prop::collection::vec(0u32..4, 1..20), perm in Just([2u32, 0, 3, 1])) {
        let relabeled: Vec<u32> = a.iter().map(|&d| perm[d as usize]).collect();
        prop_assert_eq!(canonical_labels(&a), canonical_labels(&relabeled));
        let c = canonical_labels(&a);
        prop_assert_eq!(canonical_labels(&c), c);
    }

    #[test]
    fn recom_steps_preserve_validity(g in random_grid(), k in 2usize..4, weight in prop_oneof![Just(1.0), Just(20.0)], seed in any::<u64>()) {
        let tol = 0.5;
        let spec = BalanceSpec::for_graph(&g, k, tol).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let Ok(mut plan) = seed_plan(&g, k, &spec, &mut rng) else {
            return Ok(());
        };
        let cfg = ChainConfig::new(k, weight, tol, 10, seed);
        for _ in 0..10 {
            let Ok(out) = recom_step(&g, &plan, &cfg, &mut rng) else { break };
            prop_assert!(is_valid(&g, &out.plan, &spec));
            prop_assert_eq!(out.plan.district_populations().iter().sum::<u64>(), g.total_population());
            prop_assert_eq!(out.plan.recount_populations(&g), out.plan.district_populations().to_vec());
            // only the merged pair may change
            let (d1, d2) = out.merged_pair;
            for (old, new) in plan.assignment().iter().zip(out.plan.assignment()) {
                if *old != d1 && *old != d2 {
                    prop_assert_eq!(old, new);
                } else {
                    prop_assert!(*new == d1 || *new == d2);
                }
            }
            plan = out.plan;
        }
    }
}
