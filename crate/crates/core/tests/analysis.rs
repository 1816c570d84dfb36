use proptest::prelude::*;

use ergocert::ergodicity::{analyze, controller_feasibility, AnalysisConfig, ControllerSpec, Mode, Verdict};
use ergocert::network::{build_stoichiometry, RateParam, Reaction, ReactionNetwork};
use ergocert::par::Execution;
use ergocert::parse::{parse_network, serialize_network};
use ergocert::ssa::stationary_mean;

#[derive(Debug, Clone, Copy)]
enum Rates {
    Fixed,
    Free,
}

/// Unimolecular network with one parameter per reaction; every species
/// degrades so most draws are stable.
fn network(rates: Rates) -> impl Strategy<Value = ReactionNetwork> {
    (1usize..=4).prop_flat_map(move |d| {
        (
            prop::collection::vec(0.2f64..3.0, d),
            prop::collection::vec((0u8..4, 0..d, 0..d, 0.1f64..3.0), 0..=6),
        )
            .prop_map(move |(decay, raw)| {
                let species: Vec<String> = (0..d).map(|i| format!("X{i}")).collect();
                let mut params = Vec::new();
                let mut reactions = Vec::new();
                let mut push = |reaction: Reaction, value: f64, params: &mut Vec<RateParam>| {
                    let name = reaction.rate.clone();
                    params.push(match rates {
                        Rates::Fixed => RateParam::fixed(name, value),
                        Rates::Free => RateParam::free(name),
                    });
                    reactions.push(reaction);
                };
                for (i, g) in decay.into_iter().enumerate() {
                    push(Reaction::new([(i, 1)], [], format!("g{i}")), g, &mut params);
                }
                for (k, (kind, i, j, value)) in raw.into_iter().enumerate() {
                    let rate = format!("k{k}");
                    let j = if i == j { (j + 1) % d } else { j };
                    let r = match (kind, d > 1) {
                        (0, _) => Reaction::new([], [(i, 1)], rate),
                        (1, true) => Reaction::new([(i, 1)], [(i, 1), (j, 1)], rate),
                        (2, true) => Reaction::new([(i, 1)], [(j, 1)], rate),
                        _ => Reaction::new([(i, 1)], [(i, 2)], rate),
                    };
                    push(r, value, &mut params);
                }
                ReactionNetwork::new(species, params, reactions)
            })
    })
}

fn verdict(n: &ReactionNetwork, mode: Mode) -> Verdict {
    analyze(n, mode, &AnalysisConfig::default()).unwrap().verdict
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fixed_rate_modes_agree(n in network(Rates::Fixed)) {
        let nominal = verdict(&n, Mode::Nominal);
        prop_assert_eq!(nominal, verdict(&n, Mode::RobustParametric));
        prop_assert_eq!(nominal, verdict(&n, Mode::RobustConstantV));
    }

    #[test]
    fn structural_verdict_ignores_reaction_order(n in network(Rates::Free), rot in 0usize..8) {
        let mut shuffled = n.clone();
        let len = shuffled.reactions.len();
        shuffled.reactions.rotate_left(rot % len);
        shuffled.reactions.reverse();
        prop_assert_eq!(verdict(&n, Mode::Structural), verdict(&shuffled, Mode::Structural));
    }

    #[test]
    fn serialization_round_trips(n in network(Rates::Fixed)) {
        let back = parse_network(&serialize_network(&n)).unwrap();
        prop_assert_eq!(back, n);
    }

    #[test]
    fn partition_reassembles_the_stoichiometry(n in network(Rates::Free)) {
        let st = build_stoichiometry(&n).unwrap();
        let cols = st.column_reactions();
        let cat = st.concatenated();
        let d = n.num_species();
        for (c, &k) in cols.iter().enumerate() {
            let direct = n.reactions[k].stoichiometry(d);
            for i in 0..d {
                prop_assert_eq!(cat[(i, c)], direct[i]);
            }
        }
    }

    #[test]
    fn setpoint_bound_is_invariant_under_time_rescaling(n in network(Rates::Fixed), s in 0.1f64..10.0) {
        let cfg = AnalysisConfig::default();
        let spec = ControllerSpec::new(n.num_species() - 1, 1.0, 1.0);
        let Ok(base) = controller_feasibility(&n, &spec, &cfg) else { return Ok(()) };
        let mut scaled = n.clone();
        for p in &mut scaled.params {
            *p = RateParam::fixed(p.name.clone(), p.pinned_value().unwrap() * s);
        }
        let r = controller_feasibility(&scaled, &spec, &cfg).unwrap();
        prop_assert_eq!(r.output_controllable, base.output_controllable);
        let tol = 1e-6 * base.setpoint_lower_bound.abs().max(1.0);
        prop_assert!((r.setpoint_lower_bound - base.setpoint_lower_bound).abs() <= tol);
    }
}

fn birth_death() -> ReactionNetwork {
    parse_network("species: X\nparam k = 10\nparam g = 1\nreaction: 0 -> X @ k\nreaction: X -> 0 @ g\n").unwrap()
}

#[test]
fn simulation_is_reproducible_across_execution_modes() {
    let n = birth_death();
    let a = stationary_mean(&n, &[0], 20.0, 0.5, 16, 7, Execution::Sequential).unwrap();
    let b = stationary_mean(&n, &[0], 20.0, 0.5, 16, 7, Execution::Parallel).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std_error, b.std_error);
    let c = stationary_mean(&n, &[0], 20.0, 0.5, 16, 8, Execution::Sequential).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn birth_death_mean_matches_poisson() {
    // stationary law is Poisson(k/g)
    let est = stationary_mean(&birth_death(), &[0], 400.0, 0.25, 24, 11, Execution::default()).unwrap();
    assert!((est.mean[0] - 10.0).abs() < 4.0 * est.std_error[0].max(0.05), "mean {}", est.mean[0]);
    assert!(matches!(verdict(&birth_death(), Mode::Nominal), Verdict::Certified));
}
