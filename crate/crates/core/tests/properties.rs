mod common;

use proptest::prelude::*;

use common::*;
use wcn::access::{
    paying_best_response, solve_equilibrium, verify_equilibrium, AccessGameInstance, ApId, EquilibriumCache,
    PaymentType, Player, SolverConfig, UserId,
};
use wcn::expectation::ExpectationConfig;
use wcn::membership::{smoothed_choice, Role, UserProfile};
use wcn::operator::operator_revenue;
use wcn::rate::{expected_rate, occupancy_distribution, per_user_rate, RateModelParams};
use wcn::report::fmt_num;
use wcn::scenario::Scenario;

fn rate_params() -> impl Strategy<Value = RateModelParams> {
    (0.01f64..0.5, 1000.0f64..20000.0, 5.0f64..60.0, 50.0f64..500.0, 50.0f64..500.0).prop_map(|(tau, l, tb, tc, ts)| {
        RateModelParams { tau, payload_bits: l, backoff_slot_us: tb, collision_slot_us: tc, success_slot_us: ts }
    })
}

fn players(max: usize) -> impl Strategy<Value = Vec<(bool, f64)>> {
    prop::collection::vec((any::<bool>(), 0.0f64..2.0), 0..=max)
}

fn instance(spec: &[(bool, f64)], price: f64) -> AccessGameInstance {
    let roster = spec
        .iter()
        .enumerate()
        .map(|(j, &(free, rho))| Player {
            user: UserId(j + 1),
            payment: if free { PaymentType::Free } else { PaymentType::Paying },
            rho,
        })
        .collect();
    AccessGameInstance::new(ApId(0), UserId(0), roster, price, RateModelParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_positive_and_decreasing(params in rate_params(), n in 1usize..40) {
        let a = per_user_rate(n, &params).unwrap();
        let b = per_user_rate(n + 1, &params).unwrap();
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b < a);
    }

    #[test]
    fn occupancy_is_a_distribution(s in prop::collection::vec(0.0f64..=1.0, 0..30)) {
        let d = occupancy_distribution(&s).unwrap();
        prop_assert_eq!(d.probs().len(), s.len() + 1);
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = d.probs().iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        prop_assert!((mean - s.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn expected_rate_between_extremes(s in prop::collection::vec(0.0f64..=1.0, 0..12)) {
        let p = RateModelParams::default();
        let r = expected_rate(&s, &p).unwrap();
        let lo = per_user_rate(s.len() + 1, &p).unwrap();
        let hi = per_user_rate(1, &p).unwrap();
        prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
    }

    #[test]
    fn paying_response_in_unit_interval(rho in 0.0f64..5.0, price in 0.01f64..5.0, rate in 0.01f64..50.0) {
        let s = paying_best_response(rho, price, rate);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn equilibria_pass_deviation_check(spec in players(4), price in 0.2f64..2.0) {
        let inst = instance(&spec, price);
        let eq = solve_equilibrium(&inst, &SolverConfig::default()).unwrap();
        prop_assert!(eq.converged);
        for (p, s) in inst.players().iter().zip(&eq.profile.sigma) {
            prop_assert!((0.0..=1.0).contains(s));
            if p.payment == PaymentType::Free {
                prop_assert_eq!(*s, 1.0);
            }
        }
        prop_assert!(verify_equilibrium(&inst, &eq.profile, 1e-2).unwrap() <= 1e-6);
    }

    #[test]
    fn cache_ignores_roster_order(spec in players(4), price in 0.2f64..2.0, rot in 0usize..4) {
        let cache = EquilibriumCache::new(SolverConfig::default()).unwrap();
        let a = instance(&spec, price);
        let mut rotated = spec.clone();
        if !rotated.is_empty() {
            let r = rot % rotated.len();
            rotated.rotate_left(r);
        }
        let b = instance(&rotated, price);
        let sa = cache.solve(&a).unwrap();
        let sb = cache.solve(&b).unwrap();
        // match players by (type, rho)
        for (i, p) in a.players().iter().enumerate() {
            let j = b.players().iter().position(|q| q.payment == p.payment && q.rho == p.rho).unwrap();
            prop_assert_eq!(sa.sigma[i].to_bits(), sb.sigma[j].to_bits());
        }
    }

    #[test]
    fn smoothed_choice_strictly_inside(z in -30.0f64..30.0, gamma in 0.05f64..100.0) {
        let d = z * gamma;
        let a = smoothed_choice(d, 0.0, gamma);
        prop_assert!(a > 0.0 && a < 1.0);
        let b = smoothed_choice(0.0, d, gamma);
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fmt_num_round_trips(x in -1e9f64..1e9) {
        let s = fmt_num(x);
        prop_assert!(!s.contains('e'));
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_revenue_nonnegative_and_conserved(seed in any::<u64>(), alpha in prop::collection::vec(0.0f64..=1.0, 2)) {
        let mut rng = rng(seed);
        let g = random_game(&mut rng, 2, 2);
        let r = operator_revenue(&g, &alpha).unwrap();
        prop_assert!(r.operator_revenue.mean >= 0.0);
        let gap = r.total_payments.mean - r.operator_revenue.mean - r.bill_shares.mean;
        prop_assert!(gap.abs() <= 1e-9);
    }

    #[test]
    fn presence_sets_partition(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_game(&mut rng, 2, 3);
        let pop = g.population();
        let owner = pop.owner(ApId(1)).unwrap();
        let others: Vec<UserId> = (0..pop.len()).map(UserId).filter(|u| *u != owner).collect();
        let total: f64 = subsets(&others)
            .iter()
            .map(|s| wcn::membership::presence_probability(pop, s, ApId(1), &[]).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_decides_pure_equilibrium(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_game(&mut rng, 3, 1);
        let x = random_bits(&mut rng, 3);
        let check = g.is_pure_equilibrium(&x).unwrap();
        for (i, u) in g.population().subscriber_ids().enumerate() {
            let stay = g.overall_payoff(u, x[i], &x).unwrap().mean;
            let flip = g.overall_payoff(u, !x[i], &x).unwrap().mean;
            prop_assert_eq!(check.violations.contains(&u), flip > stay);
        }
    }

    #[test]
    fn threshold_is_sound(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let g = random_game(&mut rng, 3, 1);
        let x = random_bits(&mut rng, 3);
        let sub = UserId(0);
        if let Ok(eta_bar) = g.bill_threshold(sub, &x) {
            for step in 1..=4 {
                let eta = eta_bar.max(0.0) + (1.0 - eta_bar.max(0.0)) * step as f64 / 4.0;
                if eta <= eta_bar || eta > 1.0 {
                    continue;
                }
                let h = with_home_probability(&g, sub, eta);
                prop_assert!(h.payoff_gap(sub, &x).unwrap().mean >= -1e-12);
            }
        }
    }

    #[test]
    fn mixed_trajectory_is_deterministic(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let users = random_users(&mut rng, 2, 1);
        let cfg = wcn::membership::MixedConfig { gamma: 0.05, tol: 1e-8, max_iters: 50, annealing: None };
        let run = |mode: ExpectationConfig| {
            let g = make_game(users.clone(), vec![1.0; 2], 0.5, 1.0, mode);
            g.solve_mixed_equilibrium(&[0.5, 0.5], &cfg).unwrap().trajectory
        };
        let a = run(ExpectationConfig::monte_carlo(500, 9));
        let b = run(ExpectationConfig::monte_carlo(500, 9));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scenario_round_trip(seed in any::<u64>(), k in 1usize..4, aliens in 0usize..3) {
        let mut rng = rng(seed);
        let mut users = random_users(&mut rng, k, aliens);
        users[0].home_rate = Some(3.5);
        let mut text = String::from("seed = 3\ntime_slots = 2.5\n[pricing]\nprice = 0.75\ndelta = 0.25\n");
        for u in &users {
            let role = if u.role == Role::Subscriber { "subscriber" } else { "alien" };
            let row: Vec<String> = u.mobility.iter().map(|v| format!("{v:?}")).collect();
            text.push_str(&format!("[[users]]\nid = \"{}\"\nrole = \"{role}\"\nrho = {:?}\nmobility = [{}]\n", u.id, u.rho, row.join(", ")));
            if let Some(r) = u.home_rate {
                text.push_str(&format!("home_rate = {r:?}\n"));
            }
        }
        let s = Scenario::from_toml(&text, "generated").unwrap();
        let again = Scenario::from_toml(&s.to_toml(), "again").unwrap();
        prop_assert_eq!(&s, &again);
        let parsed: Vec<UserProfile> = s.population.users().to_vec();
        prop_assert_eq!(parsed, users);
    }
}
