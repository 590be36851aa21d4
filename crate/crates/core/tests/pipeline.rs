//! End-to-end behaviour of the scenario pipeline on small communities.

mod common;

use cems_core::domain::{load_community_config, replication_config, to_json_string};
use cems_core::milp::{big_m_value, build_home_model, build_system_centric_model};
use cems_core::scenarios::{
    bench_scaling, compare, config_digest, run_scenarios, solve_homes, ScenarioError,
};
use cems_core::solve::{extract_home_schedule, solve_model};
use cems_core::{HighsSolver, ScenarioKind, SolveStatus, SolverOptions};
use common::{community, ess, home, hvac, pv, random_config};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tight() -> SolverOptions {
    SolverOptions {
        relative_mip_gap: 1e-9,
        ..SolverOptions::default()
    }
}

#[test]
fn scenario_costs_are_ordered_on_random_communities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..12 {
        let config = random_config(&mut rng, 2 + case % 3, 3 + case % 4);
        let results = run_scenarios(&config, &tight(), &ScenarioKind::ALL, &HighsSolver::default(), Some(2)).unwrap();
        let cost: Vec<f64> = results.iter().map(|r| r.community_cost).collect();
        let slack = 1e-6 * (1.0 + cost[1].abs());
        assert!(cost[0] <= cost[1] + slack, "case {case}: system {} > prosumer {}", cost[0], cost[1]);
        assert!(cost[1] <= cost[2] + slack, "case {case}: prosumer {} > no-CEMS {}", cost[1], cost[2]);
        for r in &results {
            assert!(r.feasibility.is_feasible(), "case {case} {}", r.kind);
            assert!(r.settlement.budget_residual.abs() <= 1e-9 * (1.0 + r.community_cost.abs()));
        }
    }
}

#[test]
fn no_cems_homes_pay_their_own_provider_bill() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let config = random_config(&mut rng, 3, 4);
    let results = run_scenarios(
        &config,
        &tight(),
        &[ScenarioKind::ProsumerCentric, ScenarioKind::NoCems],
        &HighsSolver::default(),
        None,
    )
    .unwrap();
    // Same schedules; only the settlement differs.
    assert_eq!(results[0].schedule, results[1].schedule);
    let direct: f64 = results[1].settlement.per_home_daily_cost.iter().sum();
    assert!((direct - results[1].community_cost).abs() < 1e-9);
    for (local, own) in results[0]
        .settlement
        .per_home_daily_cost
        .iter()
        .zip(&results[1].settlement.per_home_daily_cost)
    {
        assert!(local <= &(own + 1e-9), "local market made a home worse off: {local} > {own}");
    }
}

#[test]
fn home_solves_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = random_config(&mut rng, 5, 4);
    let solver = HighsSolver::default();
    let serial = solve_homes(&config, &tight(), &solver, 1).unwrap();
    let parallel = solve_homes(&config, &tight(), &solver, 4).unwrap();
    assert_eq!(serial.schedules, parallel.schedules);
    assert_eq!(serial.status, SolveStatus::Optimal);
}

#[test]
fn relaxation_bounds_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let config = random_config(&mut rng, 2, 4);
        let model = build_system_centric_model(&config).unwrap();
        let milp = solve_model(&model, &tight()).unwrap().objective.unwrap();
        let lp = solve_model(&model.lp_relaxation(), &tight()).unwrap().objective.unwrap();
        assert!(lp <= milp + 1e-6 * (1.0 + milp.abs()), "relaxation {lp} above optimum {milp}");
    }
}

#[test]
fn derived_big_m_covers_every_solved_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let config = random_config(&mut rng, 3, 4);
        let m = big_m_value(&config).value;
        let results =
            run_scenarios(&config, &tight(), &ScenarioKind::ALL, &HighsSolver::default(), None).unwrap();
        for r in &results {
            for (k, c) in r.schedule.community.iter().enumerate() {
                assert!(c.net.abs() <= m, "slot {k}: gap {} exceeds M {m}", c.net);
                let cost = config.buy_price[k] * c.net.abs();
                assert!(cost <= m, "slot {k}: cost {cost} exceeds M {m}");
            }
        }
    }
}

#[test]
fn bare_home_at_flat_price_heats_just_enough() {
    let h = hvac();
    let t_out = vec![40.0, 44.0, 50.0, 47.0];
    let load = vec![0.5, 0.7, 0.9, 0.6];
    let price = 9.0;
    let config = community(vec![home("a", h.clone(), None, None, load.clone())], vec![price; 4], t_out.clone(), vec![0.0; 4]);

    // At a flat price the cheapest policy keeps the room at the lower comfort
    // bound: heating earlier only loses more heat to the outside.
    let mut t_in = h.t_in_initial;
    let mut expected = 0.0;
    for k in 0..4 {
        let needed = ((h.t_min - h.epsilon * t_in) / (1.0 - h.epsilon) - t_out[k]) * h.conductivity_a / h.eta_hvac;
        let p = needed.max(0.0);
        t_in = h.epsilon * t_in + (1.0 - h.epsilon) * (t_out[k] + h.eta_hvac / h.conductivity_a * p);
        expected += price * (load[k] + p);
    }

    let model = build_home_model(0, &config).unwrap();
    let solution = solve_model(&model, &tight()).unwrap();
    let cost = solution.objective.unwrap();
    assert!((cost - expected).abs() < 1e-6 * (1.0 + expected), "{cost} vs {expected}");
}

#[test]
fn pv_home_sells_exactly_its_surplus() {
    let h = hvac();
    // Indoor temperature starts at the outdoor one, so no heating is needed.
    let t_out = vec![70.7, 70.7];
    let mut h0 = h.clone();
    h0.t_in_initial = 70.7;
    let load = vec![0.4, 0.6];
    let config = community(
        vec![home("pv", h0, None, Some(pv(10.0)), load.clone())],
        vec![8.0, 11.0],
        t_out,
        vec![0.9, 0.7],
    );
    let model = build_home_model(0, &config).unwrap();
    let solution = solve_model(&model, &tight()).unwrap();
    let schedule = extract_home_schedule(&solution, &model, &config, 0).unwrap();
    let res = config.res_output(0);
    for k in 0..2 {
        let s = &schedule.slots[k];
        assert!(s.hvac_power.abs() < 1e-9);
        assert!((s.com_sell - (res[k] - load[k])).abs() < 1e-9, "slot {k}: sold {}", s.com_sell);
        assert!(s.com_buy.abs() < 1e-9);
    }
}

#[test]
fn comparison_reports_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let config = random_config(&mut rng, 3, 5);
    let render = || {
        let results = run_scenarios(&config, &tight(), &ScenarioKind::ALL, &HighsSolver::default(), None).unwrap();
        let report = compare(&results).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        report.write_csv(&mut a).unwrap();
        report.write_home_costs_csv(&mut b).unwrap();
        report.write_provider_flows_csv(&mut c).unwrap();
        (a, b, c, report.to_json())
    };
    let first = render();
    assert_eq!(first, render());
    let table = String::from_utf8(first.0).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "scenario,status,community_cost,cost_delta,max_violation,peak_warnings");
    assert!(lines[1].starts_with("system_centric,optimal,"));
    let homes = String::from_utf8(first.1).unwrap();
    assert_eq!(homes.lines().count(), 1 + 3 * 3);
    let flows = String::from_utf8(first.2).unwrap();
    assert_eq!(flows.lines().count(), 1 + 3 * 5);
}

#[test]
fn compare_rejects_results_from_different_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_config(&mut rng, 1, 2);
    let b = random_config(&mut rng, 1, 2);
    let solver = HighsSolver::default();
    let mut results = run_scenarios(&a, &tight(), &[ScenarioKind::SystemCentric], &solver, None).unwrap();
    results.extend(run_scenarios(&b, &tight(), &[ScenarioKind::NoCems], &solver, None).unwrap());
    assert!(matches!(compare(&results), Err(ScenarioError::Mismatch(_))));
}

#[test]
fn infeasible_comfort_is_reported_not_solved() {
    let mut h = hvac();
    h.p_max = 0.1;
    let config = community(vec![home("cold", h, None, None, vec![0.5, 0.5])], vec![8.0, 8.0], vec![0.0, 0.0], vec![0.0, 0.0]);
    let err = run_scenarios(&config, &tight(), &[ScenarioKind::SystemCentric], &HighsSolver::default(), None)
        .unwrap_err();
    match err {
        ScenarioError::NotSolved { status, .. } => assert_eq!(status, SolveStatus::Infeasible),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn bench_rows_follow_requested_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let template = random_config(&mut rng, 4, 3);
    let report = bench_scaling(&[1, 4, 8], 1, &template, &tight()).unwrap();
    let sizes: Vec<usize> = report.rows.iter().map(|r| r.n_homes).collect();
    assert_eq!(sizes, [1, 4, 8]);
    assert!(report.rows.iter().all(|r| r.status == "optimal" && r.error.is_none()));
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n_homes,variables,binaries,constraints,status,objective,gap,error");
    assert_eq!(text.lines().count(), 4);
    assert!(bench_scaling(&[], 1, &template, &tight()).is_err());
}

#[test]
fn bundled_dataset_round_trips_and_has_stable_digest() {
    let config = replication_config();
    assert_eq!(config.n_homes(), 10);
    let again = load_community_config(to_json_string(&config).as_bytes()).unwrap();
    assert_eq!(config, again);
    assert_eq!(config_digest(&config), config_digest(&again));
    let mut other = config.clone();
    other.alpha = 0.7;
    assert_ne!(config_digest(&config), config_digest(&other));
}

#[test]
fn battery_homes_return_to_their_initial_level() {
    let config = community(
        vec![home("b", hvac(), Some(ess(8.0)), Some(pv(6.0)), vec![0.5, 0.6, 1.2, 1.4])],
        vec![5.0, 6.0, 12.0, 13.0],
        vec![50.0, 52.0, 55.0, 50.0],
        vec![0.6, 0.8, 0.1, 0.0],
    );
    let model = build_system_centric_model(&config).unwrap();
    let solution = solve_model(&model, &tight()).unwrap();
    let schedule = cems_core::solve::extract_schedule(&solution, &model, &config).unwrap();
    let last = schedule.homes[0].slots.last().unwrap();
    assert!((last.ess_level - 0.5).abs() < 1e-9);
    // Cheap, sunny mornings and dear evenings: the battery is used.
    assert!(schedule.homes[0].slots.iter().any(|s| s.discharge() > 1e-6));
}
