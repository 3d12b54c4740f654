use posearch::netsim::{run_scenario, JobOutcome, Mode, ScenarioConfig};

fn scenario(mode: &str, seed: u64) -> ScenarioConfig {
    ScenarioConfig::from_json(&format!(
        r#"{{
            "seed": {seed},
            "duration": 60000000,
            "max_height": 30,
            "mode": "{mode}",
            "params": {{"n_target": 2, "reward": 1000, "z_min": 0, "e_floor": 128,
                        "genesis": [[100, 10000]]}},
            "delay": {{"uniform": {{"lo": 100, "hi": 5000}}}},
            "nodes": [
                {{"id": 1, "rate": 0.004}},
                {{"id": 2, "rate": 0.004}},
                {{"id": 100, "role": "client"}}
            ],
            "jobs": [{{"submit_time": 2000000, "client": 100, "charge": 500, "tsp": {{"cities": 6}}}}]
        }}"#
    ))
    .unwrap()
}

#[test]
fn statistical_run_is_deterministic() {
    let a = run_scenario(&scenario("statistical", 7));
    let b = run_scenario(&scenario("statistical", 7));
    assert_eq!(a.report, b.report);
    assert_eq!(a.report.mode, Mode::Statistical);
    assert!(a.report.height >= 30, "height {}", a.report.height);
    let c = run_scenario(&scenario("statistical", 8));
    assert_ne!(a.report.trace_digest, c.report.trace_digest);
}

#[test]
fn faithful_run_settles_job() {
    let out = run_scenario(&scenario("faithful", 3));
    let r = &out.report;
    assert_eq!(r.jobs[0].outcome, JobOutcome::Paid);
    assert_eq!(r.total_supply, 10000 + 1000 * r.height as u128);
}

fn with_jobs(mode: &str, genesis: u64, jobs: &str, extra: &str) -> ScenarioConfig {
    ScenarioConfig::from_json(&format!(
        r#"{{
            "seed": 11,
            "duration": 80000000,
            "max_height": 24,
            "mode": "{mode}",
            "params": {{"n_target": 2, "reward": 1000, "z_min": 0, "e_floor": 128,
                        "genesis": [[100, {genesis}]]}},
            "delay": {{"constant": 1000}},
            {extra}
            "nodes": [
                {{"id": 1, "rate": 0.004}},
                {{"id": 2, "rate": 0.004}},
                {{"id": 3, "rate": 0.004}},
                {{"id": 4, "rate": 0.004}},
                {{"id": 100, "role": "client"}}
            ],
            "jobs": [{jobs}]
        }}"#
    ))
    .unwrap()
}

const TWO_JOBS: &str = r#"{"submit_time": 2000000, "client": 100, "charge": 400, "tsp": {"cities": 5}},
    {"submit_time": 2000000, "client": 100, "charge": 300, "tag": 1, "tsp": {"cities": 6}}"#;

#[test]
fn jobs_from_one_client_both_settle() {
    let r = run_scenario(&with_jobs("statistical", 10_000, TWO_JOBS, "")).report;
    assert_eq!(r.jobs.len(), 2);
    assert!(
        r.jobs.iter().all(|j| j.outcome == JobOutcome::Paid),
        "{:?}",
        r.jobs
    );
    assert_eq!(r.balances[&100], 10_000 - 700);
    assert_eq!(r.escrow, 0);
}

#[test]
fn unfunded_job_is_never_scheduled() {
    let r = run_scenario(&with_jobs("statistical", 350, TWO_JOBS, "")).report;
    let outcomes: Vec<_> = r.jobs.iter().map(|j| j.outcome).collect();
    assert!(outcomes.contains(&JobOutcome::Unregistered), "{outcomes:?}");
    assert!(r
        .jobs
        .iter()
        .all(|j| j.outcome != JobOutcome::Unregistered || j.scheduled_height.is_none()));
    assert!(r.balances[&100] <= 350);
}

#[test]
fn gossip_topology_runs_and_repeats() {
    let cfg = with_jobs(
        "statistical",
        10_000,
        TWO_JOBS,
        r#""topology": {"random": {"degree": 2}},"#,
    );
    let a = run_scenario(&cfg).report;
    assert_eq!(a, run_scenario(&cfg).report);
    assert!(a.height >= 24);
    assert!(
        a.jobs.iter().all(|j| j.outcome == JobOutcome::Paid),
        "{:?}",
        a.jobs
    );
    assert_eq!(a.total_supply, 10_000 + 1000 * a.height as u128);
}

#[test]
fn modes_agree_on_block_time() {
    let target = 1_000_000.0;
    for mode in ["faithful", "statistical"] {
        let r = run_scenario(&with_jobs(mode, 10_000, "", "")).report;
        assert_eq!(r.block_time as f64, target);
        let late: Vec<u64> = r.block_times[8..].to_vec();
        let mean = late.iter().sum::<u64>() as f64 / late.len() as f64;
        // 16 blocks of two miniblocks each: relative spread of a mean is about 0.18
        assert!(
            (mean / target - 1.0).abs() < 0.6,
            "{mode}: mean block time {mean}"
        );
    }
}
