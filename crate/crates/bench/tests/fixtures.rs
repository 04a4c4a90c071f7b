use specshare::model::validate;
use specshare::iterative::run_alg2;
use specshare::{solve_symmetric, IterationSchedule, TraceStatus};
use specshare_bench::{symmetric_instance, weak_instance};

#[test]
fn symmetric_fixture_takes_the_closed_form() {
    let (config, g, p) = symmetric_instance();
    assert!(validate(&p, &g, &config, false).unwrap().is_empty());
    assert!(solve_symmetric(&p, &g, &config, 1e-9).is_ok());
    let trace = run_alg2(&g, &config, &IterationSchedule::default()).unwrap();
    assert_eq!(trace.status, TraceStatus::Converged);
}

#[test]
fn weak_fixture_is_feasible() {
    let (config, g, p) = weak_instance(6, 16);
    assert_eq!(config.sus().len(), 6);
    assert!(validate(&p, &g, &config, false).unwrap().is_empty());
}
