use nlschwarz::problems::{dw_build_tau, dw_step_system, DwParams, NonlinearSystem};
use nlschwarz::scenarios::{Discretization, DomainSetup, InclinedScene, OVERLAP_FRACTION};
use nlschwarz::solvers::{Counters, Method, SolverConfig};
use nlschwarz::timestepping::{
    depth_stats, local_continuation, next_time_step, run_transient, DwScene, TimeLoopConfig, FLOODED_DEPTH,
};
use nlschwarz::Error;
use proptest::prelude::*;

/// Mock family: Newton for step `dt` from a state that reached `s` works
/// iff `dt <= s + reach`; the root of `F_dt` is `dt`.
fn mock(reach: f64, log: &mut Vec<f64>) -> impl FnMut(f64, &[f64]) -> Option<Vec<f64>> + '_ {
    move |dt, u| {
        log.push(dt);
        (dt <= u[0] + reach).then(|| vec![dt])
    }
}

/// Procedure 1 written out as straight-line control flow.
fn scripted(dt: f64, reach: f64, floor: f64) -> Option<Vec<f64>> {
    let works = |dt: f64, s: f64| dt <= s + reach;
    let mut seq = vec![];
    let mut state = 0.0;
    let mut worked = dt;
    loop {
        seq.push(worked);
        if works(worked, state) {
            state = worked;
            break;
        }
        worked /= 2.0;
        if worked < floor {
            return None;
        }
    }
    if worked == dt {
        return Some(seq);
    }
    loop {
        seq.push(dt);
        if works(dt, state) {
            return Some(seq);
        }
        let mut trial = (worked + dt) / 2.0;
        loop {
            if trial - worked < floor {
                return None;
            }
            seq.push(trial);
            if works(trial, state) {
                state = trial;
                worked = trial;
                break;
            }
            trial = (worked + trial) / 2.0;
        }
    }
}

#[test]
fn continuation_follows_the_halving_then_bisection_schedule() {
    let mut log = vec![];
    let out = local_continuation(1.0, 1.0 / 1024.0, &[0.0], mock(0.3, &mut log)).unwrap();
    let expected = [1.0, 0.5, 0.25, 1.0, 0.625, 0.4375, 1.0, 0.71875, 1.0];
    assert_eq!(out.attempts, expected);
    assert_eq!(log, expected);
    assert_eq!(out.u, vec![1.0]);
}

#[test]
fn continuation_is_a_no_op_when_the_full_step_works() {
    let mut log = vec![];
    let out = local_continuation(2.0, 0.01, &[0.0], mock(5.0, &mut log)).unwrap();
    assert_eq!(out.attempts, [2.0]);
    assert_eq!(out.u, [2.0]);
}

#[test]
fn continuation_underflows_below_the_floor() {
    let mut log = vec![];
    let err = local_continuation(1.0, 0.1, &[0.0], mock(0.01, &mut log)).unwrap_err();
    assert!(matches!(err, Error::TimeStepUnderflow { .. }));
    // 1, 1/2, 1/4, 1/8 fail; 1/16 is below the floor
    assert_eq!(log, [1.0, 0.5, 0.25, 0.125]);
}

#[test]
fn failed_attempts_keep_the_previous_iterate() {
    let mut seen = vec![];
    let attempt = |dt: f64, u: &[f64]| {
        seen.push(u[0]);
        (dt <= u[0] + 0.3).then(|| vec![dt])
    };
    local_continuation(1.0, 1e-3, &[0.0], attempt).unwrap();
    assert_eq!(seen, [0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.4375, 0.4375, 0.71875]);
}

proptest! {
    #[test]
    fn continuation_matches_the_scripted_procedure(reach in 0.001f64..2.0, dt in 0.1f64..10.0) {
        let floor = dt / 1024.0;
        let mut log = vec![];
        let got = local_continuation(dt, floor, &[0.0], mock(reach, &mut log));
        match scripted(dt, reach, floor) {
            Some(seq) => {
                let out = got.unwrap();
                prop_assert_eq!(&out.attempts, &seq);
                prop_assert_eq!(out.u, vec![dt]);
            }
            None => prop_assert!(got.is_err()),
        }
    }
}

#[test]
fn adaptive_policy_values() {
    let r2 = 2f64.sqrt();
    assert!((next_time_step(10.0, false, r2, 10.0) - 10.0 / r2).abs() < 1e-12);
    assert_eq!(next_time_step(10.0 / r2, true, r2, 10.0), 10.0);
    assert!((next_time_step(5.0, true, r2, 10.0) - 5.0 * r2).abs() < 1e-12);
    assert_eq!(next_time_step(10.0, true, r2, 10.0), 10.0);
}

#[test]
fn newton_uses_the_adaptive_policy_by_default() {
    let c = TimeLoopConfig::new(100.0, 10.0, Method::Newton);
    assert!(c.global_adaptive);
    assert!((c.factor - 2f64.sqrt()).abs() < 1e-15);
    for m in [Method::TwoStep, Method::Raspen1, Method::Raspen2, Method::Anderson] {
        assert!(!TimeLoopConfig::new(100.0, 10.0, m).global_adaptive);
    }
    assert!(TimeLoopConfig { final_time: 0.0, ..c.clone() }.validate().is_err());
    assert!(TimeLoopConfig { factor: 1.0, ..c }.validate().is_err());
}

fn small_scene(flat: bool) -> (Discretization<f64>, Vec<f64>, DomainSetup<f64>) {
    let scene = InclinedScene {
        width: 12.0,
        length: 24.0,
        finest: [1, 2],
        target_h: 1.0,
        buildings: 2,
        flat,
        ..InclinedScene::default()
    };
    let (disc, zb) = scene.build().unwrap();
    let setup = disc.decompose(1, 2, OVERLAP_FRACTION, 1).unwrap();
    (disc, zb, setup)
}

fn scene<'a>(disc: &'a Discretization<f64>, zb: &'a [f64]) -> DwScene<'a, f64> {
    DwScene { mesh: &disc.mesh, fem: &disc.fem, free: &disc.free, zb, params: DwParams::default() }
}

#[test]
fn last_step_is_clipped_to_the_final_time() {
    let (disc, zb, setup) = small_scene(false);
    let config = TimeLoopConfig::new(25.0, 10.0, Method::Raspen2);
    let report = run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &SolverConfig::default()).unwrap();
    let dts: Vec<f64> = report.steps.iter().map(|s| s.dt).collect();
    assert_eq!(dts, [10.0, 10.0, 5.0]);
    assert_eq!(report.steps.last().unwrap().t, 25.0);
    assert_eq!(report.reductions, 0);
}

#[test]
fn flat_dry_ground_stays_dry() {
    let (disc, zb, setup) = small_scene(true);
    for method in Method::ALL {
        let config = TimeLoopConfig::new(30.0, 10.0, method);
        let report = run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &SolverConfig::default()).unwrap();
        assert_eq!(report.u, zb, "{method}");
        assert!(report.steps.iter().all(|s| s.flooded == 0 && s.volume == 0.0), "{method}");
    }
}

#[test]
fn inflow_volume_does_not_decrease() {
    let (disc, zb, setup) = small_scene(false);
    for method in [Method::Newton, Method::Raspen2] {
        let config = TimeLoopConfig::new(60.0, 10.0, method);
        let report = run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &SolverConfig::default()).unwrap();
        let volumes: Vec<f64> = report.steps.iter().map(|s| s.volume).collect();
        assert!(volumes[0] > 0.0);
        assert!(volumes.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{method}: {volumes:?}");
        assert!(report.steps.iter().all(|s| s.flooded > 0));
    }
}

#[test]
fn all_methods_agree_on_the_transient_solution() {
    let (disc, zb, setup) = small_scene(false);
    let solver = SolverConfig { outer_tol: 1e-12, outer_abs_tol: 1e-12, ..SolverConfig::default() };
    let run = |method| {
        let config = TimeLoopConfig { global_adaptive: false, ..TimeLoopConfig::new(30.0, 10.0, method) };
        run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &solver).unwrap().u
    };
    let reference = run(Method::Newton);
    for method in [Method::TwoStep, Method::Raspen1, Method::Raspen2, Method::Anderson] {
        let u = run(method);
        let d = u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{method}: {d:e}");
    }
}

#[test]
fn newton_failures_shrink_then_regrow_the_step() {
    let (disc, zb, setup) = small_scene(false);
    // few outer iterations make the full step fail
    let solver = SolverConfig { max_outer: 3, ..SolverConfig::default() };
    let config = TimeLoopConfig::new(60.0, 10.0, Method::Newton);
    let report = run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &solver).unwrap();
    assert!(report.reductions > 0);
    let r2 = 2f64.sqrt();
    let mut dt = 10.0;
    for s in &report.steps {
        for _ in 0..s.rejected {
            dt /= r2;
        }
        let expected = dt.min(60.0 - (s.t - s.dt));
        assert!((s.dt - expected).abs() < 1e-9, "step {}: {} vs {}", s.step, s.dt, expected);
        dt = (dt * r2).min(10.0);
    }
    assert!((report.steps.last().unwrap().t - 60.0).abs() < 1e-9);
}

#[test]
fn fixed_step_methods_fail_without_reduction() {
    let (disc, zb, setup) = small_scene(false);
    let solver = SolverConfig { max_outer: 1, ..SolverConfig::default() };
    let config = TimeLoopConfig::new(20.0, 10.0, Method::Raspen1);
    let err = run_transient(&scene(&disc, &zb), &setup.schwarz, &zb, &config, &solver).unwrap_err();
    assert!(matches!(err, Error::StepFailed { step: 0, .. }), "{err}");
}

#[test]
fn local_continuation_rescues_failed_subdomain_solves() {
    let (disc, zb, setup) = small_scene(false);
    let params = DwParams::default();
    let tau = dw_build_tau(&disc.mesh, &disc.fem, &zb, &params).unwrap();
    let sys = dw_step_system(&disc.mesh, &disc.fem, disc.free.clone(), &tau, &zb, &zb, 200.0, params.alpha).unwrap();
    let u0 = disc.free.to_free(&zb);
    let strict = SolverConfig { max_local_newton: 5, ..SolverConfig::default() };
    let mut counters = Counters::new(setup.schwarz.len());
    let without = SolverConfig { local_continuation: false, ..strict.clone() };
    assert!(setup.schwarz.nras(&sys, &u0, &without, false, &mut counters).is_err());
    let mut counters = Counters::new(setup.schwarz.len());
    let out = setup.schwarz.nras(&sys, &u0, &strict, false, &mut counters).unwrap();
    assert!(counters.continuations > 0);
    // the rescued local solutions solve the full-step local problems
    for (j, local) in out.locals.iter().enumerate() {
        let dofs = setup.schwarz.subdomain_dofs(j);
        let mut w = u0.clone();
        for (&i, &v) in dofs.iter().zip(&local.values) {
            w[i] = v;
        }
        let r = dofs.iter().map(|&i| sys.residual_row(i, &w).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-12, "subdomain {j}: {r:e}");
    }
}

#[test]
fn depth_statistics_use_the_flooded_threshold() {
    let (disc, zb, _) = small_scene(true);
    let mut u = zb.clone();
    let free = disc.free.free_nodes();
    u[free[0]] += FLOODED_DEPTH;
    u[free[1]] += FLOODED_DEPTH / 2.0;
    u[free[2]] -= 1.0;
    let (flooded, max_depth, volume) = depth_stats(&u, &zb, &disc.free, &disc.fem);
    assert_eq!(flooded, 1);
    assert_eq!(max_depth, FLOODED_DEPTH);
    let m = &disc.fem.lumped_mass;
    assert!((volume - FLOODED_DEPTH * (m[free[0]] + m[free[1]] / 2.0)).abs() < 1e-15);
}
