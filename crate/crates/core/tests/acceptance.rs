use std::process::ExitCode;
use std::time::{Duration, Instant};

use kinklab::collective::{classify_stability, small_osc_frequency, Placement, Stability, WellQuadratic};
use kinklab::config::{self, RunConfig};
use kinklab::diagnostics::{self, classify_outcome, Outcome, ProbeSeries};
use kinklab::dynamics::{self, perturbation_probe, EvolveConfig, InitialCondition};
use kinklab::model::meson_dispersion;
use kinklab::statics::{self, NewtonOptions, ShootOptions, StaticProblem, SweepCell, SweepOptions, WidthSpec, TABLE1};
use kinklab::{Grid, Impurity, ModelParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn free_mass() -> Verdict {
    let (energy, took) = timed(|| {
        let p = ModelParams::unit();
        let problem = StaticProblem::new(p, Impurity::none(), Grid::symmetric(20.0, 0.05).unwrap(), 0.0).unwrap();
        statics::solve_static(&problem, &NewtonOptions::default()).unwrap().energy
    });
    let target = 2.0 * 2f64.sqrt() / 3.0;
    let rel = (energy - target).abs() / target;
    verdict(
        rel <= 5e-3 && took < Duration::from_secs(1),
        format!("E = {energy:.6}, analytic {target:.6}, rel {rel:.2e}, {took:.2?}"),
    )
}

fn table() -> Verdict {
    let (rows, took) = timed(|| statics::table1_sweep(&SweepOptions::default()));
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for (row, &(_, _, _, paper)) in rows.iter().zip(TABLE1.iter()) {
        match row.energy() {
            Some(e) => worst = worst.max((e - paper).abs()),
            None => missing += 1,
        }
    }
    verdict(
        missing == 0 && rows.len() == 13 && worst <= 0.01 && took < Duration::from_secs(60),
        format!("max |E - E_table| = {worst:.4}, {missing} unsolved, {took:.2?}"),
    )
}

fn preset_run(name: &str) -> (RunConfig, dynamics::Trajectory, Duration) {
    let cfg = RunConfig::preset(name).unwrap();
    let ec = config::evolve_config(&cfg).unwrap();
    let (traj, took) = timed(|| dynamics::evolve(&ec).unwrap());
    (cfg, traj, took)
}

fn trapping() -> Verdict {
    let (cfg, traj, took) = preset_run("fig1");
    let outcome = classify_outcome(&traj, &cfg.imp, cfg.analysis.escape_radius);
    let series = ProbeSeries::from_trajectory(&traj, 0).unwrap();
    let env = diagnostics::envelope(&series).unwrap();
    let turning = env.turning_time;
    let early_decay = env
        .envelope_times
        .iter()
        .zip(&env.envelope_magnitudes)
        .filter(|(&t, _)| t <= 250.0)
        .map(|(_, &m)| m)
        .collect::<Vec<_>>();
    let decays = early_decay.first().zip(early_decay.last()).is_some_and(|(a, b)| b < a);
    let in_band = turning.is_some_and(|t| (t - 280.0).abs() <= 30.0);
    verdict(
        outcome == Outcome::Trapped && decays && in_band && took < Duration::from_secs(300),
        format!("outcome {outcome}, envelope decays before 250: {decays}, turning time {} (280 +/- 30), {took:.2?}",
            turning.map_or("none".to_string(), |t| format!("{t:.1}"))
        ),
    )
}

fn dissipation() -> Verdict {
    let (_, traj, took) = preset_run("fig2");
    let series = ProbeSeries::from_trajectory(&traj, 0).unwrap();
    let env = diagnostics::envelope(&series).unwrap();
    let monotone = env.decays_after_peak(0.0);
    let max = env.envelope_magnitudes.iter().cloned().fold(0.0, f64::max);
    let last = *env.envelope_magnitudes.last().unwrap();
    verdict(
        monotone && env.turning_time.is_none() && last < 0.1 * max,
        format!(
            "monotone after peak {monotone}, turning time {:?}, final/max = {:.3e}, {took:.2?}",
            env.turning_time,
            last / max
        ),
    )
}

fn energy_drift() -> Verdict {
    let drift = |dx: f64| {
        let mut cfg = EvolveConfig::new(
            ModelParams::unit(),
            Impurity::none(),
            Grid::symmetric(50.0, dx).unwrap(),
            100.0,
            InitialCondition::BoostedKink { x0: -10.0, v: 0.2 },
        );
        cfg.dt = 0.5 * dx;
        dynamics::evolve(&cfg).unwrap().relative_energy_drift()
    };
    let (coarse, fine) = (drift(0.1), drift(0.05));
    let ratio = coarse / fine;
    verdict(
        coarse <= 1e-3 && ratio >= 3.0,
        format!("drift {coarse:.3e} at dx 0.1, {fine:.3e} at dx 0.05, ratio {ratio:.2}"),
    )
}

fn triptych() -> Verdict {
    let p = ModelParams::unit();
    let cases = [
        (SweepCell::new(-1.0, 5.0, 0.0), Placement::CenteredAttractive),
        (SweepCell::new(-1.0, 5.0, 5.0), Placement::OffCenterAttractive),
        (SweepCell::new(1.0, 5.0, 0.0), Placement::BarrierTop),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (cell, placement) in cases {
        let problem = cell.problem(p, statics::DEFAULT_DX).unwrap();
        let profile = statics::solve_static(&problem, &NewtonOptions::default()).unwrap();
        let probe = perturbation_probe(&p, &problem.imp, &profile, 0.2, 40.0).unwrap();
        let pde = if probe.is_stable() { Stability::Stable } else { Stability::Unstable };
        let reduced = classify_stability(&p, &problem.imp, placement);
        let expected = match placement {
            Placement::CenteredAttractive => Stability::Stable,
            _ => Stability::Unstable,
        };
        pass &= pde == reduced && pde == expected;
        parts.push(format!("{placement:?} pde {pde} (excursion {:.3}) reduced {reduced}", probe.max_excursion));
    }
    verdict(pass, parts.join("; "))
}

fn frequency() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::preset("fig1").unwrap();
    let report = config::run(&cfg, dir.path()).unwrap();
    let emitted = report.summary.iter().any(|l| l.starts_with("frequency,"));
    let (_, traj, _) = preset_run("fig1");
    let series = ProbeSeries::from_trajectory(&traj, 0).unwrap().window(20.0, 260.0).unwrap();
    let measured = diagnostics::leading_frequency(&series).unwrap();
    let formula = small_osc_frequency(&WellQuadratic::from_impurity(&cfg.imp).unwrap()).unwrap();
    let rel = (measured - formula).abs() / formula;
    verdict(
        emitted && rel <= 0.35,
        format!("measured {measured:.4}, sqrt(2 mu) = {formula:.4}, rel {rel:.3} (limit 0.35), in summary: {emitted}"),
    )
}

fn causality() -> Verdict {
    let p = ModelParams::unit();
    let exact = meson_dispersion(&p, 0.0) == 2f64.sqrt();
    let dx = 0.1;
    let d = 50.0;
    let mut cfg = EvolveConfig::new(
        p,
        Impurity::none(),
        Grid::symmetric(70.0, dx).unwrap(),
        d,
        InitialCondition::VacuumPlusPulse {
            amplitude: 0.5,
            width: dx,
            center: 0.0,
        },
    );
    cfg.probes = vec![-d, d];
    let traj = dynamics::evolve(&cfg).unwrap();
    let bound = d - 3.0 * dx;
    let arrival = (0..2)
        .map(|k| {
            traj.times
                .iter()
                .zip(traj.probe(k))
                .find(|(_, v)| (*v - 1.0).abs() > 1e-6)
                .map_or(f64::INFINITY, |(t, _)| *t)
        })
        .fold(f64::INFINITY, f64::min);
    verdict(
        exact && arrival >= bound,
        format!("omega(0) exact: {exact}, first 1e-6 signal at |x| = 50 at t = {arrival:.3}, bound {bound:.3}"),
    )
}

fn shooting() -> Verdict {
    let p = ModelParams::unit();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &(h, w, x_c, _) in TABLE1.iter().filter(|r| r.0 < 0.0 && r.2 == 0.0) {
        let imp = WidthSpec::W(w).impurity(h, x_c).unwrap();
        let problem = StaticProblem::with_default_grid(p, imp, x_c).unwrap();
        let profile = statics::solve_static(&problem, &NewtonOptions::default()).unwrap();
        let shot = statics::shoot_centered(&problem, &ShootOptions::default()).unwrap();
        worst = worst.max(shot.max_deviation(&profile));
        count += 1;
    }
    verdict(worst <= 1e-4 && count == 3, format!("{count} centered wells, max deviation {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("free kink mass", free_mass),
        ("static energy table", table),
        ("trapping in a deep well", trapping),
        ("dissipation", dissipation),
        ("energy conservation", energy_drift),
        ("stability triptych", triptych),
        ("trapped oscillation frequency", frequency),
        ("causality and dispersion", causality),
        ("shooting vs Newton", shooting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("{} {} {}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, name, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
