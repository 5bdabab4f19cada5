//! Acceptance gate. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rk_stepsize::control::{ParamSet, ParamTriple};
use rk_stepsize::problems::{self, C5Data, Registry, ALL_IDS, GROUP_II, REFERENCE_TAU};
use rk_stepsize::tuner::{objective, tune, tune_with, Bounds, TuneSpec};
use rk_stepsize::workbench::{
    compare, curves_to_csv, default_targets, default_tau_grid, sweep, ControllerSpec, RatioTable,
};
use rk_stepsize::{
    accept, clamp, decide, dp54_tableau, embedded_step, integrate, propose, validate_tableau,
    ControllerKind, ControllerParams, IntegrationLimits,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what}: {got} vs {want}"))
}

fn new_opt(tau: f64) -> ControllerParams {
    ControllerParams::dp54(ControllerKind::New, tau, ParamSet::NewOptimized).unwrap()
}

fn std_opt(tau: f64) -> ControllerParams {
    ControllerParams::dp54(ControllerKind::Standard, tau, ParamSet::StandardOptimized).unwrap()
}

fn ids(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn group2() -> Vec<String> {
    ids(&GROUP_II)
}

fn group1() -> Vec<String> {
    let (kept, _dropped) = Registry::new().resolve_suite("group1").unwrap();
    kept
}

fn spec(kind: ControllerKind, set: ParamSet) -> ControllerSpec {
    ControllerSpec::named(kind, set)
}

fn ac1() -> Outcome {
    const TOL: f64 = 1e-12;
    close(propose(&new_opt(1e-6), 0.1, 1e-5), 0.1, TOL, "propose new, tau/(eps h) = 1")?;
    close(
        propose(&new_opt(1e-4), 0.2, 2e-3),
        0.2 * 0.25f64.powf(1.0 / 6.0),
        TOL,
        "propose new",
    )?;
    close(
        propose(&std_opt(1e-4), 0.2, 2e-3),
        0.2 * 0.05f64.powf(1.0 / 6.0),
        TOL,
        "propose standard",
    )?;
    close(clamp(&new_opt(1e-6), 0.2, 1.5), 1.0, TOL, "clamp above")?;
    close(clamp(&new_opt(1e-6), 0.2, 0.05), 0.134, TOL, "clamp below")?;
    close(clamp(&std_opt(1e-6), 0.2, 0.121392), 0.121392, 0.0, "clamp inside")?;
    ensure(accept(&new_opt(1e-4), 0.2, 2e-3), || "new should accept".into())?;
    ensure(!accept(&std_opt(1e-4), 0.2, 2e-3), || "standard should reject".into())?;
    for kind in ControllerKind::ALL {
        let p = ControllerParams::new(kind, 1e-4, ParamTriple::new(2.0, 0.3, 3.5), 5).unwrap();
        let d = decide(&p, 0.2, 0.0);
        ensure(d.accept, || format!("{kind:?}: zero error must accept"))?;
        close(d.h_next, 0.7, TOL, "zero error grows by lambda2")?;
    }
    let d = decide(&std_opt(1e-4), 0.2, 2e-3);
    ensure(!d.accept, || "decide standard should reject".into())?;
    close(d.h_next, 0.2 * 0.05f64.powf(1.0 / 6.0), TOL, "rejected step proposal")?;
    Ok("all controller examples exact".into())
}

fn ac2() -> Outcome {
    const TOL: f64 = 1e-12;
    let (c, tau) = (3.7, 1e-7);
    let wide = ParamTriple::new(1.0, 1e-6, 1e6);
    let p_new = ControllerParams::new(ControllerKind::New, tau, wide, 5).unwrap();
    let p_std = ControllerParams::new(ControllerKind::Standard, tau, wide, 5).unwrap();
    let hs = [1e-1f64, 1e-2, 1e-3];
    let new: Vec<f64> = hs.iter().map(|&h| propose(&p_new, h, c * h.powi(5))).collect();
    let std: Vec<f64> = hs.iter().map(|&h| propose(&p_std, h, c * h.powi(5))).collect();
    for w in new.windows(2) {
        ensure((w[1] / w[0] - 1.0).abs() < TOL, || format!("new proposals differ: {new:?}"))?;
    }
    let want = 10f64.powf(-1.0 / 6.0);
    for w in std.windows(2) {
        let r = w[1] / w[0];
        ensure((r / want - 1.0).abs() < TOL, || format!("standard ratio {r} vs {want}"))?;
    }
    Ok(format!("new h_next = {:.6}, standard ratio per decade = {want:.6}", new[0]))
}

fn ac3() -> Outcome {
    let a3 = problems::get::<f64>("A3").map_err(|e| e.to_string())?;
    let exact = |t: f64| a3.exact(t).unwrap()[0];
    let tab = dp54_tableau::<f64>();
    let errors = |h: f64| {
        let out = embedded_step(a3.rhs(), 0.0, &a3.y0, h, None, &tab).unwrap();
        ((out.y_high[0] - exact(h)).abs(), out.eps_vec[0].abs())
    };
    let hs = [0.1, 0.05, 0.025];
    let e: Vec<(f64, f64)> = hs.iter().map(|&h| errors(h)).collect();
    let mut report = Vec::new();
    for (i, w) in e.windows(2).enumerate() {
        let ratio = hs[i] / hs[i + 1];
        let oy = (w[0].0 / w[1].0).ln() / ratio.ln();
        let oe = (w[0].1 / w[1].1).ln() / ratio.ln();
        ensure((5.7..=6.3).contains(&oy), || format!("y_high order {oy}"))?;
        ensure((4.7..=5.3).contains(&oe), || format!("eps order {oe}"))?;
        report.push(format!("({oy:.3}, {oe:.3})"));
    }
    Ok(format!("observed (y_high, eps) orders {}", report.join(" ")))
}

fn feval_sweep_csv() -> Result<String, String> {
    let registry = Registry::new();
    let grid = default_tau_grid();
    let controllers = [
        spec(ControllerKind::New, ParamSet::NewOptimized),
        spec(ControllerKind::Standard, ParamSet::StandardRecommended),
    ];
    let mut curves = Vec::new();
    for id in ["A1", "A5", "B4", "E2"] {
        let problem = registry.get::<f64>(id).map_err(|e| e.to_string())?;
        for c in &controllers {
            for &tau in &grid {
                let params = c.at_tau(tau).map_err(|e| e.to_string())?;
                let s = integrate(&problem, &params, &IntegrationLimits::default())
                    .map_err(|e| format!("{id} {} tau={tau:e}: {e}", c.label()))?;
                let steps = s.n_accepted + s.n_rejected;
                ensure(s.n_fevals == 1 + 6 * steps, || {
                    format!("{id} {} tau={tau:e}: {} fevals for {steps} steps", c.label(), s.n_fevals)
                })?;
            }
            curves.push(sweep(&problem, c, &grid).map_err(|e| e.to_string())?);
        }
    }
    Ok(curves_to_csv(&curves))
}

fn ac4() -> Outcome {
    feval_sweep_csv()?;
    Ok(format!("{} runs satisfy 1 + 6 (accepted + rejected)", 4 * 2 * default_tau_grid().len()))
}

fn reference_run(registry: &Registry, id: &str) -> Vec<f64> {
    let problem = registry.get::<f64>(id).unwrap();
    let params = ControllerParams::dp54(
        ControllerKind::Standard,
        REFERENCE_TAU,
        ParamSet::StandardRecommended,
    )
    .unwrap();
    integrate(&problem, &params, &IntegrationLimits::default())
        .unwrap()
        .y_final
}

fn c5_energy(data: &C5Data, y: &[f64]) -> f64 {
    let (q, v) = y.split_at(15);
    let m = &data.masses;
    let total: f64 = m.iter().sum();
    let momentum: [f64; 3] =
        std::array::from_fn(|a| (0..5).map(|i| m[i + 1] * v[3 * i + a]).sum::<f64>());
    let pos = |b: usize, a: usize| if b == 0 { 0.0 } else { q[3 * (b - 1) + a] };
    let vel = |b: usize, a: usize| {
        -momentum[a] / total + if b == 0 { 0.0 } else { v[3 * (b - 1) + a] }
    };
    let mut energy = 0.0;
    for b in 0..6 {
        energy += 0.5 * m[b] * (0..3).map(|a| vel(b, a).powi(2)).sum::<f64>();
        for c in b + 1..6 {
            let d = (0..3).map(|a| (pos(b, a) - pos(c, a)).powi(2)).sum::<f64>().sqrt();
            energy -= data.k2 * m[b] * m[c] / d;
        }
    }
    energy
}

fn ac5() -> Outcome {
    let report = validate_tableau(&dp54_tableau::<f64>()).map_err(|e| e.to_string())?;
    ensure(report.all_passed(), || format!("tableau checks failed: {report:?}"))?;

    let mut residual_checks = 0;
    for id in ALL_IDS.iter().filter(|&&id| id != "C5") {
        let problem = problems::get::<f64>(id).map_err(|e| e.to_string())?;
        if !problem.has_exact() {
            continue;
        }
        let y0 = problem.exact(0.0).unwrap();
        for (a, b) in y0.iter().zip(&problem.y0) {
            close(*a, *b, 1e-12, &format!("{id} exact(0)"))?;
        }
        let delta = 1e-5;
        for i in 0..100 {
            let t = 0.1 + 19.8 * i as f64 / 99.0;
            let f = problem.eval(t, &problem.exact(t).unwrap());
            let ahead = problem.exact(t + delta).unwrap();
            let behind = problem.exact(t - delta).unwrap();
            for m in 0..problem.dim {
                let fd = (ahead[m] - behind[m]) / (2.0 * delta);
                close(fd, f[m], 1e-8, &format!("{id}[{m}] residual at t={t}"))?;
            }
        }
        residual_checks += 1;
    }

    let registry = Registry::new();
    let b3 = problems::reference_endpoint("B3").map_err(|e| e.to_string())?;
    close(b3.iter().sum(), 1.0, 1e-10, "B3 mass")?;
    let b5 = problems::reference_endpoint("B5").map_err(|e| e.to_string())?;
    close(b5[0].powi(2) + b5[1].powi(2), 1.0, 1e-9, "B5 first invariant")?;
    close(0.51 * b5[0].powi(2) + b5[2].powi(2), 1.0, 1e-9, "B5 second invariant")?;
    for id in ["C1", "C2"] {
        close(reference_run(&registry, id).iter().sum(), 1.0, 1e-9, &format!("{id} mass"))?;
    }
    for id in ["C3", "C4"] {
        let problem = registry.get::<f64>(id).unwrap();
        let y: Vec<f64> = (0..problem.dim).map(|i| ((i * 7 % 5) as f64) - 1.3).collect();
        let f = problem.eval(0.0, &y);
        let balance = f.iter().sum::<f64>() + y[0] + y[problem.dim - 1];
        close(balance, 0.0, 1e-12, &format!("{id} boundary flux balance"))?;
    }

    let data = C5Data::bundled().map_err(|e| e.to_string())?;
    let c5 = Registry::with_c5(data.clone()).get::<f64>("C5").map_err(|e| e.to_string())?;
    let end = c5.reference_endpoint().map_err(|e| e.to_string())?;
    let drift = (c5_energy(&data, &end) / c5_energy(&data, &c5.y0) - 1.0).abs();
    ensure(drift < 1e-9, || format!("C5 relative energy drift {drift:e}"))?;

    Ok(format!(
        "tableau ok, {residual_checks} closed forms, invariants ok, C5 energy drift {drift:.1e}"
    ))
}

fn table(suite: &[String], a: ParamSet, b: ParamSet) -> Result<RatioTable, String> {
    compare(
        &Registry::new(),
        suite,
        &spec(ControllerKind::New, a),
        &spec(ControllerKind::Standard, b),
        &default_targets(),
        &default_tau_grid(),
    )
    .map_err(|e| e.to_string())
}

fn row_means(t: &RatioTable) -> String {
    t.rows
        .iter()
        .map(|r| r.mean_ratio.map_or("-".into(), |m| format!("{m:.4}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ac6() -> Outcome {
    let g2 = table(&group2(), ParamSet::NewOptimized, ParamSet::StandardRecommended)?;
    let below = g2.rows.iter().filter(|r| r.mean_ratio.is_some_and(|m| m < 1.0)).count();
    let mean2 = g2.grand_mean().ok_or("group II: no rows")?;
    ensure(below >= 5, || format!("group II: only {below} of 6 rows below 1"))?;
    ensure((0.75..=1.00).contains(&mean2), || format!("group II grand mean {mean2}"))?;

    let g1 = table(&group1(), ParamSet::NewOptimized, ParamSet::StandardRecommended)?;
    let mean1 = g1.grand_mean().ok_or("group I: no rows")?;
    ensure((0.80..=1.05).contains(&mean1), || format!("group I grand mean {mean1}"))?;
    Ok(format!(
        "group II rows [{}] grand {mean2:.4} ({below}/6 < 1); group I grand {mean1:.4}",
        row_means(&g2)
    ))
}

fn ac7() -> Outcome {
    let t = table(&group1(), ParamSet::NewOptimized, ParamSet::StandardOptimized)?;
    let mean = t.grand_mean().ok_or("no rows")?;
    ensure((0.90..=1.10).contains(&mean), || format!("grand mean {mean}"))?;
    Ok(format!("group I rows [{}] grand {mean:.4}", row_means(&t)))
}

fn ac8() -> Outcome {
    let t = table(&group2(), ParamSet::NewOptimized, ParamSet::StandardOptimized)?;
    let wf = t.win_fraction.ok_or("no counted cells")?;
    ensure(wf >= 0.40, || format!("win fraction {wf}"))?;
    Ok(format!("group II win fraction {:.1}% ({}/{})", 100.0 * wf, t.wins, t.counted))
}

fn ac9() -> Outcome {
    let bounds = Bounds::default();
    for target in [[7.3, 0.41, 3.3], [15.0, 0.8, 8.2], [2.0, 0.12, 1.6]] {
        let s = TuneSpec::new(ControllerKind::New, vec!["A1".into()]);
        let quadratic = move |p: ParamTriple| {
            let x = p.to_array();
            Ok((0..3).map(|j| ((x[j] - target[j]) / bounds.range(j)).powi(2)).sum())
        };
        let best = tune_with(&s, quadratic).map_err(|e| e.to_string())?.best_params.to_array();
        for j in 0..3 {
            let miss = (best[j] - target[j]).abs() / bounds.range(j);
            ensure(miss < 1e-3, || format!("quadratic {target:?}: got {best:?}"))?;
        }
    }
    let registry = Registry::new();
    let mut report = Vec::new();
    for kind in ControllerKind::ALL {
        let s = TuneSpec::new(kind, ids(&["A1", "A3"]));
        let start = objective(&registry, s.start, &s).map_err(|e| e.to_string())?;
        let result = tune(&registry, &s).map_err(|e| e.to_string())?;
        ensure(result.best_objective < start, || {
            format!("{kind:?}: {} not below start {start}", result.best_objective)
        })?;
        report.push(format!("{} {start:.0} -> {:.0}", kind.id(), result.best_objective));
    }
    Ok(format!("quadratic minimizers recovered; {{A1, A3}} {}", report.join(", ")))
}

fn ac10() -> Outcome {
    let first = feval_sweep_csv()?;
    let second = feval_sweep_csv()?;
    ensure(first == second, || "sweep CSV differs between runs".into())?;
    let t1 = table(&group2(), ParamSet::NewOptimized, ParamSet::StandardRecommended)?.to_csv();
    let t2 = table(&group2(), ParamSet::NewOptimized, ParamSet::StandardRecommended)?.to_csv();
    ensure(t1 == t2, || "ratio table CSV differs between runs".into())?;
    Ok(format!("{} + {} CSV bytes identical", first.len(), t1.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 10] = [
        ("controller examples", ac1, Some(Duration::from_secs(1))),
        ("asymptotic step independence", ac2, Some(Duration::from_secs(1))),
        ("DP54 local orders on A3", ac3, Some(Duration::from_secs(1))),
        ("feval identity", ac4, Some(Duration::from_secs(30))),
        ("transcription oracles", ac5, Some(Duration::from_secs(60))),
        ("new-opt vs std-rec", ac6, None),
        ("new-opt vs std-opt, group I", ac7, None),
        ("win fraction, group II", ac8, None),
        ("tuner self-test", ac9, Some(Duration::from_secs(300))),
        ("determinism", ac10, None),
    ];
    let mut failed = 0;
    for (n, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let (Ok(msg), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("[{tag}] AC{} {name}: {msg} ({elapsed:.2?})", n + 1);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
