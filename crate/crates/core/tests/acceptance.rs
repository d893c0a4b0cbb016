//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdalab::coeffs::{AdvectionField, TensorField};
use rdalab::grid::Grid;
use rdalab::network::{certify, quasi_positivity_probe, random::random_network, Kinetics, MassActionKinetics};
use rdalab::presets::{names, preset};
use rdalab::solver::{self, Problem, SimulationConfig};
use rdalab::{duality, estimates, verification};

type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn heat_exact() -> Check {
    let s = preset("heat1d").map_err(|e| e.to_string())?;
    let spec = s.experiments.exact_error.clone().expect("heat1d has an exact-error check");
    assert_eq!((spec.tolerance, spec.max_seconds), (1e-3, Some(10.0)));
    assert_eq!(s.grid.cells(), &[128]);
    assert_eq!(s.time.dt_init, (1.0f64 / 128.0).powi(2));
    assert_eq!(s.time.t_final, 0.1);
    let r = verification::exact_error_check(&s, &spec).map_err(|e| e.to_string())?;
    verdict(
        r.max_error <= 1e-3 && r.seconds < 10.0,
        format!("max error {:.3e} <= 1e-3, runtime {:.2} s < 10 s", r.max_error, r.seconds),
    )
}

fn convergence() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, min, dt_exponent) in [("advdiff1d", 0.9, 1), ("diffusion2d", 1.9, 2)] {
        let s = preset(name).map_err(|e| e.to_string())?;
        let spec = s.experiments.convergence.clone().expect("convergence study");
        assert_eq!((spec.min_order, spec.dt_exponent), (min, dt_exponent));
        let r = verification::convergence_study(&s, &spec).map_err(|e| e.to_string())?;
        let order = *r.orders.last().expect("two levels");
        ok &= order >= min;
        details.push(format!("{name} order {order:.3} >= {min}"));
    }
    verdict(ok, details.join(", "))
}

fn random_suite_min(count: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::line(16, 1.0);
    let mut worst = f64::INFINITY;
    for _ in 0..count {
        let net = random_network(&mut rng);
        let p = net.species();
        let diffusion = (0..p)
            .map(|_| TensorField::constant(1, [[rng.gen_range(0.1..2.0), 0.0], [0.0, 0.0]]))
            .collect();
        let advection = (0..p)
            .map(|_| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                AdvectionField::from_fn(1, move |_, x| [a * (std::f64::consts::PI * x[0]).sin(), 0.0])
            })
            .collect();
        let initial = (0..p)
            .map(|_| {
                let scale = rng.gen_range(0.0..3.0);
                (0..grid.len())
                    .map(|_| if rng.gen_bool(0.3) { 0.0 } else { scale * rng.gen_range(0.0..1.0) })
                    .collect()
            })
            .collect();
        let kin: Arc<dyn Kinetics> = Arc::new(MassActionKinetics::new(&net));
        let cert = certify(&net).map_err(|e| e.to_string())?;
        let problem = Problem::new(grid.clone(), diffusion, advection, kin, initial)
            .map_err(|e| e.to_string())?
            .with_conservation(cert.e_f64());
        let config = SimulationConfig {
            t_final: 0.5,
            dt_init: 0.01,
            ..Default::default()
        };
        let traj = solver::run(&problem, &config).map_err(|e| e.to_string())?;
        worst = worst.min(traj.min_value());
    }
    Ok(worst)
}

fn nonnegativity() -> Check {
    let mut worst = f64::INFINITY;
    for name in names() {
        let b = preset(name).and_then(|s| s.build()).map_err(|e| e.to_string())?;
        let traj = solver::run(&b.problem, &b.config).map_err(|e| e.to_string())?;
        worst = worst.min(traj.min_value());
    }
    let random = random_suite_min(25, 11)?;
    verdict(
        worst >= -1e-12 && random >= -1e-12,
        format!("min over presets {worst:.3e}, over 25 random networks {random:.3e}, floor -1e-12"),
    )
}

fn conservation() -> Check {
    let b = preset("abc").and_then(|s| s.build()).map_err(|e| e.to_string())?;
    assert_eq!(b.config.t_final, 1.0);
    let traj = solver::run(&b.problem, &b.config).map_err(|e| e.to_string())?;
    let drift = traj.max_drift();
    verdict(drift <= 1e-8, format!("max relative drift {drift:.3e} <= 1e-8 over {} steps", traj.steps()))
}

fn certification() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_margin = f64::INFINITY;
    let mut failures = 0;
    for _ in 0..200 {
        let net = random_network(&mut rng);
        let cert = match certify(&net).and_then(|c| c.verify(&net).map(|_| c)) {
            Ok(c) => c,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let kin = MassActionKinetics::new(&net);
        let b = cert.b_f64();
        let b0 = cert.b0_f64();
        let mut f = vec![0.0; net.species()];
        for _ in 0..100 {
            let c: Vec<f64> = (0..net.species()).map(|_| rng.gen_range(0.0..10.0)).collect();
            kin.production(&c, &mut f);
            let scale = 1.0 + c.iter().sum::<f64>();
            for (qf, bi) in cert.apply_q(&f).iter().zip(&b) {
                worst_margin = worst_margin.min(scale * bi - qf);
            }
            worst_margin = worst_margin.min(scale * b0 - cert.weighted_sum(&f));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && worst_margin >= -1e-9 && secs < 60.0,
        format!("200 networks, {failures} failures, worst sampled margin {worst_margin:.3e} >= -1e-9, {secs:.2} s < 60 s"),
    )
}

fn probe() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for name in names() {
        let b = preset(name).and_then(|s| s.build()).map_err(|e| e.to_string())?;
        let r = quasi_positivity_probe(b.problem.kinetics.as_ref(), 1000, 17);
        ok &= r.samples >= 1000 && r.violations == 0;
        details.push(format!("{name} {}", r.violations));
    }
    verdict(ok, format!("violations per preset (1000 samples each): {}", details.join(", ")))
}

fn l2_uniformity() -> Check {
    let s = preset("abc").map_err(|e| e.to_string())?;
    let k = s.experiments.l2_uniformity.clone().expect("k sweep").k_list;
    assert_eq!(k, vec![1.0, 10.0, 100.0, 1000.0, 10000.0]);
    assert!(s.has_scalar_diffusion());
    let r = estimates::l2_uniformity_experiment(&s, &k).map_err(|e| e.to_string())?;
    let ratios: Vec<String> = r.rows.iter().map(|m| format!("{:.4}", m.ratio)).collect();
    verdict(
        r.spread <= 0.1 && r.max_over_first <= 2.0 && r.defect_decreasing,
        format!(
            "ratios [{}] spread {:.3} <= 0.1, max/first {:.3} <= 2, rate defect strictly decreasing {}",
            ratios.join(", "),
            r.spread,
            r.max_over_first,
            r.defect_decreasing
        ),
    )
}

fn family() -> Check {
    let s = preset("aniso2d").map_err(|e| e.to_string())?;
    let factors = s.experiments.l_n1_over_n.clone().expect("family").factors;
    assert_eq!(factors, vec![1.0, 4.0, 16.0, 64.0]);
    let r = estimates::l_n1_over_n_experiment(&s, &factors).map_err(|e| e.to_string())?;
    let l1: Vec<f64> = r.rows.iter().map(|m| m.initial_l1).collect();
    let fixed_l1 = l1.iter().all(|v| (v - l1[0]).abs() <= 1e-12 * l1[0]);
    let worst = r.rows.iter().map(|m| m.ratio).fold(0.0, f64::max);
    verdict(
        r.exponent == 1.5 && fixed_l1 && worst <= 2.0 * r.baseline,
        format!(
            "L^1.5 ratio max {worst:.4} <= 2 x baseline {:.4}, initial L1 fixed at {:.4}",
            r.baseline, l1[0]
        ),
    )
}

fn duality_estimate() -> Check {
    let s = preset("abc").map_err(|e| e.to_string())?;
    let spec = s.experiments.duality.clone().expect("duality");
    assert_eq!((spec.train, spec.held_out), (50, 50));
    let r = duality::verify_duality(&spec).map_err(|e| e.to_string())?;
    let fine = r.levels.last().expect("levels");
    let held_ok = r.levels.iter().all(|l| l.max_held_out <= 1.1 * l.c_emp);
    let defect_ok = r.defect_ratios.iter().all(|&q| q <= 0.6);
    let ratios: Vec<String> = r.defect_ratios.iter().map(|q| format!("{q:.3}")).collect();
    verdict(
        held_ok && r.c_emp_change <= 0.2 && defect_ok && r.pairing_holds,
        format!(
            "held-out max {:.4} <= 1.1 x C_emp {:.4}, C_emp change {:.2e} <= 0.2, pairing defect ratios [{}] <= 0.6",
            fine.max_held_out,
            fine.c_emp,
            r.c_emp_change,
            ratios.join(", ")
        ),
    )
}

fn weak_residual() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["heat1d", "abc"] {
        let s = preset(name).map_err(|e| e.to_string())?;
        let spec = s.experiments.weak_residual.clone().expect("weak residual");
        assert_eq!(spec.max_ratio, 0.6);
        let r = verification::weak_residual_study(&s, &spec).map_err(|e| e.to_string())?;
        ok &= r.ratios.iter().all(|&q| q <= 0.6);
        let q: Vec<String> = r.ratios.iter().map(|q| format!("{q:.3}")).collect();
        details.push(format!("{name} ratios [{}]", q.join(", ")));
    }
    verdict(ok, format!("{} <= 0.6", details.join(", ")))
}

fn continuity() -> Check {
    let s = preset("examp22").map_err(|e| e.to_string())?;
    let spec = s.experiments.continuity.clone().expect("continuity");
    assert_eq!(spec.magnitudes, vec![1e-2, 1e-3, 1e-4]);
    let r = verification::continuity_experiment(&s, &spec).map_err(|e| e.to_string())?;
    let mean = r.rows.iter().map(|m| m.ratio).sum::<f64>() / r.rows.len() as f64;
    let within = r.rows.iter().all(|m| (m.ratio - mean).abs() <= 0.25 * mean);
    let ratios: Vec<String> = r.rows.iter().map(|m| format!("{:.5}", m.ratio)).collect();
    verdict(
        within && r.spread <= 0.25,
        format!("ratios [{}] within 25% of their mean, spread {:.2e}", ratios.join(", "), r.spread),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_rdalab"))
            .args(["run", "--preset", "abc", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.code() != Some(0) {
            return Err(format!("run {run} exited with {:?}", status.status.code()));
        }
        outputs.push(std::fs::read(out.join("norms.csv")).map_err(|e| e.to_string())?);
    }
    verdict(
        outputs[0] == outputs[1] && !outputs[0].is_empty(),
        format!("two abc runs, norms.csv of {} bytes, identical {}", outputs[0].len(), outputs[0] == outputs[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("analytic validation", heat_exact),
        ("convergence order", convergence),
        ("nonnegativity", nonnegativity),
        ("atom conservation", conservation),
        ("triangular certification", certification),
        ("quasi-positivity probe", probe),
        ("k-uniform L2 bound", l2_uniformity),
        ("L^(N+1)/N bound", family),
        ("duality estimate", duality_estimate),
        ("weak residual", weak_residual),
        ("continuous dependence", continuity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(d) => println!("PASS {:>2} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
