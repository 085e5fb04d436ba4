mod common;

use std::f64::consts::PI;

use adiabat::ensemble::{averaged_kernel_run, run_ensemble};
use adiabat::experiments::{scan_passage_time, speedup_report};
use adiabat::models::{MatrixPath, ModelSpec, Profile};
use adiabat::noise::{sub_seed, NoiseSpec};
use adiabat::solver::{default_steps, run_trajectory, Method, SolverConfig};
use adiabat::{Error, C64};
use nalgebra::DMatrix;

use common::*;

fn constant_model() -> ModelSpec {
    ModelSpec::generic(Profile::constant(0.6), Profile::constant(-0.2), Profile::constant(1.1))
}

fn max_residual(r: &adiabat::solver::TrajectoryResult) -> f64 {
    r.residual.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn constant_hamiltonian_stays_put() {
    let m = constant_model();
    for method in [Method::VolterraQuadrature, Method::AuxiliaryOde, Method::ComponentOracle] {
        let r = run_trajectory(&m, &NoiseSpec::none(), &SolverConfig::new(2.0, 200, method), 0).unwrap();
        assert!(r.abs_psi0().iter().all(|&a| (a - 1.0).abs() < 1e-14), "{}", method.name());
        if method != Method::ComponentOracle {
            assert_eq!(max_residual(&r), 0.0);
        }
    }
}

#[test]
fn slow_sweep_is_adiabatic() {
    let m = ModelSpec::linear_sweep(20.0);
    let steps = default_steps(&m, &NoiseSpec::none(), 20.0).unwrap();
    let r = run_trajectory(&m, &NoiseSpec::none(), &SolverConfig::new(20.0, steps, Method::VolterraQuadrature), 0).unwrap();
    assert!(r.abs_psi0().iter().all(|&a| (a - 1.0).abs() <= 0.02));
}

#[test]
fn slow_rotation_is_adiabatic() {
    let m = ModelSpec::model_a(0.4, 1.0);
    let t_end = 2.0 * PI / 0.4;
    let steps = default_steps(&m, &NoiseSpec::none(), t_end).unwrap();
    let r = run_trajectory(&m, &NoiseSpec::none(), &SolverConfig::new(t_end, steps, Method::AuxiliaryOde), 0).unwrap();
    let min = r.abs_psi0().into_iter().fold(f64::INFINITY, f64::min);
    assert!(min >= 0.9, "min {min}");
}

#[test]
fn very_slow_sweep_ends_in_the_adiabatic_state() {
    // real eigenvectors: beta0 = 0, so psi0(T) -> 1 itself; the leftover
    // nonadiabatic phase falls off like 1/T
    let end = |t: f64| {
        let m = ModelSpec::linear_sweep(t);
        let steps = default_steps(&m, &NoiseSpec::none(), t).unwrap();
        let r = run_trajectory(&m, &NoiseSpec::none(), &SolverConfig::new(t, steps, Method::AuxiliaryOde), 0).unwrap();
        *r.psi0.last().unwrap()
    };
    let devs: Vec<f64> = [20.0, 40.0, 80.0].iter().map(|&t| (end(t) - C64::from(1.0)).norm()).collect();
    assert!(devs.windows(2).all(|w| w[1] < 0.6 * w[0]), "{devs:?}");
    assert!(devs[2] < 1e-2, "{devs:?}");
    assert!(end(80.0).norm() > 0.9999);
}

#[test]
fn memory_integral_shrinks_with_passage_time() {
    let run = |t: f64| {
        let m = ModelSpec::linear_sweep(t);
        let steps = default_steps(&m, &NoiseSpec::none(), t).unwrap();
        run_trajectory(&m, &NoiseSpec::none(), &SolverConfig::new(t, steps, Method::VolterraQuadrature), 0).unwrap()
    };
    assert!(max_residual(&run(20.0)) <= 0.1 * max_residual(&run(1.0)));
}

#[test]
fn noise_shrinks_the_mean_memory_integral() {
    let m = ModelSpec::model_a(5.0, 5.0);
    let noise = NoiseSpec::gaussian(1.0, 1.0);
    let steps = default_steps(&m, &noise, PI).unwrap();
    let cfg = SolverConfig::new(PI, steps, Method::AuxiliaryOde);
    let e = run_ensemble(&m, &noise, &cfg, 400, 21).unwrap();
    let clean = run_trajectory(&m, &NoiseSpec::none(), &cfg, 0).unwrap();
    // the noise-free residual vanishes at the Rabi return t = pi, so the last
    // couple of percent of the passage do not satisfy this
    let skip = steps / 20;
    for n in skip..=steps {
        assert!(
            e.mean_residual[n].norm() < clean.residual[n].norm(),
            "t = {}: {} vs {}",
            e.grid.t(n),
            e.mean_residual[n].norm(),
            clean.residual[n].norm()
        );
    }
}

#[test]
fn methods_agree_on_the_catalog() {
    for (m, t_end) in catalog() {
        let noise = NoiseSpec::gaussian_gamma(1.0, 1.0);
        let steps = 10_000;
        let gap = oracle_gap(&m, t_end, &noise, 5, steps, Method::AuxiliaryOde).unwrap();
        assert!(gap <= 1e-6, "{}: auxiliary vs oracle {gap:e}", m.name());
        let cfg = SolverConfig::new(t_end, steps, Method::VolterraQuadrature);
        let a = run_trajectory(&m, &noise, &cfg, 5).unwrap();
        let b = run_trajectory(&m, &noise, &cfg.with_method(Method::AuxiliaryOde), 5).unwrap();
        assert!(max_abs_diff(&a.abs_psi0(), &b.abs_psi0()) <= 1e-6, "{}", m.name());
    }
}

#[test]
fn convergence_order() {
    let m = ModelSpec::linear_sweep(1.0);
    let none = NoiseSpec::none();
    let reference = run_trajectory(&m, &none, &SolverConfig::new(1.0, 100_000, Method::AuxiliaryOde), 0)
        .unwrap()
        .abs_psi0();
    let deviation = |method: Method, steps: usize| {
        let r = run_trajectory(&m, &none, &SolverConfig::new(1.0, steps, method), 0).unwrap();
        let stride = 100_000 / steps;
        r.abs_psi0()
            .iter()
            .enumerate()
            .map(|(i, a)| (a - reference[i * stride]).abs())
            .fold(0.0, f64::max)
    };
    for (method, steps) in [(Method::AuxiliaryOde, 50), (Method::VolterraQuadrature, 100)] {
        let coarse = deviation(method, steps);
        let fine = deviation(method, 2 * steps);
        assert!(coarse / fine >= 3.5, "{}: {coarse:e} -> {fine:e}", method.name());
    }
}

#[test]
fn three_level_kernel_matches_oracle() {
    let c = |re: f64, im: f64| C64::new(re, im);
    let h0 = DMatrix::from_row_slice(3, 3, &[
        c(1.5, 0.0), c(0.2, 0.1), c(0.0, 0.0),
        c(0.2, -0.1), c(0.0, 0.0), c(0.3, 0.0),
        c(0.0, 0.0), c(0.3, 0.0), c(-1.4, 0.0),
    ]);
    let h1 = DMatrix::from_row_slice(3, 3, &[
        c(0.0, 0.0), c(0.4, 0.0), c(0.1, -0.2),
        c(0.4, 0.0), c(0.2, 0.0), c(0.0, 0.3),
        c(0.1, 0.2), c(0.0, -0.3), c(0.0, 0.0),
    ]);
    let h2 = DMatrix::from_fn(3, 3, |r, s| if r == s { c(0.1 * r as f64, 0.0) } else { c(0.0, 0.0) });
    let path = MatrixPath { j0: 1.0, h0, h1, h2, frequency: 1.7 };
    let cfg = SolverConfig::new(2.0, 4000, Method::VolterraQuadrature);
    let a = run_trajectory(&path, &NoiseSpec::none(), &cfg, 0).unwrap();
    let b = run_trajectory(&path, &NoiseSpec::none(), &cfg.with_method(Method::ComponentOracle), 0).unwrap();
    let gap = max_abs_diff(&a.abs_psi0(), &b.abs_psi0());
    assert!(gap <= 1e-6, "{gap:e}");
    assert!(a.abs_psi0().iter().any(|&x| x < 0.999));
}

#[test]
fn noise_decoheres_and_keeps_the_target_state() {
    let m = ModelSpec::model_a(5.0, 5.0);
    let t_end = PI / 2.0;
    let strong = NoiseSpec::gaussian_gamma(4.0, 1.0);
    let steps = default_steps(&m, &strong, t_end).unwrap();
    let cfg = SolverConfig::new(t_end, steps, Method::AuxiliaryOde);
    let e = run_ensemble(&m, &strong, &cfg, 500, 31).unwrap();
    let clean = run_ensemble(&m, &NoiseSpec::none(), &cfg, 1, 0).unwrap();
    let end = steps;
    let off = e.rho[end][(0, 1)].norm();
    let off_clean = clean.rho[end][(0, 1)].norm();
    assert!(off <= 0.1 * off_clean, "{off} vs {off_clean}");
    assert!(e.purity[end] < 1.0 - 1e-3);
    for n in (0..=end).step_by(end / 10) {
        let need = e.mean_pop0[n] - 3.0 * e.stderr_pop[n];
        assert!(e.dominant_overlap(n) >= need, "t = {}", e.grid.t(n));
    }
}

#[test]
fn ensemble_ignores_thread_count() {
    let m = ModelSpec::linear_sweep(1.0);
    let noise = NoiseSpec::gaussian_gamma(1.0, 1.0);
    let steps = default_steps(&m, &noise, 1.0).unwrap();
    let cfg = SolverConfig::new(1.0, steps, Method::AuxiliaryOde);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&m, &noise, &cfg, 70, 5).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mean_abs_psi0, b.mean_abs_psi0);
    assert_eq!(a.stderr_abs, b.stderr_abs);
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.mean_residual, b.mean_residual);
}

#[test]
fn averaged_kernel_tracks_the_mean_amplitude() {
    // the attenuated kernel evolves E[psi0]; compare with the sample mean of
    // psi0 and its standard error
    let m = ModelSpec::model_a(5.0, 5.0);
    let noise = NoiseSpec::gaussian_gamma(0.3, 1.0);
    let steps = default_steps(&m, &noise, PI).unwrap();
    let cfg = SolverConfig::new(PI, steps, Method::AuxiliaryOde);
    let n = 1000;
    let runs: Vec<Vec<C64>> = (0..n)
        .map(|i| run_trajectory(&m, &noise, &cfg, sub_seed(17, i)).unwrap().psi0)
        .collect();
    let avg = averaged_kernel_run(&m, &noise, &cfg).unwrap();
    for k in (0..=steps).step_by(steps / 40) {
        let mean: C64 = runs.iter().map(|r| r[k]).sum::<C64>() / n as f64;
        let var: f64 = runs.iter().map(|r| (r[k] - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let d = (avg.psi0[k] - mean).norm();
        assert!(d <= 3.0 * se + 1e-3, "t = {}: {d} vs se {se}", cfg.grid().unwrap().t(k));
    }
}

#[test]
fn overwhelming_noise_freezes_the_state() {
    let m = ModelSpec::model_a(5.0, 5.0);
    let mut devs = Vec::new();
    for gamma in [1.0, 3.0, 10.0, 30.0] {
        let noise = NoiseSpec::gaussian_gamma(gamma, 1.0);
        // the guard names the step count the decay needs
        let steps = match averaged_kernel_run(&m, &noise, &SolverConfig::new(PI, 10, Method::VolterraQuadrature)) {
            Err(Error::Resolution { required_steps, .. }) => required_steps + required_steps / 10,
            other => panic!("coarse grid accepted: {other:?}"),
        };
        let r = averaged_kernel_run(&m, &noise, &SolverConfig::new(PI, steps, Method::VolterraQuadrature)).unwrap();
        devs.push(r.abs_psi0().iter().map(|a| (1.0 - a).abs()).fold(0.0, f64::max));
    }
    assert!(devs.windows(2).all(|w| w[1] < 0.5 * w[0]), "{devs:?}");
    assert!(devs[3] < 1e-2, "{devs:?}");
}

#[test]
fn sweep_scan_ordering_and_oracle() {
    let base = ModelSpec::linear_sweep(1.0);
    let r = scan_passage_time(&base, &[1.0, 5.0], 0.95, &NoiseSpec::none(), Method::VolterraQuadrature, None).unwrap();
    assert!(r.points[1].final_abs_psi0 - r.points[0].final_abs_psi0 > 0.1);
    let gap = oracle_gap(&base, 1.0, &NoiseSpec::none(), 0, 10_000, Method::VolterraQuadrature).unwrap();
    assert!(gap <= 1e-6);
}

#[test]
fn speedup_sanity_bounds() {
    let m = ModelSpec::model_b(1.0);
    let times = [0.25, 0.5, 1.0, 2.0, 4.0];
    let none = speedup_report(&m, 0.9, &NoiseSpec::none(), &times, 8, 1).unwrap();
    assert_eq!(none.ratio, Some(1.0));
    let noisy = speedup_report(&m, 0.5, &NoiseSpec::gaussian_gamma(10.0, 1.0), &times, 64, 1).unwrap();
    assert!(noisy.ratio.unwrap() >= 1.0, "{noisy:?}");
}
