#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use adiabat::eigenframe::{frame_analytic, levels_numeric};
use adiabat::ensemble::run_ensemble;
use adiabat::kernel::KernelContext;
use adiabat::models::{eval_fields, ModelSpec, Profile};
use adiabat::noise::{shot_increment, rng_for, NoiseSpec};
use adiabat::solver::{build_frames, default_steps, run_trajectory, solve, Method, SolverConfig, TrajectoryResult};
use adiabat::{Result, C64};
use nalgebra::DMatrix;

/// The four models checked against the component oracle, with their end
/// times.
pub fn catalog() -> Vec<(ModelSpec, f64)> {
    let generic = ModelSpec::generic(
        Profile {
            offset: 0.2,
            amplitude: 0.8,
            frequency: 1.3,
            ..Profile::default()
        },
        Profile {
            amplitude: 0.5,
            frequency: 0.7,
            phase: -FRAC_PI_2,
            ..Profile::default()
        },
        Profile {
            offset: 1.5,
            slope: -0.4,
            ..Profile::default()
        },
    );
    vec![
        (generic, 2.0),
        (ModelSpec::linear_sweep(1.0), 1.0),
        (ModelSpec::model_a(5.0, 5.0), PI),
        (ModelSpec::model_b(1.0), 1.0),
    ]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max_t ||psi0|_method - |psi0|_oracle|` for one noise realization.
pub fn oracle_gap(model: &ModelSpec, t_end: f64, noise: &NoiseSpec, seed: u64, steps: usize, method: Method) -> Result<f64> {
    let cfg = SolverConfig::new(t_end, steps, method);
    let frames = build_frames(model, &cfg)?;
    let ctx = KernelContext::new(frames, noise, seed)?;
    let a = solve(&ctx, &cfg)?;
    let b = solve(&ctx, &cfg.with_method(Method::ComponentOracle))?;
    Ok(max_abs_diff(&a.abs_psi0(), &b.abs_psi0()))
}

/// Default resolution, at least `floor` steps.
pub fn steps_for(model: &ModelSpec, noise: &NoiseSpec, t_end: f64, floor: usize) -> Result<usize> {
    Ok(default_steps(model, noise, t_end)?.max(floor))
}

/// Largest deviation of `sum_m |psi_m|^2` from 1.
pub fn norm_drift(r: &TrajectoryResult) -> f64 {
    r.components
        .as_ref()
        .expect("oracle run")
        .iter()
        .map(|c| (c.norm_squared() - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn check_norm(model: &ModelSpec, t_end: f64, gamma: f64, seed: u64) -> std::result::Result<(), String> {
    let noise = NoiseSpec::gaussian_gamma(gamma, model.j0);
    let steps = steps_for(model, &noise, t_end, 1000).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::new(t_end, steps, Method::ComponentOracle);
    let r = run_trajectory(model, &noise, &cfg, seed).map_err(|e| e.to_string())?;
    let d = norm_drift(&r);
    if d <= 1e-8 {
        Ok(())
    } else {
        Err(format!("norm drift {d:e}"))
    }
}

pub fn check_bounded(model: &ModelSpec, t_end: f64, gamma: f64, seed: u64) -> std::result::Result<(), String> {
    let noise = NoiseSpec::gaussian_gamma(gamma, model.j0);
    let steps = steps_for(model, &noise, t_end, 500).map_err(|e| e.to_string())?;
    for method in [Method::VolterraQuadrature, Method::AuxiliaryOde] {
        let r = run_trajectory(model, &noise, &SolverConfig::new(t_end, steps, method), seed).map_err(|e| e.to_string())?;
        let top = r.abs_psi0().into_iter().fold(0.0, f64::max);
        if top > 1.0 + 1e-6 {
            return Err(format!("{}: max |psi0| = {top}", method.name()));
        }
    }
    Ok(())
}

/// `|psi0|` in a twisted eigenvector gauge against the original gauge.
pub fn check_gauge(model: &ModelSpec, t_end: f64, gamma: f64, seed: u64, twist: [f64; 4]) -> std::result::Result<(), String> {
    let noise = NoiseSpec::gaussian_gamma(gamma, model.j0);
    let steps = steps_for(model, &noise, t_end, 500).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::new(t_end, steps, Method::VolterraQuadrature);
    let frames = build_frames(model, &cfg).map_err(|e| e.to_string())?;
    let [a0, w0, a1, w1] = twist;
    let twisted = frames.regauge(|n, t| {
        let (a, w) = if n == 0 { (a0, w0) } else { (a1, w1) };
        (a * (w * t).sin() + 0.3 * t, a * w * (w * t).cos() + 0.3)
    });
    for method in [Method::VolterraQuadrature, Method::AuxiliaryOde] {
        let cfg = cfg.with_method(method);
        let run = |f| -> Result<Vec<f64>> { Ok(solve(&KernelContext::new(f, &noise, seed)?, &cfg)?.abs_psi0()) };
        let a = run(Arc::clone(&frames)).map_err(|e| e.to_string())?;
        let b = run(Arc::new(twisted.clone())).map_err(|e| e.to_string())?;
        let d = max_abs_diff(&a, &b);
        if d > 1e-10 {
            return Err(format!("{}: gauge changes |psi0| by {d:e}", method.name()));
        }
    }
    Ok(())
}

pub fn check_geometric_toggle(model: &ModelSpec, t_end: f64, gamma: f64, seed: u64) -> std::result::Result<(), String> {
    let noise = NoiseSpec::gaussian_gamma(gamma, model.j0);
    let steps = steps_for(model, &noise, t_end, 500).map_err(|e| e.to_string())?;
    for method in [Method::VolterraQuadrature, Method::AuxiliaryOde] {
        let cfg = SolverConfig::new(t_end, steps, method);
        let a = run_trajectory(model, &noise, &cfg, seed).map_err(|e| e.to_string())?;
        let b = run_trajectory(model, &noise, &cfg.with_geometric_term(false), seed).map_err(|e| e.to_string())?;
        let d = max_abs_diff(&a.abs_psi0(), &b.abs_psi0());
        if d > 1e-10 {
            return Err(format!("{}: toggle changes |psi0| by {d:e}", method.name()));
        }
    }
    Ok(())
}

/// Eigenvectors of `(J0 + c) h` do not depend on `c`.
pub fn check_noise_keeps_eigenvectors(model: &ModelSpec, t: f64, c: f64) -> std::result::Result<(), String> {
    let f = eval_fields(model, t).map_err(|e| e.to_string())?;
    let clean = frame_analytic(&f, model.j0, 0.0).map_err(|e| e.to_string())?;
    let noisy = frame_analytic(&f, model.j0, c).map_err(|e| e.to_string())?;
    let d = (clean.e0_vector() - noisy.e0_vector()).norm() + (clean.e1_vector() - noisy.e1_vector()).norm();
    if d > 1e-15 {
        return Err(format!("analytic eigenvectors moved by {d:e}"));
    }
    let m = f.unit_matrix();
    let h = DMatrix::from_iterator(2, 2, m.iter().copied());
    let a = levels_numeric(&(&h * C64::from(model.j0)), None).map_err(|e| e.to_string())?;
    let b = levels_numeric(&(&h * C64::from(model.j0 + c)), None).map_err(|e| e.to_string())?;
    let d = (&a.vectors - &b.vectors).norm();
    if d > 1e-12 {
        return Err(format!("numeric eigenvectors moved by {d:e}"));
    }
    Ok(())
}

/// Sample mean, variance and excess kurtosis.
pub fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, var, m4 / (var * var) - 3.0)
}

/// Shot-noise increments over one step `h` against the Gaussian limit:
/// zero mean, variance `Gamma h`, no excess kurtosis, each within 3 sigma.
pub fn check_shot_moments(j: f64, w: f64, j0: f64, h: f64, paths: usize, seed: u64) -> std::result::Result<(), String> {
    let mut rng = rng_for(seed);
    let xs: Vec<f64> = (0..paths)
        .map(|_| shot_increment(j, w, j0, h, &mut rng))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let n = paths as f64;
    let target = j * j / j0 * h;
    let (mean, var, kurt) = moments(&xs);
    let checks = [
        ("mean", mean, 0.0, (target / n).sqrt()),
        ("variance", var, target, target * (2.0 / n).sqrt()),
        ("excess kurtosis", kurt, 0.0, (24.0 / n).sqrt()),
    ];
    for (name, got, want, se) in checks {
        if (got - want).abs() > 3.0 * se {
            return Err(format!("{name} {got:e}, Gaussian value {want:e}, 3 sigma = {:e}", 3.0 * se));
        }
    }
    Ok(())
}

/// Ensemble density matrices are Hermitian, unit-trace and positive, with
/// purity at most 1.
pub fn check_rho(model: &ModelSpec, t_end: f64, gamma: f64, n_traj: usize, seed: u64) -> std::result::Result<(), String> {
    let noise = NoiseSpec::gaussian_gamma(gamma, model.j0);
    let steps = steps_for(model, &noise, t_end, 500).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::new(t_end, steps, Method::ComponentOracle);
    let e = run_ensemble(model, &noise, &cfg, n_traj, seed).map_err(|e| e.to_string())?;
    for (i, rho) in e.rho.iter().enumerate() {
        let herm = (rho - rho.adjoint()).norm();
        let tr = (rho.trace() - C64::from(1.0)).norm();
        let low = rho.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if herm > 1e-8 || tr > 1e-8 || low < -1e-8 || e.purity[i] > 1.0 + 1e-8 {
            return Err(format!(
                "t = {}: hermiticity {herm:e}, trace {tr:e}, min eigenvalue {low:e}, purity {}",
                e.grid.t(i),
                e.purity[i]
            ));
        }
    }
    Ok(())
}
