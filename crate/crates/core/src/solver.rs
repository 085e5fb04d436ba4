//! Time evolution of the target component.
//!
//! * [`solve_volterra`] integrates the one-component integro-differential
//!   equation directly, summing the memory integral over the whole history
//!   at every step.
//! * [`solve_auxiliary`] uses the separable two-level kernel to replace the
//!   memory by one auxiliary amplitude and integrates the pair with RK4.
//! * [`solve_components`] integrates all eigenbasis components in the
//!   rotating representation and serves as the reference.

use std::sync::Arc;

use nalgebra::DVector;

use crate::eigenframe::FramePath;
use crate::kernel::KernelContext;
use crate::models::HamiltonianPath;
use crate::noise::{NoiseKind, NoiseSpec};
use crate::{Error, Grid, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Upper bound on `h * max|E|`.
pub const RESOLUTION_LIMIT: f64 = 0.1;

/// Smallest number of steps accepted by [`SolverConfig::validate`].
pub const MIN_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    VolterraQuadrature,
    AuxiliaryOde,
    ComponentOracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::VolterraQuadrature => "volterra",
            Method::AuxiliaryOde => "auxiliary",
            Method::ComponentOracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "volterra" => Some(Method::VolterraQuadrature),
            "auxiliary" => Some(Method::AuxiliaryOde),
            "oracle" => Some(Method::ComponentOracle),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub t_end: f64,
    pub steps: usize,
    pub method: Method,
    /// When false the reported `psi0` omits the geometric phase factor
    /// `exp(i beta0)`, i.e. it is the amplitude in the frame rotating with
    /// that phase.
    pub include_geometric_term: bool,
}

impl SolverConfig {
    pub fn new(t_end: f64, steps: usize, method: Method) -> Self {
        Self {
            t_end,
            steps,
            method,
            include_geometric_term: true,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_geometric_term(mut self, on: bool) -> Self {
        self.include_geometric_term = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < MIN_STEPS {
            return Err(Error::invalid(
                "steps",
                format!("need at least {MIN_STEPS}, got {}", self.steps),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", format!("must be positive, got {}", self.t_end)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.t_end, self.steps)
    }

    /// Grid on which frames are sampled: two sub-steps per solver step.
    pub fn frame_grid(&self) -> Result<Grid> {
        Grid::new(self.t_end, 2 * self.steps)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub grid: Grid,
    pub psi0: Vec<C64>,
    /// All components `psi_m` when the method provides them.
    pub components: Option<Vec<DVector<C64>>>,
    /// Memory integral `int_0^t g(t, s) psi0(s) ds` per grid point.
    pub residual: Vec<C64>,
    pub seed: Option<u64>,
    pub method: Method,
}

impl TrajectoryResult {
    pub fn abs_psi0(&self) -> Vec<f64> {
        self.psi0.iter().map(|z| z.norm()).collect()
    }
}

/// `h * spread * (J0 + c_eff)`, with `c_eff` the typical noise amplitude over
/// one step.
pub fn resolution_product(spread: f64, j0: f64, spec: &NoiseSpec, h: f64) -> f64 {
    h * spread * (j0 + spec.effective_amplitude(h))
}

/// Largest step with `resolution_product <= limit`.
pub fn max_step(spread: f64, j0: f64, spec: &NoiseSpec, limit: f64) -> f64 {
    if spread <= 0.0 {
        return f64::INFINITY;
    }
    match spec.kind {
        NoiseKind::GaussianWhite { .. } | NoiseKind::ShotNoise { .. } if spec.gamma() > 0.0 => {
            let sg = spread * spec.gamma().sqrt();
            let x = (-sg + (sg * sg + 4.0 * spread * j0 * limit).sqrt()) / (2.0 * spread * j0);
            x * x
        }
        _ => limit / (spread * (j0 + spec.effective_amplitude(1.0))),
    }
}

fn required_steps(t_end: f64, spread: f64, j0: f64, spec: &NoiseSpec) -> usize {
    (t_end / max_step(spread, j0, spec, RESOLUTION_LIMIT)).floor() as usize + 1
}

/// Refuse grids too coarse for the fastest phase.
pub fn check_resolution(ctx: &KernelContext) -> Result<()> {
    let spread = ctx.frames().max_spread();
    let j0 = ctx.frames().j0();
    let grid = ctx.grid();
    let (product, required) = if ctx.is_averaged() {
        // the averaged kernel has no noise phase, only a decay at rate Gamma k^2 / 2
        let rate = spread * (j0 + 0.5 * ctx.noise_spec().gamma() * spread);
        (grid.h() * rate, (grid.t_end() * rate / RESOLUTION_LIMIT).floor() as usize + 1)
    } else {
        (
            resolution_product(spread, j0, ctx.noise_spec(), grid.h()),
            required_steps(grid.t_end(), spread, j0, ctx.noise_spec()),
        )
    };
    if product >= RESOLUTION_LIMIT {
        return Err(Error::Resolution {
            product,
            limit: RESOLUTION_LIMIT,
            required_steps: required,
        });
    }
    Ok(())
}

/// Largest level spread of `path` on `[0, t_end]`, sampled on 2001 points.
pub fn sampled_spread(path: &dyn HamiltonianPath, t_end: f64) -> Result<f64> {
    let mut spread: f64 = 0.0;
    for i in 0..=2000 {
        let t = t_end * i as f64 / 2000.0;
        let h = path.unit_hamiltonian(t)?;
        let e = h.symmetric_eigenvalues();
        let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(hi - lo);
    }
    Ok(spread)
}

/// Steps with `h <= min(0.01/J0, 0.1/(J0 k_max), 0.2/W)` that also clear the
/// resolution guard with a 10% margin.
pub fn default_steps(path: &dyn HamiltonianPath, spec: &NoiseSpec, t_end: f64) -> Result<usize> {
    let j0 = path.j0();
    let spread = sampled_spread(path, t_end)?;
    let mut h = (0.01 / j0).min(0.9 * max_step(spread, j0, spec, RESOLUTION_LIMIT));
    if spread > 0.0 {
        h = h.min(0.1 / (j0 * spread));
    }
    if let NoiseKind::ShotNoise { w, .. } = spec.kind {
        h = h.min(0.2 / w);
    }
    Ok(((t_end / h).ceil() as usize).max(MIN_STEPS))
}

pub fn build_frames(path: &dyn HamiltonianPath, cfg: &SolverConfig) -> Result<Arc<FramePath>> {
    cfg.validate()?;
    Ok(Arc::new(FramePath::build(path, cfg.frame_grid()?)?))
}

/// Frames, one noise realization and the kernel context for `cfg`.
pub fn prepare(path: &dyn HamiltonianPath, noise: &NoiseSpec, cfg: &SolverConfig, seed: u64) -> Result<KernelContext> {
    let frames = build_frames(path, cfg)?;
    let ctx = KernelContext::new(frames, noise, seed)?;
    check_resolution(&ctx)?;
    Ok(ctx)
}

/// One trajectory from scratch.
pub fn run_trajectory(
    path: &dyn HamiltonianPath,
    noise: &NoiseSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<TrajectoryResult> {
    let ctx = prepare(path, noise, cfg, seed)?;
    solve(&ctx, cfg)
}

pub fn solve(ctx: &KernelContext, cfg: &SolverConfig) -> Result<TrajectoryResult> {
    match cfg.method {
        Method::VolterraQuadrature => solve_volterra(ctx, cfg),
        Method::AuxiliaryOde => solve_auxiliary(ctx, cfg),
        Method::ComponentOracle => solve_components(ctx, cfg),
    }
}

fn check_config(ctx: &KernelContext, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let g = ctx.grid();
    if g.steps() != cfg.steps || (g.t_end() - cfg.t_end).abs() > 1e-12 * cfg.t_end {
        return Err(Error::GridMismatch(format!(
            "context grid ({} steps to {}) differs from the solver config ({} steps to {})",
            g.steps(),
            g.t_end(),
            cfg.steps,
            cfg.t_end
        )));
    }
    check_resolution(ctx)
}

fn target_start(ctx: &KernelContext) -> Result<C64> {
    let init = ctx.frames().initial_amplitudes();
    let population = init[0].norm_sqr();
    if (population - 1.0).abs() > 1e-9 {
        return Err(Error::NotInTargetState { population });
    }
    Ok(init[0])
}

/// `int_0^1 (1 - x) e^{-i d x} dx` and `int_0^1 x e^{-i d x} dx`.
pub fn filon_weights(d: C64) -> (C64, C64) {
    let z = -I * d;
    if z.norm() < 0.5 {
        let (mut p, mut q) = (C64::from(0.0), C64::from(0.0));
        let mut term = C64::from(1.0);
        for k in 0..24 {
            let kf = k as f64;
            p += term / ((kf + 1.0) * (kf + 2.0));
            q += term / (kf + 2.0);
            term = term * z / (kf + 1.0);
        }
        (p, q)
    } else {
        let ez = z.exp();
        let q = (ez * (z - 1.0) + 1.0) / (z * z);
        let p = (ez - 1.0) / z - q;
        (p, q)
    }
}

/// Product-integration solver for `phi = exp(-i beta0) psi0`.
///
/// Between nodes the kernel phase is taken linear and the smooth remainder
/// of the integrand piecewise linear, which integrates the fast phase of
/// the memory exactly. The implicit end-point term is linear in the new
/// value and is solved for directly.
pub fn solve_volterra(ctx: &KernelContext, cfg: &SolverConfig) -> Result<TrajectoryResult> {
    check_config(ctx, cfg)?;
    let phi0 = target_start(ctx)?;
    let grid = ctx.grid();
    let n_steps = grid.steps();
    let h = grid.h();

    let mut delta = Vec::with_capacity(n_steps);
    for j in 0..n_steps {
        delta.push(ctx.kernel_phase(j + 1) - ctx.kernel_phase(j));
    }
    let fw: Vec<(C64, C64)> = delta.iter().map(|&d| filon_weights(d)).collect();
    let bw: Vec<(C64, C64)> = delta.iter().map(|&d| filon_weights(-d)).collect();
    let rot: Vec<C64> = delta.iter().map(|&d| (I * d).exp()).collect();
    // quadrature weight of node j for integrals ending beyond j
    let weights: Vec<C64> = (0..n_steps)
        .map(|j| {
            let mut w = fw[j].0 * h;
            if j > 0 {
                w += rot[j - 1] * fw[j - 1].1 * h;
            }
            w
        })
        .collect();

    let split = ctx.split_factors();
    let g = |n: usize, j: usize| -> C64 {
        match &split {
            Some((a, b)) => a[n] * b[j],
            None => ctx.dressed(n, j),
        }
    };

    let mut phi = vec![C64::from(0.0); n_steps + 1];
    let mut memory = vec![C64::from(0.0); n_steps + 1];
    phi[0] = phi0;
    let mut history = vec![C64::from(0.0); n_steps + 1];
    for n in 0..n_steps {
        history[n] = weights[n] * phi[n];
        let known: C64 = (0..=n).map(|j| g(n + 1, j) * history[j]).sum();
        let implicit = g(n + 1, n + 1) * rot[n] * fw[n].1 * h;
        let back = (-I * delta[n]).exp() * bw[n].1;
        let rhs = phi[n] - h * (memory[n] * bw[n].0 + known * back);
        phi[n + 1] = rhs / (1.0 + h * implicit * back);
        memory[n + 1] = known + implicit * phi[n + 1];
    }

    let psi0 = (0..=n_steps)
        .map(|n| {
            if cfg.include_geometric_term {
                phi[n] * C64::from_polar(1.0, ctx.beta0(n))
            } else {
                phi[n]
            }
        })
        .collect();
    let residual = (0..=n_steps)
        .map(|n| memory[n] * C64::from_polar(1.0, ctx.beta0(n)))
        .collect();
    Ok(TrajectoryResult {
        grid,
        psi0,
        components: None,
        residual,
        seed: ctx.noise_path().map(|p| p.seed()),
        method: Method::VolterraQuadrature,
    })
}

/// RK4 on `phi' = -u z`, `z' = v phi` with the separable dressed kernel
/// `u(t) v(s)`; the second component is `psi1 = -z exp(i beta1)`.
pub fn solve_auxiliary(ctx: &KernelContext, cfg: &SolverConfig) -> Result<TrajectoryResult> {
    if !ctx.is_separable() {
        return Err(Error::Unsupported(
            "the auxiliary solver needs a separable (two-level) kernel".into(),
        ));
    }
    if ctx.is_averaged() {
        return Err(Error::Unsupported(
            "the averaged kernel is solved with the Volterra method".into(),
        ));
    }
    check_config(ctx, cfg)?;
    let phi0 = target_start(ctx)?;
    let grid = ctx.grid();
    let n_steps = grid.steps();
    let h = grid.h();
    let phases = ctx.phases();

    let mut phi = Vec::with_capacity(n_steps + 1);
    let mut z = Vec::with_capacity(n_steps + 1);
    phi.push(phi0);
    z.push(C64::from(0.0));
    let rhs = |i: usize, p: C64, y: C64| {
        let (u, v) = ctx.factors_fine(i);
        (-u * y, v * p)
    };
    for n in 0..n_steps {
        let (p, y) = (phi[n], z[n]);
        let (k1p, k1z) = rhs(2 * n, p, y);
        let (k2p, k2z) = rhs(2 * n + 1, p + k1p * (0.5 * h), y + k1z * (0.5 * h));
        let (k3p, k3z) = rhs(2 * n + 1, p + k2p * (0.5 * h), y + k2z * (0.5 * h));
        let (k4p, k4z) = rhs(2 * n + 2, p + k3p * h, y + k3z * h);
        phi.push(p + (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0));
        z.push(y + (k1z + 2.0 * k2z + 2.0 * k3z + k4z) * (h / 6.0));
    }

    let mut psi0 = Vec::with_capacity(n_steps + 1);
    let mut comps = Vec::with_capacity(n_steps + 1);
    let mut residual = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let geo0 = C64::from_polar(1.0, phases.beta(2 * n, 0));
        let geo1 = C64::from_polar(1.0, phases.beta(2 * n, 1));
        let full = phi[n] * geo0;
        psi0.push(if cfg.include_geometric_term { full } else { phi[n] });
        comps.push(DVector::from_vec(vec![full, -z[n] * geo1]));
        residual.push(ctx.factors_fine(2 * n).0 * z[n] * geo0);
    }
    Ok(TrajectoryResult {
        grid,
        psi0,
        components: Some(comps),
        residual,
        seed: ctx.noise_path().map(|p| p.seed()),
        method: Method::AuxiliaryOde,
    })
}

/// RK4 on all components,
/// `psi_m' = -sum_n <E_m|dE_n/dt> exp(i(theta_n - theta_m)) psi_n`.
pub fn solve_components(ctx: &KernelContext, cfg: &SolverConfig) -> Result<TrajectoryResult> {
    if ctx.is_averaged() {
        return Err(Error::Unsupported(
            "the component oracle follows single noise realizations".into(),
        ));
    }
    check_config(ctx, cfg)?;
    let frames = ctx.frames();
    let phases = ctx.phases();
    let dim = ctx.dim();
    let grid = ctx.grid();
    let n_steps = grid.steps();
    let h = grid.h();
    let fine = ctx.fine_grid();

    let mut a = Vec::with_capacity(fine.len() * dim * dim);
    for i in 0..fine.len() {
        for m in 0..dim {
            for n in 0..dim {
                let ph = phases.theta(i, n) - phases.theta(i, m);
                a.push(-frames.coupling(i, m, n) * C64::from_polar(1.0, ph));
            }
        }
    }
    let apply = |i: usize, x: &[C64], out: &mut [C64]| {
        let blk = &a[i * dim * dim..(i + 1) * dim * dim];
        for m in 0..dim {
            out[m] = (0..dim).map(|n| blk[m * dim + n] * x[n]).sum();
        }
    };

    let mut psi: Vec<C64> = frames.initial_amplitudes().iter().copied().collect();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(psi.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![C64::from(0.0); dim], vec![C64::from(0.0); dim], vec![C64::from(0.0); dim], vec![C64::from(0.0); dim]);
    let mut tmp = vec![C64::from(0.0); dim];
    for n in 0..n_steps {
        apply(2 * n, &psi, &mut k1);
        for m in 0..dim {
            tmp[m] = psi[m] + k1[m] * (0.5 * h);
        }
        apply(2 * n + 1, &tmp, &mut k2);
        for m in 0..dim {
            tmp[m] = psi[m] + k2[m] * (0.5 * h);
        }
        apply(2 * n + 1, &tmp, &mut k3);
        for m in 0..dim {
            tmp[m] = psi[m] + k3[m] * h;
        }
        apply(2 * n + 2, &tmp, &mut k4);
        for m in 0..dim {
            psi[m] += (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]) * (h / 6.0);
        }
        states.push(psi.clone());
    }

    let mut psi0 = Vec::with_capacity(n_steps + 1);
    let mut residual = Vec::with_capacity(n_steps + 1);
    for (n, s) in states.iter().enumerate() {
        let i = 2 * n;
        psi0.push(if cfg.include_geometric_term {
            s[0]
        } else {
            s[0] * C64::from_polar(1.0, -phases.beta(i, 0))
        });
        residual.push(
            (1..dim)
                .map(|m| {
                    frames.coupling(i, 0, m)
                        * C64::from_polar(1.0, phases.theta(i, m) - phases.theta(i, 0))
                        * s[m]
                })
                .sum(),
        );
    }
    Ok(TrajectoryResult {
        grid,
        psi0,
        components: Some(states.into_iter().map(DVector::from_vec).collect()),
        residual,
        seed: ctx.noise_path().map(|p| p.seed()),
        method: Method::ComponentOracle,
    })
}

/// Memory integral `int_0^t g(t, s) psi0(s) ds` of a finished run; its
/// vanishing is the adiabatic condition.
pub fn adiabatic_residual(ctx: &KernelContext, result: &TrajectoryResult, t: f64) -> Result<C64> {
    if result.grid != ctx.grid() {
        return Err(Error::GridMismatch("result was computed on another grid".into()));
    }
    Ok(result.residual[ctx.grid().index_of(t)?])
}

/// Closed-form `|psi0(t)|` for the rotating-field qubit without noise,
/// started in its upper eigenstate.
///
/// In the frame rotating with the field the Hamiltonian is static,
/// `B . sigma` with `B = (J0, 0, J0 omega/2 - Omega/2)`, and the target
/// eigenvector is the fixed Bloch direction `n0 ~ (1, 0, omega/2)`.
pub fn rabi_reference(omega: f64, omega_z: f64, j0: f64, t: f64) -> f64 {
    let b = [j0, 0.0, 0.5 * (j0 * omega_z - omega)];
    let bn = (b[0] * b[0] + b[2] * b[2]).sqrt();
    let n0n = (1.0 + 0.25 * omega_z * omega_z).sqrt();
    let n0 = [1.0 / n0n, 0.0, 0.5 * omega_z / n0n];
    let c = (b[0] * n0[0] + b[2] * n0[2]) / bn;
    let overlap = c * c + (1.0 - c * c) * (2.0 * bn * t).cos();
    (0.5 * (1.0 + overlap)).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, Profile};

    fn constant_model() -> ModelSpec {
        ModelSpec::generic(Profile::constant(0.4), Profile::constant(0.1), Profile::constant(1.2))
    }

    #[test]
    fn filon_weights_limits() {
        let (p, q) = filon_weights(C64::from(0.0));
        assert!((p - C64::from(0.5)).norm() < 1e-15 && (q - C64::from(0.5)).norm() < 1e-15);
        for d in [C64::new(0.49, 0.0), C64::new(0.51, 0.0), C64::new(3.0, 0.2), C64::new(-0.3, 0.1)] {
            let n = 20_000;
            let (mut p, mut q) = (C64::from(0.0), C64::from(0.0));
            for k in 0..n {
                let x = (k as f64 + 0.5) / n as f64;
                let e = (-I * d * x).exp();
                p += e * (1.0 - x) / n as f64;
                q += e * x / n as f64;
            }
            let (pw, qw) = filon_weights(d);
            assert!((pw - p).norm() < 1e-8 && (qw - q).norm() < 1e-8, "{d}");
        }
    }

    #[test]
    fn constant_hamiltonian_is_stationary() {
        let m = constant_model();
        for method in [Method::VolterraQuadrature, Method::AuxiliaryOde, Method::ComponentOracle] {
            let cfg = SolverConfig::new(2.0, 200, method);
            let r = run_trajectory(&m, &NoiseSpec::none(), &cfg, 0).unwrap();
            assert!(r.abs_psi0().iter().all(|&x| (x - 1.0).abs() < 1e-14), "{method:?}");
            assert!(r.residual.iter().all(|z| *z == C64::from(0.0)));
        }
    }

    #[test]
    fn methods_agree_on_model_a() {
        let m = ModelSpec::model_a(5.0, 5.0);
        let cfg = SolverConfig::new(std::f64::consts::PI, 4000, Method::VolterraQuadrature);
        let ctx = prepare(&m, &NoiseSpec::none(), &cfg, 0).unwrap();
        let v = solve_volterra(&ctx, &cfg).unwrap().abs_psi0();
        let a = solve_auxiliary(&ctx, &cfg).unwrap().abs_psi0();
        let o = solve_components(&ctx, &cfg).unwrap().abs_psi0();
        for i in 0..v.len() {
            assert!((v[i] - o[i]).abs() < 1e-5, "{i}: {} {}", v[i], o[i]);
            assert!((a[i] - o[i]).abs() < 1e-8, "{i}: {} {}", a[i], o[i]);
            let exact = rabi_reference(5.0, 5.0, 1.0, ctx.grid().t(i));
            assert!((o[i] - exact).abs() < 1e-8, "{i}: {} {}", o[i], exact);
        }
    }

    #[test]
    fn rabi_minimum() {
        let min = (0..=10_000)
            .map(|i| rabi_reference(5.0, 5.0, 1.0, std::f64::consts::PI * i as f64 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!((min - 0.3714).abs() < 1e-4, "{min}");
    }

    #[test]
    fn resolution_guard_refuses() {
        let m = ModelSpec::model_a(5.0, 5.0);
        let cfg = SolverConfig::new(10.0, 50, Method::AuxiliaryOde);
        match prepare(&m, &NoiseSpec::none(), &cfg, 0) {
            Err(Error::Resolution { required_steps, .. }) => {
                let ok = SolverConfig::new(10.0, required_steps, Method::AuxiliaryOde);
                prepare(&m, &NoiseSpec::none(), &ok, 0).unwrap();
            }
            other => panic!("expected refusal, got {other:?}"),
        }
        let noisy = NoiseSpec::gaussian_gamma(4.0, 1.0);
        let steps = default_steps(&m, &noisy, std::f64::consts::PI).unwrap();
        let cfg = SolverConfig::new(std::f64::consts::PI, steps, Method::AuxiliaryOde);
        prepare(&m, &noisy, &cfg, 1).unwrap();
        assert!(SolverConfig::new(1.0, 5, Method::AuxiliaryOde).validate().is_err());
    }

    #[test]
    fn off_target_start_only_in_oracle() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = ModelSpec::model_b(1.0).with_model_b_init(C64::from(s), C64::new(0.0, s));
        let cfg = SolverConfig::new(1.0, 200, Method::VolterraQuadrature);
        let ctx = prepare(&m, &NoiseSpec::none(), &cfg, 0).unwrap();
        assert!(matches!(solve_volterra(&ctx, &cfg), Err(Error::NotInTargetState { .. })));
        let r = solve_components(&ctx, &cfg).unwrap();
        assert!((r.psi0[0].norm() - s).abs() < 1e-14);
        let c = r.components.unwrap();
        let norm: f64 = c.last().unwrap().iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn residual_lookup() {
        let m = ModelSpec::linear_sweep(1.0);
        let cfg = SolverConfig::new(1.0, 100, Method::AuxiliaryOde);
        let ctx = prepare(&m, &NoiseSpec::none(), &cfg, 0).unwrap();
        let r = solve(&ctx, &cfg).unwrap();
        assert_eq!(adiabatic_residual(&ctx, &r, 0.0).unwrap(), C64::from(0.0));
        assert!(adiabatic_residual(&ctx, &r, 0.5).unwrap().norm() > 0.0);
        assert!(adiabatic_residual(&ctx, &r, 0.505).is_err());
    }
}
