//! Memory kernel `g(t, s)` of the one-component equation
//!
//! ```text
//! d/dt psi0(t) = -<E0|dE0/dt> psi0(t) - int_0^t g(t, s) psi0(s) ds
//! ```
//!
//! For two levels the kernel is separable,
//! `g(t, s) = -C01(t) C10(s) exp(i[theta10(t) - theta10(s)] + i[beta1(t) - beta1(s)])`
//! with `C_mn = <E_m|dE_n/dt>` and `theta10 = theta1 - theta0`. For more
//! levels it is `R(t) G(t, s) W(s)` with `G` the time-ordered propagator of
//! the rotating-frame Hamiltonian `D` restricted to the non-target levels.
//!
//! The solvers work with `phi = exp(-i beta0) psi0`, which removes the
//! diagonal term; the corresponding "dressed" kernel is
//! `exp(-i beta0(t)) g(t, s) exp(i beta0(s))`.
//!
//! A context lives on a solver grid with `N` steps and reads frames and
//! phases on the doubled grid, so step midpoints are available.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::eigenframe::{accumulate_phases, cumulative_integral, FramePath, PhaseTable};
use crate::noise::{sample_path, NoiseKind, NoisePath, NoiseSpec};
use crate::{Error, Grid, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// Largest exponent for which the damped separable factors are stored
/// directly instead of forming the damping per pair.
const SPLIT_DAMPING_LIMIT: f64 = 300.0;

#[derive(Debug)]
struct GenericFactors {
    /// `exp(-i beta0) R U` per solver node.
    r: Vec<DVector<C64>>,
    /// `U^dagger W exp(i beta0)` per solver node.
    w: Vec<DVector<C64>>,
}

#[derive(Debug)]
pub struct KernelContext {
    frames: Arc<FramePath>,
    phases: PhaseTable,
    spec: NoiseSpec,
    noise: Option<NoisePath>,
    grid: Grid,
    /// `(Gamma/2) int_0^t k^2` on the frame grid, for the averaged kernel.
    damping: Option<Vec<f64>>,
    /// Unwrapped phase of `u` at solver nodes (two levels only).
    u_phase: Vec<f64>,
    u: Vec<C64>,
    v: Vec<C64>,
    generic: OnceLock<GenericFactors>,
}

fn solver_grid(frames: &FramePath) -> Result<Grid> {
    let fine = frames.grid();
    if !fine.steps().is_multiple_of(2) {
        return Err(Error::GridMismatch(
            "frame grid must have twice the solver steps".into(),
        ));
    }
    Grid::new(fine.t_end(), fine.steps() / 2)
}

impl KernelContext {
    /// Context for one realization of `spec` drawn with `seed`.
    pub fn new(frames: Arc<FramePath>, spec: &NoiseSpec, seed: u64) -> Result<Self> {
        let grid = solver_grid(&frames)?;
        let noise = if spec.is_none() {
            None
        } else {
            Some(sample_path(spec, grid, seed)?)
        };
        Self::build(frames, *spec, noise, None)
    }

    pub fn noise_free(frames: Arc<FramePath>) -> Result<Self> {
        Self::build(frames, NoiseSpec::none(), None, None)
    }

    /// Context for a given noise path on the solver grid.
    pub fn with_path(frames: Arc<FramePath>, spec: &NoiseSpec, path: NoisePath) -> Result<Self> {
        Self::build(frames, *spec, Some(path), None)
    }

    /// Noise-free phases with the kernel attenuated by the ensemble average
    /// `exp(-(Gamma/2) int_s^t k^2)`.
    pub fn averaged(frames: Arc<FramePath>, spec: &NoiseSpec) -> Result<Self> {
        if let NoiseKind::Deterministic { .. } = spec.kind {
            return Err(Error::Unsupported(
                "the averaged kernel needs stochastic noise".into(),
            ));
        }
        if frames.dim() != 2 {
            return Err(Error::Unsupported(
                "the averaged kernel is implemented for two levels".into(),
            ));
        }
        let fine = frames.grid();
        let k2: Vec<f64> = (0..fine.len())
            .map(|i| (frames.energy(i, 0) - frames.energy(i, 1)).powi(2))
            .collect();
        let gamma = spec.gamma();
        let damping = cumulative_integral(&k2, fine.h())
            .into_iter()
            .map(|x| 0.5 * gamma * x)
            .collect();
        Self::build(frames, *spec, None, Some(damping))
    }

    fn build(
        frames: Arc<FramePath>,
        spec: NoiseSpec,
        noise: Option<NoisePath>,
        damping: Option<Vec<f64>>,
    ) -> Result<Self> {
        let grid = solver_grid(&frames)?;
        if let Some(p) = &noise {
            if p.grid().steps() != grid.steps() {
                return Err(Error::GridMismatch(format!(
                    "noise path has {} steps, solver grid {}",
                    p.grid().steps(),
                    grid.steps()
                )));
            }
        }
        let phases = accumulate_phases(&frames, noise.as_ref())?;
        let (mut big_theta, mut u, mut v) = (Vec::new(), Vec::new(), Vec::new());
        if frames.dim() == 2 {
            let n = frames.grid().len();
            big_theta.reserve(n);
            u.reserve(n);
            v.reserve(n);
            for i in 0..n {
                let th = phases.total(i, 1) - phases.total(i, 0);
                let ph = C64::from_polar(1.0, th);
                big_theta.push(th);
                u.push(-frames.coupling(i, 0, 1) * ph);
                v.push(frames.coupling(i, 1, 0) * ph.conj());
            }
        }
        let u_phase = unwrapped_phase(&u, &big_theta, grid.len());
        Ok(Self {
            frames,
            phases,
            spec,
            noise,
            grid,
            damping,
            u_phase,
            u,
            v,
            generic: OnceLock::new(),
        })
    }

    /// Solver grid.
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Frame grid (twice as fine as the solver grid).
    pub fn fine_grid(&self) -> Grid {
        self.frames.grid()
    }

    pub fn dim(&self) -> usize {
        self.frames.dim()
    }

    pub fn frames(&self) -> &FramePath {
        &self.frames
    }

    pub fn phases(&self) -> &PhaseTable {
        &self.phases
    }

    pub fn noise_spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn noise_path(&self) -> Option<&NoisePath> {
        self.noise.as_ref()
    }

    pub fn is_averaged(&self) -> bool {
        self.damping.is_some()
    }

    pub fn is_separable(&self) -> bool {
        self.dim() == 2
    }

    /// `beta0` at solver node `n`.
    pub fn beta0(&self, n: usize) -> f64 {
        self.phases.beta(2 * n, 0)
    }

    /// Phase of the dressed factor `u` at solver node `n`, unwrapped along
    /// the grid, with the averaged attenuation as its imaginary part. Zero
    /// for multi-level paths.
    ///
    /// Taken from `u` itself rather than from the level phases, so it does
    /// not depend on the eigenvector gauge.
    pub fn kernel_phase(&self, n: usize) -> C64 {
        if !self.is_separable() {
            return C64::from(0.0);
        }
        let d = self.damping.as_ref().map_or(0.0, |d| d[2 * n]);
        C64::new(self.u_phase[n], d)
    }

    /// Dressed separable factors `(u, v)` at frame-grid index `i`, without
    /// any averaged attenuation.
    pub fn factors_fine(&self, i: usize) -> (C64, C64) {
        (self.u[i], self.v[i])
    }

    /// Dressed factors at solver nodes with the attenuation folded in, when
    /// that can be done without overflow.
    pub(crate) fn split_factors(&self) -> Option<(Vec<C64>, Vec<C64>)> {
        if !self.is_separable() {
            return None;
        }
        let n = self.grid.len();
        match &self.damping {
            None => Some((
                (0..n).map(|j| self.u[2 * j]).collect(),
                (0..n).map(|j| self.v[2 * j]).collect(),
            )),
            Some(d) if d[2 * (n - 1)] <= SPLIT_DAMPING_LIMIT => Some((
                (0..n).map(|j| self.u[2 * j] * (-d[2 * j]).exp()).collect(),
                (0..n).map(|j| self.v[2 * j] * d[2 * j].exp()).collect(),
            )),
            Some(_) => None,
        }
    }

    /// Dressed kernel between solver nodes `n >= j`, including the averaged
    /// attenuation when present.
    pub fn dressed(&self, n: usize, j: usize) -> C64 {
        if self.is_separable() {
            let g = self.u[2 * n] * self.v[2 * j];
            match &self.damping {
                Some(d) => g * (d[2 * j] - d[2 * n]).exp(),
                None => g,
            }
        } else {
            let f = self.generic_factors();
            f.r[n].iter().zip(f.w[j].iter()).map(|(a, b)| a * b).sum()
        }
    }

    fn check_pair(&self, n: usize, j: usize) -> Result<()> {
        if j > n || n >= self.grid.len() {
            return Err(Error::invalid("s", format!("need s <= t on the grid, got nodes {j} > {n}")));
        }
        Ok(())
    }

    /// Two-level kernel `g(t_n, t_j)` of one noise realization.
    pub fn kernel_tls(&self, n: usize, j: usize) -> Result<C64> {
        if !self.is_separable() {
            return Err(Error::Unsupported("kernel_tls needs a two-level path".into()));
        }
        self.check_pair(n, j)?;
        let geo = C64::from_polar(1.0, self.beta0(n) - self.beta0(j));
        Ok(self.u[2 * n] * self.v[2 * j] * geo)
    }

    /// `R(t_n) G(t_n, t_j) W(t_j)` for any number of levels.
    pub fn kernel_generic(&self, n: usize, j: usize) -> Result<C64> {
        if self.dim() < 2 {
            return Err(Error::Unsupported("kernel_generic needs at least two levels".into()));
        }
        self.check_pair(n, j)?;
        let f = self.generic_factors();
        let dressed: C64 = f.r[n].iter().zip(f.w[j].iter()).map(|(a, b)| a * b).sum();
        Ok(dressed * C64::from_polar(1.0, self.beta0(n) - self.beta0(j)))
    }

    /// Noise-averaged two-level kernel.
    pub fn kernel_averaged(&self, n: usize, j: usize) -> Result<C64> {
        let d = self.damping.as_ref().ok_or_else(|| {
            Error::Unsupported("context was not built with KernelContext::averaged".into())
        })?;
        Ok(self.kernel_tls(n, j)? * (d[2 * j] - d[2 * n]).exp())
    }

    fn generic_factors(&self) -> &GenericFactors {
        self.generic.get_or_init(|| build_generic(&self.frames, &self.phases, self.grid))
    }
}

/// Phase of `u` at solver nodes, accumulated from the principal argument of
/// `u[n+1] / u[n]`; where `u` vanishes the increment of `theta` is used.
fn unwrapped_phase(u: &[C64], theta: &[f64], nodes: usize) -> Vec<f64> {
    if u.is_empty() {
        return Vec::new();
    }
    let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tiny = 1e-12 * scale;
    let mut out = Vec::with_capacity(nodes);
    out.push(theta[0]);
    for n in 0..nodes - 1 {
        let (a, b) = (u[2 * n], u[2 * n + 2]);
        let step = if a.norm() > tiny && b.norm() > tiny {
            (b * a.conj()).arg()
        } else {
            theta[2 * n + 2] - theta[2 * n]
        };
        out.push(out[n] + step);
    }
    out
}

/// `exp(-i b h)` for Hermitian `b`.
fn expm_hermitian(b: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
    let herm = (b + b.adjoint()) * C64::from(0.5);
    let eig = herm.symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * h)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn build_generic(frames: &FramePath, phases: &PhaseTable, grid: Grid) -> GenericFactors {
    let q = frames.dim() - 1;
    let h = grid.h();
    let d_at = |i: usize| {
        DMatrix::from_fn(q, q, |a, b| {
            let (m, n) = (a + 1, b + 1);
            -I * frames.coupling(i, m, n) * C64::from_polar(1.0, phases.theta(i, n) - phases.theta(i, m))
        })
    };
    let r_at = |i: usize| {
        DVector::from_fn(q, |a, _| {
            let m = a + 1;
            -I * frames.coupling(i, 0, m) * C64::from_polar(1.0, phases.theta(i, m) - phases.theta(i, 0))
        })
    };
    let mut u = DMatrix::<C64>::identity(q, q);
    let mut r = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    for n in 0..grid.len() {
        if n > 0 {
            // commutator-free fourth-order step from the endpoints and midpoint
            let (d0, dm, d1) = (d_at(2 * n - 2), d_at(2 * n - 1), d_at(2 * n));
            let twelfth = C64::from(1.0 / 12.0);
            let b1 = (&d0 * C64::from(3.0) + &dm * C64::from(4.0) - &d1) * twelfth;
            let b2 = (&d1 * C64::from(3.0) + &dm * C64::from(4.0) - &d0) * twelfth;
            u = expm_hermitian(&b2, h) * expm_hermitian(&b1, h) * u;
        }
        let i = 2 * n;
        let rv = r_at(i);
        let geo = C64::from_polar(1.0, phases.beta(i, 0));
        r.push((u.transpose() * &rv) * geo.conj());
        w.push((u.adjoint() * rv.conjugate()) * geo);
    }
    GenericFactors { r, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, Profile};

    fn ctx(model: &ModelSpec, t_end: f64, steps: usize) -> KernelContext {
        let fine = Grid::new(t_end, 2 * steps).unwrap();
        KernelContext::noise_free(Arc::new(FramePath::build(model, fine).unwrap())).unwrap()
    }

    #[test]
    fn model_a_modulus() {
        let c = ctx(&ModelSpec::model_a(5.0, 5.0), 1.0, 100);
        for (n, j) in [(0, 0), (50, 3), (100, 99), (77, 12)] {
            let g = c.kernel_tls(n, j).unwrap();
            assert!((g.norm() - 25.0 / 29.0).abs() < 1e-12);
        }
        assert!((25.0f64 / 29.0 - 0.8621).abs() < 5e-5);
    }

    #[test]
    fn linear_sweep_origin() {
        let c = ctx(&ModelSpec::linear_sweep(1.0), 1.0, 100);
        let g = c.kernel_tls(0, 0).unwrap();
        assert!((g - C64::from(0.25)).norm() < 1e-14, "{g}");
        assert!(c.kernel_tls(3, 5).is_err());
    }

    #[test]
    fn constant_hamiltonian_has_no_kernel() {
        let m = ModelSpec::generic(Profile::constant(0.3), Profile::constant(-0.2), Profile::constant(1.0));
        let c = ctx(&m, 2.0, 40);
        assert_eq!(c.kernel_tls(40, 0).unwrap(), C64::from(0.0));
        assert_eq!(c.kernel_generic(40, 7).unwrap(), C64::from(0.0));
    }

    #[test]
    fn generic_equals_tls_for_two_levels() {
        let m = ModelSpec::generic(
            Profile { offset: 0.2, amplitude: 0.8, frequency: 1.3, ..Profile::default() },
            Profile { amplitude: 0.5, frequency: 0.7, phase: -std::f64::consts::FRAC_PI_2, ..Profile::default() },
            Profile { offset: 1.5, slope: -0.4, ..Profile::default() },
        );
        let c = ctx(&m, 2.0, 400);
        for n in (0..=400).step_by(37) {
            for j in (0..=n).step_by(23) {
                let a = c.kernel_tls(n, j).unwrap();
                let b = c.kernel_generic(n, j).unwrap();
                assert!((a - b).norm() < 1e-8, "{n} {j}: {a} vs {b}");
            }
        }
        for n in [0, 10, 200] {
            let f = c.frames();
            let diag = f.coupling(2 * n, 0, 1).norm_sqr();
            assert!((c.kernel_generic(n, n).unwrap() - C64::from(diag)).norm() < 1e-12);
        }
    }

    #[test]
    fn real_hamiltonian_pair_symmetry() {
        let c = ctx(&ModelSpec::linear_sweep(1.5), 1.5, 60);
        // g(t, s) = g*(s, t): evaluate the separable form on both orders
        for (n, j) in [(40, 3), (60, 0), (17, 16)] {
            let (un, vn) = c.factors_fine(2 * n);
            let (uj, vj) = c.factors_fine(2 * j);
            assert!((un * vj - (uj * vn).conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn averaged_attenuation() {
        let m = ModelSpec::model_a(5.0, 5.0);
        let fine = Grid::new(1.0, 200).unwrap();
        let frames = Arc::new(FramePath::build(&m, fine).unwrap());
        let avg = KernelContext::averaged(frames.clone(), &NoiseSpec::gaussian(1.0, 1.0)).unwrap();
        let g = avg.kernel_averaged(60, 50).unwrap();
        let g0 = avg.kernel_tls(60, 50).unwrap();
        let att = (g / g0).re;
        assert!((att - (-1.45f64).exp()).abs() < 1e-12, "{att}");
        assert!((att - 0.2346).abs() < 5e-5);

        let zero = KernelContext::averaged(frames.clone(), &NoiseSpec::gaussian(0.0, 1.0)).unwrap();
        assert_eq!(zero.kernel_averaged(60, 50).unwrap(), g0);
        assert!(KernelContext::averaged(frames.clone(), &NoiseSpec::deterministic(1.0, 1.0)).is_err());
        let plain = KernelContext::noise_free(frames).unwrap();
        assert!(plain.kernel_averaged(1, 0).is_err());
    }

    #[test]
    fn noise_only_changes_phase() {
        let m = ModelSpec::model_a(5.0, 5.0);
        let fine = Grid::new(1.0, 200).unwrap();
        let frames = Arc::new(FramePath::build(&m, fine).unwrap());
        let quiet = KernelContext::noise_free(frames.clone()).unwrap();
        let noisy = KernelContext::new(frames, &NoiseSpec::gaussian(1.0, 1.0), 9).unwrap();
        for (n, j) in [(100, 20), (33, 32), (99, 0)] {
            let a = quiet.kernel_tls(n, j).unwrap().norm();
            let b = noisy.kernel_tls(n, j).unwrap().norm();
            assert!((a - b).abs() < 1e-15);
        }
        assert_ne!(quiet.kernel_tls(99, 0).unwrap(), noisy.kernel_tls(99, 0).unwrap());
    }
}
