//! Monte Carlo averages over noise realizations.
//!
//! Trajectory `i` of an ensemble uses the seed `sub_seed(base_seed, i)`, and
//! partial sums are combined in trajectory order, so results do not depend
//! on the number of worker threads.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::kernel::KernelContext;
use crate::models::HamiltonianPath;
use crate::noise::{sub_seed, NoiseSpec};
use crate::solver::{build_frames, check_resolution, solve, Method, SolverConfig, TrajectoryResult};
use crate::{Error, Grid, Result, C64};

const CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub grid: Grid,
    pub n_traj: usize,
    pub base_seed: u64,
    pub mean_abs_psi0: Vec<f64>,
    pub stderr_abs: Vec<f64>,
    pub mean_pop0: Vec<f64>,
    pub stderr_pop: Vec<f64>,
    /// Mean of the complex amplitude `psi0`, the quantity the noise-averaged
    /// kernel evolves.
    pub mean_psi0: Vec<C64>,
    /// Density matrix in the instantaneous eigenbasis, target level first.
    pub rho: Vec<DMatrix<C64>>,
    pub purity: Vec<f64>,
    /// Ensemble mean of the memory integral.
    pub mean_residual: Vec<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub min_abs_psi0: f64,
    pub final_abs_psi0: f64,
    /// Final population of the target eigenstate.
    pub final_fidelity: f64,
    pub time_of_min: f64,
}

/// Summary of an `|psi0|` curve; the fidelity is the final `|psi0|^2`
/// unless a population curve is supplied.
pub fn metrics(grid: Grid, abs_psi0: &[f64], pop0: Option<&[f64]>) -> Metrics {
    let (imin, min) = abs_psi0
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc });
    let last = *abs_psi0.last().expect("non-empty curve");
    Metrics {
        min_abs_psi0: min,
        final_abs_psi0: last,
        final_fidelity: pop0.map_or(last * last, |p| *p.last().expect("non-empty curve")),
        time_of_min: grid.t(imin),
    }
}

impl TrajectoryResult {
    pub fn metrics(&self) -> Metrics {
        metrics(self.grid, &self.abs_psi0(), None)
    }
}

impl EnsembleResult {
    pub fn metrics(&self) -> Metrics {
        metrics(self.grid, &self.mean_abs_psi0, Some(&self.mean_pop0))
    }

    /// `|<E0|v>|^2` for the dominant eigenvector `v` of `rho` at grid point `i`.
    pub fn dominant_overlap(&self, i: usize) -> f64 {
        let eig = self.rho[i].clone().symmetric_eigen();
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &l)| if l > acc.1 { (k, l) } else { acc });
        eig.eigenvectors[(0, k)].norm_sqr()
    }
}

struct Partial {
    abs: Vec<f64>,
    abs2: Vec<f64>,
    pop2: Vec<f64>,
    psi: Vec<C64>,
    rho: Vec<C64>,
    residual: Vec<C64>,
}

impl Partial {
    fn new(points: usize, dim: usize) -> Self {
        Self {
            abs: vec![0.0; points],
            abs2: vec![0.0; points],
            pop2: vec![0.0; points],
            psi: vec![C64::from(0.0); points],
            rho: vec![C64::from(0.0); points * dim * dim],
            residual: vec![C64::from(0.0); points],
        }
    }

    fn add(&mut self, ctx: &KernelContext, r: &TrajectoryResult) {
        let dim = ctx.dim();
        let phases = ctx.phases();
        let mut amp = vec![C64::from(0.0); dim];
        for (n, psi) in r.psi0.iter().enumerate() {
            let a = psi.norm();
            let p = a * a;
            self.abs[n] += a;
            self.abs2[n] += p;
            self.pop2[n] += p * p;
            self.psi[n] += psi;
            self.residual[n] += r.residual[n];
            let blk = &mut self.rho[n * dim * dim..(n + 1) * dim * dim];
            match &r.components {
                Some(c) => {
                    for m in 0..dim {
                        amp[m] = c[n][m] * C64::from_polar(1.0, phases.theta(2 * n, m));
                    }
                    for m in 0..dim {
                        for l in 0..dim {
                            blk[m * dim + l] += amp[m] * amp[l].conj();
                        }
                    }
                }
                None => {
                    // one-component runs only know the target population
                    blk[0] += p;
                    blk[dim + 1] += 1.0 - p;
                }
            }
        }
    }

    fn merge(&mut self, o: &Partial) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.abs, &o.abs);
        add(&mut self.abs2, &o.abs2);
        add(&mut self.pop2, &o.pop2);
        self.psi.iter_mut().zip(&o.psi).for_each(|(x, y)| *x += y);
        self.rho.iter_mut().zip(&o.rho).for_each(|(x, y)| *x += y);
        self.residual.iter_mut().zip(&o.residual).for_each(|(x, y)| *x += y);
    }
}

fn stderr(sum: f64, sum2: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

/// Average `n_traj` independent trajectories of `path` under `noise`.
pub fn run_ensemble(
    path: &dyn HamiltonianPath,
    noise: &NoiseSpec,
    cfg: &SolverConfig,
    n_traj: usize,
    base_seed: u64,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "need at least one trajectory"));
    }
    noise.validate()?;
    let frames = build_frames(path, cfg)?;
    // surface a resolution refusal once, before fanning out
    check_resolution(&KernelContext::new(frames.clone(), noise, sub_seed(base_seed, 0))?)?;
    let grid = cfg.grid()?;
    let dim = frames.dim();
    if cfg.method == Method::AuxiliaryOde && dim != 2 {
        return Err(Error::Unsupported("the auxiliary solver needs two levels".into()));
    }
    let points = grid.len();
    let chunks = n_traj.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Partial> {
            let mut acc = Partial::new(points, dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                let ctx = KernelContext::new(Arc::clone(&frames), noise, sub_seed(base_seed, i as u64))?;
                let r = solve(&ctx, cfg)?;
                acc.add(&ctx, &r);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = Partial::new(points, dim);
    for p in &partials {
        total.merge(p);
    }

    let nf = n_traj as f64;
    let mut rho = Vec::with_capacity(points);
    let mut purity = Vec::with_capacity(points);
    for n in 0..points {
        let m = DMatrix::from_row_slice(dim, dim, &total.rho[n * dim * dim..(n + 1) * dim * dim]) / C64::from(nf);
        purity.push(m.iter().map(|z| z.norm_sqr()).sum());
        rho.push(m);
    }
    Ok(EnsembleResult {
        grid,
        n_traj,
        base_seed,
        mean_abs_psi0: total.abs.iter().map(|x| x / nf).collect(),
        stderr_abs: (0..points).map(|n| stderr(total.abs[n], total.abs2[n], n_traj)).collect(),
        mean_pop0: total.abs2.iter().map(|x| x / nf).collect(),
        stderr_pop: (0..points).map(|n| stderr(total.abs2[n], total.pop2[n], n_traj)).collect(),
        mean_psi0: total.psi.iter().map(|z| z / nf).collect(),
        rho,
        purity,
        mean_residual: total.residual.iter().map(|z| z / nf).collect(),
    })
}

/// Deterministic solve with the noise-averaged kernel.
pub fn averaged_kernel_run(path: &dyn HamiltonianPath, noise: &NoiseSpec, cfg: &SolverConfig) -> Result<TrajectoryResult> {
    noise.validate()?;
    let frames = build_frames(path, cfg)?;
    let ctx = KernelContext::averaged(frames, noise)?;
    crate::solver::check_resolution(&ctx)?;
    crate::solver::solve_volterra(&ctx, &cfg.with_method(Method::VolterraQuadrature))
}
