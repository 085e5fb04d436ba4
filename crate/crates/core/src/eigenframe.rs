//! Instantaneous eigenframes, non-adiabatic couplings `<E_m|dE_n/dt>` and the
//! accumulated dynamical and geometric phases.
//!
//! For a qubit `h = a sx + b sy + omega/2 sz` the eigenvectors are written
//! with the mixing angle `alpha` and azimuth `beta`:
//!
//! ```text
//! |E0> =  e^{-i beta} cos(alpha) |u> + sin(alpha) |d>     (upper level)
//! |E1> = -e^{-i beta} sin(alpha) |u> + cos(alpha) |d>
//! ```
//!
//! with `k = +sqrt(omega^2 + 4a^2 + 4b^2)`, so the levels of
//! `(J0 + c) h` are `+-(J0 + c) k / 2`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::models::{FieldSample, HamiltonianPath};
use crate::noise::NoisePath;
use crate::{Error, Grid, Result, C64};

/// Gap below which levels are treated as degenerate, in units of `J0`.
pub const GAP_TOL: f64 = 1e-9;

/// Central-difference step for numerically differentiated frames, in units
/// of `1/J0`.
pub const FD_STEP: f64 = 1e-6;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenFrame {
    pub t: f64,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub e0: f64,
    pub e1: f64,
    pub coupling00: C64,
    pub coupling01: C64,
    pub coupling10: C64,
    pub coupling11: C64,
}

impl EigenFrame {
    pub fn e0_vector(&self) -> Vector2<C64> {
        let ph = C64::from_polar(1.0, -self.beta);
        Vector2::new(ph * self.alpha.cos(), C64::from(self.alpha.sin()))
    }

    pub fn e1_vector(&self) -> Vector2<C64> {
        let ph = C64::from_polar(1.0, -self.beta);
        Vector2::new(-ph * self.alpha.sin(), C64::from(self.alpha.cos()))
    }

    /// `<E_m|dE_n/dt>` for `m, n` in `{0, 1}`.
    pub fn coupling(&self, m: usize, n: usize) -> C64 {
        match (m, n) {
            (0, 0) => self.coupling00,
            (0, 1) => self.coupling01,
            (1, 0) => self.coupling10,
            (1, 1) => self.coupling11,
            _ => panic!("qubit frame has levels 0 and 1 only"),
        }
    }
}

/// Closed-form frame of `(J0 + noise_value) (a sx + b sy + omega/2 sz)`.
///
/// Couplings are computed from the field rates stored in `fields`; the
/// noise only rescales the energies.
pub fn frame_analytic(fields: &FieldSample, j0: f64, noise_value: f64) -> Result<EigenFrame> {
    let k = fields.k();
    if !fields.is_finite() {
        return Err(Error::invalid("fields", "non-finite field sample"));
    }
    if k < GAP_TOL {
        return Err(Error::GapClosure {
            t: fields.t,
            gap: k * j0,
        });
    }
    let rho2 = fields.a * fields.a + fields.b * fields.b;
    let theta = (2.0 * rho2.sqrt()).atan2(fields.omega);
    let alpha = 0.5 * theta;
    let beta = if rho2 > 0.0 {
        fields.b.atan2(fields.a)
    } else {
        0.0
    };
    let beta_rate = if rho2 > 1e-24 {
        (fields.a * fields.db - fields.b * fields.da) / rho2
    } else {
        0.0
    };
    let (sa, ca) = alpha.sin_cos();
    let mut frame = EigenFrame {
        t: fields.t,
        k,
        alpha,
        beta,
        e0: 0.5 * (j0 + noise_value) * k,
        e1: -0.5 * (j0 + noise_value) * k,
        coupling00: -I * beta_rate * ca * ca,
        coupling01: C64::from(0.0),
        coupling10: C64::from(0.0),
        coupling11: -I * beta_rate * sa * sa,
    };
    let hdot = fields.unit_rate_matrix();
    let (v0, v1) = (frame.e0_vector(), frame.e1_vector());
    // gap formula with unit-strength levels +-k/2
    frame.coupling01 = v0.dotc(&(hdot * v1)) / C64::from(-k);
    frame.coupling10 = v1.dotc(&(hdot * v0)) / C64::from(k);
    Ok(frame)
}

/// Eigenpairs of a Hermitian matrix, sorted by descending energy, as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFrame {
    pub energies: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

impl LevelFrame {
    pub fn min_gap(&self) -> f64 {
        self.energies
            .as_slice()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }
}

fn fix_gauge(vectors: &mut DMatrix<C64>, previous: Option<&DMatrix<C64>>) {
    for n in 0..vectors.ncols() {
        let mut col = vectors.column_mut(n);
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
        let z = col[imax];
        if z.norm() > 0.0 {
            col *= z.conj() / z.norm();
        }
        if let Some(prev) = previous {
            let overlap = prev.column(n).dotc(&col);
            if overlap.norm() > 0.0 {
                col *= overlap.conj() / overlap.norm();
            }
        }
    }
}

/// Numerical diagonalization with a fixed gauge: the largest component of
/// each eigenvector is made real positive, then, when `previous` is given,
/// the phase is aligned so the overlap with the previous eigenvector is real
/// and non-negative.
pub fn levels_numeric(h: &DMatrix<C64>, previous: Option<&DMatrix<C64>>) -> Result<LevelFrame> {
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let energies = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_gauge(&mut vectors, previous);
    let frame = LevelFrame { energies, vectors };
    let gap = frame.min_gap();
    if gap < GAP_TOL {
        return Err(Error::GapClosure { t: f64::NAN, gap });
    }
    Ok(frame)
}

/// Qubit frame from a numerically diagonalized 2x2 matrix. The returned
/// couplings are zero: a single matrix carries no rate information.
pub fn frame_numeric(h: &Matrix2<C64>, previous: Option<&EigenFrame>) -> Result<EigenFrame> {
    let hd = DMatrix::from_iterator(2, 2, h.iter().copied());
    let prev = previous.map(|p| {
        let (v0, v1) = (p.e0_vector(), p.e1_vector());
        DMatrix::from_columns(&[
            DVector::from_column_slice(v0.as_slice()),
            DVector::from_column_slice(v1.as_slice()),
        ])
    });
    let lv = levels_numeric(&hd, prev.as_ref())?;
    let (x, y) = (lv.vectors[(0, 0)], lv.vectors[(1, 0)]);
    let alpha = y.norm().atan2(x.norm());
    let beta = if x.norm() > 1e-300 && y.norm() > 1e-300 {
        wrap_angle(y.arg() - x.arg())
    } else {
        previous.map_or(0.0, |p| p.beta)
    };
    let zero = C64::from(0.0);
    Ok(EigenFrame {
        t: previous.map_or(0.0, |p| p.t),
        k: lv.energies[0] - lv.energies[1],
        alpha,
        beta,
        e0: lv.energies[0],
        e1: lv.energies[1],
        coupling00: zero,
        coupling01: zero,
        coupling10: zero,
        coupling11: zero,
    })
}

fn wrap_angle(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut y = x % two_pi;
    if y > std::f64::consts::PI {
        y -= two_pi;
    } else if y <= -std::f64::consts::PI {
        y += two_pi;
    }
    y
}

/// `<E_m|dE_n/dt> = <E_m|dh/dt|E_n> / (E_n - E_m)` for `m != n`.
pub fn coupling_from_rate(levels: &LevelFrame, h_rate: &DMatrix<C64>, m: usize, n: usize) -> Result<C64> {
    if m == n {
        return Err(Error::Unsupported(
            "diagonal couplings are gauge dependent; use coupling_finite_difference".into(),
        ));
    }
    let gap = levels.energies[n] - levels.energies[m];
    if gap.abs() < GAP_TOL {
        return Err(Error::GapClosure { t: f64::NAN, gap });
    }
    let vm = levels.vectors.column(m);
    let vn = levels.vectors.column(n);
    Ok(vm.dotc(&(h_rate * vn)) / C64::from(gap))
}

/// Central-difference estimate of `<E_m(t)|dE_n/dt>` from frames at
/// `t - dt`, `t`, `t + dt` that share a continuous gauge.
pub fn coupling_finite_difference(
    before: &LevelFrame,
    at: &LevelFrame,
    after: &LevelFrame,
    dt: f64,
    m: usize,
    n: usize,
) -> C64 {
    let vm = at.vectors.column(m);
    (vm.dotc(&after.vectors.column(n)) - vm.dotc(&before.vectors.column(n))) / C64::from(2.0 * dt)
}

/// Frames, couplings and eigenvectors sampled on a uniform grid, with the
/// target level moved to index 0 and the others in descending energy order.
#[derive(Clone, Debug)]
pub struct FramePath {
    grid: Grid,
    dim: usize,
    j0: f64,
    /// Unit-strength energies, `[i * dim + n]`.
    energies: Vec<f64>,
    /// `<E_m|dE_n/dt>`, `[i * dim * dim + m * dim + n]`.
    couplings: Vec<C64>,
    /// Column-major eigenvector matrices, `[i * dim * dim ..]`.
    vectors: Vec<C64>,
    frames: Option<Vec<EigenFrame>>,
    initial: DVector<C64>,
}

fn target_order(dim: usize, target: usize) -> Vec<usize> {
    let mut order = vec![target];
    order.extend((0..dim).filter(|&n| n != target));
    order
}

impl FramePath {
    /// Closed-form frames when the path provides them, numerical ones
    /// otherwise.
    pub fn build(path: &dyn HamiltonianPath, grid: Grid) -> Result<Self> {
        if path.analytic_frame(0.0).is_some() {
            Self::build_analytic(path, grid)
        } else {
            Self::build_numeric(path, grid)
        }
    }

    fn build_analytic(path: &dyn HamiltonianPath, grid: Grid) -> Result<Self> {
        let dim = 2;
        let target = path.target_rank();
        if target >= dim {
            return Err(Error::invalid("target", "no such level"));
        }
        let order = target_order(dim, target);
        let mut out = Self::empty(grid, dim, path.j0());
        let mut frames = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let t = grid.t(i);
            let f = path
                .analytic_frame(t)
                .expect("analytic frame available")
                .map_err(|e| with_time(e, t))?;
            let lambda = [0.5 * f.k, -0.5 * f.k];
            let (v0, v1) = (f.e0_vector(), f.e1_vector());
            let cols = [v0, v1];
            for &pm in &order {
                out.energies.push(lambda[pm]);
            }
            for &pm in &order {
                for &pn in &order {
                    out.couplings.push(f.coupling(pm, pn));
                }
            }
            for &pn in order.iter() {
                out.vectors.extend(cols[pn].iter().copied());
            }
            frames.push(f);
        }
        out.frames = Some(frames);
        out.initial = out.initial_amplitudes_from(path)?;
        Ok(out)
    }

    /// Frames by numerical diagonalization; off-diagonal couplings use the
    /// gap formula and diagonal ones a finite difference with step
    /// [`FD_STEP`].
    pub fn build_numeric(path: &dyn HamiltonianPath, grid: Grid) -> Result<Self> {
        let dim = path.dim();
        let target = path.target_rank();
        if target >= dim {
            return Err(Error::invalid("target", "no such level"));
        }
        let order = target_order(dim, target);
        let j0 = path.j0();
        let d = FD_STEP / j0;
        let (lo, hi) = path.domain().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let mut out = Self::empty(grid, dim, j0);
        let mut previous: Option<DMatrix<C64>> = None;
        for i in 0..grid.len() {
            let t = grid.t(i);
            let h = path.unit_hamiltonian(t)?;
            let lv = levels_numeric(&h, previous.as_ref()).map_err(|e| with_time(e, t))?;
            let rate = path.unit_hamiltonian_rate(t)?;
            let at_offset = |s: f64| -> Result<LevelFrame> {
                levels_numeric(&path.unit_hamiltonian(s)?, Some(&lv.vectors)).map_err(|e| with_time(e, s))
            };
            // diagonal couplings by finite differences, one-sided at the edges
            let diag: Vec<C64> = if t - d < lo {
                let f1 = at_offset(t + d)?;
                let f2 = at_offset(t + 2.0 * d)?;
                (0..dim)
                    .map(|n| {
                        let v = lv.vectors.column(n);
                        (C64::from(-3.0) * v.dotc(&v)
                            + C64::from(4.0) * v.dotc(&f1.vectors.column(n))
                            - v.dotc(&f2.vectors.column(n)))
                            / C64::from(2.0 * d)
                    })
                    .collect()
            } else if t + d > hi {
                let f1 = at_offset(t - d)?;
                let f2 = at_offset(t - 2.0 * d)?;
                (0..dim)
                    .map(|n| {
                        let v = lv.vectors.column(n);
                        (C64::from(3.0) * v.dotc(&v) - C64::from(4.0) * v.dotc(&f1.vectors.column(n))
                            + v.dotc(&f2.vectors.column(n)))
                            / C64::from(2.0 * d)
                    })
                    .collect()
            } else {
                let fp = at_offset(t + d)?;
                let fm = at_offset(t - d)?;
                (0..dim)
                    .map(|n| coupling_finite_difference(&fm, &lv, &fp, d, n, n))
                    .collect()
            };
            for &pn in &order {
                out.energies.push(lv.energies[pn]);
            }
            for &pm in &order {
                for &pn in &order {
                    let c = if pm == pn {
                        // the connection is anti-Hermitian: keep the imaginary part
                        C64::new(0.0, diag[pn].im)
                    } else {
                        coupling_from_rate(&lv, &rate, pm, pn).map_err(|e| with_time(e, t))?
                    };
                    out.couplings.push(c);
                }
            }
            for &pn in &order {
                out.vectors.extend(lv.vectors.column(pn).iter().copied());
            }
            previous = Some(lv.vectors);
        }
        out.initial = out.initial_amplitudes_from(path)?;
        Ok(out)
    }

    fn empty(grid: Grid, dim: usize, j0: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            dim,
            j0,
            energies: Vec::with_capacity(n * dim),
            couplings: Vec::with_capacity(n * dim * dim),
            vectors: Vec::with_capacity(n * dim * dim),
            frames: None,
            initial: DVector::zeros(dim),
        }
    }

    fn initial_amplitudes_from(&self, path: &dyn HamiltonianPath) -> Result<DVector<C64>> {
        match path.initial_state() {
            None => {
                let mut v = DVector::zeros(self.dim);
                v[0] = C64::from(1.0);
                Ok(v)
            }
            Some(psi) => {
                if psi.len() != self.dim {
                    return Err(Error::invalid("initial_state", "dimension mismatch"));
                }
                let vecs = self.vectors(0);
                Ok(vecs.adjoint() * psi)
            }
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn j0(&self) -> f64 {
        self.j0
    }

    /// Unit-strength energy of level `n` at grid point `i`.
    pub fn energy(&self, i: usize, n: usize) -> f64 {
        self.energies[i * self.dim + n]
    }

    /// `<E_m|dE_n/dt>` at grid point `i`.
    pub fn coupling(&self, i: usize, m: usize, n: usize) -> C64 {
        self.couplings[(i * self.dim + m) * self.dim + n]
    }

    /// Eigenvectors (columns, target first) at grid point `i`.
    pub fn vectors(&self, i: usize) -> DMatrix<C64> {
        let d2 = self.dim * self.dim;
        DMatrix::from_column_slice(self.dim, self.dim, &self.vectors[i * d2..(i + 1) * d2])
    }

    /// Closed-form qubit frame at grid point `i`, in the `E0`/`E1` labeling.
    pub fn frame(&self, i: usize) -> Option<&EigenFrame> {
        self.frames.as_ref().map(|f| &f[i])
    }

    /// Amplitudes `psi_n(0)` of the initial state in the eigenbasis.
    pub fn initial_amplitudes(&self) -> &DVector<C64> {
        &self.initial
    }

    /// Largest unit-strength level spread over the path.
    pub fn max_spread(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let e = &self.energies[i * self.dim..(i + 1) * self.dim];
                let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Same path in a different eigenvector gauge `|E_n> -> e^{i g_n(t)} |E_n>`;
    /// `twist(n, t)` returns `(g_n(t), dg_n/dt)`.
    pub fn regauge(&self, twist: impl Fn(usize, f64) -> (f64, f64)) -> FramePath {
        let dim = self.dim;
        let mut out = self.clone();
        out.frames = None;
        for i in 0..self.grid.len() {
            let t = self.grid.t(i);
            let g: Vec<(f64, f64)> = (0..dim).map(|n| twist(n, t)).collect();
            for m in 0..dim {
                for n in 0..dim {
                    let mut c = self.coupling(i, m, n);
                    if m == n {
                        c += I * g[n].1;
                    }
                    out.couplings[(i * dim + m) * dim + n] = c * C64::from_polar(1.0, g[n].0 - g[m].0);
                }
            }
            for n in 0..dim {
                let ph = C64::from_polar(1.0, g[n].0);
                for r in 0..dim {
                    out.vectors[i * dim * dim + n * dim + r] *= ph;
                }
            }
        }
        for n in 0..dim {
            out.initial[n] *= C64::from_polar(1.0, -twist(n, 0.0).0);
        }
        out
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::GapClosure { gap, .. } => Error::GapClosure { t, gap },
        other => other,
    }
}

/// Phases at one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseRecord {
    pub theta0: f64,
    pub theta1: f64,
    pub beta0: f64,
}

/// Dynamical phases `theta_n(t) = -int_0^t E_n` (noise included) and
/// geometric phases `beta_n(t) = i int_0^t <E_n|dE_n/dt>` on a frame grid.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    dim: usize,
    theta: Vec<f64>,
    beta: Vec<f64>,
}

impl PhaseTable {
    pub fn theta(&self, i: usize, n: usize) -> f64 {
        self.theta[i * self.dim + n]
    }

    pub fn beta(&self, i: usize, n: usize) -> f64 {
        self.beta[i * self.dim + n]
    }

    /// `theta_n + beta_n`.
    pub fn total(&self, i: usize, n: usize) -> f64 {
        self.theta(i, n) + self.beta(i, n)
    }

    pub fn record(&self, i: usize) -> PhaseRecord {
        PhaseRecord {
            theta0: self.theta(i, 0),
            theta1: if self.dim > 1 { self.theta(i, 1) } else { 0.0 },
            beta0: self.beta(i, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Running integral of samples `f` on a uniform grid: Simpson's rule over
/// pairs of intervals at even nodes, a three-point rule from the preceding
/// even node at odd nodes, and the trapezoid on a trailing odd interval.
pub fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i])
        } else if i + 1 < n {
            out[i - 1] + h / 12.0 * (5.0 * f[i - 1] + 8.0 * f[i] - f[i + 1])
        } else {
            out[i - 1] + 0.5 * h * (f[i - 1] + f[i])
        };
    }
    out
}

/// Phases on the frame grid. When a noise path is attached its grid must
/// divide the frame grid into an even number of sub-steps; each noise step
/// contributes `lambda_n(midpoint) * dPhi`, spread linearly over the step.
pub fn accumulate_phases(frames: &FramePath, noise: Option<&NoisePath>) -> Result<PhaseTable> {
    let dim = frames.dim();
    let grid = frames.grid();
    let n = grid.len();
    let h = grid.h();
    let j0 = frames.j0();
    let mut theta = vec![0.0; n * dim];
    let mut beta = vec![0.0; n * dim];
    for l in 0..dim {
        let e: Vec<f64> = (0..n).map(|i| -j0 * frames.energy(i, l)).collect();
        // beta = i * int C with C purely imaginary
        let c: Vec<f64> = (0..n).map(|i| -frames.coupling(i, l, l).im).collect();
        for (i, (x, y)) in cumulative_integral(&e, h)
            .into_iter()
            .zip(cumulative_integral(&c, h))
            .enumerate()
        {
            theta[i * dim + l] = x;
            beta[i * dim + l] = y;
        }
    }
    if let Some(path) = noise {
        let coarse = path.grid();
        if !grid.steps().is_multiple_of(coarse.steps()) || (grid.t_end() - coarse.t_end()).abs() > 1e-9 * grid.t_end() {
            return Err(Error::GridMismatch(format!(
                "noise grid ({} steps) does not subdivide the frame grid ({} steps)",
                coarse.steps(),
                grid.steps()
            )));
        }
        let r = grid.steps() / coarse.steps();
        if !r.is_multiple_of(2) {
            return Err(Error::GridMismatch(
                "frame grid must have an even number of sub-steps per noise step".into(),
            ));
        }
        let mut acc = vec![0.0; dim];
        for j in 0..coarse.steps() {
            let dphi = path.phi()[j + 1] - path.phi()[j];
            let mid = r * j + r / 2;
            for sub in 1..=r {
                let i = r * j + sub;
                for l in 0..dim {
                    acc[l] -= frames.energy(mid, l) * dphi / r as f64;
                    theta[i * dim + l] += acc[l];
                }
            }
        }
    }
    Ok(PhaseTable { dim, theta, beta })
}
