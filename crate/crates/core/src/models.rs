//! Catalog of time-dependent Hamiltonians.
//!
//! Every qubit model is written in one canonical parametrization,
//!
//! ```text
//! H(t) = (J0 + c(t)) * (a(t) sx + b(t) sy + omega(t)/2 sz)
//! ```
//!
//! where `c(t)` is the (optional) multiplicative noise. The linear sweep
//! `J0 [t/T sx + (1 - t/T) sz]` is the special case `a = t/T`, `b = 0`,
//! `omega = 2 (1 - t/T)`. Units: hbar = 1, energies in units of `J0`, times
//! in units of `1/J0`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};

use crate::eigenframe::{frame_analytic, EigenFrame};
use crate::{Error, Result, C64};

/// Which instantaneous eigenstate is the target. `E0` is the upper state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branch {
    #[default]
    E0,
    E1,
}

/// `offset + slope * t + amplitude * cos(frequency * t + phase)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Profile {
    pub offset: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Self {
            offset: value,
            ..Self::default()
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset + self.slope * t + self.amplitude * (self.frequency * t + self.phase).cos()
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.slope - self.amplitude * self.frequency * (self.frequency * t + self.phase).sin()
    }

    fn is_finite(&self) -> bool {
        [self.offset, self.slope, self.amplitude, self.frequency, self.phase]
            .iter()
            .all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    /// Arbitrary smooth field profiles.
    GenericTls {
        a: Profile,
        b: Profile,
        omega_z: Profile,
    },
    /// `J0 [t/T sx + (1 - t/T) sz]` on `[0, T]`.
    LinearSweep,
    /// Rotating transverse field `a = cos(Omega t)`, `b = sin(Omega t)`,
    /// constant longitudinal field.
    ModelA,
    /// Two coupled qubits in the single-exciton subspace, mapped onto the
    /// linear-sweep qubit.
    ModelB,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Overall energy scale `J0`.
    pub j0: f64,
    /// Passage time `T` (linear sweep and model B).
    pub passage_time: Option<f64>,
    /// Angular frequency `Omega` of the rotating field (model A), absolute units.
    pub omega: f64,
    /// Dimensionless longitudinal field `omega` (model A).
    pub omega_z: f64,
    pub initial_branch: Branch,
    /// Amplitudes `(mu, nu)` on `|ud>`, `|du>` (model B).
    pub model_b_init: (C64, C64),
}

impl ModelSpec {
    fn base(kind: ModelKind) -> Self {
        Self {
            kind,
            j0: 1.0,
            passage_time: None,
            omega: 0.0,
            omega_z: 0.0,
            initial_branch: Branch::E0,
            model_b_init: (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        }
    }

    pub fn linear_sweep(passage_time: f64) -> Self {
        Self {
            passage_time: Some(passage_time),
            ..Self::base(ModelKind::LinearSweep)
        }
    }

    pub fn model_a(omega: f64, omega_z: f64) -> Self {
        Self {
            omega,
            omega_z,
            ..Self::base(ModelKind::ModelA)
        }
    }

    pub fn model_b(passage_time: f64) -> Self {
        Self {
            passage_time: Some(passage_time),
            ..Self::base(ModelKind::ModelB)
        }
    }

    pub fn generic(a: Profile, b: Profile, omega_z: Profile) -> Self {
        Self::base(ModelKind::GenericTls { a, b, omega_z })
    }

    pub fn with_j0(mut self, j0: f64) -> Self {
        self.j0 = j0;
        self
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.initial_branch = branch;
        self
    }

    pub fn with_model_b_init(mut self, mu: C64, nu: C64) -> Self {
        self.model_b_init = (mu, nu);
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::GenericTls { .. } => "generic_tls",
            ModelKind::LinearSweep => "linear_sweep",
            ModelKind::ModelA => "model_a",
            ModelKind::ModelB => "model_b",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j0.is_finite() && self.j0 > 0.0) {
            return Err(Error::invalid("j0", format!("must be positive, got {}", self.j0)));
        }
        match &self.kind {
            ModelKind::LinearSweep | ModelKind::ModelB => match self.passage_time {
                Some(t) if t.is_finite() && t > 0.0 => {}
                other => {
                    return Err(Error::invalid(
                        "passage_time",
                        format!("must be positive, got {other:?}"),
                    ))
                }
            },
            ModelKind::ModelA => {
                if !(self.omega.is_finite() && self.omega_z.is_finite()) {
                    return Err(Error::invalid("omega", "must be finite"));
                }
            }
            ModelKind::GenericTls { a, b, omega_z } => {
                if !(a.is_finite() && b.is_finite() && omega_z.is_finite()) {
                    return Err(Error::invalid("profile", "all coefficients must be finite"));
                }
            }
        }
        if matches!(self.kind, ModelKind::ModelB) {
            let (mu, nu) = self.model_b_init;
            let norm = mu.norm_sqr() + nu.norm_sqr();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(
                    "model_b_init",
                    format!("|mu|^2 + |nu|^2 = {norm}, expected 1"),
                ));
            }
        }
        Ok(())
    }

    /// Time window on which the model is defined, if bounded.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self.kind {
            ModelKind::LinearSweep | ModelKind::ModelB => {
                Some((0.0, self.passage_time.unwrap_or(f64::NAN)))
            }
            _ => None,
        }
    }

    /// Natural end time of a run: the passage time when the model has one.
    pub fn default_t_end(&self) -> Option<f64> {
        self.passage_time
    }
}

/// Field values `(a, b, omega)` at time `t` together with their time
/// derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub da: f64,
    pub db: f64,
    pub domega: f64,
}

impl FieldSample {
    pub fn new(t: f64, a: f64, b: f64, omega: f64) -> Self {
        Self {
            t,
            a,
            b,
            omega,
            ..Self::default()
        }
    }

    /// Dimensionless gap `k = sqrt(omega^2 + 4a^2 + 4b^2)`.
    pub fn k(&self) -> f64 {
        (self.omega * self.omega + 4.0 * (self.a * self.a + self.b * self.b)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.a, self.b, self.omega, self.da, self.db, self.domega]
            .iter()
            .all(|x| x.is_finite())
    }

    /// `a sx + b sy + omega/2 sz`.
    pub fn unit_matrix(&self) -> Matrix2<C64> {
        let c = |re: f64, im: f64| C64::new(re, im);
        Matrix2::new(
            c(0.5 * self.omega, 0.0),
            c(self.a, -self.b),
            c(self.a, self.b),
            c(-0.5 * self.omega, 0.0),
        )
    }

    /// Time derivative of [`FieldSample::unit_matrix`].
    pub fn unit_rate_matrix(&self) -> Matrix2<C64> {
        let c = |re: f64, im: f64| C64::new(re, im);
        Matrix2::new(
            c(0.5 * self.domega, 0.0),
            c(self.da, -self.db),
            c(self.da, self.db),
            c(-0.5 * self.domega, 0.0),
        )
    }
}

fn check_domain(model: &ModelSpec, t: f64) -> Result<()> {
    if let Some((lo, hi)) = model.domain() {
        let tol = 1e-12 * hi.abs().max(1.0);
        if !(t >= lo - tol && t <= hi + tol) {
            return Err(Error::Domain { t, lo, hi });
        }
    }
    if !t.is_finite() {
        return Err(Error::invalid("t", "must be finite"));
    }
    Ok(())
}

pub fn eval_fields(model: &ModelSpec, t: f64) -> Result<FieldSample> {
    check_domain(model, t)?;
    let s = match &model.kind {
        ModelKind::LinearSweep | ModelKind::ModelB => {
            let tp = model.passage_time.expect("validated passage time");
            let x = t / tp;
            FieldSample {
                t,
                a: x,
                b: 0.0,
                omega: 2.0 * (1.0 - x),
                da: 1.0 / tp,
                db: 0.0,
                domega: -2.0 / tp,
            }
        }
        ModelKind::ModelA => {
            let (s, c) = (model.omega * t).sin_cos();
            FieldSample {
                t,
                a: c,
                b: s,
                omega: model.omega_z,
                da: -model.omega * s,
                db: model.omega * c,
                domega: 0.0,
            }
        }
        ModelKind::GenericTls { a, b, omega_z } => FieldSample {
            t,
            a: a.value(t),
            b: b.value(t),
            omega: omega_z.value(t),
            da: a.rate(t),
            db: b.rate(t),
            domega: omega_z.rate(t),
        },
    };
    Ok(s)
}

/// `(J0 + noise_value) (a sx + b sy + omega/2 sz)`.
pub fn hamiltonian_matrix(model: &ModelSpec, t: f64, noise_value: f64) -> Result<Matrix2<C64>> {
    let f = eval_fields(model, t)?;
    Ok(f.unit_matrix() * C64::from(model.j0 + noise_value))
}

/// Map the single-exciton block of the two-qubit model onto qubit fields,
/// with `|ud> -> |u>`, `|du> -> |d>` and `c = a - i b`.
pub fn map_model_b_to_tls(coupling: C64, omega: f64) -> FieldSample {
    FieldSample::new(0.0, coupling.re, -coupling.im, omega)
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Two-qubit Hamiltonian
/// `J0 (c s1+ s2- + c* s1- s2+ + B1 s1z + B2 s2z)` with `B1,2 = B +- omega/4`,
/// basis order `|uu>, |ud>, |du>, |dd>`.
pub fn two_qubit_hamiltonian(j0: f64, coupling: C64, omega: f64, collective: f64) -> Matrix4<C64> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let id = Matrix2::identity();
    let sz = Matrix2::new(one, zero, zero, -one);
    let sp = Matrix2::new(zero, one, zero, zero);
    let sm = sp.transpose();
    let b1 = collective + omega / 4.0;
    let b2 = collective - omega / 4.0;
    let h = kron(&sp, &sm) * coupling
        + kron(&sm, &sp) * coupling.conj()
        + kron(&sz, &id) * C64::from(b1)
        + kron(&id, &sz) * C64::from(b2);
    h * C64::from(j0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DfsReport {
    pub holds: bool,
    /// `|| B (s1z + s2z) psi ||` for the supplied state.
    pub collective_residual: f64,
    /// Max-norm mismatch between the projected two-qubit block and the
    /// mapped qubit Hamiltonian.
    pub block_residual: f64,
}

impl DfsReport {
    pub fn residual(&self) -> f64 {
        self.collective_residual.max(self.block_residual)
    }
}

/// Check that the collective field `B (s1z + s2z)` annihilates the
/// single-exciton subspace and that the remaining block equals the mapped
/// qubit Hamiltonian.
pub fn validate_dfs(j0: f64, fields: &FieldSample, collective: f64, state: (C64, C64)) -> DfsReport {
    let zero = C64::new(0.0, 0.0);
    let coupling = C64::new(fields.a, -fields.b);
    let one = C64::new(1.0, 0.0);
    let sz = Matrix2::new(one, zero, zero, -one);
    let id = Matrix2::identity();
    let collective_op = (kron(&sz, &id) + kron(&id, &sz)) * C64::from(collective);
    let psi = Vector4::new(zero, state.0, state.1, zero);
    let collective_residual = (collective_op * psi).norm();

    let h4 = two_qubit_hamiltonian(j0, coupling, fields.omega, collective);
    let h2 = fields.unit_matrix() * C64::from(j0);
    let mut block_residual: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            block_residual = block_residual.max((h4[(r + 1, c + 1)] - h2[(r, c)]).norm());
        }
    }
    // the subspace must also be invariant: no leakage to |uu>, |dd>
    let leak = (h4 * psi)[0].norm().max((h4 * psi)[3].norm());
    block_residual = block_residual.max(leak);
    let scale = 1e-12 * (1.0 + collective.abs()) * j0.max(1.0);
    DfsReport {
        holds: collective_residual <= scale && block_residual <= scale,
        collective_residual,
        block_residual,
    }
}

/// A time-dependent Hamiltonian `H(t) = (J0 + c(t)) h(t)` of any dimension.
pub trait HamiltonianPath: Send + Sync {
    fn dim(&self) -> usize;

    fn j0(&self) -> f64;

    /// The unit-strength Hamiltonian `h(t)`.
    fn unit_hamiltonian(&self, t: f64) -> Result<DMatrix<C64>>;

    /// `dh/dt`; defaults to a second-order finite difference with step
    /// `1e-6 / J0`, one-sided at the edges of a bounded domain.
    fn unit_hamiltonian_rate(&self, t: f64) -> Result<DMatrix<C64>> {
        let d = 1e-6 / self.j0();
        let (lo, hi) = self.domain().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        if t - d < lo {
            let f0 = self.unit_hamiltonian(t)?;
            let f1 = self.unit_hamiltonian(t + d)?;
            let f2 = self.unit_hamiltonian(t + 2.0 * d)?;
            Ok((f0 * C64::from(-3.0) + f1 * C64::from(4.0) - f2) / C64::from(2.0 * d))
        } else if t + d > hi {
            let f0 = self.unit_hamiltonian(t)?;
            let f1 = self.unit_hamiltonian(t - d)?;
            let f2 = self.unit_hamiltonian(t - 2.0 * d)?;
            Ok((f0 * C64::from(3.0) - f1 * C64::from(4.0) + f2) / C64::from(2.0 * d))
        } else {
            let fp = self.unit_hamiltonian(t + d)?;
            let fm = self.unit_hamiltonian(t - d)?;
            Ok((fp - fm) / C64::from(2.0 * d))
        }
    }

    fn domain(&self) -> Option<(f64, f64)> {
        None
    }

    /// Rank of the target level in descending energy order.
    fn target_rank(&self) -> usize {
        0
    }

    /// Lab-basis initial state; `None` means the target eigenstate.
    fn initial_state(&self) -> Option<DVector<C64>> {
        None
    }

    /// Closed-form frame, when the model has one.
    fn analytic_frame(&self, _t: f64) -> Option<Result<EigenFrame>> {
        None
    }

    fn label(&self) -> String;
}

impl HamiltonianPath for ModelSpec {
    fn dim(&self) -> usize {
        2
    }

    fn j0(&self) -> f64 {
        self.j0
    }

    fn unit_hamiltonian(&self, t: f64) -> Result<DMatrix<C64>> {
        let m = eval_fields(self, t)?.unit_matrix();
        Ok(DMatrix::from_iterator(2, 2, m.iter().copied()))
    }

    fn unit_hamiltonian_rate(&self, t: f64) -> Result<DMatrix<C64>> {
        let m = eval_fields(self, t)?.unit_rate_matrix();
        Ok(DMatrix::from_iterator(2, 2, m.iter().copied()))
    }

    fn domain(&self) -> Option<(f64, f64)> {
        ModelSpec::domain(self)
    }

    fn target_rank(&self) -> usize {
        match self.initial_branch {
            Branch::E0 => 0,
            Branch::E1 => 1,
        }
    }

    fn initial_state(&self) -> Option<DVector<C64>> {
        match self.kind {
            ModelKind::ModelB => Some(DVector::from_vec(vec![
                self.model_b_init.0,
                self.model_b_init.1,
            ])),
            _ => None,
        }
    }

    fn analytic_frame(&self, t: f64) -> Option<Result<EigenFrame>> {
        Some(eval_fields(self, t).and_then(|f| frame_analytic(&f, self.j0, 0.0)))
    }

    fn label(&self) -> String {
        self.name().to_string()
    }
}

/// `h(t) = h0 + sin(freq t) h1 + t h2` with Hermitian `h0, h1, h2`; used for
/// multi-level checks of the generic kernel.
#[derive(Clone, Debug)]
pub struct MatrixPath {
    pub j0: f64,
    pub h0: DMatrix<C64>,
    pub h1: DMatrix<C64>,
    pub h2: DMatrix<C64>,
    pub frequency: f64,
}

impl HamiltonianPath for MatrixPath {
    fn dim(&self) -> usize {
        self.h0.nrows()
    }

    fn j0(&self) -> f64 {
        self.j0
    }

    fn unit_hamiltonian(&self, t: f64) -> Result<DMatrix<C64>> {
        Ok(&self.h0 + &self.h1 * C64::from((self.frequency * t).sin()) + &self.h2 * C64::from(t))
    }

    fn unit_hamiltonian_rate(&self, t: f64) -> Result<DMatrix<C64>> {
        Ok(&self.h1 * C64::from(self.frequency * (self.frequency * t).cos()) + &self.h2)
    }

    fn label(&self) -> String {
        format!("matrix_path_{}", self.dim())
    }
}
