//! Multiplicative noise `c(t)` on the Hamiltonian strength, stored through
//! its running integral `Phi(t) = int_0^t c`.
//!
//! Calibration: Gaussian white noise has `<c(t) c(t')> = Gamma delta(t - t')`
//! with `Gamma = J^2 / J0`. Shot noise is a compound Poisson train with rate
//! `W` and exponential amplitudes of mean `a0 = J / sqrt(2 W J0)`, minus its
//! mean drift, so `W E[a^2] = Gamma` and the `W -> infinity` limit is the
//! Gaussian process above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::{Error, Grid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum NoiseKind {
    #[default]
    None,
    /// Gaussian white noise of strength `j`.
    GaussianWhite { j: f64 },
    /// Biased Poissonian shot noise of strength `j` and shot rate `w`.
    ShotNoise { j: f64, w: f64 },
    /// Deterministic control field `c(t) = amplitude * sin(frequency * t)`.
    Deterministic { amplitude: f64, frequency: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Energy scale used to convert strength to `Gamma`.
    pub j0: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            j0: 1.0,
            seed: 0,
        }
    }

    pub fn gaussian(j: f64, j0: f64) -> Self {
        Self {
            kind: NoiseKind::GaussianWhite { j },
            j0,
            seed: 0,
        }
    }

    /// Gaussian white noise with the given `Gamma = J^2 / J0`.
    pub fn gaussian_gamma(gamma: f64, j0: f64) -> Self {
        Self::gaussian((gamma.max(0.0) * j0).sqrt(), j0)
    }

    pub fn shot(j: f64, w: f64, j0: f64) -> Self {
        Self {
            kind: NoiseKind::ShotNoise { j, w },
            j0,
            seed: 0,
        }
    }

    pub fn deterministic(amplitude: f64, frequency: f64) -> Self {
        Self {
            kind: NoiseKind::Deterministic { amplitude, frequency },
            j0: 1.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_none(&self) -> bool {
        match self.kind {
            NoiseKind::None => true,
            NoiseKind::GaussianWhite { j } | NoiseKind::ShotNoise { j, .. } => j == 0.0,
            NoiseKind::Deterministic { amplitude, .. } => amplitude == 0.0,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self.kind,
            NoiseKind::GaussianWhite { .. } | NoiseKind::ShotNoise { .. }
        )
    }

    /// White-noise intensity `Gamma = J^2 / J0`; zero for non-stochastic kinds.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            NoiseKind::GaussianWhite { j } | NoiseKind::ShotNoise { j, .. } => j * j / self.j0,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j0.is_finite() && self.j0 > 0.0) {
            return Err(Error::invalid("j0", "must be positive"));
        }
        match self.kind {
            NoiseKind::None => {}
            NoiseKind::GaussianWhite { j } => check_strength(j)?,
            NoiseKind::ShotNoise { j, w } => {
                check_strength(j)?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::invalid("w", format!("shot rate must be positive, got {w}")));
                }
            }
            NoiseKind::Deterministic { amplitude, frequency } => {
                if !amplitude.is_finite() {
                    return Err(Error::invalid("amplitude", "must be finite"));
                }
                if !(frequency.is_finite() && frequency > 0.0) {
                    return Err(Error::invalid("frequency", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Typical size of `c` seen by a step of length `h`, used by the
    /// resolution guard.
    pub fn effective_amplitude(&self, h: f64) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::GaussianWhite { .. } | NoiseKind::ShotNoise { .. } => (self.gamma() / h).sqrt(),
            NoiseKind::Deterministic { amplitude, .. } => amplitude.abs(),
        }
    }
}

fn check_strength(j: f64) -> Result<()> {
    if !(j.is_finite() && j >= 0.0) {
        return Err(Error::invalid("j", format!("noise strength must be non-negative, got {j}")));
    }
    Ok(())
}

/// One realization of `Phi(t_i)` on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    grid: Grid,
    phi: Vec<f64>,
    seed: u64,
}

impl NoisePath {
    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            phi: vec![0.0; grid.len()],
            seed: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble with `base_seed`.
pub fn sub_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample `Phi` on `grid`; a pure function of `(spec, grid, seed)`.
pub fn sample_path(spec: &NoiseSpec, grid: Grid, seed: u64) -> Result<NoisePath> {
    spec.validate()?;
    let h = grid.h();
    let mut phi = Vec::with_capacity(grid.len());
    phi.push(0.0);
    let mut rng = rng_for(seed);
    match spec.kind {
        NoiseKind::None => phi.resize(grid.len(), 0.0),
        NoiseKind::GaussianWhite { .. } => {
            let sd = (spec.gamma() * h).sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let mut acc = 0.0;
            for _ in 0..grid.steps() {
                acc += sd * normal.sample(&mut rng);
                phi.push(acc);
            }
        }
        NoiseKind::ShotNoise { j, w } => {
            let mut acc = 0.0;
            for _ in 0..grid.steps() {
                acc += shot_increment(j, w, spec.j0, h, &mut rng)?;
                phi.push(acc);
            }
        }
        NoiseKind::Deterministic { amplitude, frequency } => {
            for i in 1..grid.len() {
                phi.push(amplitude / frequency * (1.0 - (frequency * grid.t(i)).cos()));
            }
        }
    }
    Ok(NoisePath { grid, phi, seed })
}

/// Increment of the drift-subtracted compound Poisson integral over `h`.
pub fn shot_increment<R: Rng + ?Sized>(j: f64, w: f64, j0: f64, h: f64, rng: &mut R) -> Result<f64> {
    if j == 0.0 {
        return Ok(0.0);
    }
    let a0 = j / (2.0 * w * j0).sqrt();
    let poisson = Poisson::new(w * h).map_err(|e| Error::invalid("w", e.to_string()))?;
    let shots: f64 = poisson.sample(rng);
    let jumps = if shots > 0.0 {
        Gamma::new(shots, a0)
            .map_err(|e| Error::invalid("j", e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    Ok(jumps - w * a0 * h)
}

/// `int_s^t k dPhi`, accumulated as `sum k(t_{i+1/2}) dPhi_i`; with `k == 1`
/// this is `Phi(t) - Phi(s)`.
pub fn noise_phase(path: &NoisePath, s: f64, t: f64, k: impl Fn(f64) -> f64) -> Result<f64> {
    let grid = path.grid();
    let i0 = grid.index_of(s)?;
    let i1 = grid.index_of(t)?;
    if i1 < i0 {
        return Err(Error::invalid("t", "must not precede s"));
    }
    let h = grid.h();
    Ok((i0..i1)
        .map(|i| k(grid.t(i) + 0.5 * h) * (path.phi[i + 1] - path.phi[i]))
        .sum())
}

/// `E[exp(i int_s^t c k)] = exp(-(Gamma/2) int_s^t k^2)`, exact for Gaussian
/// white noise and the white-noise limit for shot noise.
pub fn analytic_dephasing(spec: &NoiseSpec, s: f64, t: f64, k: impl Fn(f64) -> f64) -> Result<f64> {
    if let NoiseKind::Deterministic { .. } = spec.kind {
        return Err(Error::Unsupported(
            "analytic dephasing needs stochastic noise".into(),
        ));
    }
    let gamma = spec.gamma();
    if gamma == 0.0 || t == s {
        return Ok(1.0);
    }
    Ok((-0.5 * gamma * simpson(|x| k(x).powi(2), s, t, 256)).exp())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}
