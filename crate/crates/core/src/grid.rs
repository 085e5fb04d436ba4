use crate::{Error, Result};

/// Uniform time grid `t_i = i * h`, `i = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    steps: usize,
    h: f64,
}

impl Grid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::invalid("t_end", format!("must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        Ok(Self {
            steps,
            h: t_end / steps as f64,
        })
    }

    /// Validate an explicit list of times and turn it into a grid.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("times", "need at least two points"));
        }
        if times[0].abs() > 0.0 {
            return Err(Error::invalid("times", "grid must start at t = 0"));
        }
        let steps = times.len() - 1;
        let t_end = times[steps];
        let h = t_end / steps as f64;
        let tol = 1e-9 * h.abs().max(f64::MIN_POSITIVE);
        for (i, &t) in times.iter().enumerate() {
            let dev = (t - i as f64 * h).abs();
            if dev > tol {
                return Err(Error::NonUniformGrid {
                    index: i,
                    deviation: dev,
                });
            }
        }
        Grid::new(t_end, steps)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points (`steps + 1`).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.t(i))
    }

    /// Grid with `factor` sub-intervals per step.
    pub fn refine(&self, factor: usize) -> Grid {
        Grid {
            steps: self.steps * factor,
            h: self.h / factor as f64,
        }
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.h;
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 {
            return Err(Error::OffGrid { t });
        }
        Ok(i as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_times_round_trip() {
        let g = Grid::new(2.0, 8).unwrap();
        let times: Vec<f64> = g.times().collect();
        assert_eq!(Grid::from_times(&times).unwrap(), g);
        assert_eq!(g.index_of(0.75).unwrap(), 3);
    }

    #[test]
    fn rejects_non_uniform() {
        let err = Grid::from_times(&[0.0, 0.1, 0.25, 0.3]).unwrap_err();
        assert!(matches!(err, Error::NonUniformGrid { index: 2, .. }));
    }

    #[test]
    fn off_grid_query() {
        let g = Grid::new(1.0, 10).unwrap();
        assert!(matches!(g.index_of(0.05), Err(Error::OffGrid { .. })));
        assert!(g.index_of(1.2).is_err());
    }
}
