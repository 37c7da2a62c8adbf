use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Uniform grid on a periodic interval of length `period`.
///
/// Nodes are `origin + m·period/n` for `m = 0..n`; the right endpoint is not a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    period: f64,
    origin: f64,
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(n: usize, period: f64) -> Result<Self, NumericsError> {
        Self::with_origin(n, period, 0.0)
    }

    /// Grid on `[-period/2, period/2)`, so that `x = 0` is node `n/2`.
    pub fn centered(n: usize, period: f64) -> Result<Self, NumericsError> {
        Self::with_origin(n, period, -0.5 * period)
    }

    pub fn with_origin(n: usize, period: f64, origin: f64) -> Result<Self, NumericsError> {
        if n < Self::MIN_POINTS || !n.is_power_of_two() {
            return Err(NumericsError::InvalidGrid(format!(
                "sample count must be a power of two >= {}, got {n}",
                Self::MIN_POINTS
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(NumericsError::InvalidGrid(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        if !origin.is_finite() {
            return Err(NumericsError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Grid { n, period, origin })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn dx(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn x(&self, m: usize) -> f64 {
        self.origin + m as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.x(m)).collect()
    }

    /// Node index whose coordinate equals `x`, if any (tolerance `1e-9·dx`).
    pub fn node_of(&self, x: f64) -> Option<usize> {
        let r = (x - self.origin) / self.dx();
        let m = r.round();
        if (r - m).abs() < 1e-9 && m >= 0.0 && (m as usize) < self.n {
            Some(m as usize)
        } else {
            None
        }
    }

    /// Node closest to `x = 0` (clamped into range).
    pub fn anchor(&self) -> usize {
        let r = (-self.origin / self.dx()).round();
        r.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Angular wavenumbers in FFT order: `2π/L · [0, 1, …, n/2-1, -n/2, …, -1]`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let scale = 2.0 * PI / self.period;
        let n = self.n as i64;
        (0..n)
            .map(|m| {
                let j = if m < n / 2 { m } else { m - n };
                j as f64 * scale
            })
            .collect()
    }

    /// Largest wavenumber retained by the 2/3 dealiasing rule.
    pub fn dealiased_kmax(&self) -> f64 {
        2.0 * PI / self.period * (self.n / 3) as f64
    }

    /// Same sampling, different node count.
    pub fn resampled(&self, n: usize) -> Result<Grid, NumericsError> {
        Grid::with_origin(n, self.period, self.origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(48, 1.0).is_err());
        assert!(Grid::new(64, 0.0).is_err());
        assert!(Grid::new(64, 1.0).is_ok());
    }

    #[test]
    fn centered_anchor_is_zero() {
        let g = Grid::centered(64, 10.0).unwrap();
        assert_eq!(g.anchor(), 32);
        assert!(g.x(32).abs() < 1e-15);
        assert_eq!(g.node_of(0.0), Some(32));
        assert_eq!(g.node_of(0.01), None);
    }

    #[test]
    fn wavenumbers_layout() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let k = g.wavenumbers();
        assert_eq!(k[1], 1.0);
        assert_eq!(k[8], -8.0);
        assert_eq!(k[15], -1.0);
    }
}
