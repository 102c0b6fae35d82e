use serde::{Deserialize, Serialize};

use crate::base::BasePoint;
use crate::error::Result;
use crate::fiber::MpFamily;
use crate::potential::TrigPotential;

/// The skew product `F(x, y) = (2x mod 1, g_x(y))` together with a potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewProduct {
    pub family: MpFamily,
    pub potential: TrigPotential,
}

impl SkewProduct {
    pub fn new(family: MpFamily, potential: TrigPotential) -> Self {
        Self { family, potential }
    }

    /// One application of `F`.
    pub fn step(&self, x: &BasePoint, y: f64) -> Result<(BasePoint, f64)> {
        let y1 = self.family.forward(x, y);
        Ok((x.forward(1)?, y1))
    }

    /// `F^n(x, y)`.
    pub fn iterate(&self, x: &BasePoint, y: f64, n: usize) -> Result<(BasePoint, f64)> {
        let orbit = x.orbit(n)?;
        let y = orbit[..n]
            .iter()
            .fold(y, |acc, xk| self.family.forward(xk, acc));
        Ok((orbit[n].clone(), y))
    }

    /// `e^{φ(x, y)}`.
    #[inline]
    pub fn weight(&self, x: f64, y: f64) -> f64 {
        self.potential.eval(x, y).exp()
    }
}
