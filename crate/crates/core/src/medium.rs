//! Physical constants of the propagation medium and the coefficient
//! combinations derived from them.
//!
//! All quantities are SI. The linear damping coefficient `alpha0` multiplies
//! `p_tt` in the linear MGT equation and defaults to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Medium parameters of water used throughout the numerical experiments.
pub const WATER_SOUND_SPEED: f64 = 1500.0;
pub const WATER_DENSITY: f64 = 1000.0;
pub const WATER_B_OVER_A: f64 = 5.0;

fn default_alpha0() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Thermal relaxation time (s).
    pub tau: f64,
    /// Speed of sound (m/s).
    pub c: f64,
    /// Sound diffusivity (m²/s).
    pub delta: f64,
    /// Mass density (kg/m³).
    pub rho: f64,
    /// Parameter of nonlinearity B/A.
    pub b_over_a: f64,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
}

impl MediumParams {
    /// Water (c = 1500 m/s, ϱ = 1000 kg/m³, B/A = 5) with the given relaxation
    /// time and diffusivity.
    pub fn water(tau: f64, delta: f64) -> Self {
        Self {
            tau,
            c: WATER_SOUND_SPEED,
            delta,
            rho: WATER_DENSITY,
            b_over_a: WATER_B_OVER_A,
            alpha0: 1.0,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau, self.c, self.delta, self.rho, self.b_over_a, self.alpha0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(format!(
                "medium parameters must be finite: {self:?}"
            )));
        }
        if self.tau <= 0.0 || self.c <= 0.0 || self.rho <= 0.0 || self.delta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "medium requires tau > 0, c > 0, rho > 0, delta >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// b = δ + τc², the coefficient of the strong damping term -bΔp_t.
    pub fn b(&self) -> f64 {
        self.delta + self.tau * self.c * self.c
    }

    pub fn c2(&self) -> f64 {
        self.c * self.c
    }
}

/// Coefficients of the quadratic nonlinearities.
///
/// `k` belongs to the pressure (Westervelt) form `½(k p²)_tt`, `kappa` and
/// `sigma` to the potential (Kuznetsov) form `½(κ ψ_t² + σ|∇ψ|²)_t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityParams {
    pub k: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl NonlinearityParams {
    pub const LINEAR: NonlinearityParams = NonlinearityParams {
        k: 0.0,
        kappa: 0.0,
        sigma: 0.0,
    };

    /// Pressure-form coefficient together with the default Kuznetsov pair.
    pub fn from_medium(m: &MediumParams) -> Self {
        Self {
            k: derived_k(m),
            kappa: derived_kappa(m),
            sigma: 2.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.k == 0.0 && self.kappa == 0.0 && self.sigma == 0.0
    }
}

/// k = (1/(ϱc²))·(1 + B/(2A)).
pub fn derived_k(m: &MediumParams) -> f64 {
    (1.0 + 0.5 * m.b_over_a) / (m.rho * m.c2())
}

/// κ = (B/A)/c², the Kuznetsov coefficient paired with σ = 2.
pub fn derived_kappa(m: &MediumParams) -> f64 {
    m.b_over_a / m.c2()
}

/// Coefficients (κ, σ) that turn the Kuznetsov nonlinearity into the
/// Westervelt nonlinearity in potential form: κ = (1/c²)(1 + B/(2A)), σ = 0.
pub fn westervelt_potential_kappa_sigma(m: &MediumParams) -> (f64, f64) {
    ((1.0 + 0.5 * m.b_over_a) / m.c2(), 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

/// γ = α − τc²/(δ + τc²) and its sign class.
pub fn gamma(m: &MediumParams) -> (f64, Stability) {
    let tc2 = m.tau * m.c2();
    let g = m.alpha0 - tc2 / (m.delta + tc2);
    let class = if g > 0.0 {
        Stability::Stable
    } else if g < 0.0 {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    (g, class)
}
