//! Problem definitions: equation, medium, domain, data and source for each
//! scenario.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{load_vector, FemOperators};
use crate::integrator::{AcousticState, LinearCoefficients, Nonlinearity};
use crate::medium::{westervelt_potential_kappa_sigma, MediumParams, NonlinearityParams};
use crate::mesh::{DomainSpec, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// τp_ttt + αp_tt − (δ+τc²)Δp_t − c²Δp = f
    GeneralizedMgt,
    /// JMGT with ½(k p²)_tt in the pressure unknown
    JmgtWesterveltPressure,
    /// JMGT with ½(κψ_t² + σ|∇ψ|²)_t in the potential unknown
    JmgtKuznetsovPotential,
    /// Kuznetsov form with κ = (1/c²)(1 + B/(2A)), σ = 0
    JmgtWesterveltPotential,
}

/// Scalar field used for initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldGenerator {
    Zero,
    /// amplitude · exp(−Σ_d (x_d − center_d)² / (2 width_d²))
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: [f64; 2],
    },
    /// amplitude · Π_d sin(modes_d π x_d / length): a Dirichlet eigenfunction
    SineMode {
        amplitude: f64,
        modes: [u32; 2],
        length: f64,
    },
}

fn gaussian(x: &[f64], center: &[f64; 2], width: &[f64; 2]) -> f64 {
    let r: f64 = x
        .iter()
        .enumerate()
        .map(|(d, &xd)| (xd - center[d]).powi(2) / (2.0 * width[d] * width[d]))
        .sum();
    (-r).exp()
}

impl FieldGenerator {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FieldGenerator::Zero => 0.0,
            FieldGenerator::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * gaussian(x, center, width),
            FieldGenerator::SineMode {
                amplitude,
                modes,
                length,
            } => {
                amplitude
                    * x.iter()
                        .enumerate()
                        .map(|(d, &xd)| (modes[d] as f64 * PI * xd / length).sin())
                        .product::<f64>()
            }
        }
    }

    /// Nodal samples with boundary entries forced to zero.
    pub fn sample(&self, mesh: &Mesh) -> Vec<f64> {
        let mut v = mesh.sample(|x| self.eval(x));
        mesh.clamp_boundary(&mut v);
        v
    }

    fn scaled(&self, s: f64) -> Self {
        match self.clone() {
            FieldGenerator::Zero => FieldGenerator::Zero,
            FieldGenerator::Gaussian {
                amplitude,
                center,
                width,
            } => FieldGenerator::Gaussian {
                amplitude: s * amplitude,
                center,
                width,
            },
            FieldGenerator::SineMode {
                amplitude,
                modes,
                length,
            } => FieldGenerator::SineMode {
                amplitude: s * amplitude,
                modes,
                length,
            },
        }
    }
}

/// Generators for (u, u_t, u_tt) at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: FieldGenerator,
    pub u1: FieldGenerator,
    pub u2: FieldGenerator,
}

impl InitialData {
    pub fn zero() -> Self {
        InitialData {
            u0: FieldGenerator::Zero,
            u1: FieldGenerator::Zero,
            u2: FieldGenerator::Zero,
        }
    }

    pub fn displacement(u0: FieldGenerator) -> Self {
        InitialData {
            u0,
            ..Self::zero()
        }
    }
}

/// Space-time source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// amplitude · exp(−Σ (x_d − center_d)²/(2 width_d²)) · sin(ω t)
    GaussianSine {
        amplitude: f64,
        center: [f64; 2],
        width: [f64; 2],
        omega: f64,
    },
}

impl Source {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Source::GaussianSine {
                amplitude,
                center,
                width,
                omega,
            } => amplitude * gaussian(x, center, width) * (omega * t).sin(),
        }
    }
}

/// Source load vector factored as spatial profile × temporal factor.
#[derive(Clone, Debug)]
pub struct SourceLoad {
    spatial: Vec<f64>,
    omega: f64,
}

impl SourceLoad {
    pub fn at(&self, t: f64) -> Vec<f64> {
        let s = (self.omega * t).sin();
        self.spatial.iter().map(|v| s * v).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub equation: Equation,
    pub medium: MediumParams,
    pub nonlin: NonlinearityParams,
    pub domain: DomainSpec,
    pub initial: InitialData,
    pub source: Option<Source>,
    pub final_time: f64,
}

/// Amplitude of the Gaussian potential in the Kuznetsov scenario (m²/s).
pub const KUZNETSOV_DEFAULT_AMPLITUDE: f64 = 1e-2;

const CHANNEL_LENGTH: f64 = 0.4;
const CHANNEL_ELEMENTS: usize = 600;
const CHANNEL_CENTER: f64 = 0.2;
const CHANNEL_WIDTH: f64 = 0.01;
const CHANNEL_AMPLITUDE: f64 = 1e8;
const CHANNEL_FINAL_TIME: f64 = 7e-5;

fn channel_gaussian(amplitude: f64) -> FieldGenerator {
    FieldGenerator::Gaussian {
        amplitude,
        center: [CHANNEL_CENTER, 0.0],
        width: [CHANNEL_WIDTH, 1.0],
    }
}

fn channel_domain() -> DomainSpec {
    DomainSpec::Interval {
        length: CHANNEL_LENGTH,
        n_elements: CHANNEL_ELEMENTS,
    }
}

/// JMGT–Westervelt pressure in water on (0, 0.4) with a 100 MPa Gaussian
/// pulse at x = 0.2, until T = 70 µs.
pub fn channel_1d_scenario(delta: f64, tau: f64) -> ProblemSpec {
    let medium = MediumParams::water(tau, delta);
    ProblemSpec {
        equation: Equation::JmgtWesterveltPressure,
        medium,
        nonlin: NonlinearityParams::from_medium(&medium),
        domain: channel_domain(),
        initial: InitialData::displacement(channel_gaussian(CHANNEL_AMPLITUDE)),
        source: None,
        final_time: CHANNEL_FINAL_TIME,
    }
}

/// Linear MGT on (0, 0.5)² driven by a Gaussian source oscillating at 20 kHz.
pub fn source_2d_scenario(delta: f64) -> ProblemSpec {
    ProblemSpec {
        equation: Equation::GeneralizedMgt,
        medium: MediumParams::water(1.5e-5, delta),
        nonlin: NonlinearityParams::LINEAR,
        domain: DomainSpec::Square { side: 0.5, h: 0.01 },
        initial: InitialData::zero(),
        source: Some(Source::GaussianSine {
            amplitude: 1e10,
            center: [0.25, 0.25],
            width: [0.02, 0.01],
            omega: 2.0 * PI * 2e4,
        }),
        final_time: 1.5e-4,
    }
}

/// JMGT–Kuznetsov potential on the channel geometry.
pub fn kuznetsov_scenario(delta: f64, tau: f64, sigma: f64, kappa: f64) -> ProblemSpec {
    let medium = MediumParams::water(tau, delta);
    ProblemSpec {
        equation: Equation::JmgtKuznetsovPotential,
        medium,
        nonlin: NonlinearityParams {
            k: 0.0,
            kappa,
            sigma,
        },
        domain: channel_domain(),
        initial: InitialData::displacement(channel_gaussian(KUZNETSOV_DEFAULT_AMPLITUDE)),
        source: None,
        final_time: CHANNEL_FINAL_TIME,
    }
}

/// JMGT–Westervelt in potential form on the channel geometry.
pub fn westervelt_potential_scenario(delta: f64, tau: f64) -> ProblemSpec {
    let medium = MediumParams::water(tau, delta);
    let (kappa, sigma) = westervelt_potential_kappa_sigma(&medium);
    ProblemSpec {
        equation: Equation::JmgtWesterveltPotential,
        nonlin: NonlinearityParams { k: 0.0, kappa, sigma },
        ..kuznetsov_scenario(delta, tau, sigma, kappa)
    }
}

/// Linear MGT on an interval with a single Dirichlet eigenmode as initial
/// displacement; the modal oracle gives its exact solution.
pub fn mode_1d_scenario(medium: MediumParams, length: f64, n_elements: usize, mode: u32, final_time: f64) -> ProblemSpec {
    ProblemSpec {
        equation: Equation::GeneralizedMgt,
        medium,
        nonlin: NonlinearityParams::LINEAR,
        domain: DomainSpec::Interval { length, n_elements },
        initial: InitialData::displacement(FieldGenerator::SineMode {
            amplitude: 1.0,
            modes: [mode, 1],
            length,
        }),
        source: None,
        final_time,
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        if self.domain.dim() == 1 {
            if let Some(Source::GaussianSine { .. }) = &self.source {
                // valid: y-components are ignored in 1D
            }
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.medium.delta = delta;
        self
    }

    /// Same problem with all nonlinear coefficients set to zero.
    pub fn linearized(mut self) -> Self {
        self.nonlin = NonlinearityParams::LINEAR;
        if self.equation == Equation::JmgtWesterveltPotential {
            self.equation = Equation::JmgtKuznetsovPotential;
        }
        self
    }

    /// Multiplies all initial data and the source by `s`.
    pub fn with_amplitude_scale(mut self, s: f64) -> Self {
        self.initial = InitialData {
            u0: self.initial.u0.scaled(s),
            u1: self.initial.u1.scaled(s),
            u2: self.initial.u2.scaled(s),
        };
        if let Some(Source::GaussianSine { amplitude, .. }) = &mut self.source {
            *amplitude *= s;
        }
        self
    }

    pub fn mesh(&self) -> Result<Mesh> {
        self.domain.build()
    }

    pub fn coefficients(&self) -> LinearCoefficients {
        LinearCoefficients::mgt(self.medium.alpha0)
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.equation {
            Equation::GeneralizedMgt => Nonlinearity::Linear,
            Equation::JmgtWesterveltPressure => Nonlinearity::Westervelt { k: self.nonlin.k },
            Equation::JmgtKuznetsovPotential | Equation::JmgtWesterveltPotential => Nonlinearity::Kuznetsov {
                kappa: self.nonlin.kappa,
                sigma: self.nonlin.sigma,
            },
        }
    }

    /// Initial nodal fields; the jerk is left at zero and computed by the
    /// simulation from the equation.
    pub fn initial_state(&self, mesh: &Mesh) -> AcousticState {
        let mut s = AcousticState::zeros(mesh.n_nodes());
        s.u = self.initial.u0.sample(mesh);
        s.u_t = self.initial.u1.sample(mesh);
        s.u_tt = self.initial.u2.sample(mesh);
        s
    }

    pub fn source_load(&self, ops: &FemOperators) -> Option<SourceLoad> {
        self.source.as_ref().map(|src| match src {
            Source::GaussianSine {
                amplitude,
                center,
                width,
                omega,
            } => {
                let g = ops.mesh().sample(|x| amplitude * gaussian(x, center, width));
                SourceLoad {
                    spatial: load_vector(ops, &g),
                    omega: *omega,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::medium::derived_kappa;
    use approx::assert_relative_eq;

    #[test]
    fn channel_initial_pulse() {
        let p = channel_1d_scenario(0.0, 1.5e-5);
        assert_eq!(p.initial.u0.eval(&[0.2]), 1e8);
        assert_relative_eq!(p.initial.u0.eval(&[0.21]) / 1e8, (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(p.initial.u0.eval(&[0.19]) / 1e8, 0.6065, max_relative = 1e-4);
        assert_relative_eq!(p.initial.u0.eval(&[0.0]) / 1e8, (-200.0f64).exp(), max_relative = 1e-12);
        let mesh = p.mesh().unwrap();
        assert_eq!(mesh.n_nodes(), 601);
        let s = p.initial_state(&mesh);
        assert_eq!(s.u[0], 0.0);
        assert_eq!(s.u[600], 0.0);
        assert!(s.u_t.iter().chain(&s.u_tt).all(|&v| v == 0.0));
    }

    #[test]
    fn channel_specs_differ_only_in_delta() {
        let a = channel_1d_scenario(0.0, 1.5e-5);
        let b = channel_1d_scenario(1e-3, 1.5e-5);
        assert_ne!(a, b);
        assert_eq!(a.with_delta(1e-3), b);
    }

    #[test]
    fn source_profile() {
        let p = source_2d_scenario(0.0);
        let src = p.source.as_ref().unwrap();
        let w = 2.0 * PI * 2e4;
        for t in [1e-6, 3.3e-5, 1e-4] {
            assert_relative_eq!(src.eval(&[0.25, 0.25], t), 1e10 * (w * t).sin(), max_relative = 1e-14);
        }
        let mesh = p.mesh().unwrap();
        for n in 0..mesh.n_nodes() {
            assert_eq!(src.eval(mesh.coord(n), 0.0), 0.0);
        }
        // three full periods of 50 µs fit into T
        assert_relative_eq!(p.final_time * 2e4, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn source_load_is_separable() {
        let mut p = source_2d_scenario(0.0);
        p.domain = DomainSpec::Square { side: 0.5, h: 0.05 };
        let ops = assemble(&p.mesh().unwrap());
        let load = p.source_load(&ops).unwrap();
        assert!(load.at(0.0).iter().all(|&v| v == 0.0));
        let t = 1.25e-5; // quarter period
        let l = load.at(t);
        assert!(l.iter().all(|&v| v >= 0.0));
        assert!(l.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn kuznetsov_defaults_and_mappings() {
        let m = MediumParams::water(1.5e-5, 0.0);
        let k = kuznetsov_scenario(0.0, 1.5e-5, 2.0, derived_kappa(&m));
        assert_relative_eq!(k.nonlin.kappa, 2.2222e-6, max_relative = 1e-4);
        assert_eq!(k.nonlin.sigma, 2.0);
        assert_eq!(k.initial.u0.eval(&[0.2]), KUZNETSOV_DEFAULT_AMPLITUDE);

        let (kappa, sigma) = westervelt_potential_kappa_sigma(&m);
        let a = kuznetsov_scenario(0.0, 1.5e-5, sigma, kappa);
        let b = westervelt_potential_scenario(0.0, 1.5e-5);
        assert_eq!(a.nonlinearity(), b.nonlinearity());

        let lin = kuznetsov_scenario(0.0, 1.5e-5, 0.0, 0.0);
        assert!(lin.nonlinearity().is_trivial());
    }

    #[test]
    fn sine_mode_samples_vanish_on_boundary() {
        let p = mode_1d_scenario(MediumParams::water(1e-5, 0.0), 1.0, 16, 1, 1e-3);
        let mesh = p.mesh().unwrap();
        let s = p.initial_state(&mesh);
        assert_eq!(s.u[0], 0.0);
        assert_eq!(s.u[16], 0.0);
        assert_relative_eq!(s.u[8], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn amplitude_scaling() {
        let p = channel_1d_scenario(0.0, 1.5e-5).with_amplitude_scale(1e6);
        assert_eq!(p.initial.u0.eval(&[0.2]), 1e14);
        let q = source_2d_scenario(0.0).with_amplitude_scale(2.0);
        assert!(matches!(q.source, Some(Source::GaussianSine { amplitude, .. }) if amplitude == 2e10));
    }
}
