//! Time-stepping driver for a single problem instance.

use serde::{Deserialize, Serialize};

use crate::analysis::energy;
use crate::error::Result;
use crate::fem::{assemble, FemOperators};
use crate::integrator::{initial_jerk, stable_dt, time_grid, AcousticState, NewmarkParams, Nonlinearity, StepOperator};
use crate::models::{ProblemSpec, SourceLoad};

/// Per-run statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dt: f64,
    pub h: f64,
    pub steps: usize,
    pub max_fp_iters: usize,
    pub mean_fp_iters: f64,
    /// max over the time grid of E[p]
    pub max_energy: f64,
}

/// A problem with its mesh, operators and factorized step matrix.
pub struct Simulation {
    spec: ProblemSpec,
    ops: FemOperators,
    stepper: StepOperator,
    nonlinearity: Nonlinearity,
    source: Option<SourceLoad>,
    steps: usize,
    dt: f64,
}

impl Simulation {
    /// `delta_bar` fixes the CFL step, so runs sharing it share the time grid.
    pub fn new(spec: &ProblemSpec, newmark: &NewmarkParams, delta_bar: f64) -> Result<Self> {
        spec.validate()?;
        let mesh = spec.mesh()?;
        let dt_max = stable_dt(&spec.medium, delta_bar.max(spec.medium.delta), mesh.h(), newmark);
        Self::with_dt(spec, newmark, dt_max, mesh)
    }

    /// Same as [`Simulation::new`] but with an explicit upper bound on Δt.
    pub fn with_max_dt(spec: &ProblemSpec, newmark: &NewmarkParams, dt_max: f64) -> Result<Self> {
        spec.validate()?;
        let mesh = spec.mesh()?;
        Self::with_dt(spec, newmark, dt_max, mesh)
    }

    fn with_dt(spec: &ProblemSpec, newmark: &NewmarkParams, dt_max: f64, mesh: crate::mesh::Mesh) -> Result<Self> {
        let (steps, dt) = time_grid(spec.final_time, dt_max)?;
        let ops = assemble(&mesh);
        let stepper = StepOperator::new(&ops, &spec.medium, &spec.coefficients(), dt, newmark)?;
        let source = spec.source_load(&ops);
        Ok(Simulation {
            spec: spec.clone(),
            nonlinearity: spec.nonlinearity(),
            ops,
            stepper,
            source,
            steps,
            dt,
        })
    }

    pub fn ops(&self) -> &FemOperators {
        &self.ops
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn load(&self, t: f64) -> Vec<f64> {
        match &self.source {
            Some(s) => s.at(t),
            None => vec![0.0; self.ops.n_interior()],
        }
    }

    /// Initial data with the jerk computed from the equation.
    pub fn initial_state(&self) -> Result<AcousticState> {
        let mut s = self.spec.initial_state(self.ops.mesh());
        s.u_ttt = initial_jerk(
            &self.ops,
            &self.spec.medium,
            &self.spec.coefficients(),
            &self.nonlinearity,
            &s,
            &self.load(0.0),
        )?;
        Ok(s)
    }

    /// Runs to the final time, handing every state (t = 0 included) to
    /// `observer`.
    pub fn run<F>(&self, mut observer: F) -> Result<RunSummary>
    where
        F: FnMut(&AcousticState) -> Result<()>,
    {
        let mut state = self.initial_state()?;
        let mut max_energy = energy(&self.ops, &self.spec.medium, &state).e_full;
        observer(&state)?;
        let (mut max_it, mut total_it) = (0, 0);
        for n in 1..=self.steps {
            let t = n as f64 * self.dt;
            let (mut next, it) = self
                .stepper
                .step_nonlinear(&self.ops, &self.nonlinearity, &state, &self.load(t))?;
            next.t = t;
            max_it = max_it.max(it);
            total_it += it;
            max_energy = max_energy.max(energy(&self.ops, &self.spec.medium, &next).e_full);
            observer(&next)?;
            state = next;
        }
        Ok(RunSummary {
            dt: self.dt,
            h: self.ops.mesh().h(),
            steps: self.steps,
            max_fp_iters: max_it,
            mean_fp_iters: total_it as f64 / self.steps as f64,
            max_energy,
        })
    }

    /// Runs to the final time and returns the last state.
    pub fn final_state(&self) -> Result<(AcousticState, RunSummary)> {
        let mut last = None;
        let summary = self.run(|s| {
            last = Some(s.clone());
            Ok(())
        })?;
        Ok((last.expect("run produces at least one state"), summary))
    }
}
