//! Linearized Crank-Nicolson stepping for the coupled system.
//!
//! Every field solves one linear system per step,
//!
//! ```text
//! L_phi phi^n = R_phi phi^{n-1} - tau w_p e_phi (F, chi) + tau (forcing(t_{n-1/2}), chi) -+ (dW^n, chi)
//! L_phi = H_1 Mass + tau/2 (Advection + Diffusion)
//! R_phi = H_2 Mass - tau/2 (Advection + Diffusion)
//! ```
//!
//! where `H_1 = H_2 = 1` for `u` and `v`, and `H_1 = 1 + tau/2 r`,
//! `H_2 = 1 - tau/2 r` for `w` (realised as `Mass -+ tau/2 Reaction`). Left
//! operators depend only on `tau` and the model, so they are factorized once
//! and shared by every step and every Monte Carlo sample.

use std::io::Write;
use std::sync::Arc;

use crate::assembly::{Discretization, OperatorKind, StateVector};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ScalarField};
use crate::sparse::{LuFactor, SparseMatrix};
use crate::stochastic::{NoiseIncrement, NoiseProjector, NoiseSign};

const FIELD_NAMES: [&str; 3] = ["u", "v", "w"];

/// Time level at which the nonlinear coupling is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonlinearTreatment {
    /// `F(U^{n-1})`: first order in time.
    Lagged,
    /// `3/2 F(U^{n-1}) - 1/2 F(U^{n-2})`, an explicit estimate of
    /// `F(U^{n-1/2})`. The first step falls back to the lagged value.
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub nonlinear: NonlinearTreatment,
    /// Largest accepted relative residual of each linear solve.
    pub residual_tolerance: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            nonlinear: NonlinearTreatment::default(),
            residual_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub residuals: [f64; 3],
    /// Squared energy norm of the new state.
    pub energy: f64,
}

/// Left and right operators of the scheme for one `(tau, model, mesh)`.
pub struct SchemeOperators {
    disc: Arc<Discretization>,
    spec: ModelSpec,
    tau: f64,
    options: SchemeOptions,
    left: [SparseMatrix; 3],
    right: [SparseMatrix; 3],
    lu: [Arc<LuFactor>; 3],
    unit_stiffness: SparseMatrix,
    /// `max(1, 1 + tau/2 max r)`.
    h1_norm: f64,
    zeta_max: f64,
    quad_xy: Vec<(f64, f64)>,
}

impl std::fmt::Debug for SchemeOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchemeOperators")
            .field("tau", &self.tau)
            .field("mesh", &self.disc.mesh().describe())
            .finish_non_exhaustive()
    }
}

impl SchemeOperators {
    pub fn build(disc: Arc<Discretization>, spec: &ModelSpec, tau: f64) -> Result<Self> {
        Self::with_options(disc, spec, tau, SchemeOptions::default())
    }

    pub fn with_options(
        disc: Arc<Discretization>,
        spec: &ModelSpec,
        tau: f64,
        options: SchemeOptions,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {tau}")));
        }
        let mass = disc.mass().matrix.clone();
        let adv = disc.assemble(&spec.xi, OperatorKind::Advection)?.matrix;
        let diff = disc.assemble(&spec.zeta, OperatorKind::Diffusion)?.matrix;
        let react = disc.assemble(&spec.r, OperatorKind::Reaction)?.matrix;
        let transport = adv.axpby(1.0, &diff, 1.0);
        let half = 0.5 * tau;
        let l_uv = mass.axpby(1.0, &transport, half);
        let r_uv = mass.axpby(1.0, &transport, -half);
        let l_w = l_uv.axpby(1.0, &react, half);
        let r_w = r_uv.axpby(1.0, &react, -half);

        let describe = disc.mesh().describe();
        let factor = |m: &SparseMatrix, field: &'static str| {
            m.factorize().map(Arc::new).map_err(|e| Error::SingularScheme {
                field,
                tau,
                mesh: describe.clone(),
                detail: e.to_string(),
            })
        };
        let lu_uv = factor(&l_uv, "u")?;
        let lu_w = factor(&l_w, "w")?;

        let unit_stiffness = disc
            .assemble(&ScalarField::Constant(1.0), OperatorKind::Diffusion)?
            .matrix;
        let r_max = disc
            .sample(|x, y| spec.r.eval(x, y))?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let zeta_max = disc
            .sample(|x, y| spec.zeta.eval(x, y))?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let quad_xy = disc.quadrature_points().into_iter().map(|(x, y, _)| (x, y)).collect();

        Ok(Self {
            spec: spec.clone(),
            tau,
            options,
            left: [l_uv.clone(), l_uv, l_w],
            right: [r_uv.clone(), r_uv, r_w],
            lu: [lu_uv.clone(), lu_uv, lu_w],
            unit_stiffness,
            h1_norm: (1.0 + half * r_max).max(1.0),
            zeta_max,
            quad_xy,
            disc,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn options(&self) -> SchemeOptions {
        self.options
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn left(&self, field: usize) -> &SparseMatrix {
        &self.left[field]
    }

    pub fn right(&self, field: usize) -> &SparseMatrix {
        &self.right[field]
    }

    /// Projected initial condition at `t = 0`.
    pub fn initial_state(&self) -> Result<StateVector> {
        self.disc.project_state(&self.spec.init, 0.0)
    }

    /// Load vector `(f(u, v), chi_i)` of the unweighted nonlinearity.
    pub fn nonlinear_load(&self, state: &StateVector) -> Result<Vec<f64>> {
        let u = self.disc.values_at_quadrature(state.u())?;
        let v = self.disc.values_at_quadrature(state.v())?;
        let f = u
            .iter()
            .zip(&v)
            .map(|(&u, &v)| self.spec.nonlinear_f(u, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.disc.load_from_samples(&f))
    }

    fn forcing_loads(&self, t: f64) -> Option<[Vec<f64>; 3]> {
        let forcing = self.spec.forcing.as_ref()?;
        Some(std::array::from_fn(|i| {
            let vals: Vec<f64> = self
                .quad_xy
                .iter()
                .map(|&(x, y)| forcing[i].eval(x, y, t))
                .collect();
            self.disc.load_from_samples(&vals)
        }))
    }

    /// Advances `state` by one step.
    ///
    /// `nonlinear` is the load vector of the nonlinearity to use for this step
    /// (ignored when the model has no nonlinear coupling) and `noise` the
    /// increments `W^n - W^{n-1}` of the three equations with the sign they
    /// enter with.
    pub fn step(
        &self,
        state: &StateVector,
        step: usize,
        nonlinear: Option<&[f64]>,
        noise: Option<(&[NoiseIncrement; 3], NoiseSign)>,
    ) -> Result<(StateVector, StepReport)> {
        let n = self.disc.n_global();
        if state.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: state.dim(),
            });
        }
        let tau = self.tau;
        let weights = self.spec.reaction_weights();
        let forcing = self.forcing_loads(state.t + 0.5 * tau);
        let mut fields: [Vec<f64>; 3] = Default::default();
        let mut residuals = [0.0; 3];
        for i in 0..3 {
            let mut rhs = self.right[i].mul_vec(&state.fields[i]);
            if let (Some(f), true) = (nonlinear, weights[i] != 0.0) {
                let c = tau * weights[i];
                rhs.iter_mut().zip(f).for_each(|(r, f)| *r -= c * f);
            }
            if let Some(loads) = &forcing {
                rhs.iter_mut().zip(&loads[i]).for_each(|(r, f)| *r += tau * f);
            }
            if let Some((inc, sign)) = noise {
                let sign = sign.factor();
                rhs.iter_mut()
                    .zip(&inc[i].load)
                    .for_each(|(r, b)| *r += sign * b);
            }
            let x = self.lu[i].solve(&rhs);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step, sample: None });
            }
            let res = if rhs.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                self.lu[i].relative_residual(&x, &rhs)
            };
            if res > self.options.residual_tolerance {
                return Err(Error::SolverFailure {
                    field: FIELD_NAMES[i],
                    step,
                    residual: res,
                });
            }
            residuals[i] = res;
            fields[i] = x;
        }
        let next = StateVector {
            fields,
            t: state.t + tau,
        };
        let energy = self.energy_norm(&next);
        Ok((
            next,
            StepReport {
                step,
                residuals,
                energy,
            },
        ))
    }

    /// Squared discrete energy norm
    /// `sum_phi ||H_1|| ||phi||^2 + tau/2 ||zeta|| ||grad phi||^2`,
    /// with `||H_1|| = max(1, 1 + tau/2 max r)` and `||zeta|| = max zeta` over
    /// the quadrature points.
    pub fn energy_norm(&self, state: &StateVector) -> f64 {
        let mass = &self.disc.mass().matrix;
        state
            .fields
            .iter()
            .map(|f| {
                self.h1_norm * mass.quad_form(f, f)
                    + 0.5 * self.tau * self.zeta_max * self.unit_stiffness.quad_form(f, f)
            })
            .sum()
    }
}

/// Noise source of one trajectory.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSource<'a> {
    pub projector: &'a NoiseProjector,
    pub sample_id: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Steps after which the state is recorded (0 is the initial state).
    pub snapshot_steps: Vec<usize>,
    pub record_reports: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: StateVector,
    pub snapshots: Vec<(usize, StateVector)>,
    pub reports: Vec<StepReport>,
}

/// Number of steps of length `tau` that reach `t_final`.
pub fn step_count(tau: f64, t_final: f64) -> Result<usize> {
    if !(t_final >= 0.0) {
        return Err(Error::InvalidInput(format!("final time must be >= 0, got {t_final}")));
    }
    let n = (t_final / tau).round();
    if (n * tau - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "final time {t_final} is not a whole number of steps of {tau}"
        )));
    }
    Ok(n as usize)
}

impl SchemeOperators {
    /// Integrates from the projected initial data to `t_final`.
    pub fn run(
        &self,
        t_final: f64,
        noise: Option<NoiseSource<'_>>,
        options: &RunOptions,
    ) -> Result<Trajectory> {
        let init = self.initial_state()?;
        self.run_from(init, t_final, noise, options)
    }

    pub fn run_from(
        &self,
        init: StateVector,
        t_final: f64,
        noise: Option<NoiseSource<'_>>,
        options: &RunOptions,
    ) -> Result<Trajectory> {
        let n_steps = step_count(self.tau, t_final - init.t)?;
        let sample = noise.map(|n| n.sample_id);
        let tag = |e: Error| match (e, sample) {
            (Error::Divergence { step, .. }, Some(s)) => Error::Divergence {
                step,
                sample: Some(s),
            },
            (e, _) => e,
        };
        let mut snapshots = Vec::new();
        let mut reports = Vec::new();
        let mut state = init;
        if options.snapshot_steps.contains(&0) {
            snapshots.push((0, state.clone()));
        }
        let nonlinear = self.spec.has_nonlinearity();
        let mut previous_load: Option<Vec<f64>> = None;
        for n in 1..=n_steps {
            let load = if nonlinear {
                let current = self.nonlinear_load(&state).map_err(tag)?;
                let used = match (self.options.nonlinear, &previous_load) {
                    (NonlinearTreatment::Extrapolated, Some(prev)) => current
                        .iter()
                        .zip(prev)
                        .map(|(c, p)| 1.5 * c - 0.5 * p)
                        .collect(),
                    _ => current.clone(),
                };
                previous_load = Some(current);
                Some(used)
            } else {
                None
            };
            let increments = noise.map(|src| {
                (
                    src.projector.increments(src.sample_id, n, self.tau),
                    src.projector.sampler().sign,
                )
            });
            let (next, report) = self
                .step(
                    &state,
                    n,
                    load.as_deref(),
                    increments.as_ref().map(|(i, s)| (i, *s)),
                )
                .map_err(tag)?;
            state = next;
            if options.record_reports {
                reports.push(report);
            }
            if options.snapshot_steps.contains(&n) {
                snapshots.push((n, state.clone()));
            }
        }
        Ok(Trajectory {
            final_state: state,
            snapshots,
            reports,
        })
    }
}

/// Coefficient snapshots as CSV with header `step,t,field,dof,value`.
pub fn write_snapshots_csv<W: Write>(snapshots: &[(usize, StateVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "t", "field", "dof", "value"])?;
    for (step, s) in snapshots {
        for (name, f) in FIELD_NAMES.iter().zip(&s.fields) {
            for (i, v) in f.iter().enumerate() {
                w.write_record([
                    step.to_string(),
                    format!("{:e}", s.t),
                    name.to_string(),
                    i.to_string(),
                    format!("{v:e}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
