//! Monte Carlo estimation of the expected solution and error measurement.
//!
//! Samples are grouped into fixed-size chunks. Each chunk is integrated by a
//! single worker with Welford updates in sample order, and the chunk moments
//! are merged in chunk order, so the estimate does not depend on how many
//! workers run or how the scheduler interleaves them.

use std::io::Write;

use rayon::prelude::*;

use crate::assembly::{Discretization, StateVector};
use crate::error::{Error, Result};
use crate::model::SpaceTimeField;
use crate::stochastic::NoiseProjector;
use crate::timestepper::{NoiseSource, RunOptions, SchemeOperators};

/// Samples per work unit.
pub const CHUNK: usize = 8;

/// Per-DOF streaming mean and second central moment of three fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: [Vec<f64>; 3],
    pub m2: [Vec<f64>; 3],
}

impl Moments {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0,
            mean: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            m2: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn push(&mut self, state: &StateVector) {
        self.count += 1;
        let c = self.count as f64;
        for i in 0..3 {
            for ((m, s), x) in self.mean[i]
                .iter_mut()
                .zip(self.m2[i].iter_mut())
                .zip(&state.fields[i])
            {
                let d = x - *m;
                *m += d / c;
                *s += d * (x - *m);
            }
        }
    }

    /// Chan's pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..3 {
            for k in 0..self.mean[i].len() {
                let d = other.mean[i][k] - self.mean[i][k];
                self.mean[i][k] += d * nb / n;
                self.m2[i][k] += other.m2[i][k] + d * d * na * nb / n;
            }
        }
        self.count += other.count;
    }

    /// Unbiased sample variance (zero for a single sample).
    pub fn variance(&self) -> [Vec<f64>; 3] {
        let denom = (self.count.max(2) - 1) as f64;
        self.m2.clone().map(|f| f.iter().map(|v| v / denom).collect())
    }

    pub fn std_error(&self) -> [Vec<f64>; 3] {
        let n = self.count.max(1) as f64;
        self.variance()
            .map(|f| f.iter().map(|v| (v / n).sqrt()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub m: usize,
    pub seed: u64,
    pub t: f64,
    pub moments: Moments,
    /// Means at the requested snapshot steps, ascending and deduplicated.
    pub snapshots: Vec<(usize, StateVector)>,
}

impl EnsembleResult {
    pub fn mean(&self) -> StateVector {
        StateVector {
            fields: self.moments.mean.clone(),
            t: self.t,
        }
    }

    pub fn std_error(&self) -> [Vec<f64>; 3] {
        self.moments.std_error()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub samples: usize,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub snapshot_steps: Vec<usize>,
}

/// Integrates samples `0..M` and accumulates their moments.
pub fn run_ensemble(
    ops: &SchemeOperators,
    projector: &NoiseProjector,
    t_final: f64,
    options: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if options.samples == 0 {
        return Err(Error::InvalidInput("ensemble needs at least one sample".into()));
    }
    let n = ops.discretization().n_global();
    let mut steps = options.snapshot_steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let n_snap = steps.len();
    let run_opts = RunOptions {
        snapshot_steps: steps.clone(),
        record_reports: false,
    };
    let init = ops.initial_state()?;
    let chunks: Vec<std::ops::Range<usize>> = (0..options.samples)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(options.samples))
        .collect();

    let work = || -> Result<Vec<(Moments, Vec<Moments>)>> {
        chunks
            .par_iter()
            .map(|range| {
                let mut fin = Moments::new(n);
                let mut snaps = vec![Moments::new(n); n_snap];
                for id in range.clone() {
                    let src = NoiseSource {
                        projector,
                        sample_id: id as u64,
                    };
                    let traj = ops
                        .run_from(init.clone(), t_final, Some(src), &run_opts)
                        .map_err(|e| Error::Sample {
                            sample: id as u64,
                            source: Box::new(e),
                        })?;
                    fin.push(&traj.final_state);
                    for (acc, (_, s)) in snaps.iter_mut().zip(&traj.snapshots) {
                        acc.push(s);
                    }
                }
                Ok((fin, snaps))
            })
            .collect()
    };
    let parts = if options.workers == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work)?
    };

    let mut moments = Moments::new(n);
    let mut snap_moments = vec![Moments::new(n); n_snap];
    for (fin, snaps) in &parts {
        moments.merge(fin);
        for (acc, s) in snap_moments.iter_mut().zip(snaps) {
            acc.merge(s);
        }
    }
    let snapshots = steps
        .iter()
        .zip(snap_moments)
        .map(|(&step, m)| {
            (
                step,
                StateVector {
                    fields: m.mean,
                    t: step as f64 * ops.tau(),
                },
            )
        })
        .collect();
    Ok(EnsembleResult {
        m: options.samples,
        seed: projector.sampler().seed,
        t: t_final,
        moments,
        snapshots,
    })
}

/// L2 and L-infinity errors of each field against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub l2: [f64; 3],
    pub linf: [f64; 3],
}

impl ErrorReport {
    pub fn l2_sum(&self) -> f64 {
        self.l2.iter().sum()
    }

    pub fn linf_sum(&self) -> f64 {
        self.linf.iter().sum()
    }
}

pub enum Reference<'a> {
    /// Exact fields evaluated at time `t`.
    Exact(&'a [SpaceTimeField; 3], f64),
    /// A discrete state on another (or the same) discretization.
    Discrete(&'a Discretization, &'a StateVector),
}

/// Points of the uniform `n x n` evaluation grid, x-major.
pub fn uniform_grid(disc: &Discretization, n: usize) -> Vec<(f64, f64)> {
    let d = disc.mesh().domain();
    let step = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (step(d.x0, d.x1, i), step(d.y0, d.y1, j))))
        .collect()
}

pub const ERROR_GRID: usize = 101;

/// L-infinity on the uniform 101 x 101 grid, L2 by element quadrature of the
/// squared difference on `disc`.
pub fn error_report(
    disc: &Discretization,
    state: &StateVector,
    reference: &Reference<'_>,
) -> Result<ErrorReport> {
    if let Reference::Discrete(other, s) = reference {
        if other.mesh().domain() != disc.mesh().domain() {
            return Err(Error::InvalidConfig(
                "state and reference live on different domains".into(),
            ));
        }
        if s.dim() != other.n_global() {
            return Err(Error::DimensionMismatch {
                expected: other.n_global(),
                got: s.dim(),
            });
        }
    }
    let grid = uniform_grid(disc, ERROR_GRID);
    let quad = disc.quadrature_points();
    let quad_xy: Vec<(f64, f64)> = quad.iter().map(|&(x, y, _)| (x, y)).collect();
    let mut report = ErrorReport {
        l2: [0.0; 3],
        linf: [0.0; 3],
    };
    for i in 0..3 {
        let (ref_grid, ref_quad) = match reference {
            Reference::Exact(fields, t) => (
                grid.iter().map(|&(x, y)| fields[i].eval(x, y, *t)).collect(),
                quad_xy.iter().map(|&(x, y)| fields[i].eval(x, y, *t)).collect(),
            ),
            Reference::Discrete(other, s) => (
                other.evaluate(&s.fields[i], &grid)?,
                other.evaluate(&s.fields[i], &quad_xy)?,
            ),
        };
        let ref_grid: Vec<f64> = ref_grid;
        let ref_quad: Vec<f64> = ref_quad;
        let vals = disc.evaluate(&state.fields[i], &grid)?;
        report.linf[i] = vals
            .iter()
            .zip(&ref_grid)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let qv = disc.values_at_quadrature(&state.fields[i])?;
        report.l2[i] = quad
            .iter()
            .zip(qv.iter().zip(&ref_quad))
            .map(|(&(_, _, w), (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    Ok(report)
}

fn check_errors(errors: &[f64]) -> Result<()> {
    if errors.len() < 2 {
        return Err(Error::InvalidInput(
            "convergence needs at least two error values".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidInput(format!("errors must be positive, got {e}")));
    }
    Ok(())
}

/// Observed orders `log2(e_i / e_{i+1})` for a sequence of halved steps.
pub fn temporal_orders(errors: &[f64]) -> Result<Vec<f64>> {
    check_errors(errors)?;
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Spectral decay has no fixed algebraic rate, so spatial sequences are
/// summarised by monotonicity and total reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecay {
    pub errors: Vec<f64>,
    pub monotone: bool,
    pub reduction: f64,
}

pub fn spectral_decay(errors: &[f64]) -> Result<SpectralDecay> {
    check_errors(errors)?;
    Ok(SpectralDecay {
        errors: errors.to_vec(),
        monotone: errors.windows(2).all(|w| w[1] < w[0]),
        reduction: errors[0] / errors[errors.len() - 1],
    })
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    /// `tau` or `N`.
    pub parameter: f64,
    pub l2: f64,
    pub linf: f64,
    pub order: Option<f64>,
}

/// Error table as CSV; the first column is named by `parameter`
/// (`tau` or `N`, plain decimal), followed by `l2,linf,order` in scientific
/// notation (order empty when undefined).
pub fn write_error_table<W: Write>(parameter: &str, rows: &[ErrorRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([parameter, "l2", "linf", "order"])?;
    for r in rows {
        w.write_record([
            r.parameter.to_string(),
            format!("{:e}", r.l2),
            format!("{:e}", r.linf),
            r.order.map(|o| format!("{o:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ensemble summary as CSV with header `field,dof,mean,stderr`.
pub fn write_ensemble_summary<W: Write>(result: &EnsembleResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field", "dof", "mean", "stderr"])?;
    let se = result.std_error();
    for (i, name) in ["u", "v", "w"].iter().enumerate() {
        for (k, (m, s)) in result.moments.mean[i].iter().zip(&se[i]).enumerate() {
            w.write_record([name.to_string(), k.to_string(), format!("{m:e}"), format!("{s:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh2D;
    use crate::model::{test1_spec, test2_spec, InitKind};
    use crate::stochastic::QWienerSampler;
    use std::sync::Arc;

    fn setup(n: usize, sampler: QWienerSampler) -> (SchemeOperators, NoiseProjector) {
        let d = Arc::new(Discretization::from_mesh(Mesh2D::unit_square(n).unwrap()).unwrap());
        let spec = test2_spec(InitKind::Smooth, (0.5, 0.5), 0.05).unwrap();
        let ops = SchemeOperators::build(d.clone(), &spec, 0.05).unwrap();
        let p = sampler.bind(&d).unwrap();
        (ops, p)
    }

    fn opts(m: usize, workers: usize) -> EnsembleOptions {
        EnsembleOptions {
            samples: m,
            workers,
            snapshot_steps: vec![],
        }
    }

    #[test]
    fn silent_ensemble_equals_deterministic_run() {
        let (ops, p) = setup(5, QWienerSampler::silent());
        let det = ops.run(0.2, None, &RunOptions::default()).unwrap().final_state;
        let res = run_ensemble(&ops, &p, 0.2, &opts(11, 2)).unwrap();
        assert_eq!(res.mean().fields, det.fields);
        assert!(res.std_error().iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn single_sample_mean_is_that_sample() {
        let (ops, p) = setup(5, QWienerSampler::default());
        let src = NoiseSource {
            projector: &p,
            sample_id: 0,
        };
        let one = ops.run(0.2, Some(src), &RunOptions::default()).unwrap().final_state;
        let res = run_ensemble(&ops, &p, 0.2, &opts(1, 1)).unwrap();
        assert_eq!(res.mean().fields, one.fields);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let (ops, p) = setup(5, QWienerSampler::default());
        let a = run_ensemble(&ops, &p, 0.2, &opts(37, 1)).unwrap();
        let b = run_ensemble(&ops, &p, 0.2, &opts(37, 4)).unwrap();
        assert_eq!(a.moments, b.moments);
    }

    #[test]
    fn streaming_matches_two_pass() {
        let (ops, p) = setup(4, QWienerSampler::default());
        let finals: Vec<StateVector> = (0..100)
            .map(|id| {
                let src = NoiseSource {
                    projector: &p,
                    sample_id: id,
                };
                ops.run(0.1, Some(src), &RunOptions::default()).unwrap().final_state
            })
            .collect();
        let res = run_ensemble(&ops, &p, 0.1, &opts(100, 3)).unwrap();
        let var = res.moments.variance();
        for f in 0..3 {
            for k in 0..finals[0].dim() {
                let mean = finals.iter().map(|s| s.fields[f][k]).sum::<f64>() / 100.0;
                let v = finals
                    .iter()
                    .map(|s| (s.fields[f][k] - mean).powi(2))
                    .sum::<f64>()
                    / 99.0;
                assert!((res.moments.mean[f][k] - mean).abs() <= 1e-12 * mean.abs().max(1e-3));
                assert!((var[f][k] - v).abs() <= 1e-10 * v.max(1e-300));
            }
        }
    }

    #[test]
    fn merge_is_order_insensitive_within_tolerance() {
        let n = 3;
        let states: Vec<StateVector> = (0..20)
            .map(|i| StateVector {
                fields: std::array::from_fn(|f| {
                    (0..n).map(|k| ((i * 7 + f * 3 + k) as f64).sin()).collect()
                }),
                t: 0.0,
            })
            .collect();
        let mut fwd = Moments::new(n);
        states.iter().for_each(|s| fwd.push(s));
        let mut a = Moments::new(n);
        let mut b = Moments::new(n);
        states[..7].iter().for_each(|s| a.push(s));
        states[7..].iter().rev().for_each(|s| b.push(s));
        b.merge(&a);
        for f in 0..3 {
            for k in 0..n {
                assert!((fwd.mean[f][k] - b.mean[f][k]).abs() <= 1e-12);
                assert!((fwd.m2[f][k] - b.m2[f][k]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn failing_sample_is_named() {
        let d = Arc::new(Discretization::from_mesh(Mesh2D::unit_square(4).unwrap()).unwrap());
        let ops = SchemeOperators::build(d.clone(), &test1_spec(1.0), 0.1).unwrap();
        let sampler = QWienerSampler {
            amplitude: 1e300,
            ..QWienerSampler::default()
        };
        let p = sampler.bind(&d).unwrap();
        let err = run_ensemble(&ops, &p, 0.3, &opts(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Sample { sample: 0, .. }), "{err}");
        assert!(run_ensemble(&ops, &p, 0.1, &opts(0, 1)).is_err());
    }

    #[test]
    fn error_report_properties() {
        let d = Discretization::from_mesh(Mesh2D::unit_square(8).unwrap()).unwrap();
        let spec = test1_spec(1.0);
        let s = d.project_state(&spec.init, 0.0).unwrap();
        let same = error_report(&d, &s, &Reference::Discrete(&d, &s)).unwrap();
        assert!(same.l2.iter().chain(&same.linf).all(|&e| e <= 1e-14));

        let ex = error_report(&d, &s, &Reference::Exact(spec.exact.as_ref().unwrap(), 0.0)).unwrap();
        for i in 0..3 {
            assert!(ex.l2[i] >= 0.0 && ex.l2[i] <= ex.linf[i] * 1.0 + 1e-15);
        }

        // Perturbing one coefficient moves L-inf by at most |c| max |basis|.
        let c = 1e-3;
        let mut p = s.clone();
        p.fields[0][5] += c;
        let pr = error_report(&d, &p, &Reference::Discrete(&d, &s)).unwrap();
        let mut e = vec![0.0; d.n_global()];
        e[5] = 1.0;
        let grid = uniform_grid(&d, ERROR_GRID);
        let basis_max = d
            .evaluate(&e, &grid)
            .unwrap()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(pr.linf[0] <= c * basis_max + 1e-15);
        assert!(pr.linf[0] > 0.0);

        let other = Discretization::from_mesh(
            Mesh2D::build(crate::mesh::Rect::new(0.0, 2.0, 0.0, 1.0), 1, 1, 8).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            error_report(&d, &s, &Reference::Discrete(&other, &s)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn orders() {
        let o = temporal_orders(&[4e-4, 1e-4]).unwrap();
        assert!((o[0] - 2.0).abs() < 1e-12);
        let o = temporal_orders(&[1.2863e-3, 3.3204e-4]).unwrap();
        assert!((o[0] - 1.9538).abs() < 1e-3);
        assert_eq!(temporal_orders(&[3.0, 3.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(temporal_orders(&[1.0]).is_err());
        assert!(temporal_orders(&[1.0, 0.0]).is_err());
        let s = spectral_decay(&[1e-2, 1e-4, 1e-6]).unwrap();
        assert!(s.monotone && (s.reduction - 1e4).abs() < 1e-6);
        assert!(!spectral_decay(&[1e-2, 1e-4, 2e-4]).unwrap().monotone);
    }

    #[test]
    fn error_table_layout() {
        let rows = [
            ErrorRow {
                parameter: 0.5,
                l2: 1e-3,
                linf: 2e-3,
                order: None,
            },
            ErrorRow {
                parameter: 0.25,
                l2: 2.5e-4,
                linf: 5e-4,
                order: Some(2.0),
            },
        ];
        let mut buf = Vec::new();
        write_error_table("tau", &rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "tau,l2,linf,order\n0.5,1e-3,2e-3,\n0.25,2.5e-4,5e-4,2.000000\n"
        );
    }
}
