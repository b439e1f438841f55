//! Subcommand implementations.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use lsem::assembly::{Discretization, StateVector};
use lsem::basis::Basis1D;
use lsem::mesh::{Mesh2D, Rect};
use lsem::model::{test1_spec, test2_spec, InitKind, ModelSpec, Nonlinearity, ScalarField};
use lsem::montecarlo::{
    error_report, run_ensemble, temporal_orders, uniform_grid, write_ensemble_summary,
    write_error_table, EnsembleOptions, EnsembleResult, ErrorRow, Reference,
};
use lsem::stochastic::{write_spectrum_csv, NoisePaths, NoiseSign, QWienerSampler};
use lsem::timestepper::{
    step_count, write_snapshots_csv, NonlinearTreatment, RunOptions, SchemeOperators,
    SchemeOptions,
};

use crate::config::{CustomConfig, Initial, Law, Problem, RunConfig, SignConvention, Treatment};
use crate::error::CliError;
use crate::output::{OutputSet, RunManifest, OUT_DIR_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Table1,
    Spatial,
    Evolve,
    SpectrumDump,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Table1 => "table1",
            Self::Spatial => "spatial",
            Self::Evolve => "evolve",
            Self::SpectrumDump => "spectrum-dump",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads the configuration, applies command-line overrides and resolves the
/// output directory (`--out`, then the environment, then the config).
pub fn resolve(inv: &Invocation) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&inv.config)?;
    if let Some(s) = inv.seed {
        cfg.noise.seed = s;
    }
    if let Some(w) = inv.workers {
        cfg.ensemble.workers = w;
    }
    let out = inv
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.output.dir = None;
    cfg.validate()?;
    cfg.validate_for(inv.command)?;
    Ok((cfg, out))
}

pub fn execute(inv: &Invocation) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let (cfg, out_dir) = resolve(inv)?;
    let mut out = OutputSet::create(&out_dir)?;
    out.write("config.resolved.toml", cfg.to_toml().as_bytes())?;
    let mut timings = BTreeMap::new();
    match inv.command {
        Command::Run => cmd_run(&cfg, &mut out)?,
        Command::Table1 => cmd_table1(&cfg, &mut out, &mut timings)?,
        Command::Spatial => cmd_spatial(&cfg, &mut out)?,
        Command::Evolve => cmd_evolve(&cfg, &mut out)?,
        Command::SpectrumDump => cmd_spectrum_dump(&cfg, &mut out)?,
    }
    let manifest = RunManifest {
        command: inv.command.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.to_toml(),
        out_dir: out_dir.display().to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        timings,
        outputs: Vec::new(),
    };
    out.finish(manifest)
}

fn custom_spec(c: &CustomConfig, cfg: &RunConfig) -> Result<ModelSpec, CliError> {
    let [x0, x1, y0, y1] = c.domain;
    let domain = Rect::new(x0, x1, y0, y1);
    let init = match c.init {
        Initial::Smooth => {
            let (w2, h2) = ((x1 - x0).powi(2), (y1 - y0).powi(2));
            ScalarField::function(move |x, y| (x - x0) * (x1 - x) * (y - y0) * (y1 - y) / (w2 * h2))
        }
        Initial::Delta => {
            let [cx, cy] = cfg.model.delta_center;
            if !domain.contains(cx, cy) {
                return Err(CliError::Config(format!(
                    "model.delta_center: ({cx}, {cy}) lies outside the domain"
                )));
            }
            let s2 = cfg.model.delta_width.powi(2);
            ScalarField::function(move |x, y| {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                (-d2 / (2.0 * s2)).exp() / (2.0 * PI * s2)
            })
        }
    };
    Ok(ModelSpec {
        domain,
        xi: ScalarField::Constant(c.xi),
        zeta: ScalarField::Constant(c.zeta),
        r: ScalarField::Constant(c.r),
        wp: cfg.model.varpi,
        e: c.e,
        kappa: c.kappa,
        nonlinearity: match c.law {
            Law::Product => Nonlinearity::Test1Product,
            Law::Saturating => Nonlinearity::SaturatingSum,
        },
        forcing: None,
        init: [init.clone(), init.clone(), init],
        exact: None,
    })
}

pub fn build_spec(cfg: &RunConfig) -> Result<ModelSpec, CliError> {
    let m = &cfg.model;
    let center = (m.delta_center[0], m.delta_center[1]);
    let mut spec = match cfg.problem {
        Problem::Test1 => test1_spec(m.varpi),
        Problem::Test2Smooth => test2_spec(InitKind::Smooth, center, m.delta_width)?,
        Problem::Test2Delta => test2_spec(InitKind::Delta, center, m.delta_width)?,
        Problem::Custom => custom_spec(cfg.custom.as_ref().expect("validated"), cfg)?,
    };
    spec.wp = m.varpi;
    if !m.nonlinearity {
        spec = spec.without_nonlinearity();
    }
    spec.validate()?;
    Ok(spec)
}

pub fn build_discretization(
    cfg: &RunConfig,
    spec: &ModelSpec,
    order: usize,
) -> Result<Arc<Discretization>, CliError> {
    let mesh = Mesh2D::build(spec.domain, cfg.mesh.nex, cfg.mesh.ney, order)?;
    let n_quad = cfg.mesh.quadrature.unwrap_or(order + 2).max(order + 2);
    let basis = Basis1D::with_quadrature(order, n_quad)?;
    Ok(Arc::new(Discretization::new(mesh, basis)?))
}

pub fn build_sampler(cfg: &RunConfig) -> QWienerSampler {
    let n = &cfg.noise;
    QWienerSampler {
        truncation: n.truncation,
        decay_exponent: n.decay,
        amplitude: n.sigma,
        seed: n.seed,
        sign: match n.sign {
            SignConvention::Subtract => NoiseSign::Subtract,
            SignConvention::Add => NoiseSign::Add,
        },
        paths: if n.shared_paths {
            NoisePaths::Shared
        } else {
            NoisePaths::Independent
        },
    }
}

pub fn scheme_options(cfg: &RunConfig) -> SchemeOptions {
    SchemeOptions {
        nonlinear: match cfg.model.nonlinear_treatment {
            Treatment::Lagged => NonlinearTreatment::Lagged,
            Treatment::Extrapolated => NonlinearTreatment::Extrapolated,
        },
        ..SchemeOptions::default()
    }
}

/// Result of one deterministic run or one ensemble.
pub struct Solution {
    pub final_state: StateVector,
    pub snapshots: Vec<(usize, StateVector)>,
    pub ensemble: Option<EnsembleResult>,
}

/// Runs the deterministic scheme when `sigma = 0`, the ensemble otherwise.
pub fn solve(
    cfg: &RunConfig,
    spec: &ModelSpec,
    disc: &Arc<Discretization>,
    tau: f64,
    sampler: &QWienerSampler,
    snapshot_steps: Vec<usize>,
) -> Result<Solution, CliError> {
    let ops = SchemeOperators::with_options(disc.clone(), spec, tau, scheme_options(cfg))?;
    let t_final = cfg.time.t_final;
    if sampler.amplitude == 0.0 {
        let traj = ops.run(
            t_final,
            None,
            &RunOptions {
                snapshot_steps,
                record_reports: false,
            },
        )?;
        return Ok(Solution {
            final_state: traj.final_state,
            snapshots: traj.snapshots,
            ensemble: None,
        });
    }
    let projector = sampler.bind(disc)?;
    let ens = run_ensemble(
        &ops,
        &projector,
        t_final,
        &EnsembleOptions {
            samples: cfg.ensemble.samples,
            workers: cfg.ensemble.workers,
            snapshot_steps,
        },
    )?;
    Ok(Solution {
        final_state: ens.mean(),
        snapshots: ens.snapshots.clone(),
        ensemble: Some(ens),
    })
}

fn steps_for(times: &[f64], tau: f64) -> Vec<usize> {
    times
        .iter()
        .map(|&t| crate::config::step_of(t, tau).expect("validated"))
        .collect()
}

fn cmd_run(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let spec = build_spec(cfg)?;
    let disc = build_discretization(cfg, &spec, cfg.mesh.order)?;
    let tau = cfg.time.tau;
    let snaps = steps_for(&cfg.time.snapshot_times, tau);
    let sol = solve(cfg, &spec, &disc, tau, &build_sampler(cfg), snaps)?;
    let n = step_count(tau, cfg.time.t_final)?;
    out.write_with("final_state.csv", |w| {
        write_snapshots_csv(&[(n, sol.final_state.clone())], w)
    })?;
    if !sol.snapshots.is_empty() {
        out.write_with("snapshots.csv", |w| write_snapshots_csv(&sol.snapshots, w))?;
    }
    if let Some(ens) = &sol.ensemble {
        out.write_with("ensemble.csv", |w| write_ensemble_summary(ens, w))?;
    }
    if let Some(exact) = &spec.exact {
        let r = error_report(&disc, &sol.final_state, &Reference::Exact(exact, cfg.time.t_final))?;
        let row = ErrorRow {
            parameter: tau,
            l2: r.l2_sum(),
            linf: r.linf_sum(),
            order: None,
        };
        out.write_with("errors.csv", |w| write_error_table("tau", &[row], w))?;
    }
    Ok(())
}

fn cmd_table1(
    cfg: &RunConfig,
    out: &mut OutputSet,
    timings: &mut BTreeMap<String, f64>,
) -> Result<(), CliError> {
    if cfg.problem != Problem::Test1 {
        return Err(CliError::Config("problem: table1 requires \"test1\"".into()));
    }
    let spec = build_spec(cfg)?;
    let t_final = cfg.time.t_final;
    let exact = spec.exact.as_ref().expect("test problem 1 has an exact solution");
    for &order in &cfg.table1.orders {
        let disc = build_discretization(cfg, &spec, order)?;
        let mut rows = Vec::new();
        for &tau in &cfg.table1.taus {
            let clock = Instant::now();
            let ops = SchemeOperators::with_options(disc.clone(), &spec, tau, scheme_options(cfg))?;
            let state = ops.run(t_final, None, &RunOptions::default())?.final_state;
            timings.insert(format!("table1/N={order}/tau={tau:e}"), clock.elapsed().as_secs_f64());
            let r = error_report(&disc, &state, &Reference::Exact(exact, t_final))?;
            rows.push(ErrorRow {
                parameter: tau,
                l2: r.l2_sum(),
                linf: r.linf_sum(),
                order: None,
            });
        }
        if rows.len() > 1 {
            let linf: Vec<f64> = rows.iter().map(|r| r.linf).collect();
            if let Ok(orders) = temporal_orders(&linf) {
                for (row, o) in rows.iter_mut().skip(1).zip(orders) {
                    row.order = Some(o);
                }
            }
        }
        out.write_with(&format!("table1_N{order}.csv"), |w| write_error_table("tau", &rows, w))?;
    }
    Ok(())
}

fn cmd_spatial(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let spec = build_spec(cfg)?;
    let sampler = build_sampler(cfg);
    let use_exact = spec.exact.is_some() && !cfg.stochastic();
    if !use_exact {
        let max = cfg.spatial.orders.iter().max().copied().unwrap_or(0);
        if cfg.reference.order <= max {
            return Err(CliError::Config(format!(
                "reference.order: must exceed every spatial order (max {max}), got {}",
                cfg.reference.order
            )));
        }
    }
    let t_final = cfg.time.t_final;
    for &tau in &cfg.spatial.taus {
        let reference = if use_exact {
            None
        } else {
            let ref_sampler = if cfg.reference.common_random_numbers {
                sampler.clone()
            } else {
                QWienerSampler {
                    seed: sampler.seed.wrapping_add(1),
                    ..sampler.clone()
                }
            };
            let disc = build_discretization(cfg, &spec, cfg.reference.order)?;
            let sol = solve(cfg, &spec, &disc, tau, &ref_sampler, vec![])?;
            Some((disc, sol.final_state))
        };
        let mut rows = Vec::new();
        for &order in &cfg.spatial.orders {
            let disc = build_discretization(cfg, &spec, order)?;
            let sol = solve(cfg, &spec, &disc, tau, &sampler, vec![])?;
            let r = match &reference {
                None => error_report(
                    &disc,
                    &sol.final_state,
                    &Reference::Exact(spec.exact.as_ref().expect("checked"), t_final),
                )?,
                Some((rd, rs)) => error_report(&disc, &sol.final_state, &Reference::Discrete(rd, rs))?,
            };
            rows.push(ErrorRow {
                parameter: order as f64,
                l2: r.l2_sum(),
                linf: r.linf_sum(),
                order: None,
            });
        }
        out.write_with(&format!("spatial_tau{tau:e}.csv"), |w| write_error_table("N", &rows, w))?;
    }
    Ok(())
}

fn cmd_evolve(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let spec = build_spec(cfg)?;
    let disc = build_discretization(cfg, &spec, cfg.mesh.order)?;
    let tau = cfg.time.tau;
    let steps = steps_for(&cfg.evolve.times, tau);
    let sol = solve(cfg, &spec, &disc, tau, &build_sampler(cfg), steps.clone())?;
    let grid = uniform_grid(&disc, cfg.evolve.grid);
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["t", "x", "y", "u"]).map_err(lsem::Error::from)?;
        // Snapshots come back in step order with duplicates merged; emit one
        // block per requested time.
        for &step in &steps {
            let (_, state) = sol
                .snapshots
                .iter()
                .find(|(s, _)| *s == step)
                .expect("every requested step is recorded");
            let values = disc.evaluate(&state.fields[0], &grid)?;
            let t = step as f64 * tau;
            for (&(x, y), u) in grid.iter().zip(values) {
                w.write_record([format!("{t:e}"), format!("{x:e}"), format!("{y:e}"), format!("{u:e}")])
                    .map_err(lsem::Error::from)?;
            }
        }
        w.flush().map_err(lsem::Error::from)?;
    }
    out.write("evolve.csv", &buf)
}

fn cmd_spectrum_dump(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let sampler = build_sampler(cfg);
    out.write_with("spectrum.csv", |w| write_spectrum_csv(&sampler, w))
}
