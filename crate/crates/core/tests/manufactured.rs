//! The exact triple of the manufactured problem, differentiated by finite
//! differences, must satisfy the system with the built-in forcings.

use lsem::model::{test1_spec, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;

/// Fourth-order central first derivative.
fn d1(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x + 2.0 * H) + 8.0 * f(x + H) - 8.0 * f(x - H) + f(x - 2.0 * H)) / (12.0 * H)
}

/// Fourth-order central second derivative.
fn d2(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x + 2.0 * H) + 16.0 * f(x + H) - 30.0 * f(x) + 16.0 * f(x - H) - f(x - 2.0 * H))
        / (12.0 * H * H)
}

fn residuals(spec: &ModelSpec, x: f64, y: f64, t: f64) -> [f64; 3] {
    let exact = spec.exact.as_ref().unwrap();
    let forcing = spec.forcing.as_ref().unwrap();
    let (u, v) = (exact[0].eval(x, y, t), exact[1].eval(x, y, t));
    let nl = spec.nonlinear_f(u, v).unwrap();
    let weights = spec.reaction_weights();
    let (xi, zeta, r) = (spec.xi.eval(x, y), spec.zeta.eval(x, y), spec.r.eval(x, y));
    std::array::from_fn(|i| {
        let e = &exact[i];
        let dt = d1(|s| e.eval(x, y, s), t);
        let dx = d1(|s| e.eval(s, y, t), x);
        let dy = d1(|s| e.eval(x, s, t), y);
        let lap = d2(|s| e.eval(s, y, t), x) + d2(|s| e.eval(x, s, t), y);
        let react = if i == 2 { r * e.eval(x, y, t) } else { 0.0 };
        dt + xi * (dx + dy) - zeta * lap + react + weights[i] * nl - forcing[i].eval(x, y, t)
    })
}

#[test]
fn manufactured_forcings_close_the_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for varpi in [0.0, 1.0, 2.5] {
        let spec = test1_spec(varpi);
        for _ in 0..100 {
            let (x, y, t) = (rng.random::<f64>(), rng.random::<f64>(), rng.random_range(0.0..1.0));
            for (i, r) in residuals(&spec, x, y, t).iter().enumerate() {
                assert!(r.abs() <= 1e-8, "field {i} at ({x}, {y}, {t}): residual {r}");
            }
        }
    }
}

#[test]
fn exact_solution_vanishes_on_boundary() {
    let spec = test1_spec(1.0);
    for f in spec.exact.as_ref().unwrap() {
        for s in [0.0, 0.3, 0.71, 1.0] {
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                assert!(f.eval(x, y, 0.4).abs() < 1e-15);
            }
        }
    }
}
