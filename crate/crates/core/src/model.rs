//! PDE data for the coupled system
//!
//! ```text
//! du + (xi (u_x + u_y) - div(zeta grad u) + w_p e_1 f(u, v)) dt       = F_u dt + dW
//! dv + (xi (v_x + v_y) - div(zeta grad v) + w_p e_2 f(u, v)) dt       = F_v dt + dW
//! dw + (xi (w_x + w_y) - div(zeta grad w) + w_p e_3 f(u, v) + r w) dt = F_w dt + dW
//! ```
//!
//! on a rectangle with homogeneous Dirichlet data, together with the two
//! reference problems used by the experiment harness.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Rect;

/// Denominators smaller than this are treated as a pole of the nonlinearity.
pub const POLE_TOLERANCE: f64 = 1e-12;

/// Scalar coefficient field on the domain.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(x, y),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::Function(_) => None,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Space-time field `(x, y, t) -> value`.
#[derive(Clone)]
pub struct SpaceTimeField(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>);

impl SpaceTimeField {
    pub fn new(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.0)(x, y, t)
    }
}

impl fmt::Debug for SpaceTimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpaceTimeField(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// `u / (kappa_1 + u) + v / (kappa_2 + v)`
    SaturatingSum,
    /// `u v / ((1 + u) (v + 2))`
    Test1Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Smooth,
    Delta,
}

/// Coefficients, constants, forcing and initial data of the system.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub domain: Rect,
    /// Advection speed, applied as `xi (d/dx + d/dy)`.
    pub xi: ScalarField,
    /// Diffusivity.
    pub zeta: ScalarField,
    /// Linear reaction rate, acting on `w` only.
    pub r: ScalarField,
    pub wp: f64,
    pub e: [f64; 3],
    pub kappa: [f64; 2],
    pub nonlinearity: Nonlinearity,
    /// Deterministic right-hand sides for `(u, v, w)`.
    pub forcing: Option<[SpaceTimeField; 3]>,
    pub init: [ScalarField; 3],
    /// Exact noise-free solution, when known.
    pub exact: Option<[SpaceTimeField; 3]>,
}

impl ModelSpec {
    /// Reaction value `f(u, v)` before the `w_p e_i` prefactors.
    pub fn nonlinear_f(&self, u: f64, v: f64) -> Result<f64> {
        let singular = |d: f64| d.abs() < POLE_TOLERANCE || !d.is_finite();
        match self.nonlinearity {
            Nonlinearity::SaturatingSum => {
                let (d1, d2) = (self.kappa[0] + u, self.kappa[1] + v);
                if singular(d1) || singular(d2) {
                    return Err(Error::SingularNonlinearity { u, v });
                }
                Ok(u / d1 + v / d2)
            }
            Nonlinearity::Test1Product => {
                let d = (1.0 + u) * (v + 2.0);
                if singular(d) {
                    return Err(Error::SingularNonlinearity { u, v });
                }
                Ok(u * v / d)
            }
        }
    }

    /// Prefactors `w_p e_i` of the nonlinearity in each equation.
    pub fn reaction_weights(&self) -> [f64; 3] {
        self.e.map(|e| self.wp * e)
    }

    pub fn has_nonlinearity(&self) -> bool {
        self.reaction_weights().iter().any(|&c| c != 0.0)
    }

    /// Same problem with the nonlinear coupling switched off.
    pub fn without_nonlinearity(mut self) -> Self {
        self.wp = 0.0;
        self
    }

    /// Same problem with no nonlinearity and no deterministic forcing.
    pub fn homogeneous(self) -> Self {
        let mut s = self.without_nonlinearity();
        s.forcing = None;
        s
    }

    /// Checks the constants and samples `zeta` on a grid for ellipticity.
    pub fn validate(&self) -> Result<()> {
        if self.nonlinearity == Nonlinearity::SaturatingSum
            && !(self.kappa[0] > 0.0 && self.kappa[1] > 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "kappa must be positive, got {:?}",
                self.kappa
            )));
        }
        let d = self.domain;
        for i in 0..=16 {
            for j in 0..=16 {
                let x = d.x0 + d.width() * i as f64 / 16.0;
                let y = d.y0 + d.height() * j as f64 / 16.0;
                let z = self.zeta.eval(x, y);
                if !(z > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "diffusivity must be positive, found {z} at ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rho(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

/// Manufactured problem on the unit square with exact solution
/// `(e^{-5t}, e^{-2t}, e^{-3t}) sin(pi x) sin(pi y)`, diffusivity `1e-3`,
/// unit advection, `r = 2` and the nonlinearity `0.6 varpi uv / ((1+u)(v+2))`.
pub fn test1_spec(varpi: f64) -> ModelSpec {
    const D: f64 = 1e-3;
    let nonlin = move |x: f64, y: f64, t: f64| {
        let s = (PI * x).sin() * (PI * y).sin();
        let u = (-5.0 * t).exp() * s;
        let v = (-2.0 * t).exp() * s;
        0.6 * varpi * u * v / ((1.0 + u) * (v + 2.0))
    };
    // Each forcing is: time derivative + advection + diffusion
    // (+ reaction for w) + nonlinearity, written out term by term.
    let f = move |x: f64, y: f64, t: f64| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        let et = (-5.0 * t).exp();
        -5.0 * et * sx * sy
            + PI * et * cx * sy
            + PI * et * sx * cy
            + 2.0 * D * PI * PI * et * sx * sy
            + nonlin(x, y, t)
    };
    let g = move |x: f64, y: f64, t: f64| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        let et = (-2.0 * t).exp();
        et * (-2.0 * sx * sy + PI * cx * sy + PI * sx * cy + 2.0 * D * PI * PI * sx * sy)
            + nonlin(x, y, t)
    };
    let h = move |x: f64, y: f64, t: f64| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        let et = (-3.0 * t).exp();
        (2.0 - 3.0) * et * sx * sy
            + PI * et * cx * sy
            + et * sx * (PI * cy + 2.0 * D * PI * PI * sy)
            + nonlin(x, y, t)
    };
    ModelSpec {
        domain: Rect::UNIT,
        xi: ScalarField::Constant(1.0),
        zeta: ScalarField::Constant(D),
        r: ScalarField::Constant(2.0),
        wp: varpi,
        e: [0.6; 3],
        kappa: [1.0, 1.0],
        nonlinearity: Nonlinearity::Test1Product,
        forcing: Some([
            SpaceTimeField::new(f),
            SpaceTimeField::new(g),
            SpaceTimeField::new(h),
        ]),
        init: [
            ScalarField::function(rho),
            ScalarField::function(rho),
            ScalarField::function(rho),
        ],
        exact: Some([
            SpaceTimeField::new(|x, y, t| (-5.0 * t).exp() * rho(x, y)),
            SpaceTimeField::new(|x, y, t| (-2.0 * t).exp() * rho(x, y)),
            SpaceTimeField::new(|x, y, t| (-3.0 * t).exp() * rho(x, y)),
        ]),
    }
}

/// Noise-driven groundwater problem on the unit square: unit advection,
/// diffusivity `1e-4`, `r = 2`, no deterministic forcing.
///
/// `Smooth` starts from `x(1-x)y(1-y)`. `Delta` starts from a normalised
/// Gaussian of standard deviation `delta_width` centred at `delta_center`,
/// a resolvable surrogate for a point mass.
pub fn test2_spec(
    init_kind: InitKind,
    delta_center: (f64, f64),
    delta_width: f64,
) -> Result<ModelSpec> {
    let init = match init_kind {
        InitKind::Smooth => ScalarField::function(|x, y| x * (1.0 - x) * y * (1.0 - y)),
        InitKind::Delta => {
            if !(delta_width > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "delta width must be positive, got {delta_width}"
                )));
            }
            let (cx, cy) = delta_center;
            if !Rect::UNIT.contains(cx, cy) {
                return Err(Error::InvalidConfig(format!(
                    "delta centre ({cx}, {cy}) lies outside the domain"
                )));
            }
            let s2 = delta_width * delta_width;
            ScalarField::function(move |x, y| {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                (-d2 / (2.0 * s2)).exp() / (2.0 * PI * s2)
            })
        }
    };
    Ok(ModelSpec {
        domain: Rect::UNIT,
        xi: ScalarField::Constant(1.0),
        zeta: ScalarField::Constant(1e-4),
        r: ScalarField::Constant(2.0),
        wp: 1.0,
        e: [0.6; 3],
        kappa: [1.0, 1.0],
        nonlinearity: Nonlinearity::Test1Product,
        forcing: None,
        init: [init.clone(), init.clone(), init],
        exact: None,
    })
}
