//! Legendre polynomials, Gauss-Legendre quadrature and the boundary-vanishing
//! Shen basis on the reference interval `[-1, 1]`.
//!
//! The Shen modes are `psi_k = gamma_k (L_k - L_{k+2})` with
//! `gamma_k = (4k + 6)^{-1/2}`, for `k = 0..=N-2`. This normalisation makes the
//! 1D stiffness matrix the identity and the mass matrix pentadiagonal: its
//! nonzeros sit on offsets `0` and `±2`. (The matrix is often described as
//! "tridiagonal" because only every other sub-diagonal is populated; the
//! storage here is keyed by the actual offsets.)

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Legendre polynomial `L_k(x)` by the three-term recurrence.
pub fn legendre_eval(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Values `L_0(x)..=L_n(x)` and derivatives `L'_0(x)..=L'_n(x)`.
///
/// Derivatives use `L'_{k+1} = L'_{k-1} + (2k + 1) L_k`, which stays accurate
/// at the endpoints where the closed form `(x L_k - L_{k-1}) k / (x^2 - 1)`
/// breaks down.
pub fn legendre_table(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut vals = vec![0.0; n + 1];
    let mut ders = vec![0.0; n + 1];
    vals[0] = 1.0;
    if n >= 1 {
        vals[1] = x;
        ders[1] = 1.0;
    }
    for k in 1..n {
        let kf = k as f64;
        vals[k + 1] = ((2.0 * kf + 1.0) * x * vals[k] - kf * vals[k - 1]) / (kf + 1.0);
        ders[k + 1] = ders[k - 1] + (2.0 * kf + 1.0) * vals[k];
    }
    (vals, ders)
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
///
/// Exact for polynomials of degree `<= 2n - 1`. Panics if `n == 0`.
pub fn gauss_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            deriv = dp;
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        deriv = if dp.is_finite() { dp } else { deriv };
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    let nf = n as f64;
    (cur, nf * (x * cur - prev) / (x * x - 1.0))
}

/// Square matrix whose only nonzero entries sit on offsets `-2`, `0` and `+2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix1D {
    dim: usize,
    main: Vec<f64>,
    upper: Option<Vec<f64>>,
    lower: Option<Vec<f64>>,
    symmetric: bool,
}

impl BandedMatrix1D {
    /// Symmetric matrix from its main band and the `+2` band (mirrored to `-2`).
    pub fn symmetric(main: Vec<f64>, upper: Option<Vec<f64>>) -> Self {
        let dim = main.len();
        if let Some(u) = &upper {
            assert_eq!(u.len(), dim.saturating_sub(2));
        }
        Self {
            dim,
            main,
            upper,
            lower: None,
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Diagonal stored at `offset` (column minus row), if that band is populated.
    pub fn band(&self, offset: i32) -> Option<&[f64]> {
        match offset {
            0 => Some(&self.main),
            2 => self.upper.as_deref(),
            -2 if self.symmetric => self.upper.as_deref(),
            -2 => self.lower.as_deref(),
            _ => None,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.dim && col < self.dim);
        let offset = col as i64 - row as i64;
        let idx = row.min(col);
        match self.band(offset as i32) {
            Some(b) if matches!(offset, -2 | 0 | 2) => b[idx],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Shen-Legendre modal basis of order `N` with its quadrature rule.
#[derive(Debug, Clone)]
pub struct Basis1D {
    order: usize,
    gamma: Vec<f64>,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl Basis1D {
    /// Basis of polynomial degree `order` with the default `order + 2` point rule.
    pub fn new(order: usize) -> Result<Self> {
        Self::with_quadrature(order, order + 2)
    }

    /// Basis with an explicit quadrature size; `n_quad` must be at least `order + 2`.
    pub fn with_quadrature(order: usize, n_quad: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidInput(format!(
                "basis order must be >= 2, got {order}"
            )));
        }
        if n_quad < order + 2 {
            return Err(Error::InvalidInput(format!(
                "quadrature with {n_quad} points cannot integrate degree-{} products exactly",
                2 * order
            )));
        }
        let gamma = (0..=order - 2)
            .map(|k| (4.0 * k as f64 + 6.0).powf(-0.5))
            .collect();
        let (quad_nodes, quad_weights) = gauss_rule(n_quad);
        Ok(Self {
            order,
            gamma,
            quad_nodes,
            quad_weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of Shen modes, `N - 1`.
    pub fn n_modes(&self) -> usize {
        self.order - 1
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn n_quad(&self) -> usize {
        self.quad_nodes.len()
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k < self.n_modes() {
            Ok(())
        } else {
            Err(Error::InvalidMode {
                mode: k,
                count: self.n_modes(),
            })
        }
    }

    /// `psi_k(x)`.
    pub fn shen_eval(&self, k: usize, x: f64) -> Result<f64> {
        self.check_mode(k)?;
        let (vals, _) = legendre_table(k + 2, x);
        Ok(self.gamma[k] * (vals[k] - vals[k + 2]))
    }

    /// `psi_k'(x)`.
    pub fn shen_deriv(&self, k: usize, x: f64) -> Result<f64> {
        self.check_mode(k)?;
        let (_, ders) = legendre_table(k + 2, x);
        Ok(self.gamma[k] * (ders[k] - ders[k + 2]))
    }

    /// Number of local functions per element and direction: two hats plus the
    /// Shen modes.
    pub fn n_local(&self) -> usize {
        self.order + 1
    }

    /// Values and derivatives of the local element basis at `x`.
    ///
    /// Index 0 is the left hat `(1 - x) / 2`, index 1 the right hat
    /// `(1 + x) / 2`, and index `2 + k` the Shen mode `psi_k`.
    pub fn local_table(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let (lv, ld) = legendre_table(self.order, x);
        let mut vals = Vec::with_capacity(self.n_local());
        let mut ders = Vec::with_capacity(self.n_local());
        vals.push(0.5 * (1.0 - x));
        ders.push(-0.5);
        vals.push(0.5 * (1.0 + x));
        ders.push(0.5);
        for (k, g) in self.gamma.iter().enumerate() {
            vals.push(g * (lv[k] - lv[k + 2]));
            ders.push(g * (ld[k] - ld[k + 2]));
        }
        (vals, ders)
    }

    /// Closed-form Shen stiffness matrix `a_jk = int psi_j' psi_k'`: the identity.
    pub fn stiffness_1d(&self) -> BandedMatrix1D {
        BandedMatrix1D::symmetric(vec![1.0; self.n_modes()], None)
    }

    /// Closed-form Shen mass matrix `b_jk = int psi_j psi_k`.
    pub fn mass_1d(&self) -> BandedMatrix1D {
        let g = &self.gamma;
        let main = (0..self.n_modes())
            .map(|j| {
                let jf = j as f64;
                g[j] * g[j] * (2.0 / (2.0 * jf + 1.0) + 2.0 / (2.0 * jf + 5.0))
            })
            .collect();
        let upper = (0..self.n_modes().saturating_sub(2))
            .map(|j| {
                let k = (j + 2) as f64;
                -g[j + 2] * g[j] * 2.0 / (2.0 * k + 1.0)
            })
            .collect();
        BandedMatrix1D::symmetric(main, Some(upper))
    }
}
