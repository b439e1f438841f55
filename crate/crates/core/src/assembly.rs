//! Global Galerkin operators, load vectors, point evaluation and L2
//! projection on the C0 spectral element space.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::basis::Basis1D;
use crate::error::{Error, Result};
use crate::mesh::{ElementMap, Mesh2D};
use crate::model::ScalarField;
use crate::sparse::{LuFactor, SparseMatrix};

/// Bilinear form realised by a [`GlobalOperator`]. Rows index test
/// functions `chi_i`, columns trial functions `chi_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `(c chi_j, chi_i)`
    Mass,
    /// `(c grad chi_j, grad chi_i)`
    Diffusion,
    /// `-(c chi_j, d_x chi_i + d_y chi_i)`: the derivative sits on the test
    /// function.
    Advection,
    /// `(c (d_x chi_j + d_y chi_j), chi_i)`: the derivative sits on the trial
    /// function. Equal to `Advection` up to boundary terms for constant `c`.
    ConvectiveAdvection,
    /// `(c chi_j, chi_i)`, used for the linear reaction of `w`.
    Reaction,
}

impl OperatorKind {
    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::Mass | Self::Diffusion | Self::Reaction)
    }
}

#[derive(Debug, Clone)]
pub struct GlobalOperator {
    pub kind: OperatorKind,
    pub matrix: SparseMatrix,
}

impl GlobalOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Coefficients of the three fields `(u, v, w)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub fields: [Vec<f64>; 3],
    pub t: f64,
}

impl StateVector {
    pub fn zeros(n: usize, t: f64) -> Self {
        Self {
            fields: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            t,
        }
    }

    pub fn dim(&self) -> usize {
        self.fields[0].len()
    }

    pub fn u(&self) -> &[f64] {
        &self.fields[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.fields[1]
    }

    pub fn w(&self) -> &[f64] {
        &self.fields[2]
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().flatten().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            fields: self.fields.clone().map(|f| f.iter().map(|v| alpha * v).collect()),
            t: self.t,
        }
    }
}

/// Tabulated 2D reference basis at the tensor quadrature points.
#[derive(Debug, Clone)]
struct Tabulation {
    n_q: usize,
    /// `[local][q]`, local = `a * (N+1) + b`, q = `qx * nq1 + qy`.
    phi: Vec<f64>,
    dxi: Vec<f64>,
    deta: Vec<f64>,
    /// Reference weights `w_qx w_qy`.
    weights: Vec<f64>,
    /// Reference points `(xi, eta)`.
    points: Vec<(f64, f64)>,
}

impl Tabulation {
    fn new(basis: &Basis1D) -> Self {
        let nodes = basis.quad_nodes();
        let w1 = basis.quad_weights();
        let nq1 = nodes.len();
        let nl1 = basis.n_local();
        let tables: Vec<_> = nodes.iter().map(|&x| basis.local_table(x)).collect();
        let n_local = nl1 * nl1;
        let n_q = nq1 * nq1;
        let mut phi = vec![0.0; n_local * n_q];
        let mut dxi = vec![0.0; n_local * n_q];
        let mut deta = vec![0.0; n_local * n_q];
        for a in 0..nl1 {
            for b in 0..nl1 {
                let l = a * nl1 + b;
                for qx in 0..nq1 {
                    for qy in 0..nq1 {
                        let q = qx * nq1 + qy;
                        let (vx, dx) = (&tables[qx].0, &tables[qx].1);
                        let (vy, dy) = (&tables[qy].0, &tables[qy].1);
                        phi[l * n_q + q] = vx[a] * vy[b];
                        dxi[l * n_q + q] = dx[a] * vy[b];
                        deta[l * n_q + q] = vx[a] * dy[b];
                    }
                }
            }
        }
        let mut weights = Vec::with_capacity(n_q);
        let mut points = Vec::with_capacity(n_q);
        for qx in 0..nq1 {
            for qy in 0..nq1 {
                weights.push(w1[qx] * w1[qy]);
                points.push((nodes[qx], nodes[qy]));
            }
        }
        Self {
            n_q,
            phi,
            dxi,
            deta,
            weights,
            points,
        }
    }
}

/// Mesh, basis and the quadrature data shared by every operator.
#[derive(Debug)]
pub struct Discretization {
    mesh: Mesh2D,
    basis: Basis1D,
    tab: Tabulation,
    element_dofs: Vec<Vec<(usize, usize)>>,
    mass: OnceLock<GlobalOperator>,
    mass_lu: OnceLock<LuFactor>,
}

impl Discretization {
    pub fn new(mesh: Mesh2D, basis: Basis1D) -> Result<Self> {
        if mesh.order() != basis.order() {
            return Err(Error::InvalidInput(format!(
                "mesh order {} does not match basis order {}",
                mesh.order(),
                basis.order()
            )));
        }
        let tab = Tabulation::new(&basis);
        let element_dofs = (0..mesh.n_elements()).map(|e| mesh.element_dofs(e)).collect();
        Ok(Self {
            mesh,
            basis,
            tab,
            element_dofs,
            mass: OnceLock::new(),
            mass_lu: OnceLock::new(),
        })
    }

    /// Mesh and basis of order `order` with the default quadrature.
    pub fn from_mesh(mesh: Mesh2D) -> Result<Self> {
        let basis = Basis1D::new(mesh.order())?;
        Self::new(mesh, basis)
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn basis(&self) -> &Basis1D {
        &self.basis
    }

    pub fn n_global(&self) -> usize {
        self.mesh.n_global()
    }

    /// Quadrature points per element.
    pub fn n_quad_per_element(&self) -> usize {
        self.tab.n_q
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n_global() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_global(),
                got: v.len(),
            })
        }
    }

    /// Physical quadrature points and weights (including `|J|`), element-major.
    pub fn quadrature_points(&self) -> Vec<(f64, f64, f64)> {
        self.mesh
            .elements()
            .flat_map(|el| self.element_quadrature(&el))
            .collect()
    }

    fn element_quadrature(&self, el: &ElementMap) -> Vec<(f64, f64, f64)> {
        let det = el.det_jacobian();
        self.tab
            .points
            .iter()
            .zip(&self.tab.weights)
            .map(|(&(xi, eta), &w)| {
                let (x, y) = el.to_physical(xi, eta);
                (x, y, w * det)
            })
            .collect()
    }

    /// Samples `field` at every quadrature point (element-major order).
    pub fn sample(&self, field: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        self.quadrature_points()
            .into_iter()
            .map(|(x, y, _)| {
                let value = field(x, y);
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::NonFiniteCoefficient { x, y, value })
                }
            })
            .collect()
    }

    /// Assembles the operator of the given `kind` with pointwise coefficient
    /// `coefficient`.
    pub fn assemble(&self, coefficient: &ScalarField, kind: OperatorKind) -> Result<GlobalOperator> {
        let coeff = self.sample(|x, y| coefficient.eval(x, y))?;
        Ok(self.assemble_sampled(&coeff, kind))
    }

    /// Assembly from coefficient values already sampled at the quadrature points.
    pub fn assemble_sampled(&self, coeff: &[f64], kind: OperatorKind) -> GlobalOperator {
        let nq = self.tab.n_q;
        assert_eq!(coeff.len(), nq * self.mesh.n_elements());
        let tab = &self.tab;
        let per_element: Vec<Vec<(usize, usize, f64)>> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let el = self.mesh.element(e);
                let (jx, jy) = el.jacobian();
                let det = el.det_jacobian();
                let c = &coeff[e * nq..(e + 1) * nq];
                let wc: Vec<f64> = tab.weights.iter().zip(c).map(|(w, c)| w * c * det).collect();
                let dofs = &self.element_dofs[e];
                let mut out = Vec::with_capacity(dofs.len() * dofs.len());
                for &(li, gi) in dofs {
                    let pi = &tab.phi[li * nq..(li + 1) * nq];
                    let xi_i = &tab.dxi[li * nq..(li + 1) * nq];
                    let eta_i = &tab.deta[li * nq..(li + 1) * nq];
                    for &(lj, gj) in dofs {
                        let pj = &tab.phi[lj * nq..(lj + 1) * nq];
                        let xi_j = &tab.dxi[lj * nq..(lj + 1) * nq];
                        let eta_j = &tab.deta[lj * nq..(lj + 1) * nq];
                        let mut s = 0.0;
                        match kind {
                            OperatorKind::Mass | OperatorKind::Reaction => {
                                for q in 0..nq {
                                    s += wc[q] * pi[q] * pj[q];
                                }
                            }
                            OperatorKind::Diffusion => {
                                for q in 0..nq {
                                    s += wc[q]
                                        * (xi_i[q] * xi_j[q] / (jx * jx)
                                            + eta_i[q] * eta_j[q] / (jy * jy));
                                }
                            }
                            OperatorKind::Advection => {
                                for q in 0..nq {
                                    s -= wc[q] * pj[q] * (xi_i[q] / jx + eta_i[q] / jy);
                                }
                            }
                            OperatorKind::ConvectiveAdvection => {
                                for q in 0..nq {
                                    s += wc[q] * pi[q] * (xi_j[q] / jx + eta_j[q] / jy);
                                }
                            }
                        }
                        if s != 0.0 {
                            out.push((gi, gj, s));
                        }
                    }
                }
                out
            })
            .collect();
        let triplets = per_element.into_iter().flatten().collect();
        GlobalOperator {
            kind,
            matrix: SparseMatrix::from_triplets(self.n_global(), triplets),
        }
    }

    /// Unit-coefficient mass operator, cached.
    pub fn mass(&self) -> &GlobalOperator {
        self.mass.get_or_init(|| {
            let ones = vec![1.0; self.tab.n_q * self.mesh.n_elements()];
            self.assemble_sampled(&ones, OperatorKind::Mass)
        })
    }

    fn mass_lu(&self) -> Result<&LuFactor> {
        if let Some(lu) = self.mass_lu.get() {
            return Ok(lu);
        }
        let lu = self.mass().matrix.factorize()?;
        Ok(self.mass_lu.get_or_init(|| lu))
    }

    /// `b_i = int field chi_i` by element quadrature.
    pub fn load_vector(&self, field: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let values = self.sample(field)?;
        Ok(self.load_from_samples(&values))
    }

    /// Load vector from field values at the quadrature points.
    pub fn load_from_samples(&self, values: &[f64]) -> Vec<f64> {
        let nq = self.tab.n_q;
        assert_eq!(values.len(), nq * self.mesh.n_elements());
        let mut out = vec![0.0; self.n_global()];
        for (e, el) in self.mesh.elements().enumerate() {
            let det = el.det_jacobian();
            let f = &values[e * nq..(e + 1) * nq];
            let wf: Vec<f64> = self.tab.weights.iter().zip(f).map(|(w, f)| w * f * det).collect();
            for &(l, g) in &self.element_dofs[e] {
                let p = &self.tab.phi[l * nq..(l + 1) * nq];
                out[g] += wf.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Values of the expansion with coefficients `coeffs` at every
    /// quadrature point (element-major).
    pub fn values_at_quadrature(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs)?;
        let nq = self.tab.n_q;
        let mut out = vec![0.0; nq * self.mesh.n_elements()];
        for e in 0..self.mesh.n_elements() {
            let o = &mut out[e * nq..(e + 1) * nq];
            for &(l, g) in &self.element_dofs[e] {
                let c = coeffs[g];
                if c == 0.0 {
                    continue;
                }
                let p = &self.tab.phi[l * nq..(l + 1) * nq];
                for (o, p) in o.iter_mut().zip(p) {
                    *o += c * p;
                }
            }
        }
        Ok(out)
    }

    /// Pointwise evaluation of the expansion with coefficients `coeffs`.
    pub fn evaluate(&self, coeffs: &[f64], points: &[(f64, f64)]) -> Result<Vec<f64>> {
        self.check_len(coeffs)?;
        let nl1 = self.basis.n_local();
        points
            .iter()
            .map(|&(x, y)| {
                let (e, (xi, eta)) = self.mesh.locate(x, y)?;
                let (vx, _) = self.basis.local_table(xi);
                let (vy, _) = self.basis.local_table(eta);
                Ok(self.element_dofs[e]
                    .iter()
                    .map(|&(l, g)| coeffs[g] * vx[l / nl1] * vy[l % nl1])
                    .sum())
            })
            .collect()
    }

    /// Evaluation on a single element, bypassing `locate`. Used to compare
    /// traces from both sides of an interface.
    pub fn evaluate_on_element(&self, coeffs: &[f64], e: usize, xi: f64, eta: f64) -> f64 {
        let nl1 = self.basis.n_local();
        let (vx, _) = self.basis.local_table(xi);
        let (vy, _) = self.basis.local_table(eta);
        self.element_dofs[e]
            .iter()
            .map(|&(l, g)| coeffs[g] * vx[l / nl1] * vy[l % nl1])
            .sum()
    }

    /// Solves `Mass c = b`.
    pub fn solve_mass(&self, load: &[f64]) -> Result<Vec<f64>> {
        self.check_len(load)?;
        Ok(self.mass_lu()?.solve(load))
    }

    /// L2 projection onto the discrete space.
    pub fn project_l2(&self, field: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let b = self.load_vector(field)?;
        self.solve_mass(&b)
    }

    /// Projects the three initial fields of a model.
    pub fn project_state(&self, init: &[ScalarField; 3], t: f64) -> Result<StateVector> {
        let mut fields: [Vec<f64>; 3] = Default::default();
        for (out, f) in fields.iter_mut().zip(init) {
            *out = self.project_l2(|x, y| f.eval(x, y))?;
        }
        Ok(StateVector { fields, t })
    }
}
