//! Rectangular element partitions and global C0 degree-of-freedom numbering.
//!
//! The Shen modes vanish at both ends of every element, so on their own they
//! cannot couple neighbouring elements. Each 1D element basis is therefore
//! augmented with the two linear hats `(1 -+ x) / 2`. Hats sitting on the
//! outer boundary are dropped, hats on interior interfaces are shared by the
//! two neighbours, and the 2D space is the tensor product of the two 1D
//! global spaces.

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn on_boundary(&self, x: f64, y: f64) -> bool {
        self.contains(x, y) && (x == self.x0 || x == self.x1 || y == self.y0 || y == self.y1)
    }
}

/// One direction of the partition: `n_elem` equal intervals with `order`-degree
/// local bases.
#[derive(Debug, Clone)]
struct Axis1D {
    start: f64,
    h: f64,
    n_elem: usize,
    order: usize,
}

impl Axis1D {
    /// Global 1D dofs: interface hats plus `N - 1` bubbles per element.
    fn n_dofs(&self) -> usize {
        self.n_elem * self.order - 1
    }

    /// Global 1D index of local function `a` (0 left hat, 1 right hat,
    /// `2 + k` bubble `k`) on element `e`, or `None` for boundary hats.
    ///
    /// Ordering interleaves element bubbles and the following interface hat,
    /// which keeps couplings within a band of width `N`.
    fn global(&self, e: usize, a: usize) -> Option<usize> {
        let n = self.order;
        match a {
            0 if e == 0 => None,
            0 => Some(e * n - 1),
            1 if e + 1 == self.n_elem => None,
            1 => Some((e + 1) * n - 1),
            _ => Some(e * n + (a - 2)),
        }
    }

    /// Element index and reference coordinate; shared endpoints go to the
    /// lower element.
    fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.start) / self.h;
        let e = (s.ceil() as i64 - 1).clamp(0, self.n_elem as i64 - 1) as usize;
        let left = self.start + e as f64 * self.h;
        let xi = (2.0 * (x - left) / self.h - 1.0).clamp(-1.0, 1.0);
        (e, xi)
    }
}

/// Affine map from the reference square `[-1, 1]^2` onto one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub index: usize,
    pub ex: usize,
    pub ey: usize,
    pub bounds: Rect,
}

impl ElementMap {
    /// Diagonal Jacobian `(dx/dxi, dy/deta)`.
    pub fn jacobian(&self) -> (f64, f64) {
        (0.5 * self.bounds.width(), 0.5 * self.bounds.height())
    }

    pub fn det_jacobian(&self) -> f64 {
        let (jx, jy) = self.jacobian();
        jx * jy
    }

    pub fn to_physical(&self, xi: f64, eta: f64) -> (f64, f64) {
        let (jx, jy) = self.jacobian();
        (
            self.bounds.x0 + (xi + 1.0) * jx,
            self.bounds.y0 + (eta + 1.0) * jy,
        )
    }

    pub fn to_reference(&self, x: f64, y: f64) -> (f64, f64) {
        let (jx, jy) = self.jacobian();
        ((x - self.bounds.x0) / jx - 1.0, (y - self.bounds.y0) / jy - 1.0)
    }
}

/// Uniform `nex x ney` partition with polynomial order `N` per element.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    domain: Rect,
    x_axis: Axis1D,
    y_axis: Axis1D,
    order: usize,
}

impl Mesh2D {
    pub fn build(domain: Rect, nex: usize, ney: usize, order: usize) -> Result<Self> {
        let finite = [domain.x0, domain.x1, domain.y0, domain.y1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || domain.width() <= 0.0 || domain.height() <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "rectangle [{}, {}] x [{}, {}] has no area",
                domain.x0, domain.x1, domain.y0, domain.y1
            )));
        }
        if nex == 0 || ney == 0 {
            return Err(Error::InvalidDomain(format!(
                "element counts must be positive, got {nex} x {ney}"
            )));
        }
        if order < 2 {
            return Err(Error::InvalidInput(format!(
                "element order must be >= 2, got {order}"
            )));
        }
        let x_axis = Axis1D {
            start: domain.x0,
            h: domain.width() / nex as f64,
            n_elem: nex,
            order,
        };
        let y_axis = Axis1D {
            start: domain.y0,
            h: domain.height() / ney as f64,
            n_elem: ney,
            order,
        };
        Ok(Self {
            domain,
            x_axis,
            y_axis,
            order,
        })
    }

    /// Single-element mesh of the unit square.
    pub fn unit_square(order: usize) -> Result<Self> {
        Self::build(Rect::UNIT, 1, 1, order)
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn nex(&self) -> usize {
        self.x_axis.n_elem
    }

    pub fn ney(&self) -> usize {
        self.y_axis.n_elem
    }

    pub fn n_elements(&self) -> usize {
        self.nex() * self.ney()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Local functions per direction, `N + 1`.
    pub fn n_local_1d(&self) -> usize {
        self.order + 1
    }

    pub fn n_global(&self) -> usize {
        self.x_axis.n_dofs() * self.y_axis.n_dofs()
    }

    pub fn element(&self, index: usize) -> ElementMap {
        let ex = index % self.nex();
        let ey = index / self.nex();
        let x0 = self.x_axis.start + ex as f64 * self.x_axis.h;
        let y0 = self.y_axis.start + ey as f64 * self.y_axis.h;
        ElementMap {
            index,
            ex,
            ey,
            bounds: Rect::new(x0, x0 + self.x_axis.h, y0, y0 + self.y_axis.h),
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = ElementMap> + '_ {
        (0..self.n_elements()).map(|e| self.element(e))
    }

    /// Global index of the tensor function `(a, b)` on element `e`, where `a`
    /// and `b` index the 1D local bases in x and y. `None` when the function
    /// contains a boundary hat.
    pub fn dof(&self, e: usize, a: usize, b: usize) -> Option<usize> {
        let el = self.element(e);
        let gx = self.x_axis.global(el.ex, a)?;
        let gy = self.y_axis.global(el.ey, b)?;
        Some(gx * self.y_axis.n_dofs() + gy)
    }

    /// `(local index a * (N + 1) + b, global index)` for every retained
    /// function on element `e`.
    pub fn element_dofs(&self, e: usize) -> Vec<(usize, usize)> {
        let nl = self.n_local_1d();
        let mut out = Vec::with_capacity(nl * nl);
        for a in 0..nl {
            for b in 0..nl {
                if let Some(g) = self.dof(e, a, b) {
                    out.push((a * nl + b, g));
                }
            }
        }
        out
    }

    /// Containing element and reference coordinates of `(x, y)`.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, (f64, f64))> {
        if !self.domain.contains(x, y) {
            return Err(Error::OutOfDomain { x, y });
        }
        let (ex, xi) = self.x_axis.locate(x);
        let (ey, eta) = self.y_axis.locate(y);
        Ok((ey * self.nex() + ex, (xi, eta)))
    }

    pub fn describe(&self) -> String {
        format!(
            "{}x{} elements of order {} ({} dofs)",
            self.nex(),
            self.ney(),
            self.order,
            self.n_global()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn single_element_counts() {
        for n in 2..9 {
            let m = Mesh2D::unit_square(n).unwrap();
            assert_eq!(m.n_global(), (n - 1) * (n - 1));
            // Only bubble-by-bubble functions survive.
            assert!(m.element_dofs(0).iter().all(|&(l, _)| {
                let (a, b) = (l / (n + 1), l % (n + 1));
                a >= 2 && b >= 2
            }));
        }
    }

    #[test]
    fn two_by_one_order_two_by_hand() {
        // x: bubble(e0), interface hat, bubble(e1); y: one bubble.
        let m = Mesh2D::build(Rect::UNIT, 2, 1, 2).unwrap();
        assert_eq!(m.n_global(), 3);
        assert_eq!(m.dof(0, 2, 2), Some(0));
        assert_eq!(m.dof(0, 1, 2), Some(1));
        assert_eq!(m.dof(1, 0, 2), Some(1));
        assert_eq!(m.dof(1, 2, 2), Some(2));
        assert_eq!(m.dof(0, 0, 2), None);
        assert_eq!(m.dof(1, 1, 2), None);
        assert_eq!(m.dof(0, 2, 0), None);
    }

    #[test]
    fn dof_map_is_surjective() {
        for &(nex, ney, n) in &[(1, 1, 4), (2, 3, 3), (3, 3, 5), (4, 1, 2)] {
            let m = Mesh2D::build(Rect::new(-1.0, 2.0, 0.0, 0.5), nex, ney, n).unwrap();
            let seen: BTreeSet<usize> = (0..m.n_elements())
                .flat_map(|e| m.element_dofs(e).into_iter().map(|(_, g)| g))
                .collect();
            assert_eq!(seen.len(), m.n_global());
            assert_eq!(seen.iter().next_back().copied(), Some(m.n_global() - 1));
        }
    }

    #[test]
    fn shared_vertex_dof_is_shared() {
        let m = Mesh2D::build(Rect::UNIT, 2, 2, 3).unwrap();
        // Centre vertex: right/top hats of element 0, left/bottom of element 3.
        let g = m.dof(0, 1, 1).unwrap();
        assert_eq!(m.dof(1, 0, 1), Some(g));
        assert_eq!(m.dof(2, 1, 0), Some(g));
        assert_eq!(m.dof(3, 0, 0), Some(g));
    }

    #[test]
    fn elements_tile_domain() {
        let d = Rect::new(0.0, 2.0, -1.0, 1.0);
        let m = Mesh2D::build(d, 3, 2, 4).unwrap();
        let area: f64 = m.elements().map(|e| e.bounds.area()).sum();
        assert!((area - d.area()).abs() < 1e-14);
        for e in m.elements() {
            assert!(e.det_jacobian() > 0.0);
            let (x, y) = e.to_physical(-1.0, -1.0);
            assert!((x - e.bounds.x0).abs() < 1e-15 && (y - e.bounds.y0).abs() < 1e-15);
            let (x, y) = e.to_physical(1.0, 1.0);
            assert!((x - e.bounds.x1).abs() < 1e-15 && (y - e.bounds.y1).abs() < 1e-15);
        }
    }

    #[test]
    fn locate_rules() {
        let m = Mesh2D::build(Rect::UNIT, 2, 2, 3).unwrap();
        let (e, (xi, eta)) = m.locate(0.75, 0.25).unwrap();
        assert_eq!(e, 1);
        assert!(xi.abs() < 1e-15 && eta.abs() < 1e-15);
        assert_eq!(m.locate(0.0, 0.0).unwrap(), (0, (-1.0, -1.0)));
        // Shared edge x = 0.5 belongs to the lower-indexed element.
        let (e, (xi, _)) = m.locate(0.5, 0.25).unwrap();
        assert_eq!(e, 0);
        assert_eq!(xi, 1.0);
        let (e, _) = m.locate(0.5, 0.5).unwrap();
        assert_eq!(e, 0);
        assert!(matches!(m.locate(1.1, 0.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn rejects_degenerate_domain() {
        assert!(matches!(
            Mesh2D::build(Rect::new(0.0, 0.0, 0.0, 1.0), 1, 1, 4),
            Err(Error::InvalidDomain(_))
        ));
        assert!(Mesh2D::build(Rect::UNIT, 0, 1, 4).is_err());
        assert!(Mesh2D::build(Rect::UNIT, 1, 1, 1).is_err());
    }
}
