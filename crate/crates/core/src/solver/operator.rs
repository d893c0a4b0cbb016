//! Conservative cell-centered finite-volume operators.
//!
//! Every operator is assembled face by face, so each face flux leaves one cell
//! and enters its neighbor with the same magnitude. Boundary faces carry no
//! flux at all, which is the discrete form of a vanishing total normal flux.

use serde::{Deserialize, Serialize};

use super::linsolve::{Csr, CsrBuilder};
use crate::coeffs::{AdvectionField, Mat2, TensorField};
use crate::grid::Grid;

/// How cell-center tensor values are combined on a face.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceAverage {
    #[default]
    Arithmetic,
    /// Harmonic mean for the normal component; the cross component stays arithmetic.
    Harmonic,
}

impl FaceAverage {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAverage::Arithmetic => 0.5 * (a + b),
            FaceAverage::Harmonic => {
                if a + b == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
        }
    }
}

/// An interior face between `left` and `right`, where `right` is the neighbor
/// of `left` in the positive `axis` direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub left: usize,
    pub right: usize,
    pub center: [f64; 2],
}

/// All interior faces, `x`-normal faces first, each group in cell order.
pub fn interior_faces(grid: &Grid) -> Vec<Face> {
    let mut faces = Vec::new();
    for axis in 0..grid.dim() {
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                let (jx, jy) = if axis == 0 { (ix + 1, iy) } else { (ix, iy + 1) };
                if jx >= grid.nx() || jy >= grid.ny() {
                    continue;
                }
                let left = grid.index(ix, iy);
                let mut center = grid.center(left);
                center[axis] += 0.5 * grid.h(axis);
                faces.push(Face {
                    axis,
                    left,
                    right: grid.index(jx, jy),
                    center,
                });
            }
        }
    }
    faces
}

/// Centered difference weights for `d/dx_axis` at a cell, one-sided on the boundary.
fn gradient_weights(grid: &Grid, cell: usize, axis: usize) -> [(usize, f64); 2] {
    let (ix, iy) = grid.coords(cell);
    let (i, n) = if axis == 0 { (ix, grid.nx()) } else { (iy, grid.ny()) };
    let step = if axis == 0 { 1 } else { grid.nx() };
    let h = grid.h(axis);
    if i == 0 {
        [(cell + step, 1.0 / h), (cell, -1.0 / h)]
    } else if i + 1 == n {
        [(cell, 1.0 / h), (cell - step, -1.0 / h)]
    } else {
        [(cell + step, 0.5 / h), (cell - step, -0.5 / h)]
    }
}

/// Tensor values at every cell center.
pub fn tensor_at_cells(grid: &Grid, d: &TensorField, t: f64) -> Vec<Mat2> {
    grid.centers().map(|x| d.eval(t, x)).collect()
}

/// Emits the weights of the diffusive flux `-(D grad c) . e_axis` through `face`
/// as `(cell, weight, is_cross)`; returns whether the cross part must be treated
/// explicitly because it dominates the face diagonal.
fn diffusive_face_terms(
    grid: &Grid,
    dcells: &[Mat2],
    face: &Face,
    avg: FaceAverage,
    mut emit: impl FnMut(usize, f64, bool),
) -> bool {
    let n = face.axis;
    let (dl, dr) = (&dcells[face.left], &dcells[face.right]);
    let d_nn = avg.combine(dl[n][n], dr[n][n]);
    let h = grid.h(n);
    emit(face.left, d_nn / h, false);
    emit(face.right, -d_nn / h, false);
    if grid.dim() == 1 {
        return false;
    }
    let t = 1 - n;
    let d_nt = 0.5 * (dl[n][t] + dr[n][t]);
    if d_nt == 0.0 {
        return false;
    }
    let d_tt = avg.combine(dl[t][t], dr[t][t]);
    for cell in [face.left, face.right] {
        for (c, w) in gradient_weights(grid, cell, t) {
            emit(c, -d_nt * 0.5 * w, true);
        }
    }
    d_nt.abs() > d_nn.min(d_tt)
}

/// Discrete `div(-D grad .)` split into an implicit part and an explicitly
/// treated cross-diffusion part, so that `dc/dt = -(implicit + explicit) c`.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    pub implicit: Csr,
    pub explicit: Option<Csr>,
}

impl DiffusionOperator {
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut y = self.implicit.apply(c);
        if let Some(e) = &self.explicit {
            for (yi, v) in y.iter_mut().zip(e.apply(c)) {
                *yi += v;
            }
        }
        y
    }
}

pub fn diffusion_operator(grid: &Grid, d: &TensorField, t: f64, avg: FaceAverage) -> DiffusionOperator {
    let dcells = tensor_at_cells(grid, d, t);
    diffusion_operator_from_cells(grid, &dcells, avg)
}

pub fn diffusion_operator_from_cells(grid: &Grid, dcells: &[Mat2], avg: FaceAverage) -> DiffusionOperator {
    let mut imp = CsrBuilder::new(grid.len());
    let mut exp = CsrBuilder::new(grid.len());
    let mut any_explicit = false;
    let mut terms: Vec<(usize, f64, bool)> = Vec::with_capacity(6);
    for face in interior_faces(grid) {
        terms.clear();
        let cross_explicit = diffusive_face_terms(grid, dcells, &face, avg, |c, w, x| terms.push((c, w, x)));
        let inv_h = 1.0 / grid.h(face.axis);
        for &(c, w, is_cross) in &terms {
            let target = if is_cross && cross_explicit {
                any_explicit = true;
                &mut exp
            } else {
                &mut imp
            };
            target.add(face.left, c, w * inv_h);
            target.add(face.right, c, -w * inv_h);
        }
    }
    DiffusionOperator {
        implicit: imp.build(),
        explicit: any_explicit.then(|| exp.build()),
    }
}

/// Upwind advective flux `u . e_axis * c_upwind` through a face.
fn advective_face_flux(u_n: f64, c_left: f64, c_right: f64) -> f64 {
    if u_n >= 0.0 {
        u_n * c_left
    } else {
        u_n * c_right
    }
}

/// Normal velocity at every interior face midpoint.
pub fn face_velocities(u: &AdvectionField, t: f64, faces: &[Face]) -> Vec<f64> {
    if u.is_zero() {
        return vec![0.0; faces.len()];
    }
    faces.iter().map(|f| u.eval(t, f.center)[f.axis]).collect()
}

/// Per-face upwind fluxes in the order of [`interior_faces`].
pub fn advection_flux(grid: &Grid, u: &AdvectionField, c: &[f64], t: f64) -> Vec<f64> {
    let faces = interior_faces(grid);
    let vel = face_velocities(u, t, &faces);
    faces
        .iter()
        .zip(vel)
        .map(|(f, un)| advective_face_flux(un, c[f.left], c[f.right]))
        .collect()
}

/// Discrete `div(c u)` by first-order upwinding.
pub fn advection_divergence(grid: &Grid, faces: &[Face], vel: &[f64], c: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (f, &un) in faces.iter().zip(vel) {
        if un == 0.0 {
            continue;
        }
        let flux = advective_face_flux(un, c[f.left], c[f.right]) / grid.h(f.axis);
        out[f.left] += flux;
        out[f.right] -= flux;
    }
}

/// The matrix of [`advection_divergence`].
pub fn advection_matrix(grid: &Grid, faces: &[Face], vel: &[f64]) -> Csr {
    let mut b = CsrBuilder::new(grid.len());
    for (f, &un) in faces.iter().zip(vel) {
        let w = un / grid.h(f.axis);
        let src = if un >= 0.0 { f.left } else { f.right };
        b.add(f.left, src, w);
        b.add(f.right, src, -w);
    }
    b.build()
}

/// Total normal flux `(-D grad c + c u) . e_axis` through every interior face.
pub fn total_face_fluxes(
    grid: &Grid,
    faces: &[Face],
    dcells: &[Mat2],
    vel: &[f64],
    avg: FaceAverage,
    c: &[f64],
) -> Vec<f64> {
    faces
        .iter()
        .zip(vel)
        .map(|(f, &un)| {
            let mut j = 0.0;
            diffusive_face_terms(grid, dcells, f, avg, |cell, w, _| j += w * c[cell]);
            j + advective_face_flux(un, c[f.left], c[f.right])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_field_is_steady() {
        let grid = Grid::rect(7, 5, 1.0, 2.0);
        let d = TensorField::from_fn(2, (0.1, 5.0), |_, x| [[1.0 + x[0], 0.4 * x[1]], [0.4 * x[1], 2.0]]);
        let op = diffusion_operator(&grid, &d, 0.0, FaceAverage::Arithmetic);
        for v in op.apply(&vec![3.0; grid.len()]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn textbook_stencil_1d() {
        let grid = Grid::line(8, 1.0);
        let op = diffusion_operator(&grid, &TensorField::identity(1), 0.0, FaceAverage::Arithmetic);
        let h2 = grid.h(0).powi(2);
        assert_relative_eq!(op.implicit.get(3, 2) * h2, -1.0);
        assert_relative_eq!(op.implicit.get(3, 3) * h2, 2.0);
        assert_relative_eq!(op.implicit.get(3, 4) * h2, -1.0);
        assert_relative_eq!(op.implicit.get(0, 0) * h2, 1.0);
        assert!(op.explicit.is_none());
        assert!(op.implicit.is_symmetric());
    }

    #[test]
    fn columns_sum_to_zero() {
        let grid = Grid::rect(6, 6, 1.0, 1.0);
        let d = TensorField::from_fn(2, (0.1, 5.0), |_, x| [[1.0, 0.3 + x[0]], [0.3 + x[0], 1.5]]);
        let op = diffusion_operator(&grid, &d, 0.0, FaceAverage::Arithmetic);
        let n = grid.len();
        for j in 0..n {
            let s: f64 = (0..n).map(|i| op.implicit.get(i, j)).sum();
            assert!(s.abs() < 1e-9, "column {j}: {s}");
        }
    }

    #[test]
    fn cross_diffusion_bilinear_field() {
        // div(D grad(x1 x2)) = 2 * 1/2 = 1 for D = [[1, 1/2], [1/2, 1]].
        let grid = Grid::rect(16, 16, 1.0, 1.0);
        let d = TensorField::constant(2, [[1.0, 0.5], [0.5, 1.0]]);
        let op = diffusion_operator(&grid, &d, 0.0, FaceAverage::Arithmetic);
        let c = grid.sample(|x| x[0] * x[1]);
        let lc = op.apply(&c);
        for iy in 2..14 {
            for ix in 2..14 {
                assert_relative_eq!(-lc[grid.index(ix, iy)], 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dominant_cross_term_goes_explicit() {
        let grid = Grid::rect(4, 4, 1.0, 1.0);
        let d = TensorField::from_fn(2, (0.0, 10.0), |_, _| [[1.0, 2.0], [2.0, 5.0]]);
        let op = diffusion_operator(&grid, &d, 0.0, FaceAverage::Arithmetic);
        assert!(op.explicit.is_some());
        assert!(op.implicit.is_symmetric());
    }

    #[test]
    fn harmonic_average() {
        assert_relative_eq!(FaceAverage::Harmonic.combine(1.0, 3.0), 1.5);
        assert_relative_eq!(FaceAverage::Arithmetic.combine(1.0, 3.0), 2.0);
    }

    #[test]
    fn upwind_carries_left_value() {
        let grid = Grid::line(6, 1.0);
        let u = AdvectionField::from_fn(1, |_, _| [1.0, 0.0]);
        let c = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let flux = advection_flux(&grid, &u, &c, 0.0);
        assert_eq!(flux, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let zero = advection_flux(&grid, &AdvectionField::zero(1), &c, 0.0);
        assert!(zero.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn divergence_free_field_keeps_constants() {
        // u = (sin(pi x) cos(pi y), -cos(pi x) sin(pi y)) is divergence free.
        use std::f64::consts::PI;
        let grid = Grid::rect(32, 32, 1.0, 1.0);
        let u = AdvectionField::from_fn(2, |_, x| {
            [
                (PI * x[0]).sin() * (PI * x[1]).cos(),
                -(PI * x[0]).cos() * (PI * x[1]).sin(),
            ]
        });
        let faces = interior_faces(&grid);
        let vel = face_velocities(&u, 0.0, &faces);
        let mut div = vec![0.0; grid.len()];
        advection_divergence(&grid, &faces, &vel, &vec![1.0; grid.len()], &mut div);
        let h = grid.h(0);
        for &v in &div {
            assert!(v.abs() < 10.0 * h * h, "{v}");
        }
        let m = advection_matrix(&grid, &faces, &vel);
        let c = grid.sample(|x| 1.0 + x[0] * x[1]);
        advection_divergence(&grid, &faces, &vel, &c, &mut div);
        for (a, b) in m.apply(&c).iter().zip(&div) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }
}
