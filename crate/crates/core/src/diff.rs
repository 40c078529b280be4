//! Vector-Jacobian products for the geometric operations that sit between
//! the network output and the losses.
//!
//! Each function maps an upstream gradient `g` (with respect to the
//! operation's output) to the gradient with respect to its input.

use crate::error::Result;
use crate::linalg::dot;
use crate::manifold::ManifoldKind;

/// Gradient through `a ↦ a / ‖a‖`, given the unit output `unit` and `‖a‖`:
/// `(I − â âᵀ) g / ‖a‖`.
pub fn normalize_vjp(unit: &[f64], norm: f64, g: &[f64], out: &mut [f64]) {
    let c = dot(g, unit);
    for ((o, gi), ui) in out.iter_mut().zip(g).zip(unit) {
        *o = (gi - c * ui) / norm;
    }
}

/// Gradient through [`ManifoldKind::project_slice`], where `projected` and
/// `input_norm` are what the forward call produced.
pub fn project_vjp(
    kind: ManifoldKind,
    projected: &[f64],
    input_norm: f64,
    g: &[f64],
    out: &mut [f64],
) {
    match kind {
        ManifoldKind::Sphere(_) => normalize_vjp(projected, input_norm, g, out),
        // identity, or a piecewise translation on the torus
        ManifoldKind::Euclidean(_) | ManifoldKind::FlatTorus(_) => out.copy_from_slice(g),
    }
}

/// Gradient through the tangent projection at `x`; the projection is
/// symmetric, so this is the projection of `g` itself.
pub fn tangent_project_vjp(kind: ManifoldKind, x: &[f64], g: &[f64], out: &mut [f64]) {
    out.copy_from_slice(g);
    kind.tangent_project_in_place(x, out);
}

/// `‖log_a(y)‖²` and its gradient in `y`.
///
/// The gradient of the squared geodesic distance to a fixed point `a` is
/// `−2 log_y(a)`, a tangent vector at `y`. `grad` receives it. Fails with
/// [`Error::AntipodalPoints`](crate::Error::AntipodalPoints) on the cut locus.
pub fn sq_distance_with_grad(
    kind: ManifoldKind,
    a: &[f64],
    y: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    kind.log_slice(a, y, grad)?;
    let value = dot(grad, grad);
    kind.log_slice(y, a, grad)?;
    grad.iter_mut().for_each(|g| *g *= -2.0);
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn fd_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64]) {
        let h = 1e-6;
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() <= 1e-7 * fd.abs().max(1.0),
                "coord {i}: fd {fd} vs {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn normalize_jacobian() {
        // scalar probe L(a) = ⟨w, a/‖a‖⟩
        let a = [0.3, -1.2, 0.7];
        let w = [0.5, 0.25, -2.0];
        let n = norm(&a);
        let unit: Vec<f64> = a.iter().map(|v| v / n).collect();
        let mut grad = [0.0; 3];
        normalize_vjp(&unit, n, &w, &mut grad);
        fd_check(
            |a| {
                let n = norm(a);
                a.iter().zip(&w).map(|(x, w)| w * x / n).sum()
            },
            &a,
            &grad,
        );
    }

    #[test]
    fn tangent_projection_jacobian() {
        let x = [0.0, 0.6, 0.8];
        let w = [1.0, -3.0, 0.5];
        let kind = ManifoldKind::Sphere(3);
        let mut grad = [0.0; 3];
        tangent_project_vjp(kind, &x, &w, &mut grad);
        fd_check(
            |v| {
                let mut p = v.to_vec();
                kind.tangent_project_in_place(&x, &mut p);
                dot(&p, &w)
            },
            &[0.2, 0.1, -0.4],
            &grad,
        );
    }

    #[test]
    fn squared_distance_gradient_on_sphere() {
        // compose with normalization so the probe is defined off the sphere
        let kind = ManifoldKind::Sphere(3);
        let a = [0.0, 0.0, 1.0];
        let raw = [0.9, 0.3, 0.4];
        let n = norm(&raw);
        let y: Vec<f64> = raw.iter().map(|v| v / n).collect();
        let mut g = [0.0; 3];
        let value = sq_distance_with_grad(kind, &a, &y, &mut g).unwrap();
        assert!((value - kind.distance_slice(&a, &y).powi(2)).abs() < 1e-14);
        let mut grad = [0.0; 3];
        normalize_vjp(&y, n, &g, &mut grad);
        fd_check(
            |r| {
                let n = norm(r);
                let y: Vec<f64> = r.iter().map(|v| v / n).collect();
                kind.distance_slice(&a, &y).powi(2)
            },
            &raw,
            &grad,
        );
    }

    #[test]
    fn squared_distance_gradient_flat() {
        let e = ManifoldKind::Euclidean(2);
        let mut g = [0.0; 2];
        let v = sq_distance_with_grad(e, &[1.0, 1.0], &[2.0, 3.0], &mut g).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g, [2.0, 4.0]);
    }

    #[test]
    fn squared_distance_antipodal() {
        let mut g = [0.0; 3];
        assert!(sq_distance_with_grad(
            ManifoldKind::Sphere(3),
            &[0.0, 0.0, 1.0],
            &[0.0, 0.0, -1.0],
            &mut g
        )
        .is_err());
    }
}
