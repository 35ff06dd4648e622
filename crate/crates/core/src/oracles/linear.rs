//! p = 2 reference: assembled generalized eigenproblem `K u = lambda M u`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Vector2};

use super::OracleError;
use crate::energy::NodalField;
use crate::mesh::TriMesh;

/// Weighted stiffness and mass matrices restricted to interior nodes.
#[derive(Debug, Clone)]
pub struct P2System {
    /// Mesh node index of each matrix row.
    pub interior: Vec<usize>,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearEigenpair {
    pub lambda: f64,
    /// Nonnegative, `u^T M u = 1`.
    pub u: NodalField,
    pub iterations: usize,
}

/// Assemble `K_ij = sum w_k grad phi_i . grad phi_j`, `M_ij = sum w_k phi_i(q_k) phi_j(q_k)`
/// with the mid-edge rule, from raw node coordinates.
pub fn assemble_p2(mesh: &TriMesh) -> P2System {
    let mut row = vec![usize::MAX; mesh.num_nodes()];
    let interior = mesh.interior_nodes();
    for (r, &i) in interior.iter().enumerate() {
        row[i] = r;
    }
    let n = interior.len();
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    let nodes = mesh.nodes();
    let reference_grads = [Vector2::new(-1.0, -1.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];

    for tri in mesh.triangles() {
        let p: [Vector2<f64>; 3] = tri.map(|i| Vector2::new(nodes[i][0], nodes[i][1]));
        let jac = Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
        let det = jac.determinant();
        let area = 0.5 * det.abs();
        let jinv = jac.try_inverse().expect("non-degenerate element");
        let grads: Vec<Vector2<f64>> = reference_grads.iter().map(|g| jinv.transpose() * g).collect();

        let mut quad = Vec::with_capacity(3);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let q = 0.5 * (p[a] + p[b]);
            let w = area / 3.0 * (-0.5 * q.norm_squared()).exp();
            let xi = jinv * (q - p[0]);
            quad.push((w, [1.0 - xi[0] - xi[1], xi[0], xi[1]]));
        }

        for a in 0..3 {
            let ra = row[tri[a]];
            if ra == usize::MAX {
                continue;
            }
            for b in 0..3 {
                let rb = row[tri[b]];
                if rb == usize::MAX {
                    continue;
                }
                let gg = grads[a].dot(&grads[b]);
                for (w, phi) in &quad {
                    k[(ra, rb)] += w * gg;
                    m[(ra, rb)] += w * phi[a] * phi[b];
                }
            }
        }
    }
    P2System {
        interior,
        stiffness: k,
        mass: m,
    }
}

/// Smallest eigenpair of `K u = lambda M u` by inverse iteration (shift 0),
/// stopping when the Rayleigh quotient changes by less than `1e-12` relative.
pub fn linear_p2_eigensolve(mesh: &Arc<TriMesh>) -> Result<LinearEigenpair, OracleError> {
    let sys = assemble_p2(mesh);
    let n = sys.interior.len();
    if n == 0 {
        return Err(OracleError::InvalidInput("mesh has no interior node".into()));
    }
    let chol = Cholesky::new(sys.stiffness.clone())
        .ok_or_else(|| OracleError::SingularSystem("stiffness matrix is not positive definite".into()))?;

    let m_norm = |x: &DVector<f64>| x.dot(&(&sys.mass * x)).sqrt();
    let mut x = DVector::from_element(n, 1.0);
    x /= m_norm(&x);
    let mut lambda = x.dot(&(&sys.stiffness * &x));
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut y = chol.solve(&(&sys.mass * &x));
        let norm = m_norm(&y);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(OracleError::SingularSystem("inverse iteration broke down".into()));
        }
        y /= norm;
        let next = y.dot(&(&sys.stiffness * &y));
        x = y;
        let done = (next - lambda).abs() <= 1e-12 * next;
        lambda = next;
        if done && iterations > 1 {
            break;
        }
        if iterations >= 10_000 {
            return Err(OracleError::SingularSystem("inverse iteration did not converge".into()));
        }
    }
    if x.sum() < 0.0 {
        x.neg_mut();
    }
    let mut values = vec![0.0; mesh.num_nodes()];
    for (r, &i) in sys.interior.iter().enumerate() {
        values[i] = x[r].max(0.0);
    }
    let u = NodalField::new(Arc::clone(mesh), values).map_err(|e| OracleError::SingularSystem(e.to_string()))?;
    Ok(LinearEigenpair { lambda, u, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use crate::mesh::triangulate;

    #[test]
    fn matrices_are_symmetric_and_mass_is_spd() {
        let mesh = triangulate(&ConvexPolygon::regular(6, 1.0, [0.2, 0.0], 0.0).unwrap(), 0.2).unwrap();
        let sys = assemble_p2(&mesh);
        let n = sys.interior.len();
        for i in 0..n {
            for j in 0..n {
                assert!((sys.stiffness[(i, j)] - sys.stiffness[(j, i)]).abs() < 1e-14);
                assert!((sys.mass[(i, j)] - sys.mass[(j, i)]).abs() < 1e-15);
            }
        }
        assert!(Cholesky::new(sys.mass.clone()).is_some());
        assert!(Cholesky::new(sys.stiffness.clone()).is_some());
    }

    #[test]
    fn eigenvector_is_normalised_and_positive() {
        let mesh = Arc::new(triangulate(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), 0.1).unwrap());
        let pair = linear_p2_eigensolve(&mesh).unwrap();
        assert!(pair.lambda > 0.0);
        assert!(pair.u.values().iter().all(|&v| v >= 0.0));
        let n = crate::energy::p_norm_constraint(&pair.u, 2.0);
        assert!((n - 1.0).abs() < 1e-10);
        // Interior values are strictly positive.
        for i in mesh.interior_nodes() {
            assert!(pair.u.values()[i] > 0.0);
        }
    }
}
