use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::orthonormalize;

use super::irls::equation_jacobian;
use super::{EstimatorSpec, SummaryStatistic};

const MAX_CONDITION: f64 = 1e12;

/// Gradients of the statistic with respect to the data vector.
#[derive(Clone, Debug)]
pub struct StatisticGradients {
    /// n×p; column `j` is `∇b_j(X, y)`.
    pub grad_b: DMatrix<f64>,
    /// `∇s(X, y)`.
    pub grad_s: DVector<f64>,
}

/// Implicit differentiation of the estimating equations in each `y_j`.
///
/// With `r_i = (y_i − x_iᵀb)/s`, differentiating both equations gives, for
/// every data index `j`,
///
/// ```text
/// M [∂b/∂y_j ; ∂s/∂y_j] = [ψ'(r_j) x_j ; χ'(r_j)]
/// ```
///
/// where `M` is the derivative matrix also used by the solver's Newton step.
/// `stat` must solve the equations for `(x, y)`.
pub fn statistic_gradients(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &EstimatorSpec,
    stat: &SummaryStatistic,
) -> Result<StatisticGradients> {
    let (n, p) = x.shape();
    let r = (y - x * &stat.b) / stat.s;
    let m = equation_jacobian(x, &r, spec);

    let sv = m.clone().singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularImplicitSystem { condition });
    }

    let mut rhs = DMatrix::<f64>::zeros(p + 1, n);
    for j in 0..n {
        let dpsi = spec.psi.dpsi(r[j]);
        for a in 0..p {
            rhs[(a, j)] = dpsi * x[(j, a)];
        }
        rhs[(p, j)] = spec.chi.dchi(r[j]);
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularImplicitSystem { condition })?;

    let grad_b = sol.rows(0, p).transpose();
    let grad_s = sol.row(p).transpose();
    Ok(StatisticGradients { grad_b, grad_s })
}

/// Orthonormal basis (n×(p+1)) of the normal space of the constraint
/// manifold, from `[∇b_1, …, ∇b_p, ∇s]`.
pub fn normal_space_basis(grads: &StatisticGradients) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = grads.grad_b.column_iter().map(|c| c.into_owned()).collect();
    cols.push(grads.grad_s.clone());
    orthonormalize(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{irls_solve, EstimatorSpec};

    #[test]
    fn mean_and_sd_gradients_by_hand() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 4.0, -2.0, 0.5, 3.0]);
        let spec = EstimatorSpec::least_squares();
        let t = irls_solve(&x, &y, &spec, None).unwrap();
        let g = statistic_gradients(&x, &y, &spec, &t).unwrap();
        let mean = y.mean();
        for j in 0..5 {
            assert!((g.grad_b[(j, 0)] - 0.2).abs() < 1e-14);
            let expect = (y[j] - mean) / (5.0 * t.s);
            assert!((g.grad_s[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn scale_gradient_is_orthogonal_to_design() {
        let x = DMatrix::from_fn(9, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() * 3.0 });
        let y = DVector::from_fn(9, |i, _| (i as f64 * 1.7).cos() + if i == 2 { 6.0 } else { 0.0 });
        for spec in [EstimatorSpec::huber(), EstimatorSpec::tukey()] {
            let t = irls_solve(&x, &y, &spec, None).unwrap();
            let g = statistic_gradients(&x, &y, &spec, &t).unwrap();
            assert!(x.tr_mul(&g.grad_s).amax() < 1e-8);
            // b(y + Xc) = b(y) + c, so Xᵀ∇b = I
            let xtg = x.tr_mul(&g.grad_b);
            assert!((xtg - DMatrix::<f64>::identity(2, 2)).amax() < 1e-8);
        }
    }

    #[test]
    fn normal_basis_is_orthonormal() {
        let x = DMatrix::from_element(7, 1, 1.0);
        let y = DVector::from_vec(vec![0.2, -0.4, 1.3, 0.1, -2.2, 0.9, 5.0]);
        let spec = EstimatorSpec::huber();
        let t = irls_solve(&x, &y, &spec, None).unwrap();
        let g = statistic_gradients(&x, &y, &spec, &t).unwrap();
        let b = normal_space_basis(&g).unwrap();
        assert!((b.transpose() * &b - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }
}
