//! Orthonormal bases for the design column space `C(X)` and its orthogonal
//! complement, uniform draws on the unit sphere of the complement, and the
//! tangent-volume factor of the proposal Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Above this many rows the complement basis `W` is not materialized and the
/// projector is applied as `y - U(Uᵀy)`.
pub const MAX_STORED_COMPLEMENT: usize = 4096;

/// Singular values at or above `1 - UNIT_THRESHOLD` count as unit.
pub const UNIT_THRESHOLD: f64 = 1e-9;

const RANK_TOL: f64 = 1e-10;
const DEPENDENCE_TOL: f64 = 1e-10;
const MIN_SPHERE_NORM: f64 = 1e-12;
const MAX_SPHERE_ATTEMPTS: usize = 100;
const MIN_TANGENT_SINGULAR: f64 = 1e-12;

/// Orthonormal bases of `C(X)` (`u`, n×p) and `C⊥(X)` (`w`, n×(n−p)).
///
/// Immutable once built; share it freely between chains.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    u: DMatrix<f64>,
    w: Option<DMatrix<f64>>,
    n: usize,
    p: usize,
}

impl GeometryCache {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Dimension of the constraint manifold, `n - p - 1`.
    pub fn manifold_dim(&self) -> usize {
        self.n - self.p - 1
    }

    pub fn column_basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `None` when `n` exceeds [`MAX_STORED_COMPLEMENT`].
    pub fn complement_basis(&self) -> Option<&DMatrix<f64>> {
        self.w.as_ref()
    }

    /// `Qy = y - U(Uᵀy)`, the projection onto `C⊥(X)`.
    pub fn project_complement(&self, y: &DVector<f64>) -> DVector<f64> {
        let coef = self.u.tr_mul(y);
        y - &self.u * coef
    }

    /// Dense projector `Q = I - UUᵀ`; intended for tests and small `n`.
    pub fn projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) - &self.u * self.u.transpose()
    }
}

/// Builds the orthonormal bases from a Householder factorization of `X`.
pub fn build_geometry(x: &DMatrix<f64>) -> Result<GeometryCache> {
    let (n, p) = x.shape();
    if p == 0 || n <= p + 1 {
        return Err(Error::TooFewRows { n, p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let rank = diag.iter().filter(|&&d| d > RANK_TOL * largest).count();
    if rank < p || largest == 0.0 {
        return Err(Error::RankDeficient { rank, cols: p });
    }

    let (u, w) = if n <= MAX_STORED_COMPLEMENT {
        // Qᵀ applied to the identity yields the full orthogonal factor.
        let mut qt = DMatrix::<f64>::identity(n, n);
        qr.q_tr_mul(&mut qt);
        let q = qt.transpose();
        let mut u = q.columns(0, p).into_owned();
        let mut w = q.columns(p, n - p).into_owned();
        fix_signs(&mut u);
        fix_signs(&mut w);
        (u, Some(w))
    } else {
        let mut u = qr.q();
        fix_signs(&mut u);
        (u, None)
    };
    Ok(GeometryCache { u, w, n, p })
}

/// Flips each column so its first non-negligible entry is positive.
fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let scale = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// A unit vector in `C⊥(X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereSample(DVector<f64>);

impl SphereSample {
    /// Normalizes the complement projection of `v`.
    pub fn from_vector(geom: &GeometryCache, v: &DVector<f64>) -> Result<Self> {
        let z = geom.project_complement(v);
        let norm = z.norm();
        if norm < MIN_SPHERE_NORM {
            return Err(Error::DegenerateProjection);
        }
        Ok(SphereSample(z / norm))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// Uniform draw on the unit sphere of `C⊥(X)`: project an isotropic Gaussian
/// vector and normalize.
pub fn sample_sphere<R: Rng + ?Sized>(geom: &GeometryCache, rng: &mut R) -> Result<SphereSample> {
    for _ in 0..MAX_SPHERE_ATTEMPTS {
        let g = DVector::<f64>::from_fn(geom.n, |_, _| rng.sample(StandardNormal));
        let z = geom.project_complement(&g);
        let norm = z.norm();
        if norm >= MIN_SPHERE_NORM {
            return Ok(SphereSample(z / norm));
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_SPHERE_ATTEMPTS,
    })
}

/// `log Vol(P)` and the non-unit singular values it was built from.
#[derive(Clone, Debug)]
pub struct TangentVolume {
    pub log_vol: f64,
    pub singular_values: Vec<f64>,
}

/// Tangent-volume factor from the normal-space basis `b` (n×(p+1),
/// orthonormal columns): the product of the non-unit singular values of
/// `UᵀB`, which equal those of `WᵀA` for an orthonormal tangent basis `A`.
/// Costs `O(np²)`.
pub fn vol_p(geom: &GeometryCache, b: &DMatrix<f64>) -> Result<TangentVolume> {
    if b.nrows() != geom.n {
        return Err(Error::InvalidInput(format!(
            "normal basis has {} rows, geometry has {}",
            b.nrows(),
            geom.n
        )));
    }
    let m = geom.u.tr_mul(b);
    let sv = m.singular_values();
    let mut kept = Vec::new();
    let mut log_vol = 0.0;
    for &s in sv.iter() {
        if s < 1.0 - UNIT_THRESHOLD {
            if s <= MIN_TANGENT_SINGULAR {
                return Err(Error::DegenerateTangent { value: s });
            }
            log_vol += s.ln();
            kept.push(s);
        }
    }
    kept.sort_by(|a, b| b.total_cmp(a));
    Ok(TangentVolume {
        log_vol,
        singular_values: kept,
    })
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns follow
/// the first-nonzero-entry-positive sign convention.
pub fn orthonormalize(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = vectors.first().map_or(0, |v| v.len());
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != n {
            return Err(Error::InvalidInput("vectors differ in length".into()));
        }
        let input_norm = v.norm();
        let mut q = v.clone();
        for _pass in 0..2 {
            for prev in &out {
                let c = prev.dot(&q);
                q.axpy(-c, prev, 1.0);
            }
        }
        let norm = q.norm();
        if input_norm == 0.0 || norm < DEPENDENCE_TOL * input_norm {
            return Err(Error::LinearlyDependent { index });
        }
        q /= norm;
        out.push(q);
    }
    let mut m = DMatrix::from_columns(&out);
    fix_signs(&mut m);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn constant_column_basis() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let g = build_geometry(&x).unwrap();
        for v in g.column_basis().iter() {
            assert!((v - 0.5).abs() < 1e-14);
        }
        let w = g.complement_basis().unwrap();
        assert_eq!(w.shape(), (4, 3));
        let ones = DVector::from_element(4, 1.0);
        assert!(w.tr_mul(&ones).amax() < 1e-14);
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let col = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let x = DMatrix::from_columns(&[col.clone(), col]);
        assert!(matches!(build_geometry(&x), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn too_few_rows() {
        let x = random_matrix(3, 2, 1);
        assert!(matches!(build_geometry(&x), Err(Error::TooFewRows { n: 3, p: 2 })));
    }

    #[test]
    fn random_design_invariants() {
        let x = random_matrix(6, 2, 42);
        let g = build_geometry(&x).unwrap();
        let u = g.column_basis();
        let w = g.complement_basis().unwrap();
        assert!(max_abs(&(u.transpose() * u - DMatrix::identity(2, 2))) < 1e-10);
        assert!(max_abs(&(w.transpose() * w - DMatrix::identity(4, 4))) < 1e-10);
        assert!(max_abs(&(u.transpose() * w)) < 1e-10);
        let q = g.projector();
        assert!(max_abs(&(&q * &q - &q)) < 1e-8);
        assert!(max_abs(&(&q - q.transpose())) < 1e-8);
        assert!(max_abs(&(&q * &x)) < 1e-8);
        let q2 = w * w.transpose();
        assert!(max_abs(&(q2 - q)) < 1e-10);
    }

    #[test]
    fn geometry_is_deterministic() {
        let x = random_matrix(9, 3, 5);
        let a = build_geometry(&x).unwrap();
        let b = build_geometry(&x).unwrap();
        assert_eq!(a.column_basis(), b.column_basis());
        assert_eq!(a.complement_basis(), b.complement_basis());
    }

    #[test]
    fn sphere_samples_are_unit_and_orthogonal() {
        let x = random_matrix(7, 2, 3);
        let g = build_geometry(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let z = sample_sphere(&g, &mut rng).unwrap();
            assert!((z.as_vector().norm() - 1.0).abs() < 1e-12);
            assert!(g.column_basis().tr_mul(z.as_vector()).amax() < 1e-10);
            assert!(x.tr_mul(z.as_vector()).amax() < 1e-10);
        }
    }

    #[test]
    fn sufficient_statistic_geometry_has_unit_volume() {
        let x = random_matrix(8, 2, 11);
        let g = build_geometry(&x).unwrap();
        let w = g.complement_basis().unwrap();
        let q = w.column(0).into_owned();
        let mut cols: Vec<DVector<f64>> = g.column_basis().column_iter().map(|c| c.into_owned()).collect();
        cols.push(q);
        let b = DMatrix::from_columns(&cols);
        let vol = vol_p(&g, &b).unwrap();
        assert!(vol.singular_values.is_empty());
        assert_eq!(vol.log_vol, 0.0);
    }

    #[test]
    fn block_orthogonal_basis_depends_only_on_non_unit_part() {
        // one column exactly in C(X), the remaining columns mix C(X) and C⊥(X)
        let x = random_matrix(10, 2, 17);
        let g = build_geometry(&x).unwrap();
        let u = g.column_basis();
        let w = g.complement_basis().unwrap();
        let theta: f64 = 0.7;
        let b0 = u.column(0).into_owned();
        let b1 = u.column(1) * theta.cos() + w.column(0) * theta.sin();
        let b2 = w.column(1).into_owned();
        let b = DMatrix::from_columns(&[b0, b1, b2]);
        let vol = vol_p(&g, &b).unwrap();
        assert_eq!(vol.singular_values.len(), 1);
        assert!((vol.log_vol - theta.cos().ln()).abs() < 1e-12);
    }

    #[test]
    fn collapsed_tangent_is_reported() {
        let x = random_matrix(6, 2, 23);
        let g = build_geometry(&x).unwrap();
        let w = g.complement_basis().unwrap();
        // B entirely inside C⊥(X): a direction of C(X) lies in the tangent space
        let b = w.columns(0, 3).into_owned();
        assert!(matches!(vol_p(&g, &b), Err(Error::DegenerateTangent { .. })));
    }

    #[test]
    fn gram_schmidt_by_hand() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let m = orthonormalize(&[a, b]).unwrap();
        let expected = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(max_abs(&(m - expected)) < 1e-15);
    }

    #[test]
    fn gram_schmidt_fixed_point() {
        let x = random_matrix(6, 3, 2);
        let g = build_geometry(&x).unwrap();
        let cols: Vec<_> = g.column_basis().column_iter().map(|c| c.into_owned()).collect();
        let m = orthonormalize(&cols).unwrap();
        assert!(max_abs(&(m - g.column_basis())) < 1e-12);
    }

    #[test]
    fn gram_schmidt_random_vectors() {
        let x = random_matrix(25, 20, 99);
        let cols: Vec<_> = x.column_iter().map(|c| c.into_owned()).collect();
        let m = orthonormalize(&cols).unwrap();
        assert!(max_abs(&(m.transpose() * &m - DMatrix::identity(20, 20))) < 1e-10);
        // span preserved: each input is reproduced by its projection
        let proj = &m * m.transpose() * &x;
        assert!(max_abs(&(proj - &x)) < 1e-10);
    }

    #[test]
    fn gram_schmidt_rejects_dependence() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = &a * 2.0;
        assert!(matches!(
            orthonormalize(&[a, b]),
            Err(Error::LinearlyDependent { index: 1 })
        ));
    }
}
