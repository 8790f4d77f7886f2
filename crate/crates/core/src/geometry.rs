//! Slicing directions and projections.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng;
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;
const DEGENERATE_NORM: f64 = 1e-12;

/// A set of unit directions on the sphere `S^{d-1}`.
///
/// Directions are stored one per row of a `n_theta x d` array, which is the
/// column-major layout of the `d x n_theta` projection matrix: each direction is
/// contiguous in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    rows: Array2<f64>,
    seed: u64,
}

impl ProjectionSet {
    /// Builds a set from a `d x n_theta` matrix whose columns are unit vectors.
    pub fn from_columns(directions: ArrayView2<'_, f64>, seed: u64) -> Result<Self> {
        let (d, k) = directions.dim();
        if d == 0 || k == 0 {
            return Err(Error::invalid("projection set needs d >= 1 and at least one direction"));
        }
        for (j, col) in directions.axis_iter(Axis(1)).enumerate() {
            let norm = col.dot(&col).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!(
                    "direction {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(ProjectionSet {
            rows: directions.t().as_standard_layout().into_owned(),
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `d x n_theta` projection matrix.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.rows.t()
    }

    pub fn direction(&self, j: usize) -> ArrayView1<'_, f64> {
        self.rows.row(j)
    }

    /// The subset of directions at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> ProjectionSet {
        ProjectionSet {
            rows: self.rows.select(Axis(0), indices),
            seed: self.seed,
        }
    }
}

/// Draws `n_theta` i.i.d. uniform directions on `S^{d-1}` by normalising
/// standard Gaussian vectors.
pub fn sample_sphere(d: usize, n_theta: usize, seed: u64) -> Result<ProjectionSet> {
    if d == 0 || n_theta == 0 {
        return Err(Error::invalid(format!(
            "sample_sphere needs d >= 1 and n_theta >= 1 (got d={d}, n_theta={n_theta})"
        )));
    }
    let mut rng = rng::from_seed(seed);
    let mut rows = Array2::<f64>::zeros((n_theta, d));
    for mut row in rows.rows_mut() {
        loop {
            row.iter_mut()
                .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
            let norm = row.dot(&row).sqrt();
            // Resample the (practically impossible) near-zero draw.
            if norm >= DEGENERATE_NORM {
                row.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }
    Ok(ProjectionSet { rows, seed })
}

/// Projects each row of `points` (`n x d`) onto every direction, returning the
/// `n x n_theta` matrix of inner products.
pub fn project(points: ArrayView2<'_, f64>, directions: &ProjectionSet) -> Result<Array2<f64>> {
    if points.ncols() != directions.dim() {
        return Err(Error::invalid(format!(
            "points have dimension {} but directions have dimension {}",
            points.ncols(),
            directions.dim()
        )));
    }
    Ok(points.dot(&directions.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn one_dimensional_directions_are_signs() {
        let set = sample_sphere(1, 4, 11).unwrap();
        for j in 0..4 {
            let v = set.direction(j)[0];
            assert!(v == 1.0 || v == -1.0, "{v}");
        }
    }

    #[test]
    fn columns_are_unit() {
        let set = sample_sphere(3, 1000, 5).unwrap();
        for col in set.matrix().axis_iter(Axis(1)) {
            assert!((col.dot(&col).sqrt() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(matches!(sample_sphere(0, 3, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_sphere(3, 0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let a = sample_sphere(5, 64, 99).unwrap();
        let b = sample_sphere(5, 64, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_sphere(5, 64, 100).unwrap());
    }

    // Kolmogorov–Smirnov test of the angle distribution against Unif[0, 2pi).
    #[test]
    fn circle_angles_are_uniform() {
        let n = 100_000;
        let set = sample_sphere(2, n, 2024).unwrap();
        let mut angles: Vec<f64> = (0..n)
            .map(|j| {
                let v = set.direction(j);
                v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let nf = n as f64;
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &u)| (u - i as f64 / nf).abs().max(((i + 1) as f64 / nf - u).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the KS statistic: 1.628 / sqrt(n).
        assert!(ks < 1.628 / nf.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn identity_projection() {
        let dirs = ProjectionSet::from_columns(array![[1.0, 0.0], [0.0, 1.0]].view(), 0).unwrap();
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(project(eye.view(), &dirs).unwrap(), eye);
    }

    #[test]
    fn non_unit_columns_rejected() {
        let scaled = array![[2.0, 0.0], [0.0, 1.0]];
        assert!(ProjectionSet::from_columns(scaled.view(), 0).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dirs = sample_sphere(3, 4, 1).unwrap();
        let pts = Array2::<f64>::zeros((2, 2));
        assert!(matches!(project(pts.view(), &dirs), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = rng::from_seed(3);
        let pts = Array2::from_shape_fn((5, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let dirs = sample_sphere(3, 7, 8).unwrap();
        let got = project(pts.view(), &dirs).unwrap();
        let m = dirs.matrix();
        for i in 0..5 {
            for j in 0..7 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += pts[[i, k]] * m[[k, j]];
                }
                assert!((got[[i, j]] - acc).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn select_keeps_order() {
        let dirs = sample_sphere(3, 6, 2).unwrap();
        let sub = dirs.select(&[4, 1]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.direction(0), dirs.direction(4));
        assert_eq!(sub.direction(1), dirs.direction(1));
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    }

    proptest! {
        #[test]
        fn projection_is_linear(x in matrix(6, 4), y in matrix(6, 4), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
            let dirs = sample_sphere(4, 9, seed).unwrap();
            let lhs = project((&x * a + &y * b).view(), &dirs).unwrap();
            let rhs = project(x.view(), &dirs).unwrap() * a + project(y.view(), &dirs).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-10);
            }
        }

        #[test]
        fn projection_bounded_by_norm(x in matrix(8, 5), seed in any::<u64>()) {
            let dirs = sample_sphere(5, 16, seed).unwrap();
            let p = project(x.view(), &dirs).unwrap();
            for (i, row) in x.rows().into_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                for v in p.row(i) {
                    prop_assert!(v.abs() <= norm + 1e-12);
                }
            }
        }
    }
}
