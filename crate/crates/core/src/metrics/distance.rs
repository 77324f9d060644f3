use crate::geom::{PointCloud, SpatialIndex};
use crate::{Error, Result};

/// Squared distance from every point of `from` to its nearest point in `to`.
pub fn nearest_sq_distances(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>> {
    if from.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = SpatialIndex::build(to)?;
    Ok(from.points().iter().map(|p| index.nearest_sq(p).1).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric mean of squared nearest-neighbour distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(mean(&nearest_sq_distances(a, b)?) + mean(&nearest_sq_distances(b, a)?))
}

/// Harmonic mean of precision (pred points with a gt neighbour closer than
/// `tau`) and recall (gt points with a pred neighbour closer than `tau`).
pub fn f1_score(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("f1 threshold must be > 0".into()));
    }
    let t2 = tau * tau;
    let frac = |d: Vec<f64>| d.iter().filter(|&&x| x < t2).count() as f64 / d.len() as f64;
    let precision = frac(nearest_sq_distances(pred, gt)?);
    let recall = frac(nearest_sq_distances(gt, pred)?);
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chamfer_simple_cases() {
        let a = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(matches!(chamfer(&a, &PointCloud::empty()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn f1_simple_cases() {
        let a = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(f1_score(&a, &a, 0.01).unwrap(), 1.0);
        let far = PointCloud::from_xyz(&[[5.0, 0.0, 0.0]]).unwrap();
        assert_eq!(f1_score(&far, &a, 0.5).unwrap(), 0.0);
        // precision 1/1, recall 1/2
        let one = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        assert!((f1_score(&one, &a, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn chamfer_symmetric_and_f1_monotone(
            a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..40),
            b in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..40),
            t1 in 0.01f64..1.0, dt in 0.0f64..1.0,
        ) {
            let a = PointCloud::from_xyz(&a).unwrap();
            let b = PointCloud::from_xyz(&b).unwrap();
            prop_assert!((chamfer(&a, &b).unwrap() - chamfer(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!(f1_score(&a, &b, t1).unwrap() <= f1_score(&a, &b, t1 + dt).unwrap());
        }
    }
}
