use nalgebra::Vector3;

use super::kdtree::KdTree;
use super::MapError;

/// 3D prior map stored as a point cloud with a k-d tree index.
#[derive(Clone, Debug)]
pub struct PointCloudMap {
    tree: KdTree,
}

impl PartialEq for PointCloudMap {
    fn eq(&self, other: &Self) -> bool {
        self.points() == other.points()
    }
}

impl PointCloudMap {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, MapError> {
        if points.is_empty() {
            return Err(MapError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(MapError::NonFinitePoint(i));
        }
        Ok(Self {
            tree: KdTree::build(points),
        })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        self.tree.points()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Nearest map point to `p` and its Euclidean distance.
    #[inline]
    pub fn kd_nearest(&self, p: &Vector3<f64>) -> (Vector3<f64>, f64) {
        let (i, d2) = self.tree.nearest(p);
        (self.tree.points()[i], d2.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_on_a_point() {
        let p = Vector3::new(0.3, -0.2, 1.0);
        let m = PointCloudMap::new(vec![Vector3::zeros(), p]).unwrap();
        assert_eq!(m.kd_nearest(&p), (p, 0.0));
    }

    #[test]
    fn two_point_cloud() {
        let m = PointCloudMap::new(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)]).unwrap();
        let (q, d) = m.kd_nearest(&Vector3::new(0.4, 0.0, 0.0));
        assert_eq!(q, Vector3::zeros());
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(
            PointCloudMap::new(vec![]),
            Err(MapError::EmptyCloud)
        ));
        assert!(matches!(
            PointCloudMap::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]),
            Err(MapError::NonFinitePoint(0))
        ));
    }
}
