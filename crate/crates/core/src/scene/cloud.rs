use std::collections::BTreeSet;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::lie::Pose;

/// LiDAR returns with the index of the scan each point came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    timestamps: Vec<u32>,
}

impl PointCloud {
    /// Every point gets timestamp index 1.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        let timestamps = vec![1; points.len()];
        Self::with_timestamps(points, timestamps)
    }

    pub fn with_timestamps(points: Vec<Vector3<f64>>, timestamps: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points".into()));
        }
        if points.len() != timestamps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} timestamps",
                points.len(),
                timestamps.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Parse(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self { points, timestamps })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn timestamps(&self) -> &[u32] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            timestamps: self.timestamps.clone(),
        }
    }
}

/// Merges scans into the global frame. Scan `i` (0-based) tags its points
/// with timestamp index `i + 1`.
pub fn aggregate(scans: &[(PointCloud, Pose)]) -> Result<PointCloud> {
    if scans.is_empty() {
        return Err(Error::EmptyInput("no scans to aggregate".into()));
    }
    let total = scans.iter().map(|(c, _)| c.len()).sum();
    let mut points = Vec::with_capacity(total);
    let mut timestamps = Vec::with_capacity(total);
    for (i, (cloud, pose)) in scans.iter().enumerate() {
        points.extend(cloud.points.iter().map(|p| pose.apply(p)));
        timestamps.extend(std::iter::repeat_n(i as u32 + 1, cloud.len()));
    }
    PointCloud::with_timestamps(points, timestamps)
}

/// Largest axis-aligned extent of the cloud divided by `c`.
pub fn compute_voxel_size(cloud: &PointCloud, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("voxel constant must be positive, got {c}")));
    }
    let extent = scene_scale(cloud);
    if extent <= 0.0 {
        return Err(Error::DegenerateCloud("all points are identical".into()));
    }
    Ok(extent / c)
}

/// Maximum axis-aligned bounding-box extent.
pub fn scene_scale(cloud: &PointCloud) -> f64 {
    let (lo, hi) = cloud.bounds();
    (hi - lo).max()
}

/// Deduplicated voxel centers `floor(p / eps) * eps`, sorted lexicographically.
pub fn voxelize(cloud: &PointCloud, epsilon: f64) -> Result<Vec<Vector3<f64>>> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveVoxelSize(epsilon));
    }
    let keys: BTreeSet<[i64; 3]> = cloud
        .points
        .iter()
        .map(|p| {
            [
                (p.x / epsilon).floor() as i64,
                (p.y / epsilon).floor() as i64,
                (p.z / epsilon).floor() as i64,
            ]
        })
        .collect();
    Ok(keys
        .into_iter()
        .map(|k| Vector3::new(k[0] as f64 * epsilon, k[1] as f64 * epsilon, k[2] as f64 * epsilon))
        .collect())
}
