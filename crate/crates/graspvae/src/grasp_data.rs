//! Domain types for grasps and tabletop planes, dataset container,
//! normalization to/from network units and dataset file I/O.
//!
//! A grasp is described by eight parameters in the object frame: position
//! (3), orientation as a unit quaternion (4) and the finger spread angle.
//! Every record also carries the Cartesian plane equation of the tabletop in
//! the object frame, which conditions the generator on the object's stable
//! pose.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPREAD_MAX: f64 = std::f64::consts::FRAC_PI_2;

/// Width of the full network input vector: position + quaternion + spread +
/// plane coefficients.
pub const INPUT_WIDTH: usize = 12;
/// Width of the gripper configuration part (network output).
pub const CONFIG_WIDTH: usize = 8;

// ---------------------------------------------------------------------------
// quaternion helpers

/// Flips the quaternion sign so that qw >= 0; if qw == 0, the first nonzero
/// of (qx, qy, qz) is made positive. q and -q encode the same rotation, so
/// this only removes the double-cover ambiguity.
pub fn canonicalize_quaternion(q: [f64; 4]) -> [f64; 4] {
    let flip = if q[3] != 0.0 {
        q[3] < 0.0
    } else if q[0] != 0.0 {
        q[0] < 0.0
    } else if q[1] != 0.0 {
        q[1] < 0.0
    } else {
        q[2] < 0.0
    };
    if flip {
        [-q[0], -q[1], -q[2], -q[3]]
    } else {
        q
    }
}

pub fn quaternion_norm(q: [f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Rotates vector `v` by the unit quaternion `q` (qx, qy, qz, qw).
pub fn rotate_vector(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    // t = 2 u x v; v' = v + qw t + u x t, with u the vector part.
    let u = [q[0], q[1], q[2]];
    let t = [
        2.0 * (u[1] * v[2] - u[2] * v[1]),
        2.0 * (u[2] * v[0] - u[0] * v[2]),
        2.0 * (u[0] * v[1] - u[1] * v[0]),
    ];
    [
        v[0] + q[3] * t[0] + u[1] * t[2] - u[2] * t[1],
        v[1] + q[3] * t[1] + u[2] * t[0] - u[0] * t[2],
        v[2] + q[3] * t[2] + u[0] * t[1] - u[1] * t[0],
    ]
}

/// Rotation angle between two unit quaternions, in degrees.
pub fn quaternion_angle_deg(a: [f64; 4], b: [f64; 4]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]).abs();
    2.0 * dot.min(1.0).acos().to_degrees()
}

/// Quaternion for a rotation of `angle` radians about the z axis.
pub fn yaw_quaternion(angle: f64) -> [f64; 4] {
    [0.0, 0.0, (angle / 2.0).sin(), (angle / 2.0).cos()]
}

/// Hamilton product a * b.
pub fn quaternion_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[3] * b[0] + a[0] * b[3] + a[1] * b[2] - a[2] * b[1],
        a[3] * b[1] - a[0] * b[2] + a[1] * b[3] + a[2] * b[0],
        a[3] * b[2] + a[0] * b[1] - a[1] * b[0] + a[2] * b[3],
        a[3] * b[3] - a[0] * b[0] - a[1] * b[1] - a[2] * b[2],
    ]
}

// ---------------------------------------------------------------------------
// domain types

/// The 8-parameter gripper configuration in the object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspConfiguration {
    /// Gripper frame position, meters.
    pub position: [f64; 3],
    /// Unit quaternion (qx, qy, qz, qw), sign-canonicalized.
    pub orientation: [f64; 4],
    /// Spread angle between the two rearrangeable fingers, radians.
    pub spread: f64,
}

impl GraspConfiguration {
    /// Validates and canonicalizes. The quaternion must be unit within 1e-6;
    /// it is renormalized exactly and sign-canonicalized.
    pub fn new(position: [f64; 3], orientation: [f64; 4], spread: f64) -> Result<Self> {
        let norm = quaternion_norm(orientation);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "quaternion norm {norm} deviates from 1 by more than 1e-6"
            )));
        }
        if !(0.0..=SPREAD_MAX + 1e-12).contains(&spread) {
            return Err(Error::Validation(format!(
                "spread {spread} outside [0, pi/2]"
            )));
        }
        let q = canonicalize_quaternion([
            orientation[0] / norm,
            orientation[1] / norm,
            orientation[2] / norm,
            orientation[3] / norm,
        ]);
        Ok(Self {
            position,
            orientation: q,
            spread: spread.min(SPREAD_MAX),
        })
    }
}

/// Cartesian tabletop plane a x + b y + c z + d = 0 in the object frame,
/// with (a, b, c) unit-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabletopPlane {
    pub coefficients: [f64; 4],
}

impl TabletopPlane {
    pub fn new(coefficients: [f64; 4]) -> Result<Self> {
        let [a, b, c, d] = coefficients;
        let norm = (a * a + b * b + c * c).sqrt();
        if norm < 1e-9 {
            return Err(Error::Validation(
                "plane normal has near-zero norm".to_string(),
            ));
        }
        let mut coeffs = [a / norm, b / norm, c / norm, d / norm];
        // Canonical sign: first nonzero of (c, b, a) positive, so the upright
        // plane (0,0,1,d) keeps its normal pointing up toward the object.
        let flip = if coeffs[2].abs() > 1e-12 {
            coeffs[2] < 0.0
        } else if coeffs[1].abs() > 1e-12 {
            coeffs[1] < 0.0
        } else {
            coeffs[0] < 0.0
        };
        if flip {
            for v in &mut coeffs {
                *v = -*v;
            }
        }
        Ok(Self {
            coefficients: coeffs,
        })
    }

    pub fn normal(&self) -> [f64; 3] {
        [
            self.coefficients[0],
            self.coefficients[1],
            self.coefficients[2],
        ]
    }

    /// Signed distance of a point to the plane (positive on the object side).
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let [a, b, c, d] = self.coefficients;
        a * p[0] + b * p[1] + c * p[2] + d
    }

    pub fn approx_eq(&self, other: &TabletopPlane, tol: f64) -> bool {
        self.coefficients
            .iter()
            .zip(other.coefficients.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub grasp: GraspConfiguration,
    pub plane: TabletopPlane,
    /// Optional grasp-type identifier for dataset bookkeeping.
    pub label: Option<i32>,
}

/// Per-dimension min/max over position and spread; quaternion and plane
/// coefficients pass through unscaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub position_min: [f64; 3],
    pub position_max: [f64; 3],
    pub spread_min: f64,
    pub spread_max: f64,
}

const DIM_NAMES: [&str; 4] = ["position.x", "position.y", "position.z", "spread"];

impl NormalizationStats {
    pub fn from_records(records: &[GraspRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::DegenerateDataset {
                dimension: "(empty dataset)".to_string(),
            });
        }
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        for r in records {
            for i in 0..3 {
                min[i] = min[i].min(r.grasp.position[i]);
                max[i] = max[i].max(r.grasp.position[i]);
            }
            min[3] = min[3].min(r.grasp.spread);
            max[3] = max[3].max(r.grasp.spread);
        }
        for i in 0..4 {
            if max[i] - min[i] <= 1e-12 {
                return Err(Error::DegenerateDataset {
                    dimension: DIM_NAMES[i].to_string(),
                });
            }
        }
        Ok(Self {
            position_min: [min[0], min[1], min[2]],
            position_max: [max[0], max[1], max[2]],
            spread_min: min[3],
            spread_max: max[3],
        })
    }

    /// Dataset position extent projected on a (unit) plane normal; used to
    /// bring the plane offset d to O(1) network units.
    pub fn extent_along(&self, normal: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| normal[i].abs() * (self.position_max[i] - self.position_min[i]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspDataset {
    pub records: Vec<GraspRecord>,
    pub stats: NormalizationStats,
}

impl GraspDataset {
    pub fn from_records(records: Vec<GraspRecord>) -> Result<Self> {
        let stats = NormalizationStats::from_records(&records)?;
        Ok(Self { records, stats })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

// ---------------------------------------------------------------------------
// normalization

fn affine_to_unit(v: f64, min: f64, max: f64) -> f64 {
    (v - min) / (max - min)
}

fn affine_from_unit(v: f64, min: f64, max: f64) -> f64 {
    min + v * (max - min)
}

/// Maps a record to the 12-component network input vector
/// `[px, py, pz, qx, qy, qz, qw, spread, a, b, c, d]`. Position and spread go
/// affinely to [0,1] over the training range; values outside it are permitted
/// and flagged through the second return value.
pub fn normalize(record: &GraspRecord, stats: &NormalizationStats) -> (Vec<f64>, bool) {
    let mut v = Vec::with_capacity(INPUT_WIDTH);
    let mut out_of_range = false;
    for i in 0..3 {
        let n = affine_to_unit(
            record.grasp.position[i],
            stats.position_min[i],
            stats.position_max[i],
        );
        out_of_range |= !(0.0..=1.0).contains(&n);
        v.push(n);
    }
    let q = canonicalize_quaternion(record.grasp.orientation);
    v.extend_from_slice(&q);
    let s = affine_to_unit(record.grasp.spread, stats.spread_min, stats.spread_max);
    out_of_range |= !(0.0..=1.0).contains(&s);
    v.push(s);
    let [a, b, c, d] = record.plane.coefficients;
    let extent = stats.extent_along([a, b, c]);
    v.extend_from_slice(&[a, b, c, d / extent]);
    (v, out_of_range)
}

/// Maps the plane alone to its 4 conditioner inputs `[a, b, c, d_scaled]`.
pub fn normalize_plane(plane: &TabletopPlane, stats: &NormalizationStats) -> [f64; 4] {
    let [a, b, c, d] = plane.coefficients;
    [a, b, c, d / stats.extent_along([a, b, c])]
}

#[derive(Debug, Clone, Copy)]
pub struct Denormalized {
    pub config: GraspConfiguration,
    /// True when the decoded spread had to be clamped into [0, pi/2].
    pub spread_clamped: bool,
}

/// Inverse of `normalize`, restricted to the 8 gripper outputs
/// `[px, py, pz, qx, qy, qz, qw, spread]`.
pub fn denormalize(vector: &[f64], stats: &NormalizationStats) -> Result<Denormalized> {
    if vector.len() != CONFIG_WIDTH {
        return Err(Error::Shape(format!(
            "denormalize expects {CONFIG_WIDTH} components, got {}",
            vector.len()
        )));
    }
    let mut position = [0.0; 3];
    for i in 0..3 {
        position[i] = affine_from_unit(vector[i], stats.position_min[i], stats.position_max[i]);
    }
    let q = [vector[3], vector[4], vector[5], vector[6]];
    let norm = quaternion_norm(q);
    if norm <= 1e-9 {
        return Err(Error::DegenerateOrientation);
    }
    let orientation =
        canonicalize_quaternion([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm]);
    let raw_spread = affine_from_unit(vector[7], stats.spread_min, stats.spread_max);
    let spread = raw_spread.clamp(0.0, SPREAD_MAX);
    Ok(Denormalized {
        config: GraspConfiguration {
            position,
            orientation,
            spread,
        },
        spread_clamped: spread != raw_spread,
    })
}

// ---------------------------------------------------------------------------
// file I/O

/// On-disk JSON Lines record.
#[derive(Debug, Serialize, Deserialize)]
struct RecordJson {
    position: [f64; 3],
    quaternion: [f64; 4],
    spread: f64,
    plane: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    grasp_type: Option<i32>,
}

pub fn load_dataset(path: &Path) -> Result<GraspDataset> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordJson = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let grasp = GraspConfiguration::new(raw.position, raw.quaternion, raw.spread)?;
        let plane = TabletopPlane::new(raw.plane)?;
        records.push(GraspRecord {
            grasp,
            plane,
            label: raw.grasp_type,
        });
    }
    GraspDataset::from_records(records)
}

pub fn save_dataset(dataset: &GraspDataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in &dataset.records {
        let raw = RecordJson {
            position: r.grasp.position,
            quaternion: r.grasp.orientation,
            spread: r.grasp.spread,
            plane: r.plane.coefficients,
            grasp_type: r.label,
        };
        serde_json::to_writer(&mut file, &raw).map_err(|e| Error::Format {
            line: 0,
            message: e.to_string(),
        })?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub const CSV_HEADER: &str = "px,py,pz,qx,qy,qz,qw,spread,a,b,c,d,grasp_type";

/// Fixed 13-column CSV export for spreadsheet inspection.
pub fn export_csv(dataset: &GraspDataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{CSV_HEADER}")?;
    for r in &dataset.records {
        let p = r.grasp.position;
        let q = r.grasp.orientation;
        let pl = r.plane.coefficients;
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p[0],
            p[1],
            p[2],
            q[0],
            q[1],
            q[2],
            q[3],
            r.grasp.spread,
            pl[0],
            pl[1],
            pl[2],
            pl[3],
            r.label.map(|l| l.to_string()).unwrap_or_default()
        )?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn record(position: [f64; 3], spread: f64) -> GraspRecord {
        GraspRecord {
            grasp: GraspConfiguration::new(position, [0.0, 0.0, 0.0, 1.0], spread).unwrap(),
            plane: TabletopPlane::new([0.0, 0.0, 1.0, 0.0]).unwrap(),
            label: None,
        }
    }

    fn small_dataset() -> GraspDataset {
        GraspDataset::from_records(vec![
            record([0.0, -0.1, 0.0], 0.0),
            record([0.2, 0.1, 0.4], FRAC_PI_2),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_maps_min_to_zero_and_midpoint_to_half() {
        let ds = small_dataset();
        let (v, flagged) = normalize(&ds.records[0], &ds.stats);
        assert!(!flagged);
        assert_eq!(&v[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(v[7], 0.0);
        let mid = GraspRecord {
            grasp: GraspConfiguration::new([0.1, 0.0, 0.2], [0.0, 0.0, 0.0, 1.0], FRAC_PI_4)
                .unwrap(),
            plane: ds.records[0].plane,
            label: None,
        };
        let (v, _) = normalize(&mid, &ds.stats);
        for i in 0..3 {
            assert!((v[i] - 0.5).abs() < 1e-12);
        }
        assert!((v[7] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn denormalize_all_half_hits_midpoints() {
        let ds = small_dataset();
        let out = denormalize(&[0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0, 0.5], &ds.stats).unwrap();
        assert!((out.config.position[0] - 0.1).abs() < 1e-12);
        assert!((out.config.position[2] - 0.2).abs() < 1e-12);
        assert!((out.config.spread - FRAC_PI_4).abs() < 1e-12);
        assert_eq!(out.config.orientation, [0.0, 0.0, 0.0, 1.0]);
        assert!(!out.spread_clamped);
    }

    #[test]
    fn round_trip_is_identity() {
        let ds = small_dataset();
        for r in &ds.records {
            let (v, _) = normalize(r, &ds.stats);
            let back = denormalize(&v[0..8], &ds.stats).unwrap();
            for i in 0..3 {
                assert!((back.config.position[i] - r.grasp.position[i]).abs() < 1e-12);
            }
            assert!((back.config.spread - r.grasp.spread).abs() < 1e-12);
            for i in 0..4 {
                assert!((back.config.orientation[i] - r.grasp.orientation[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn near_zero_quaternion_slice_is_degenerate() {
        let ds = small_dataset();
        let err = denormalize(&[0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 1e-15, 0.5], &ds.stats);
        assert!(matches!(err, Err(Error::DegenerateOrientation)));
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let err = GraspConfiguration::new([0.0; 3], [0.0, 0.0, 0.0, 2.0], 0.1);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn degenerate_stats_name_dimension() {
        let recs = vec![record([0.0, 0.0, 0.0], 0.1), record([0.0, 1.0, 1.0], 0.2)];
        let err = NormalizationStats::from_records(&recs);
        match err {
            Err(Error::DegenerateDataset { dimension }) => assert_eq!(dimension, "position.x"),
            other => panic!("expected degenerate dataset, got {other:?}"),
        }
    }

    #[test]
    fn canonicalization_idempotent_and_rotation_preserving() {
        let q = [0.5, -0.5, 0.5, -0.5];
        let c = canonicalize_quaternion(q);
        assert_eq!(c, canonicalize_quaternion(c));
        assert!(c[3] >= 0.0);
        let v = [0.3, -0.2, 0.9];
        let a = rotate_vector(q, v);
        let b = rotate_vector(c, v);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_order_independent() {
        let mut recs = vec![
            record([0.0, -0.1, 0.0], 0.0),
            record([0.2, 0.1, 0.4], FRAC_PI_2),
            record([0.1, 0.0, 0.1], 0.3),
        ];
        let s1 = NormalizationStats::from_records(&recs).unwrap();
        recs.reverse();
        let s2 = NormalizationStats::from_records(&recs).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn jsonl_round_trip_and_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let ds = small_dataset();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.stats, ds.stats);

        std::fs::write(&path, "{\"position\": [0,0,0]\n").unwrap();
        match load_dataset(&path) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected format error, got {other:?}"),
        }

        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::DegenerateDataset { .. })
        ));
    }

    #[test]
    fn plane_sign_canonicalization() {
        let p = TabletopPlane::new([0.0, 0.0, -2.0, 0.5]).unwrap();
        assert!((p.coefficients[2] - 1.0).abs() < 1e-12);
        assert!((p.coefficients[3] + 0.25).abs() < 1e-12);
    }
}
