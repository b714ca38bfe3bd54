//! Grasp generation from a trained model: prior sampling, deterministic
//! circle sweeps of the latent space, and JSON Lines / CSV export of the
//! generated configurations together with their latent coordinates.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grasp_data::{GraspConfiguration, TabletopPlane};
use crate::hgg_vae::{decode, HggModel};
use crate::par;
use crate::{Error, Result};

/// Deterministic latent visitation plan: the center point first, then one
/// circle per diameter (inner to outer), each traversed counterclockwise
/// from angle 0 with evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub center: Vec<f64>,
    pub diameters: Vec<f64>,
    pub points_per_circle: usize,
    pub plane: TabletopPlane,
    /// The two latent dimensions swept when n > 2; the rest stay at center.
    pub axis_pair: (usize, usize),
}

impl SweepPlan {
    pub fn new(latent_dim: usize, plane: TabletopPlane) -> Self {
        Self {
            center: vec![0.0; latent_dim],
            diameters: vec![0.5, 1.0],
            points_per_circle: 8,
            plane,
            axis_pair: (0, 1),
        }
    }

    fn validate(&self, latent_dim: usize) -> Result<()> {
        if self.center.len() != latent_dim {
            return Err(Error::Usage(format!(
                "sweep center has {} components, model latent_dim is {latent_dim}",
                self.center.len()
            )));
        }
        if self.diameters.iter().any(|d| *d <= 0.0) {
            return Err(Error::Usage("sweep diameters must be > 0".into()));
        }
        if self.points_per_circle == 0 {
            return Err(Error::Usage("points_per_circle must be >= 1".into()));
        }
        let (i, j) = self.axis_pair;
        if i == j || i >= latent_dim || j >= latent_dim {
            return Err(Error::Usage(format!(
                "axis pair ({i}, {j}) invalid for latent_dim {latent_dim}"
            )));
        }
        Ok(())
    }
}

/// One generated grasp together with the latent point it decodes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedGrasp {
    pub latent: Vec<f64>,
    pub config: GraspConfiguration,
    pub plane: TabletopPlane,
}

/// Decodes a batch of latent points for one plane. Runs on rayon when the
/// `parallel` feature is enabled; per-item work is pure so the output order
/// and values are identical either way.
pub fn decode_latents(
    model: &HggModel,
    latents: &[Vec<f64>],
    plane: &TabletopPlane,
) -> Result<Vec<GraspConfiguration>> {
    par::map(latents, |z| decode(model, z, plane))
        .into_iter()
        .collect()
}

/// Sequential twin of `decode_latents`, kept for the benches.
pub fn decode_latents_seq(
    model: &HggModel,
    latents: &[Vec<f64>],
    plane: &TabletopPlane,
) -> Result<Vec<GraspConfiguration>> {
    par::map_seq(latents, |z| decode(model, z, plane))
        .into_iter()
        .collect()
}

/// Draws `count` latents from the standard-normal prior and decodes them.
pub fn sample_prior<R: Rng>(
    model: &HggModel,
    plane: &TabletopPlane,
    count: usize,
    rng: &mut R,
) -> Result<Vec<GeneratedGrasp>> {
    let n = model.arch.latent_dim;
    let latents: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let configs = decode_latents(model, &latents, plane)?;
    Ok(latents
        .into_iter()
        .zip(configs)
        .map(|(latent, config)| GeneratedGrasp {
            latent,
            config,
            plane: *plane,
        })
        .collect())
}

/// Latent points visited by a plan, in output order.
pub fn sweep_latents(plan: &SweepPlan, latent_dim: usize) -> Result<Vec<Vec<f64>>> {
    plan.validate(latent_dim)?;
    let mut diameters = plan.diameters.clone();
    diameters.sort_by(|a, b| a.partial_cmp(b).expect("finite diameters"));
    let mut points = vec![plan.center.clone()];
    let (ax, ay) = plan.axis_pair;
    for d in diameters {
        let radius = d / 2.0;
        for k in 0..plan.points_per_circle {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / plan.points_per_circle as f64;
            let mut z = plan.center.clone();
            z[ax] += radius * angle.cos();
            z[ay] += radius * angle.sin();
            points.push(z);
        }
    }
    Ok(points)
}

/// Decodes the plan's latent visitation; a pure function of (model, plan).
pub fn sweep(model: &HggModel, plan: &SweepPlan) -> Result<Vec<GeneratedGrasp>> {
    let latents = sweep_latents(plan, model.arch.latent_dim)?;
    let configs = decode_latents(model, &latents, &plan.plane)?;
    Ok(latents
        .into_iter()
        .zip(configs)
        .map(|(latent, config)| GeneratedGrasp {
            latent,
            config,
            plane: plan.plane,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// export

pub fn write_jsonl(grasps: &[GeneratedGrasp], path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for g in grasps {
        serde_json::to_writer(&mut file, g).map_err(|e| Error::Format {
            line: 0,
            message: e.to_string(),
        })?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn write_csv(grasps: &[GeneratedGrasp], path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let latent_dim = grasps.first().map_or(0, |g| g.latent.len());
    let latent_cols: Vec<String> = (0..latent_dim).map(|i| format!("z{i}")).collect();
    writeln!(
        file,
        "{},px,py,pz,qx,qy,qz,qw,spread",
        latent_cols.join(",")
    )?;
    for g in grasps {
        let z: Vec<String> = g.latent.iter().map(|v| v.to_string()).collect();
        let p = g.config.position;
        let q = g.config.orientation;
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{}",
            z.join(","),
            p[0],
            p[1],
            p[2],
            q[0],
            q[1],
            q[2],
            q[3],
            g.config.spread
        )?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp_data::NormalizationStats;
    use crate::hgg_vae::{build_hgg, HggArchitecture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> HggModel {
        let stats = NormalizationStats {
            position_min: [0.0; 3],
            position_max: [1.0; 3],
            spread_min: 0.0,
            spread_max: 1.0,
        };
        build_hgg(&HggArchitecture::default(), &stats, 42).unwrap()
    }

    fn plane() -> TabletopPlane {
        TabletopPlane::new([0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn sample_prior_count_zero_is_empty() {
        let m = model();
        let out = sample_prior(&m, &plane(), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn sample_prior_reproducible() {
        let m = model();
        let a = sample_prior(&m, &plane(), 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_prior(&m, &plane(), 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_layout_counts() {
        let m = model();
        let mut plan = SweepPlan::new(3, plane());
        plan.points_per_circle = 12;
        let out = sweep(&m, &plan).unwrap();
        assert_eq!(out.len(), 25); // 1 + 12 + 12
    }

    #[test]
    fn sweep_center_first_and_antipodal_symmetry() {
        let m = model();
        let plan = SweepPlan::new(3, plane());
        let out = sweep(&m, &plan).unwrap();
        assert_eq!(out[0].latent, vec![0.0; 3]);
        let center_decode = decode(&m, &[0.0; 3], &plane()).unwrap();
        assert_eq!(out[0].config, center_decode);
        // points at angle phi and phi + pi on a ring sum to 2 * center
        let p = plan.points_per_circle;
        for ring in 0..2 {
            let base = 1 + ring * p;
            for k in 0..p / 2 {
                let a = &out[base + k].latent;
                let b = &out[base + k + p / 2].latent;
                for i in 0..3 {
                    assert!((a[i] + b[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sweep_is_pure() {
        let m = model();
        let plan = SweepPlan::new(3, plane());
        assert_eq!(sweep(&m, &plan).unwrap(), sweep(&m, &plan).unwrap());
    }

    #[test]
    fn bad_axis_pair_is_usage_error() {
        let m = model();
        let mut plan = SweepPlan::new(3, plane());
        plan.axis_pair = (0, 3);
        assert!(matches!(sweep(&m, &plan), Err(Error::Usage(_))));
    }

    #[test]
    fn parallel_and_sequential_decode_agree() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let latents: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let a = decode_latents(&m, &latents, &plane()).unwrap();
        let b = decode_latents_seq(&m, &latents, &plane()).unwrap();
        assert_eq!(a, b);
    }
}
