//! Synthetic analytic grasp task standing in for a simulated setup, plus the
//! evaluation machinery around it: a success oracle with named failure
//! reasons, reconstruction/orientation/success metrics, Spearman rank
//! correlation, and a hyperparameter sweep harness.
//!
//! The task is a vertical cylinder grasped radially: the grasp manifold is
//! parameterized by approach angle phi, standoff s and height z, with a fixed
//! spread angle. Its intrinsic dimension is 3 by construction.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grasp_data::{
    canonicalize_quaternion, quaternion_angle_deg, rotate_vector, yaw_quaternion,
    GraspConfiguration, GraspDataset, GraspRecord, TabletopPlane,
};
use crate::hgg_vae::{
    decode, encode, train, HggArchitecture, HggModel, TrainingConfig,
};
use crate::latent_explorer::sample_prior;
use crate::par;
use crate::{Error, Result};

/// The admissible discrete spread values of the gripper's internal layouts.
pub const SPREAD_CHOICES: [f64; 4] = [
    0.0,
    std::f64::consts::FRAC_PI_6,
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_2,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGraspTask {
    /// Cylinder radius, meters.
    pub radius: f64,
    /// Cylinder height, meters.
    pub height: f64,
    /// Stable poses of the object, each a tabletop plane in the object frame.
    pub stable_poses: Vec<TabletopPlane>,
    /// Standoff range [s_min, s_max] from the cylinder surface, meters.
    pub standoff_range: (f64, f64),
    /// Graspable height band [z_lo, z_hi] along the axis, meters.
    pub height_range: (f64, f64),
    /// Fixed spread angle, one of `SPREAD_CHOICES`.
    pub spread_target: f64,
    /// Uniform jitter added to the spread when generating primitives, so the
    /// spread dimension is not constant; kept well inside spread_tolerance.
    pub spread_jitter: f64,
    pub radial_tolerance: f64,
    /// Max deviation of the approach direction from radial, radians.
    pub angular_tolerance: f64,
    pub spread_tolerance: f64,
    /// Minimum gripper clearance above the table plane, meters.
    pub table_clearance: f64,
}

impl Default for SyntheticGraspTask {
    fn default() -> Self {
        Self {
            radius: 0.04,
            height: 0.20,
            stable_poses: vec![
                // upright on the table
                TabletopPlane::new([0.0, 0.0, 1.0, 0.0]).expect("valid plane"),
                // lying: table plane through the axis, restricting grasps to
                // the exposed side
                TabletopPlane::new([0.0, 1.0, 0.0, 0.0]).expect("valid plane"),
            ],
            standoff_range: (0.01, 0.03),
            height_range: (0.05, 0.15),
            spread_target: std::f64::consts::FRAC_PI_6,
            spread_jitter: 0.03,
            radial_tolerance: 0.01,
            angular_tolerance: 10f64.to_radians(),
            spread_tolerance: 5f64.to_radians(),
            table_clearance: 0.02,
        }
    }
}

impl SyntheticGraspTask {
    pub fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 || self.height <= 0.0 {
            return Err(Error::Validation("cylinder dimensions must be > 0".into()));
        }
        if self.standoff_range.1 <= self.standoff_range.0
            || self.height_range.1 <= self.height_range.0
        {
            return Err(Error::Validation("parameter ranges must be nonempty".into()));
        }
        if !SPREAD_CHOICES
            .iter()
            .any(|&c| (c - self.spread_target).abs() < 1e-9)
        {
            return Err(Error::Validation(format!(
                "spread target {} is not one of the discrete gripper layouts",
                self.spread_target
            )));
        }
        if self.radial_tolerance <= 0.0
            || self.angular_tolerance <= 0.0
            || self.spread_tolerance <= 0.0
            || self.table_clearance <= 0.0
        {
            return Err(Error::Validation("tolerances must be > 0".into()));
        }
        if self.spread_jitter < 0.0 || self.spread_jitter >= self.spread_tolerance {
            return Err(Error::Validation(
                "spread jitter must stay inside the spread tolerance".into(),
            ));
        }
        if self.stable_poses.is_empty() {
            return Err(Error::Validation("at least one stable pose required".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let task: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            line: 0,
            message: e.to_string(),
        })?;
        task.validate()?;
        Ok(task)
    }

    /// The grasp configuration at manifold coordinates (phi, standoff, z).
    /// The gripper x axis points radially inward toward the cylinder axis.
    pub fn manifold_config(&self, phi: f64, standoff: f64, z: f64, spread: f64) -> GraspConfiguration {
        let rho = self.radius + standoff;
        let position = [rho * phi.cos(), rho * phi.sin(), z];
        let orientation = canonicalize_quaternion(yaw_quaternion(phi + std::f64::consts::PI));
        GraspConfiguration {
            position,
            orientation,
            spread,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Radial,
    Height,
    Angular,
    Spread,
    TableCollision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleVerdict {
    pub success: bool,
    /// First violated clause, in check order.
    pub failure: Option<FailureReason>,
}

/// Analytic success test for one record. The record's plane must match one
/// of the task's stable poses within 1e-6.
pub fn oracle_success(task: &SyntheticGraspTask, record: &GraspRecord) -> Result<OracleVerdict> {
    let pose = task
        .stable_poses
        .iter()
        .find(|p| p.approx_eq(&record.plane, 1e-6))
        .ok_or_else(|| Error::Usage("record plane matches no stable pose".into()))?;

    let p = record.grasp.position;
    let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let (s_min, s_max) = task.standoff_range;
    let fail = |reason| {
        Ok(OracleVerdict {
            success: false,
            failure: Some(reason),
        })
    };
    if rho < task.radius + s_min - task.radial_tolerance
        || rho > task.radius + s_max + task.radial_tolerance
    {
        return fail(FailureReason::Radial);
    }
    let (z_lo, z_hi) = task.height_range;
    if p[2] < z_lo - task.radial_tolerance || p[2] > z_hi + task.radial_tolerance {
        return fail(FailureReason::Height);
    }
    if rho < 1e-9 {
        return fail(FailureReason::Angular);
    }
    let approach = rotate_vector(record.grasp.orientation, [1.0, 0.0, 0.0]);
    let inward = [-p[0] / rho, -p[1] / rho, 0.0];
    let dot = approach[0] * inward[0] + approach[1] * inward[1] + approach[2] * inward[2];
    if dot.clamp(-1.0, 1.0).acos() > task.angular_tolerance {
        return fail(FailureReason::Angular);
    }
    if (record.grasp.spread - task.spread_target).abs() > task.spread_tolerance {
        return fail(FailureReason::Spread);
    }
    if pose.signed_distance(p) < task.table_clearance {
        return fail(FailureReason::TableCollision);
    }
    Ok(OracleVerdict {
        success: true,
        failure: None,
    })
}

/// Samples `per_pose_count` primitives per stable pose, uniform on the grasp
/// manifold, rejection-sampled against the oracle so every record is
/// successful by construction.
pub fn generate_primitives<R: Rng>(
    task: &SyntheticGraspTask,
    per_pose_count: usize,
    rng: &mut R,
) -> Result<GraspDataset> {
    task.validate()?;
    let mut records = Vec::with_capacity(per_pose_count * task.stable_poses.len());
    for (pose_idx, pose) in task.stable_poses.iter().enumerate() {
        let mut accepted = 0;
        let mut attempts = 0usize;
        while accepted < per_pose_count {
            attempts += 1;
            if attempts > per_pose_count.max(1) * 10_000 {
                return Err(Error::Numeric(format!(
                    "rejection sampling stalled for stable pose {pose_idx}"
                )));
            }
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let standoff = rng.gen_range(task.standoff_range.0..task.standoff_range.1);
            let z = rng.gen_range(task.height_range.0..task.height_range.1);
            let spread = task.spread_target
                + if task.spread_jitter > 0.0 {
                    rng.gen_range(-task.spread_jitter..task.spread_jitter)
                } else {
                    0.0
                };
            let record = GraspRecord {
                grasp: task.manifold_config(phi, standoff, z, spread),
                plane: *pose,
                label: Some(pose_idx as i32),
            };
            if oracle_success(task, &record)?.success {
                records.push(record);
                accepted += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(Error::DegenerateDataset {
            dimension: "(empty dataset)".to_string(),
        });
    }
    GraspDataset::from_records(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    /// Mean position reconstruction error over training records, meters.
    pub mean_position_error_m: f64,
    /// Mean orientation reconstruction error over training records, degrees.
    pub mean_orientation_error_deg: f64,
    /// Share of prior samples judged successful by the oracle, in [0, 1].
    pub success_share: f64,
}

/// Reconstruction metrics over the training records (encode-mean then
/// decode), plus the oracle success share over `n_samples` prior draws with
/// the given plane.
pub fn evaluate_model<R: Rng>(
    model: &HggModel,
    task: &SyntheticGraspTask,
    dataset: &GraspDataset,
    plane: &TabletopPlane,
    n_samples: usize,
    rng: &mut R,
) -> Result<ModelMetrics> {
    let errors: Vec<Result<(f64, f64)>> = par::map(&dataset.records, |record| {
        let dist = encode(model, record)?;
        let recon = decode(model, &dist.means, &record.plane)?;
        let dp: f64 = (0..3)
            .map(|i| (recon.position[i] - record.grasp.position[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let dq = quaternion_angle_deg(recon.orientation, record.grasp.orientation);
        Ok((dp, dq))
    });
    let mut pos_sum = 0.0;
    let mut ori_sum = 0.0;
    for e in errors {
        let (dp, dq) = e?;
        pos_sum += dp;
        ori_sum += dq;
    }
    let n = dataset.len() as f64;

    let samples = sample_prior(model, plane, n_samples, rng)?;
    let verdicts: Vec<Result<bool>> = par::map(&samples, |g| {
        let record = GraspRecord {
            grasp: g.config,
            plane: g.plane,
            label: None,
        };
        Ok(oracle_success(task, &record)?.success)
    });
    let mut successes = 0usize;
    for v in &verdicts {
        if *v.as_ref().map_err(|e| Error::Usage(e.to_string()))? {
            successes += 1;
        }
    }
    Ok(ModelMetrics {
        mean_position_error_m: pos_sum / n,
        mean_orientation_error_deg: ori_sum / n,
        success_share: if n_samples == 0 {
            0.0
        } else {
            successes as f64 / n_samples as f64
        },
    })
}

// ---------------------------------------------------------------------------
// Spearman rank correlation

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0; // ties share the mean rank
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average-fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Usage(
            "spearman needs two equal-length series of length >= 2".into(),
        ));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

// ---------------------------------------------------------------------------
// hyperparameter sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Target parameter counts; each run uses the architecture sized closest
    /// to the target.
    pub network_sizes: Vec<usize>,
    pub latent_dims: Vec<usize>,
    pub kl_coefficients: Vec<f64>,
}

impl SweepGrid {
    fn validate(&self) -> Result<()> {
        if self.network_sizes.is_empty()
            || self.latent_dims.is_empty()
            || self.kl_coefficients.is_empty()
        {
            return Err(Error::Usage("sweep grid has an empty axis".into()));
        }
        for &s in &self.network_sizes {
            if !(12_000..=30_000).contains(&s) {
                return Err(Error::Usage(format!(
                    "network size {s} outside the 12000..30000 sweep range"
                )));
            }
        }
        for &n in &self.latent_dims {
            if !(2..=6).contains(&n) {
                return Err(Error::Usage(format!(
                    "latent dim {n} outside the 2..6 sweep range"
                )));
            }
        }
        for &b in &self.kl_coefficients {
            if !(0.0002..=0.01).contains(&b) {
                return Err(Error::Usage(format!(
                    "kl coefficient {b} outside the 0.0002..0.01 sweep range"
                )));
            }
        }
        Ok(())
    }
}

/// One (hyperparameters -> indicators) row of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub network_size: usize,
    pub latent_dim: usize,
    pub kl_coefficient: f64,
    pub seed: u64,
    /// Final-epoch reconstruction loss (normalized units, all 8 parameters).
    pub reconstruction_error: f64,
    /// Final-epoch batch-mean KL divergence per latent variable.
    pub final_kl: f64,
    pub used_latent_variables: usize,
    pub success_share: f64,
}

pub const SWEEP_INDICATORS: [&str; 4] = [
    "used_latent_variables",
    "reconstruction_error",
    "kl_divergence",
    "success_share",
];
pub const SWEEP_HYPERPARAMETERS: [&str; 3] = ["latent_dim", "kl_coefficient", "network_size"];

/// 4 indicators x 3 hyperparameters Spearman table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub indicators: Vec<String>,
    pub hyperparameters: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationTable {
    pub fn get(&self, indicator: &str, hyperparameter: &str) -> Option<f64> {
        let i = self.indicators.iter().position(|s| s == indicator)?;
        let j = self.hyperparameters.iter().position(|s| s == hyperparameter)?;
        Some(self.values[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub correlations: CorrelationTable,
    /// Runs that failed, excluded from the correlations.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub per_pose_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_samples: usize,
    /// Seed for the shared primitive dataset.
    pub data_seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            per_pose_count: 75,
            epochs: 800,
            batch_size: 16,
            learning_rate: 1e-3,
            eval_samples: 500,
            data_seed: 7,
        }
    }
}

fn run_trial(
    task: &SyntheticGraspTask,
    dataset: &GraspDataset,
    settings: &SweepSettings,
    network_size: usize,
    latent_dim: usize,
    kl_coefficient: f64,
    seed: u64,
) -> Result<SweepRecord> {
    let arch = HggArchitecture::with_target_params(latent_dim, network_size);
    let config = TrainingConfig {
        kl_coefficient,
        epochs: settings.epochs,
        batch_size: settings.batch_size.min(dataset.len()),
        learning_rate: settings.learning_rate,
        seed,
    };
    let (model, report) = train(dataset, &arch, &config)?;
    let last = report.epoch_losses.last().expect("at least one epoch");
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let metrics = evaluate_model(
        &model,
        task,
        dataset,
        &task.stable_poses[0],
        settings.eval_samples,
        &mut eval_rng,
    )?;
    Ok(SweepRecord {
        network_size: arch.parameter_count(),
        latent_dim,
        kl_coefficient,
        seed,
        reconstruction_error: last.position + last.orientation + last.spread,
        // The KL indicator is reported per latent variable so that it tracks
        // how much information each coordinate carries, independently of how
        // many coordinates the model has.
        final_kl: last.kl / latent_dim as f64,
        used_latent_variables: report.used_latent_variables,
        success_share: metrics.success_share,
    })
}

/// Trains one model per grid point per seed (in parallel with the `parallel`
/// feature), records the indicators and emits the Spearman table. Failed
/// runs are reported and excluded from the correlations.
pub fn run_sweep(
    task: &SyntheticGraspTask,
    grid: &SweepGrid,
    seeds: &[u64],
    settings: &SweepSettings,
) -> Result<SweepOutcome> {
    grid.validate()?;
    if seeds.is_empty() {
        return Err(Error::Usage("at least one seed required".into()));
    }
    task.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(settings.data_seed);
    let dataset = generate_primitives(task, settings.per_pose_count, &mut data_rng)?;

    let mut jobs = Vec::new();
    for &size in &grid.network_sizes {
        for &n in &grid.latent_dims {
            for &beta in &grid.kl_coefficients {
                for &seed in seeds {
                    jobs.push((size, n, beta, seed));
                }
            }
        }
    }
    let results = par::map(&jobs, |&(size, n, beta, seed)| {
        run_trial(task, &dataset, settings, size, n, beta, seed)
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for ((size, n, beta, seed), result) in jobs.into_iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(e) => failures.push(format!(
                "size={size} latent={n} beta={beta} seed={seed}: {e}"
            )),
        }
    }
    if records.len() < 2 {
        return Err(Error::Usage(
            "too few successful runs to correlate".into(),
        ));
    }

    let hyper_cols: [Vec<f64>; 3] = [
        records.iter().map(|r| r.latent_dim as f64).collect(),
        records.iter().map(|r| r.kl_coefficient).collect(),
        records.iter().map(|r| r.network_size as f64).collect(),
    ];
    let indicator_rows: [Vec<f64>; 4] = [
        records
            .iter()
            .map(|r| r.used_latent_variables as f64)
            .collect(),
        records.iter().map(|r| r.reconstruction_error).collect(),
        records.iter().map(|r| r.final_kl).collect(),
        records.iter().map(|r| r.success_share).collect(),
    ];
    let mut values = Vec::with_capacity(4);
    for row in &indicator_rows {
        let mut cells = Vec::with_capacity(3);
        for col in &hyper_cols {
            // a constant axis (single grid value) yields an undefined
            // correlation; report NaN rather than failing the sweep
            cells.push(spearman(col, row).unwrap_or(f64::NAN));
        }
        values.push(cells);
    }
    Ok(SweepOutcome {
        records,
        correlations: CorrelationTable {
            indicators: SWEEP_INDICATORS.iter().map(|s| s.to_string()).collect(),
            hyperparameters: SWEEP_HYPERPARAMETERS.iter().map(|s| s.to_string()).collect(),
            values,
        },
        failures,
    })
}

pub const SWEEP_CSV_HEADER: &str =
    "network_size,latent_dim,kl_coefficient,seed,reconstruction_error,final_kl,used_latent_variables,success_share";

pub fn write_sweep_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{SWEEP_CSV_HEADER}")?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            r.network_size,
            r.latent_dim,
            r.kl_coefficient,
            r.seed,
            r.reconstruction_error,
            r.final_kl,
            r.used_latent_variables,
            r.success_share
        )?;
    }
    file.flush()?;
    Ok(())
}
