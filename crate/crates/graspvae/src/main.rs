//! Batch command-line entry point for the grasp-space pipeline: synthetic
//! data generation, VAE training, grasp generation, latent sweeps, dimension
//! estimation, evaluation and hyperparameter sweeps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use graspvae::dim_estimator::{estimate_dimension, Kernel, KpcaConfig};
use graspvae::eval_harness::{
    evaluate_model, generate_primitives, run_sweep, write_sweep_csv, SweepGrid, SweepSettings,
    SyntheticGraspTask,
};
use graspvae::grasp_data::{export_csv, load_dataset, normalize, save_dataset, TabletopPlane};
use graspvae::hgg_vae::{
    load_model, save_model, train, write_loss_log, HggArchitecture, TrainingConfig,
};
use graspvae::latent_explorer::{sample_prior, sweep, write_csv, write_jsonl, SweepPlan};
use graspvae::{Error, Result};

#[derive(Parser)]
#[command(
    name = "graspvae",
    about = "Model and explore an underactuated gripper's grasp space with a conditional VAE",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic primitive grasp dataset
    GenData(GenDataArgs),
    /// Train a grasp-generator VAE on a dataset
    Train(TrainArgs),
    /// Decode grasps from standard-normal prior samples
    Generate(GenerateArgs),
    /// Decode grasps along circles in the latent space
    SweepLatent(SweepLatentArgs),
    /// Estimate the grasp-space intrinsic dimension with kernel-PCA
    EstimateDim(EstimateDimArgs),
    /// Evaluate a trained model against the synthetic grasp oracle
    Eval(EvalArgs),
    /// Run a hyperparameter grid sweep and report Spearman correlations
    HpSweep(HpSweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Task definition JSON; the built-in cylinder task when omitted
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Primitives per stable pose
    #[arg(long, default_value_t = 75)]
    per_pose: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a 13-column CSV for spreadsheet inspection
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    latent_dim: usize,
    /// KL divergence coefficient (beta)
    #[arg(long, default_value_t = 0.0005)]
    kl_coeff: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target total parameter count; sizes the main widths
    #[arg(long, default_value_t = 30_000)]
    target_params: usize,
    /// Optional per-epoch loss CSV
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Tabletop plane "a,b,c,d"
    #[arg(long, value_parser = parse_plane)]
    plane: TabletopPlane,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepLatentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = parse_plane)]
    plane: TabletopPlane,
    /// Circle diameters in latent units
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
    diameters: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    points: usize,
    /// The two latent axes swept, "i,j"
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0, 1])]
    axes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateDimArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    kernel: KernelArg,
    /// RBF bandwidth; median heuristic when omitted
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    /// Optional JSON spectrum report
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Index into the task's stable poses
    #[arg(long, default_value_t = 0)]
    plane_index: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct HpSweepArgs {
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_json: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [13_000usize, 30_000])]
    net_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 6])]
    latent_dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0002, 0.01])]
    kl_coeffs: Vec<f64>,
    #[arg(long, default_value_t = 800)]
    epochs: usize,
    #[arg(long, default_value_t = 75)]
    per_pose: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Worker pool size; defaults to the number of cores
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_plane(s: &str) -> std::result::Result<TabletopPlane, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("plane must be 'a,b,c,d': {e}"))?;
    if parts.len() != 4 {
        return Err(format!("plane needs 4 coefficients, got {}", parts.len()));
    }
    TabletopPlane::new([parts[0], parts[1], parts[2], parts[3]]).map_err(|e| e.to_string())
}

fn load_task(path: &Option<PathBuf>) -> Result<SyntheticGraspTask> {
    match path {
        Some(p) => SyntheticGraspTask::load(p),
        None => Ok(SyntheticGraspTask::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let task = load_task(&args.task)?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let dataset = generate_primitives(&task, args.per_pose, &mut rng)?;
            save_dataset(&dataset, &args.out)?;
            if let Some(csv) = &args.csv {
                export_csv(&dataset, csv)?;
            }
            log::info!("wrote {} records to {}", dataset.len(), args.out.display());
            println!("records: {}", dataset.len());
        }
        Command::Train(args) => {
            let dataset = load_dataset(&args.data)?;
            let arch = HggArchitecture::with_target_params(args.latent_dim, args.target_params);
            let config = TrainingConfig {
                kl_coefficient: args.kl_coeff,
                epochs: args.epochs,
                batch_size: args.batch_size,
                learning_rate: args.learning_rate,
                seed: args.seed,
            };
            let (model, report) = train(&dataset, &arch, &config)?;
            save_model(&model, &args.out)?;
            if let Some(log_path) = &args.loss_log {
                write_loss_log(&report, log_path)?;
            }
            let last = report.epoch_losses.last().expect("epochs >= 1");
            println!(
                "parameters: {}\nfinal reconstruction: position {:.6} orientation {:.6} spread {:.6}\nfinal kl: {:.6}\nused latent variables: {}/{}",
                model.count_parameters(),
                last.position,
                last.orientation,
                last.spread,
                last.kl,
                report.used_latent_variables,
                model.arch.latent_dim
            );
        }
        Command::Generate(args) => {
            let model = load_model(&args.model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let grasps = sample_prior(&model, &args.plane, args.count, &mut rng)?;
            write_jsonl(&grasps, &args.out)?;
            if let Some(csv) = &args.csv {
                write_csv(&grasps, csv)?;
            }
            println!("generated: {}", grasps.len());
        }
        Command::SweepLatent(args) => {
            let model = load_model(&args.model)?;
            let plan = SweepPlan {
                center: vec![0.0; model.arch.latent_dim],
                diameters: args.diameters,
                points_per_circle: args.points,
                plane: args.plane,
                axis_pair: (args.axes[0], args.axes[1]),
            };
            let grasps = sweep(&model, &plan)?;
            write_jsonl(&grasps, &args.out)?;
            if let Some(csv) = &args.csv {
                write_csv(&grasps, csv)?;
            }
            println!("sweep points: {}", grasps.len());
        }
        Command::EstimateDim(args) => {
            let dataset = load_dataset(&args.data)?;
            let configs: Vec<Vec<f64>> = dataset
                .records
                .iter()
                .map(|r| normalize(r, &dataset.stats).0[0..8].to_vec())
                .collect();
            let config = KpcaConfig {
                kernel: match args.kernel {
                    KernelArg::Rbf => Kernel::Rbf,
                    KernelArg::Linear => Kernel::Linear,
                },
                gamma: args.gamma,
                threshold: args.threshold,
            };
            let report = estimate_dimension(&configs, &config)?;
            if report.degenerate {
                println!("warning: centered kernel matrix vanished (identical points)");
            }
            println!("rank eigenvalue cumulative");
            for (i, (ev, cum)) in report
                .eigenvalues
                .iter()
                .zip(report.cumulative.iter())
                .take(12)
                .enumerate()
            {
                println!("{:4} {:12.6e} {:8.4}", i + 1, ev, cum);
            }
            println!("estimated dimension: {}", report.dimension);
            if let Some(json) = &args.json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format {
                    line: 0,
                    message: e.to_string(),
                })?;
                std::fs::write(json, text)?;
            }
        }
        Command::Eval(args) => {
            let model = load_model(&args.model)?;
            let task = load_task(&args.task)?;
            let dataset = load_dataset(&args.data)?;
            let plane = *task
                .stable_poses
                .get(args.plane_index)
                .ok_or_else(|| Error::Usage(format!(
                    "plane index {} out of range ({} stable poses)",
                    args.plane_index,
                    task.stable_poses.len()
                )))?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let metrics = evaluate_model(&model, &task, &dataset, &plane, args.samples, &mut rng)?;
            println!(
                "mean position error (m): {:.6}\nmean orientation error (deg): {:.4}\nsuccess share (%): {:.1}",
                metrics.mean_position_error_m,
                metrics.mean_orientation_error_deg,
                100.0 * metrics.success_share
            );
        }
        Command::HpSweep(args) => {
            #[cfg(feature = "parallel")]
            if let Some(jobs) = args.jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                    .map_err(|e| Error::Usage(format!("worker pool: {e}")))?;
            }
            #[cfg(not(feature = "parallel"))]
            if args.jobs.is_some() {
                log::warn!("--jobs ignored: built without the 'parallel' feature");
            }
            let task = load_task(&args.task)?;
            let grid = SweepGrid {
                network_sizes: args.net_sizes,
                latent_dims: args.latent_dims,
                kl_coefficients: args.kl_coeffs,
            };
            let settings = SweepSettings {
                per_pose_count: args.per_pose,
                epochs: args.epochs,
                data_seed: args.data_seed,
                ..SweepSettings::default()
            };
            let outcome = run_sweep(&task, &grid, &args.seeds, &settings)?;
            write_sweep_csv(&outcome.records, &args.out_csv)?;
            let text =
                serde_json::to_string_pretty(&outcome.correlations).map_err(|e| Error::Format {
                    line: 0,
                    message: e.to_string(),
                })?;
            std::fs::write(&args.out_json, text)?;
            println!("runs: {} ({} failed)", outcome.records.len(), outcome.failures.len());
            for failure in &outcome.failures {
                eprintln!("failed run: {failure}");
            }
            println!("spearman table (rows: indicators, cols: latent_dim, kl_coefficient, network_size)");
            for (name, row) in outcome
                .correlations
                .indicators
                .iter()
                .zip(outcome.correlations.values.iter())
            {
                println!(
                    "{:26} {:+.3} {:+.3} {:+.3}",
                    name, row[0], row[1], row[2]
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GRASPVAE_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
