//! The conditional grasp-generator VAE: four input heads feeding a main
//! encoder, a latent Gaussian layer, and a mirrored decoder conditioned on
//! the tabletop plane, with three output heads (sigmoid position, normalized
//! quaternion, sigmoid spread). Training is plain minibatch Adam on
//! per-parameter batch-mean MSE plus a beta-weighted KL term.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense_nn::{
    Activation, AdamConfig, AdamState, DenseNetwork, ForwardCache, LayerSpec, NetworkGradients,
};
use crate::grasp_data::{
    denormalize, normalize, normalize_plane, GraspConfiguration, GraspDataset, GraspRecord,
    NormalizationStats, TabletopPlane,
};
use crate::{Error, Result};

/// Mean per-latent KL (nats) above which a latent variable counts as used.
pub const USED_LATENT_KL_THRESHOLD: f64 = 0.05;

pub const MODEL_FORMAT_VERSION: u32 = 1;

// network indices inside HggModel::nets
const ENC_POS: usize = 0;
const ENC_ORI: usize = 1;
const ENC_SPREAD: usize = 2;
const ENC_TABLE: usize = 3;
const ENC_MAIN: usize = 4;
const DEC_TABLE: usize = 5;
const DEC_MAIN: usize = 6;
const DEC_POS: usize = 7;
const DEC_ORI: usize = 8;
const DEC_SPREAD: usize = 9;
const NET_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HggArchitecture {
    /// Latent space dimension n.
    pub latent_dim: usize,
    /// Hidden width of every input/output head.
    pub head_hidden: usize,
    /// Output width of every input head (the conditioner width as well).
    pub head_out: usize,
    /// Hidden widths of the main encoding network; the main decoding network
    /// mirrors them reversed.
    pub main_widths: Vec<usize>,
}

impl Default for HggArchitecture {
    fn default() -> Self {
        // lands at 30398 parameters for n = 3, inside the ~30k budget
        Self {
            latent_dim: 3,
            head_hidden: 16,
            head_out: 16,
            main_widths: vec![96, 80],
        }
    }
}

impl HggArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Shape("latent_dim must be >= 1".into()));
        }
        if self.head_hidden == 0 || self.head_out == 0 {
            return Err(Error::Shape("head widths must be >= 1".into()));
        }
        if self.main_widths.is_empty() || self.main_widths.contains(&0) {
            return Err(Error::Shape("main widths must be nonempty and >= 1".into()));
        }
        Ok(())
    }

    fn head_specs(&self, input: usize, activation: Activation) -> Vec<LayerSpec> {
        vec![
            LayerSpec {
                input_width: input,
                output_width: self.head_hidden,
                activation: Activation::Tanh,
            },
            LayerSpec {
                input_width: self.head_hidden,
                output_width: self.head_out,
                activation,
            },
        ]
    }

    fn encoder_main_specs(&self) -> Vec<LayerSpec> {
        let mut widths = vec![4 * self.head_out];
        widths.extend_from_slice(&self.main_widths);
        widths.push(2 * self.latent_dim);
        chain_specs(&widths, Activation::Linear)
    }

    fn decoder_main_specs(&self) -> Vec<LayerSpec> {
        let mut widths = vec![self.latent_dim + self.head_out];
        widths.extend(self.main_widths.iter().rev());
        chain_specs(&widths, Activation::Tanh)
    }

    fn output_head_specs(&self, output: usize, activation: Activation) -> Vec<LayerSpec> {
        let main_out = *self.main_widths.first().expect("validated");
        vec![
            LayerSpec {
                input_width: main_out,
                output_width: self.head_hidden,
                activation: Activation::Tanh,
            },
            LayerSpec {
                input_width: self.head_hidden,
                output_width: output,
                activation,
            },
        ]
    }

    fn all_specs(&self) -> [Vec<LayerSpec>; NET_COUNT] {
        [
            self.head_specs(3, Activation::Tanh),
            self.head_specs(4, Activation::Tanh),
            self.head_specs(1, Activation::Tanh),
            self.head_specs(4, Activation::Tanh),
            self.encoder_main_specs(),
            self.head_specs(4, Activation::Tanh),
            self.decoder_main_specs(),
            self.output_head_specs(3, Activation::Sigmoid),
            self.output_head_specs(4, Activation::QuaternionNormalizer),
            self.output_head_specs(1, Activation::Sigmoid),
        ]
    }

    /// Trainable-parameter count of the full VAE without building it.
    pub fn parameter_count(&self) -> usize {
        self.all_specs()
            .iter()
            .flatten()
            .map(|s| s.input_width * s.output_width + s.output_width)
            .sum()
    }

    /// Scales the main widths so the total parameter count lands as close as
    /// possible to `target`.
    pub fn with_target_params(latent_dim: usize, target: usize) -> Self {
        let base = Self {
            latent_dim,
            ..Self::default()
        };
        let mut best = base.clone();
        let mut best_err = usize::MAX;
        for scale in 5..=300 {
            let f = scale as f64 / 100.0;
            let candidate = Self {
                latent_dim,
                head_hidden: 16,
                head_out: 16,
                main_widths: base
                    .main_widths
                    .iter()
                    .map(|w| ((*w as f64 * f).round() as usize).max(2))
                    .collect(),
            };
            let err = candidate.parameter_count().abs_diff(target);
            if err < best_err {
                best_err = err;
                best = candidate;
            }
        }
        best
    }
}

fn chain_specs(widths: &[usize], last_activation: Activation) -> Vec<LayerSpec> {
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            input_width: w[0],
            output_width: w[1],
            activation: if i + 2 == widths.len() {
                last_activation
            } else {
                Activation::Tanh
            },
        })
        .collect()
}

/// Per-sample latent posterior: n means and n log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDistribution {
    pub means: Vec<f64>,
    pub log_variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub kl_coefficient: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            kl_coefficient: 0.0005,
            epochs: 2000,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Sum over the 3 position parameters of batch-mean squared error.
    pub position: f64,
    /// Sum over the 4 quaternion parameters (sign-canonicalized targets).
    pub orientation: f64,
    /// Batch-mean squared error on the spread parameter.
    pub spread: f64,
    /// Batch-mean of the per-sample KL sums.
    pub kl: f64,
    /// position + orientation + spread + beta * kl.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<LossBreakdown>,
    /// Dataset-mean KL per latent variable after training.
    pub final_latent_kl: Vec<f64>,
    pub used_latent_variables: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HggModel {
    pub arch: HggArchitecture,
    pub stats: NormalizationStats,
    pub nets: Vec<DenseNetwork>,
}

/// Builds an untrained model wired per the architecture; weights are
/// Glorot-uniform from the given seed.
pub fn build_hgg(
    arch: &HggArchitecture,
    stats: &NormalizationStats,
    seed: u64,
) -> Result<HggModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nets = arch
        .all_specs()
        .iter()
        .map(|specs| DenseNetwork::new(specs, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(HggModel {
        arch: arch.clone(),
        stats: *stats,
        nets,
    })
}

impl HggModel {
    pub fn count_parameters(&self) -> usize {
        self.nets.iter().map(|n| n.count_parameters()).sum()
    }
}

struct EncodeCache {
    heads: [ForwardCache; 4],
    main: ForwardCache,
    mu: Vec<f64>,
    lv: Vec<f64>,
}

fn encode_cached(model: &HggModel, input: &[f64]) -> Result<EncodeCache> {
    let pos = model.nets[ENC_POS].forward(&input[0..3])?;
    let ori = model.nets[ENC_ORI].forward(&input[3..7])?;
    let spread = model.nets[ENC_SPREAD].forward(&input[7..8])?;
    let table = model.nets[ENC_TABLE].forward(&input[8..12])?;
    let mut concat = Vec::with_capacity(4 * model.arch.head_out);
    for h in [&pos, &ori, &spread, &table] {
        concat.extend_from_slice(&h.output);
    }
    let main = model.nets[ENC_MAIN].forward(&concat)?;
    let n = model.arch.latent_dim;
    let mu = main.output[0..n].to_vec();
    let lv = main.output[n..2 * n].to_vec();
    Ok(EncodeCache {
        heads: [pos, ori, spread, table],
        main,
        mu,
        lv,
    })
}

struct DecodeCache {
    table: ForwardCache,
    main: ForwardCache,
    heads: [ForwardCache; 3],
    /// Normalized 8-vector [pos, quat, spread].
    output: Vec<f64>,
}

fn decode_cached(model: &HggModel, latent: &[f64], plane_input: &[f64; 4]) -> Result<DecodeCache> {
    if latent.len() != model.arch.latent_dim {
        return Err(Error::Shape(format!(
            "latent width {} does not match model latent_dim {}",
            latent.len(),
            model.arch.latent_dim
        )));
    }
    let table = model.nets[DEC_TABLE].forward(plane_input)?;
    let mut concat = Vec::with_capacity(latent.len() + table.output.len());
    concat.extend_from_slice(latent);
    concat.extend_from_slice(&table.output);
    let main = model.nets[DEC_MAIN].forward(&concat)?;
    let pos = model.nets[DEC_POS].forward(&main.output)?;
    let ori = model.nets[DEC_ORI].forward(&main.output)?;
    let spread = model.nets[DEC_SPREAD].forward(&main.output)?;
    let mut output = Vec::with_capacity(8);
    output.extend_from_slice(&pos.output);
    output.extend_from_slice(&ori.output);
    output.extend_from_slice(&spread.output);
    Ok(DecodeCache {
        table,
        main,
        heads: [pos, ori, spread],
        output,
    })
}

/// Deterministic posterior parameters for one record.
pub fn encode(model: &HggModel, record: &GraspRecord) -> Result<LatentDistribution> {
    let (input, _) = normalize(record, &model.stats);
    let cache = encode_cached(model, &input)?;
    Ok(LatentDistribution {
        means: cache.mu,
        log_variances: cache.lv,
    })
}

/// z = mu + eps * exp(0.5 * log_variance), eps i.i.d. standard normal.
pub fn reparameterize<R: Rng>(dist: &LatentDistribution, rng: &mut R) -> Vec<f64> {
    dist.means
        .iter()
        .zip(dist.log_variances.iter())
        .map(|(mu, lv)| {
            let eps: f64 = rng.sample(StandardNormal);
            mu + eps * (0.5 * lv).exp()
        })
        .collect()
}

/// Decodes a latent point into a physical grasp configuration for the given
/// tabletop plane.
pub fn decode(model: &HggModel, latent: &[f64], plane: &TabletopPlane) -> Result<GraspConfiguration> {
    let plane_input = normalize_plane(plane, &model.stats);
    let cache = decode_cached(model, latent, &plane_input)?;
    Ok(denormalize(&cache.output, &model.stats)?.config)
}

/// Closed-form KL(q || N(0, I)) per latent variable, and the sum.
pub fn kl_divergence(dist: &LatentDistribution) -> (Vec<f64>, f64) {
    let per_var: Vec<f64> = dist
        .means
        .iter()
        .zip(dist.log_variances.iter())
        .map(|(mu, lv)| 0.5 * (mu * mu + lv.exp() - 1.0 - lv))
        .collect();
    let sum = per_var.iter().sum();
    (per_var, sum)
}

/// Composite loss over a batch with caller-supplied noise draws (one
/// `latent_dim`-vector per record). Exposed so tests can pin eps = 0.
pub fn loss_with_noise(
    model: &HggModel,
    batch: &[GraspRecord],
    beta: f64,
    noise: &[Vec<f64>],
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Usage("loss over an empty batch".into()));
    }
    if noise.len() != batch.len() {
        return Err(Error::Usage("one noise vector per record required".into()));
    }
    let mut sq = [0.0; 8];
    let mut kl_total = 0.0;
    for (record, eps) in batch.iter().zip(noise.iter()) {
        let (input, _) = normalize(record, &model.stats);
        let enc = encode_cached(model, &input)?;
        let z: Vec<f64> = enc
            .mu
            .iter()
            .zip(enc.lv.iter())
            .zip(eps.iter())
            .map(|((mu, lv), e)| mu + e * (0.5 * lv).exp())
            .collect();
        let plane_input = [input[8], input[9], input[10], input[11]];
        let dec = decode_cached(model, &z, &plane_input)?;
        for j in 0..8 {
            let d = dec.output[j] - input[j];
            sq[j] += d * d;
        }
        kl_total += kl_divergence(&LatentDistribution {
            means: enc.mu,
            log_variances: enc.lv,
        })
        .1;
    }
    let b = batch.len() as f64;
    Ok(breakdown(&sq, kl_total, b, beta))
}

fn breakdown(sq: &[f64; 8], kl_total: f64, count: f64, beta: f64) -> LossBreakdown {
    let position = (sq[0] + sq[1] + sq[2]) / count;
    let orientation = (sq[3] + sq[4] + sq[5] + sq[6]) / count;
    let spread = sq[7] / count;
    let kl = kl_total / count;
    LossBreakdown {
        position,
        orientation,
        spread,
        kl,
        total: position + orientation + spread + beta * kl,
    }
}

/// Composite loss with noise drawn from `rng`.
pub fn loss<R: Rng>(
    model: &HggModel,
    batch: &[GraspRecord],
    beta: f64,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let n = model.arch.latent_dim;
    let noise: Vec<Vec<f64>> = batch
        .iter()
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    loss_with_noise(model, batch, beta, &noise)
}

struct ModelGradients {
    nets: Vec<NetworkGradients>,
}

impl ModelGradients {
    fn zeros_like(model: &HggModel) -> Self {
        Self {
            nets: model.nets.iter().map(NetworkGradients::zeros_like).collect(),
        }
    }
}

/// Forward + backward for one sample; accumulates gradients and returns the
/// per-parameter squared errors and the KL sum.
fn backprop_sample<R: Rng>(
    model: &HggModel,
    input: &[f64],
    inv_batch: f64,
    beta: f64,
    grads: &mut ModelGradients,
    rng: &mut R,
) -> Result<([f64; 8], f64)> {
    let n = model.arch.latent_dim;
    let enc = encode_cached(model, input)?;
    let eps: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let std: Vec<f64> = enc.lv.iter().map(|lv| (0.5 * lv).exp()).collect();
    let z: Vec<f64> = enc
        .mu
        .iter()
        .zip(std.iter())
        .zip(eps.iter())
        .map(|((mu, s), e)| mu + e * s)
        .collect();
    let plane_input = [input[8], input[9], input[10], input[11]];
    let dec = decode_cached(model, &z, &plane_input)?;

    let mut sq = [0.0; 8];
    let mut d_out = [0.0; 8];
    for j in 0..8 {
        let d = dec.output[j] - input[j];
        sq[j] = d * d;
        d_out[j] = 2.0 * d * inv_batch;
    }
    let (_, kl_sum) = kl_divergence(&LatentDistribution {
        means: enc.mu.clone(),
        log_variances: enc.lv.clone(),
    });

    // decoder output heads
    let main_out_width = model.nets[DEC_MAIN].output_width();
    let mut d_main_out = vec![0.0; main_out_width];
    for (head_idx, (net_idx, range)) in [(DEC_POS, 0..3), (DEC_ORI, 3..7), (DEC_SPREAD, 7..8)]
        .into_iter()
        .enumerate()
    {
        let (g, d_in) =
            model.nets[net_idx].backward(&dec.heads[head_idx], &d_out[range])?;
        grads.nets[net_idx].accumulate(&g);
        for (a, b) in d_main_out.iter_mut().zip(d_in.iter()) {
            *a += b;
        }
    }
    // main decoder
    let (g, d_concat) = model.nets[DEC_MAIN].backward(&dec.main, &d_main_out)?;
    grads.nets[DEC_MAIN].accumulate(&g);
    let (d_z, d_table_out) = d_concat.split_at(n);
    let (g, _) = model.nets[DEC_TABLE].backward(&dec.table, d_table_out)?;
    grads.nets[DEC_TABLE].accumulate(&g);

    // latent: z = mu + eps * exp(lv / 2); KL adds its own terms
    let scaled_beta = beta * inv_batch;
    let mut d_latent = Vec::with_capacity(2 * n);
    for i in 0..n {
        d_latent.push(d_z[i] + scaled_beta * enc.mu[i]);
    }
    for i in 0..n {
        d_latent.push(
            d_z[i] * eps[i] * 0.5 * std[i] + scaled_beta * 0.5 * (enc.lv[i].exp() - 1.0),
        );
    }

    // main encoder and input heads
    let (g, d_heads_concat) = model.nets[ENC_MAIN].backward(&enc.main, &d_latent)?;
    grads.nets[ENC_MAIN].accumulate(&g);
    let w = model.arch.head_out;
    for (slot, net_idx) in [ENC_POS, ENC_ORI, ENC_SPREAD, ENC_TABLE].into_iter().enumerate() {
        let seg = &d_heads_concat[slot * w..(slot + 1) * w];
        let (g, _) = model.nets[net_idx].backward(&enc.heads[slot], seg)?;
        grads.nets[net_idx].accumulate(&g);
    }
    Ok((sq, kl_sum))
}

/// Trains a fresh model on the dataset. Deterministic for a given seed.
pub fn train(
    dataset: &GraspDataset,
    arch: &HggArchitecture,
    config: &TrainingConfig,
) -> Result<(HggModel, TrainingReport)> {
    if config.kl_coefficient <= 0.0 {
        return Err(Error::Validation("kl_coefficient must be > 0".into()));
    }
    if config.batch_size == 0 || config.batch_size > dataset.len() {
        return Err(Error::Validation(format!(
            "batch_size {} must be in [1, {}]",
            config.batch_size,
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = build_hgg(arch, &dataset.stats, rng.gen())?;
    let mut optimizers: Vec<AdamState> = model
        .nets
        .iter()
        .map(|net| {
            AdamState::new(
                net,
                AdamConfig {
                    learning_rate: config.learning_rate,
                    ..AdamConfig::default()
                },
            )
        })
        .collect();

    let inputs: Vec<Vec<f64>> = dataset
        .records
        .iter()
        .map(|r| normalize(r, &dataset.stats).0)
        .collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sq = [0.0; 8];
        let mut epoch_kl = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let inv_batch = 1.0 / batch.len() as f64;
            let mut grads = ModelGradients::zeros_like(&model);
            for &sample in batch {
                let (sq, kl) = backprop_sample(
                    &model,
                    &inputs[sample],
                    inv_batch,
                    config.kl_coefficient,
                    &mut grads,
                    &mut rng,
                )?;
                for j in 0..8 {
                    epoch_sq[j] += sq[j];
                }
                epoch_kl += kl;
                if !kl.is_finite() || sq.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: format!("loss at epoch {epoch}, batch {batch_idx}"),
                    });
                }
            }
            for (net, (opt, g)) in model
                .nets
                .iter_mut()
                .zip(optimizers.iter_mut().zip(grads.nets.iter()))
            {
                opt.step(net, g).map_err(|e| match e {
                    Error::NonFinite { context } => Error::NonFinite {
                        context: format!("{context} at epoch {epoch}, batch {batch_idx}"),
                    },
                    other => other,
                })?;
            }
        }
        epoch_losses.push(breakdown(
            &epoch_sq,
            epoch_kl,
            dataset.len() as f64,
            config.kl_coefficient,
        ));
    }

    // per-latent mean KL over the training set
    let n = arch.latent_dim;
    let mut latent_kl = vec![0.0; n];
    for record in &dataset.records {
        let dist = encode(&model, record)?;
        let (per_var, _) = kl_divergence(&dist);
        for i in 0..n {
            latent_kl[i] += per_var[i];
        }
    }
    for v in &mut latent_kl {
        *v /= dataset.len() as f64;
    }
    let used = latent_kl
        .iter()
        .filter(|&&v| v > USED_LATENT_KL_THRESHOLD)
        .count();

    Ok((
        model,
        TrainingReport {
            epoch_losses,
            final_latent_kl: latent_kl,
            used_latent_variables: used,
        },
    ))
}

pub const LOSS_LOG_HEADER: &str = "epoch,recon_position,recon_orientation,recon_spread,kl,total";

pub fn write_loss_log(report: &TrainingReport, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{LOSS_LOG_HEADER}")?;
    for (epoch, l) in report.epoch_losses.iter().enumerate() {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            epoch, l.position, l.orientation, l.spread, l.kl, l.total
        )?;
    }
    file.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// model serialization

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: HggModel,
}

pub fn save_model(model: &HggModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::Format {
        line: 0,
        message: e.to_string(),
    })?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<HggModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        line: 0,
        message: e.to_string(),
    })?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format {
            line: 0,
            message: format!(
                "unsupported model format version {}",
                file.format_version
            ),
        });
    }
    Ok(file.model)
}
