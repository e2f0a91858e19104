//! Variational autoencoder used as the guests' self-taught feature extractor.
//!
//! Encoder and decoder are each a single-hidden-layer tanh MLP. The encoder's
//! final layer emits `2·n_z` values read as `(μ, log σ²)`; the reconstruction
//! term is squared error on standardized features and the KL term is the
//! closed form against a standard normal, weighted 1.0. Trained models are
//! frozen afterwards: a parameter fingerprint lets any consumer assert that
//! joint training never touched them.

use crate::error::{CoreError, Result};
use crate::loss::squared_error_loss;
use crate::matrix::Matrix2D;
use crate::model::{DenseLayer, Gradients, MlpModel};
use crate::optim::{adam_step, AdamState, TrainConfig};
use crate::rng::{standard_normal_matrix, stream_rng};
use crate::activation::ActivationKind;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// Network sizing rule: hidden width is five times the input features and the
/// latent width is half of them (floored).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VaeSizing {
    input_dim: usize,
    hidden_dim: usize,
    latent_dim: usize,
}

impl VaeSizing {
    pub fn for_input_dim(input_dim: usize) -> Result<Self> {
        if input_dim < 2 {
            return Err(CoreError::Empty(
                "VaeSizing requires at least 2 input features".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_dim: 5 * input_dim,
            latent_dim: input_dim / 2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// Whether joint training consumes the posterior mean or a sampled latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LatentMode {
    #[default]
    Mean,
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    pub encoder: MlpModel,
    pub decoder: MlpModel,
    latent_dim: usize,
}

impl VaeModel {
    pub fn new(encoder: MlpModel, decoder: MlpModel, latent_dim: usize) -> Result<Self> {
        if encoder.output_dim() != 2 * latent_dim {
            return Err(CoreError::ShapeMismatch {
                context: "VaeModel encoder output".into(),
                expected: format!("{} (2·n_z)", 2 * latent_dim),
                actual: format!("{}", encoder.output_dim()),
            });
        }
        if decoder.input_dim() != latent_dim {
            return Err(CoreError::ShapeMismatch {
                context: "VaeModel decoder input".into(),
                expected: format!("{latent_dim}"),
                actual: format!("{}", decoder.input_dim()),
            });
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(CoreError::ShapeMismatch {
                context: "VaeModel decoder output".into(),
                expected: format!("{}", encoder.input_dim()),
                actual: format!("{}", decoder.output_dim()),
            });
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
        })
    }

    pub fn seeded(sizing: VaeSizing, rng: &mut impl Rng) -> Result<Self> {
        let encoder = MlpModel::seeded(
            &[
                sizing.input_dim(),
                sizing.hidden_dim(),
                2 * sizing.latent_dim(),
            ],
            &[ActivationKind::Tanh, ActivationKind::Identity],
            rng,
        )?;
        let decoder = MlpModel::seeded(
            &[sizing.latent_dim(), sizing.hidden_dim(), sizing.input_dim()],
            &[ActivationKind::Tanh, ActivationKind::Identity],
            rng,
        )?;
        Self::new(encoder, decoder, sizing.latent_dim())
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Encoder pass, splitting the output into `(μ, log σ²)`.
    pub fn encode(&self, x: &Matrix2D) -> Result<(Matrix2D, Matrix2D)> {
        let out = self.encoder.predict(x)?;
        let mu = out.col_range(0, self.latent_dim)?;
        let logvar = out.col_range(self.latent_dim, 2 * self.latent_dim)?;
        Ok((mu, logvar))
    }

    /// Latents handed to the host: the deterministic mean by default, or a
    /// reparameterized sample when `Sampled` is selected.
    pub fn latents(&self, x: &Matrix2D, mode: LatentMode, rng: &mut impl Rng) -> Result<Matrix2D> {
        let (mu, logvar) = self.encode(x)?;
        match mode {
            LatentMode::Mean => Ok(mu),
            LatentMode::Sampled => {
                let noise = standard_normal_matrix(mu.rows(), mu.cols(), rng);
                reparameterize(&mu, &logvar, &noise)
            }
        }
    }

    /// Order-stable SHA-256 over every parameter, used to assert freezing.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for slice in self
            .encoder
            .param_slices()
            .into_iter()
            .chain(self.decoder.param_slices())
        {
            for v in slice {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Loss and gradients for one batch with the given noise draws.
    pub fn loss(&self, x: &Matrix2D, noise: &Matrix2D) -> Result<VaeLossOutput> {
        let (enc_out, enc_cache) = self.encoder.forward(x)?;
        let mu = enc_out.col_range(0, self.latent_dim)?;
        let logvar = enc_out.col_range(self.latent_dim, 2 * self.latent_dim)?;
        if !noise.same_shape(&mu) {
            return Err(CoreError::ShapeMismatch {
                context: "vae loss noise".into(),
                expected: format!("{}x{}", mu.rows(), mu.cols()),
                actual: format!("{}x{}", noise.rows(), noise.cols()),
            });
        }
        let z = reparameterize(&mu, &logvar, noise)?;
        let (recon_out, dec_cache) = self.decoder.forward(&z)?;
        let (recon, recon_grad) = squared_error_loss(&recon_out, x)?;
        let kl = kl_to_standard_normal(&mu, &logvar)?;

        let (decoder_grads, dz) = self.decoder.backward(&dec_cache, &recon_grad)?;

        let batch = x.rows() as f64;
        // dL/dμ = dz + μ/B ; dL/dlogvar = dz ⊙ ε ⊙ e^{lv/2}/2 + (e^{lv} − 1)/(2B)
        let mut dmu = dz.clone();
        for (g, &m) in dmu.data_mut().iter_mut().zip(mu.data()) {
            *g += m / batch;
        }
        let mut dlogvar = dz;
        for ((g, (&e, &lv)), _m) in dlogvar
            .data_mut()
            .iter_mut()
            .zip(noise.data().iter().zip(logvar.data()))
            .zip(mu.data())
        {
            *g = *g * e * (lv / 2.0).exp() * 0.5 + (lv.exp() - 1.0) / (2.0 * batch);
        }
        let enc_out_grad = Matrix2D::hstack(&[&dmu, &dlogvar])?;
        let (encoder_grads, _) = self.encoder.backward(&enc_cache, &enc_out_grad)?;

        Ok(VaeLossOutput {
            total: kl + recon,
            kl,
            recon,
            encoder_grads,
            decoder_grads,
        })
    }

    fn forward_cache_free(&self, x: &Matrix2D) -> Result<(Matrix2D, Matrix2D)> {
        self.encode(x)
    }
}

#[derive(Clone, Debug)]
pub struct VaeLossOutput {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
    pub encoder_grads: Gradients,
    pub decoder_grads: Gradients,
}

/// z = μ + exp(logvar / 2) ⊙ noise.
pub fn reparameterize(mu: &Matrix2D, logvar: &Matrix2D, noise: &Matrix2D) -> Result<Matrix2D> {
    if !mu.same_shape(logvar) || !mu.same_shape(noise) {
        return Err(CoreError::ShapeMismatch {
            context: "reparameterize".into(),
            expected: format!("{}x{}", mu.rows(), mu.cols()),
            actual: "mismatched logvar or noise".into(),
        });
    }
    let mut z = mu.clone();
    for (zv, (&lv, &e)) in z
        .data_mut()
        .iter_mut()
        .zip(logvar.data().iter().zip(noise.data()))
    {
        *zv += (lv / 2.0).exp() * e;
    }
    Ok(z)
}

/// Closed-form KL(N(μ, σ²) ‖ N(0, 1)) summed over latent dimensions and
/// averaged over the batch: ½ Σ (μ² + σ² − log σ² − 1).
pub fn kl_to_standard_normal(mu: &Matrix2D, logvar: &Matrix2D) -> Result<f64> {
    if !mu.same_shape(logvar) {
        return Err(CoreError::ShapeMismatch {
            context: "kl_to_standard_normal".into(),
            expected: format!("{}x{}", mu.rows(), mu.cols()),
            actual: format!("{}x{}", logvar.rows(), logvar.cols()),
        });
    }
    let mut total = 0.0;
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        total += 0.5 * (m * m + lv.exp() - lv - 1.0);
    }
    Ok(total / mu.rows() as f64)
}

#[derive(Clone, Debug)]
pub struct VaeEpochStats {
    pub epoch: usize,
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
}

/// Trains a fresh VAE on `data` (rows are samples, already standardized).
/// Initialization, shuffling, and noise are all derived from `config.rng_seed`.
pub fn train_vae(
    data: &Matrix2D,
    sizing: VaeSizing,
    config: &TrainConfig,
) -> Result<(VaeModel, Vec<VaeEpochStats>)> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(CoreError::Empty("train_vae: no rows".into()));
    }
    if data.cols() != sizing.input_dim() {
        return Err(CoreError::ShapeMismatch {
            context: "train_vae".into(),
            expected: format!("{} feature columns", sizing.input_dim()),
            actual: format!("{}", data.cols()),
        });
    }
    let mut init_rng = stream_rng(config.rng_seed, "vae-init", 0);
    let mut model = VaeModel::seeded(sizing, &mut init_rng)?;
    let mut noise_rng = stream_rng(config.rng_seed, "vae-noise", 0);

    let param_lens: Vec<usize> = model
        .encoder
        .param_slices()
        .iter()
        .chain(model.decoder.param_slices().iter())
        .map(|s| s.len())
        .collect();
    let mut adam = AdamState::new(&param_lens);

    let mut stats = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..data.rows()).collect();
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(config.rng_seed, "vae-shuffle", epoch as u64);
        indices.shuffle(&mut rng);
        let (mut total_sum, mut kl_sum, mut recon_sum) = (0.0, 0.0, 0.0);
        for (batch_no, batch_idx) in indices.chunks(config.batch_size).enumerate() {
            let x = data.select_rows(batch_idx)?;
            let noise = standard_normal_matrix(x.rows(), sizing.latent_dim(), &mut noise_rng);
            let out = model.loss(&x, &noise)?;
            if !out.total.is_finite() {
                return Err(CoreError::DivergedLoss {
                    epoch,
                    batch: batch_no,
                    loss: out.total,
                });
            }
            let w = batch_idx.len() as f64;
            total_sum += out.total * w;
            kl_sum += out.kl * w;
            recon_sum += out.recon * w;

            let grad_slices: Vec<&[f64]> = out
                .encoder_grads
                .slices()
                .into_iter()
                .chain(out.decoder_grads.slices())
                .collect();
            let mut params: Vec<&mut [f64]> = model
                .encoder
                .param_slices_mut()
                .into_iter()
                .chain(model.decoder.param_slices_mut())
                .collect();
            adam_step(&mut params, &grad_slices, &mut adam, config.learning_rate)?;
        }
        let n = data.rows() as f64;
        stats.push(VaeEpochStats {
            epoch,
            total: total_sum / n,
            kl: kl_sum / n,
            recon: recon_sum / n,
        });
    }
    Ok((model, stats))
}

/// Empirical per-dimension latent statistics and the aggregate distance to a
/// standard normal, measured on μ-plus-sampled-noise latents for the dataset.
#[derive(Clone, Debug)]
pub struct LatentStats {
    pub per_dim: Vec<(f64, f64)>,
    pub aggregate_kl: f64,
}

pub fn latent_gaussianity(
    model: &VaeModel,
    data: &Matrix2D,
    rng: &mut impl Rng,
) -> Result<LatentStats> {
    if data.rows() < 2 {
        return Err(CoreError::Empty("latent_gaussianity needs >= 2 rows".into()));
    }
    let (mu, logvar) = model.forward_cache_free(data)?;
    let noise = standard_normal_matrix(mu.rows(), mu.cols(), rng);
    let z = reparameterize(&mu, &logvar, &noise)?;
    Ok(gaussianity_of(&z))
}

/// Same statistic for raw samples; exposed so callers can baseline it against
/// exact standard-normal draws.
pub fn gaussianity_of(z: &Matrix2D) -> LatentStats {
    let n = z.rows() as f64;
    let mut per_dim = Vec::with_capacity(z.cols());
    let mut aggregate = 0.0;
    for d in 0..z.cols() {
        let mut mean = 0.0;
        for r in 0..z.rows() {
            mean += z.get(r, d);
        }
        mean /= n;
        let mut var = 0.0;
        for r in 0..z.rows() {
            var += (z.get(r, d) - mean).powi(2);
        }
        var /= n - 1.0;
        per_dim.push((mean, var));
        aggregate += 0.5 * (mean * mean + var - var.ln() - 1.0);
    }
    LatentStats {
        per_dim,
        aggregate_kl: aggregate,
    }
}

const MODEL_MAGIC: &[u8; 4] = b"SVAE";
const MODEL_VERSION: u8 = 1;

impl VaeModel {
    /// Versioned binary format: magic, version, latent width, per-layer
    /// dimensions and activation codes, little-endian f64 parameters, and the
    /// parameter fingerprint for freeze checks.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        w.write_all(&(self.latent_dim as u32).to_le_bytes())?;
        for mlp in [&self.encoder, &self.decoder] {
            w.write_all(&[mlp.layers.len() as u8])?;
            for layer in &mlp.layers {
                w.write_all(&(layer.input_dim() as u32).to_le_bytes())?;
                w.write_all(&(layer.output_dim() as u32).to_le_bytes())?;
                w.write_all(&[layer.activation.code()])?;
            }
        }
        for slice in self
            .encoder
            .param_slices()
            .into_iter()
            .chain(self.decoder.param_slices())
        {
            for v in slice {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&self.fingerprint())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(CoreError::ModelFormat("bad magic bytes".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != MODEL_VERSION {
            return Err(CoreError::ModelFormat(format!(
                "unsupported version {}",
                version[0]
            )));
        }
        let latent_dim = read_u32(r)? as usize;
        let mut nets = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut count = [0u8; 1];
            r.read_exact(&mut count)?;
            let mut dims = Vec::with_capacity(count[0] as usize);
            for _ in 0..count[0] {
                let input = read_u32(r)? as usize;
                let output = read_u32(r)? as usize;
                let mut code = [0u8; 1];
                r.read_exact(&mut code)?;
                dims.push((input, output, ActivationKind::from_code(code[0])?));
            }
            nets.push(dims);
        }
        let build = |dims: &[(usize, usize, ActivationKind)]| -> Result<MlpModel> {
            let layers = dims
                .iter()
                .map(|&(i, o, act)| {
                    DenseLayer::new(Matrix2D::zeros(o, i), vec![0.0; o], act)
                })
                .collect::<Result<Vec<_>>>()?;
            MlpModel::new(layers)
        };
        let mut encoder = build(&nets[0])?;
        let mut decoder = build(&nets[1])?;
        for slice in encoder
            .param_slices_mut()
            .into_iter()
            .chain(decoder.param_slices_mut())
        {
            for v in slice.iter_mut() {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        let model = VaeModel::new(encoder, decoder, latent_dim)?;
        let mut stored = [0u8; 32];
        r.read_exact(&mut stored)?;
        if stored != model.fingerprint() {
            return Err(CoreError::ModelFormat(
                "parameter fingerprint does not match".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut file)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn zero_weight_vae(input_dim: usize) -> VaeModel {
        let sizing = VaeSizing::for_input_dim(input_dim).unwrap();
        let encoder = MlpModel::new(vec![
            DenseLayer::new(
                Matrix2D::zeros(sizing.hidden_dim(), input_dim),
                vec![0.0; sizing.hidden_dim()],
                ActivationKind::Tanh,
            )
            .unwrap(),
            DenseLayer::new(
                Matrix2D::zeros(2 * sizing.latent_dim(), sizing.hidden_dim()),
                vec![0.0; 2 * sizing.latent_dim()],
                ActivationKind::Identity,
            )
            .unwrap(),
        ])
        .unwrap();
        let decoder = MlpModel::new(vec![
            DenseLayer::new(
                Matrix2D::zeros(sizing.hidden_dim(), sizing.latent_dim()),
                vec![0.0; sizing.hidden_dim()],
                ActivationKind::Tanh,
            )
            .unwrap(),
            DenseLayer::new(
                Matrix2D::zeros(input_dim, sizing.hidden_dim()),
                vec![0.0; input_dim],
                ActivationKind::Identity,
            )
            .unwrap(),
        ])
        .unwrap();
        VaeModel::new(encoder, decoder, sizing.latent_dim()).unwrap()
    }

    #[test]
    fn zero_weight_encoder_gives_zero_mu_and_logvar() {
        let model = zero_weight_vae(4);
        let mut rng = stream_rng(1, "x", 0);
        let x = crate::rng::uniform_matrix(3, 4, -2.0, 2.0, &mut rng);
        let (mu, logvar) = model.encode(&x).unwrap();
        assert!(mu.data().iter().all(|v| *v == 0.0));
        assert!(logvar.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cancer_guest_latent_width_is_fifteen() {
        let sizing = VaeSizing::for_input_dim(30).unwrap();
        assert_eq!(sizing.latent_dim(), 15);
        assert_eq!(sizing.hidden_dim(), 150);
    }

    #[test]
    fn encode_matches_forward_plus_column_split() {
        let mut rng = stream_rng(2, "vae", 0);
        let sizing = VaeSizing::for_input_dim(6).unwrap();
        let model = VaeModel::seeded(sizing, &mut rng).unwrap();
        let x = crate::rng::uniform_matrix(5, 6, -1.0, 1.0, &mut rng);
        let (mu, logvar) = model.encode(&x).unwrap();
        let full = model.encoder.predict(&x).unwrap();
        assert_eq!(full.col_range(0, 3).unwrap(), mu);
        assert_eq!(full.col_range(3, 6).unwrap(), logvar);
    }

    #[test]
    fn reparameterize_trivial_cases() {
        let mu = Matrix2D::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
        let logvar = Matrix2D::from_vec(1, 2, vec![0.3, 1.7]).unwrap();
        let zero_noise = Matrix2D::zeros(1, 2);
        assert_eq!(reparameterize(&mu, &logvar, &zero_noise).unwrap(), mu);

        let zero_logvar = Matrix2D::zeros(1, 2);
        let noise = Matrix2D::from_vec(1, 2, vec![0.5, -0.25]).unwrap();
        let z = reparameterize(&mu, &zero_logvar, &noise).unwrap();
        assert_eq!(z.data(), &[1.5, -2.25]);
    }

    #[test]
    fn reparameterize_sample_moments_match_mu_sigma() {
        // 1e5 draws: sample mean/variance within 4 standard errors
        let n = 100_000;
        let mu_val = 0.7;
        let lv_val = 0.5; // σ² = e^0.5
        let mu = Matrix2D::from_vec(n, 1, vec![mu_val; n]).unwrap();
        let logvar = Matrix2D::from_vec(n, 1, vec![lv_val; n]).unwrap();
        let mut rng = stream_rng(3, "mc", 0);
        let noise = standard_normal_matrix(n, 1, &mut rng);
        let z = reparameterize(&mu, &logvar, &noise).unwrap();
        let sigma2 = lv_val.exp();
        let mean: f64 = z.data().iter().sum::<f64>() / n as f64;
        let var: f64 =
            z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (sigma2 / n as f64).sqrt();
        let se_var = sigma2 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - mu_val).abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - sigma2).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn kl_trivial_cases() {
        let zero = Matrix2D::zeros(1, 3);
        assert_eq!(kl_to_standard_normal(&zero, &zero).unwrap(), 0.0);

        let mu = Matrix2D::from_vec(1, 1, vec![1.0]).unwrap();
        let lv = Matrix2D::zeros(1, 1);
        assert!((kl_to_standard_normal(&mu, &lv).unwrap() - 0.5).abs() < 1e-15);
    }

    /// 1-D quadrature oracle for KL(N(μ,σ²) ‖ N(0,1)) via Simpson's rule.
    fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
        let sigma = (logvar / 2.0).exp();
        let lo = mu - 14.0 * sigma.max(1.0);
        let hi = mu + 14.0 * sigma.max(1.0);
        let steps = 20_000usize; // even
        let h = (hi - lo) / steps as f64;
        let q = |z: f64| {
            let d = (z - mu) / sigma;
            (-0.5 * d * d).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let integrand = |z: f64| {
            let qz = q(z);
            if qz < 1e-300 {
                return 0.0;
            }
            // ln(q/p) for p standard normal
            let ln_ratio = -0.5 * ((z - mu) / sigma).powi(2) - sigma.ln() + 0.5 * z * z;
            qz * ln_ratio
        };
        let mut acc = integrand(lo) + integrand(hi);
        for i in 1..steps {
            let z = lo + i as f64 * h;
            acc += integrand(z) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn kl_closed_form_matches_quadrature() {
        let mus = [0.0, 0.5, -1.2, 2.0];
        let logvars = [0.0, -0.8, 0.9, 0.4];
        for (&m, &lv) in mus.iter().zip(&logvars) {
            let mu = Matrix2D::from_vec(1, 1, vec![m]).unwrap();
            let logvar = Matrix2D::from_vec(1, 1, vec![lv]).unwrap();
            let closed = kl_to_standard_normal(&mu, &logvar).unwrap();
            let numeric = kl_quadrature(m, lv);
            assert!(
                (closed - numeric).abs() < 1e-6,
                "mu {m} lv {lv}: {closed} vs {numeric}"
            );
        }
    }

    #[test]
    fn loss_is_additive_and_zero_at_perfect_reconstruction() {
        // zero-weight model reconstructs zero inputs exactly with μ = lv = 0
        let model = zero_weight_vae(4);
        let x = Matrix2D::zeros(3, 4);
        let noise = Matrix2D::zeros(3, 2);
        let out = model.loss(&x, &noise).unwrap();
        assert_eq!(out.total, 0.0);
        assert_eq!(out.kl, 0.0);
        assert_eq!(out.recon, 0.0);

        let mut rng = stream_rng(4, "addtv", 0);
        let sizing = VaeSizing::for_input_dim(5).unwrap();
        let model = VaeModel::seeded(sizing, &mut rng).unwrap();
        let x = crate::rng::uniform_matrix(7, 5, -1.0, 1.0, &mut rng);
        let noise = standard_normal_matrix(7, 2, &mut rng);
        let out = model.loss(&x, &noise).unwrap();
        assert_eq!(out.total, out.kl + out.recon);
        let (mu, logvar) = model.encode(&x).unwrap();
        let kl_direct = kl_to_standard_normal(&mu, &logvar).unwrap();
        assert!((out.kl - kl_direct).abs() < 1e-15);
    }

    #[test]
    fn vae_gradients_match_finite_differences() {
        let mut rng = stream_rng(5, "fd", 0);
        let sizing = VaeSizing::for_input_dim(3).unwrap();
        let mut model = VaeModel::seeded(sizing, &mut rng).unwrap();
        let x = crate::rng::uniform_matrix(4, 3, -1.0, 1.0, &mut rng);
        let noise = standard_normal_matrix(4, 1, &mut rng);
        let out = model.loss(&x, &noise).unwrap();
        let analytic: Vec<f64> = out
            .encoder_grads
            .slices()
            .into_iter()
            .chain(out.decoder_grads.slices())
            .flat_map(|s| s.to_vec())
            .collect();

        let h = 1e-5;
        let mut flat_idx = 0usize;
        let mut worst: f64 = 0.0;
        let n_params: usize = model.encoder.param_count() + model.decoder.param_count();
        for buf_idx in 0.. {
            let lens: Vec<usize> = model
                .encoder
                .param_slices()
                .iter()
                .chain(model.decoder.param_slices().iter())
                .map(|s| s.len())
                .collect();
            if buf_idx >= lens.len() {
                break;
            }
            for k in 0..lens[buf_idx] {
                let perturb = |model: &mut VaeModel, delta: f64| {
                    let mut slices: Vec<&mut [f64]> = model
                        .encoder
                        .param_slices_mut()
                        .into_iter()
                        .chain(model.decoder.param_slices_mut())
                        .collect();
                    slices[buf_idx][k] += delta;
                };
                perturb(&mut model, h);
                let plus = model.loss(&x, &noise).unwrap().total;
                perturb(&mut model, -2.0 * h);
                let minus = model.loss(&x, &noise).unwrap().total;
                perturb(&mut model, h);
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[flat_idx];
                let denom = numeric.abs().max(a.abs()).max(1e-6);
                worst = worst.max((numeric - a).abs() / denom);
                flat_idx += 1;
            }
        }
        assert_eq!(flat_idx, n_params);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let mut rng = stream_rng(6, "data", 0);
        let data = standard_normal_matrix(64, 4, &mut rng);
        let sizing = VaeSizing::for_input_dim(4).unwrap();
        let config = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.005,
            rng_seed: 9,
        };
        let (model_a, stats_a) = train_vae(&data, sizing, &config).unwrap();
        let (model_b, _) = train_vae(&data, sizing, &config).unwrap();
        assert!(stats_a.last().unwrap().total < stats_a[0].total);
        assert_eq!(model_a, model_b);
        assert_eq!(model_a.fingerprint(), model_b.fingerprint());
    }

    #[test]
    fn empty_data_is_rejected() {
        let sizing = VaeSizing::for_input_dim(4).unwrap();
        let data = Matrix2D::zeros(0, 4);
        assert!(train_vae(&data, sizing, &TrainConfig::default()).is_err());
    }

    #[test]
    fn gaussianity_of_standard_normal_samples_is_near_zero() {
        let mut rng = stream_rng(7, "gauss", 0);
        let z = standard_normal_matrix(20_000, 4, &mut rng);
        let stats = gaussianity_of(&z);
        assert!(stats.aggregate_kl < 0.002, "statistic {}", stats.aggregate_kl);
        for (mean, var) in stats.per_dim {
            assert!(mean.abs() < 0.05);
            assert!((var - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn zero_weight_encoder_latents_are_pure_noise() {
        let model = zero_weight_vae(4);
        let mut rng = stream_rng(8, "gauss", 0);
        let data = standard_normal_matrix(20_000, 4, &mut rng);
        let stats = latent_gaussianity(&model, &data, &mut rng).unwrap();
        for (mean, var) in stats.per_dim {
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn save_load_round_trip_preserves_fingerprint() {
        let mut rng = stream_rng(9, "io", 0);
        let sizing = VaeSizing::for_input_dim(6).unwrap();
        let model = VaeModel::seeded(sizing, &mut rng).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let loaded = VaeModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(model, loaded);
        assert_eq!(model.fingerprint(), loaded.fingerprint());

        // corrupt one parameter byte: fingerprint check must fail
        let param_offset = buf.len() - 33 - 8;
        buf[param_offset] ^= 0xFF;
        assert!(VaeModel::read_from(&mut buf.as_slice()).is_err());
    }
}
