//! Small convolutional digit classifier whose penultimate layer serves as
//! the feature space of the Fréchet distance.
//!
//! Layout: conv 1->8 (5x5), ReLU, 2x2 max-pool, conv 8->16 (5x5), ReLU,
//! 2x2 max-pool, dense 256->64, ReLU (features), dense 64->10 (logits).
//!
//! Weight file: magic `HSVPRX01`, `u32` parameter count, then per parameter
//! a `u32` rank, the `u32` extents and the `f32` values, all little-endian.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{batches, Dataset};
use crate::diffcore::{Adam, AdamConfig, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear};
use crate::scalar::Scalar;

pub const FEATURE_DIM: usize = 64;
pub const IMAGE_SIDE: usize = 28;
const MAGIC: &[u8; 8] = b"HSVPRX01";
const CHUNK: usize = 500;

/// SHA-256 of the weight file shipped with the crate.
pub const PINNED_SHA256: &str = "fb556f0a14dc5fd9cf4173d844174ad63dd2b11b8ce466582227c2226edb2950";

#[derive(Clone, Debug, PartialEq)]
pub struct ProxyExtractor<T> {
    pub params: ParamSet<T>,
    conv1: Conv2d,
    conv2: Conv2d,
    fc1: Linear,
    fc2: Linear,
}

impl<T: Scalar> ProxyExtractor<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let conv1 = Conv2d::new(&mut params, "conv1", 1, 8, 5, &mut rng);
        let conv2 = Conv2d::new(&mut params, "conv2", 8, 16, 5, &mut rng);
        let fc1 = Linear::new(&mut params, "fc1", 16 * 4 * 4, FEATURE_DIM, &mut rng);
        let fc2 = Linear::new(&mut params, "fc2", FEATURE_DIM, 10, &mut rng);
        ProxyExtractor {
            params,
            conv1,
            conv2,
            fc1,
            fc2,
        }
    }

    /// Records the network on `tape`; returns (features, logits).
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let rows = tape.shape(x)[0];
        if tape.shape(x) != [rows, IMAGE_SIDE * IMAGE_SIDE] {
            return Err(Error::shape("proxy extractor", tape.shape(x), &[rows, IMAGE_SIDE * IMAGE_SIDE]));
        }
        let img = tape.reshape(x, &[rows, 1, IMAGE_SIDE, IMAGE_SIDE])?;
        let h = self.conv1.forward(tape, vars, img)?;
        let h = tape.relu(h);
        let h = tape.max_pool2(h)?;
        let h = self.conv2.forward(tape, vars, h)?;
        let h = tape.relu(h);
        let h = tape.max_pool2(h)?;
        let h = tape.reshape(h, &[rows, 16 * 4 * 4])?;
        let h = self.fc1.forward(tape, vars, h)?;
        let features = tape.relu(h);
        let logits = self.fc2.forward(tape, vars, features)?;
        Ok((features, logits))
    }

    fn run(&self, images: &Tensor<T>, pick_logits: bool) -> Result<Tensor<T>> {
        let idx: Vec<usize> = (0..images.rows()).collect();
        let mut data = Vec::new();
        let mut cols = 0;
        for part in idx.chunks(CHUNK) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
            let x = tape.constant(images.gather_rows(part));
            let (f, l) = self.forward(&mut tape, &vars, x)?;
            let out = if pick_logits { l } else { f };
            cols = tape.shape(out)[1];
            data.extend_from_slice(tape.value(out));
        }
        Tensor::new([images.rows(), cols], data)
    }

    /// Penultimate-layer features, one row per image.
    pub fn features(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(images, false)
    }

    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<u8>> {
        let logits = self.run(images, true)?;
        Ok(logits
            .iter_rows()
            .map(|r| {
                let mut best = 0;
                for (i, v) in r.iter().enumerate() {
                    if *v > r[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect())
    }

    pub fn accuracy(&self, ds: &Dataset<T>) -> Result<f64> {
        let pred = self.predict(ds.images())?;
        let hits = pred.iter().zip(ds.labels()).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / ds.len().max(1) as f64)
    }

    pub fn cast<U: Scalar>(&self) -> ProxyExtractor<U> {
        let mut params = ParamSet::new();
        for p in self.params.iter() {
            params.push(p.name.clone(), p.value.cast());
        }
        ProxyExtractor {
            params,
            conv1: self.conv1,
            conv2: self.conv2,
            fc1: self.fc1,
            fc2: self.fc2,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in self.params.iter() {
            out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(format!("proxy weights: {msg}"));
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + len).ok_or_else(|| bad(format!("truncated at byte {pos}")))?;
            pos += len;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
        let mut model = Self::new(0);
        let count = u32_at(take(4)?);
        if count != model.params.len() {
            return Err(bad(format!("expected {} arrays, found {count}", model.params.len())));
        }
        for p in model.params.iter_mut() {
            let rank = u32_at(take(4)?);
            let shape = (0..rank).map(|_| take(4).map(u32_at)).collect::<Result<Vec<_>>>()?;
            if shape != p.value.shape() {
                return Err(bad(format!("{}: expected shape {:?}, found {shape:?}", p.name, p.value.shape())));
            }
            let raw = take(4 * p.value.numel())?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect();
            p.value = Tensor::new(shape, data)?.with_requires_grad(true);
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::DataUnavailable(format!(
                "proxy extractor weights {}: {e}; run `hsvae train-proxy` to create them",
                path.display()
            ))
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Location of the weight file shipped with the crate.
pub fn pinned_weights_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("proxy_extractor.bin")
}

/// Loads the shipped weights and checks them against [`PINNED_SHA256`].
pub fn load_pinned<T: Scalar>() -> Result<ProxyExtractor<T>> {
    let path = pinned_weights_path();
    let bytes = std::fs::read(&path).map_err(|e| {
        Error::DataUnavailable(format!(
            "proxy extractor weights {}: {e}; run `hsvae train-proxy` to create them",
            path.display()
        ))
    })?;
    if !PINNED_SHA256.is_empty() {
        let actual = crate::data::sha256_hex(&bytes);
        if actual != PINNED_SHA256 {
            return Err(Error::HashMismatch {
                path,
                expected: PINNED_SHA256.into(),
                actual,
            });
        }
    }
    ProxyExtractor::from_bytes(&bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxyTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProxyTrainConfig {
    fn default() -> Self {
        ProxyTrainConfig {
            epochs: 3,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Mean softmax cross-entropy of `logits` against integer labels.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[u8]) -> Result<Var> {
    let (r, c) = (tape.shape(logits)[0], tape.shape(logits)[1]);
    if labels.len() != r {
        return Err(Error::shape("cross_entropy", &[r, c], &[labels.len()]));
    }
    // shifting by the row maximum leaves the loss and its gradient unchanged
    let v = tape.value(logits);
    let shift: Vec<T> = (0..r)
        .map(|i| v[i * c..(i + 1) * c].iter().copied().fold(T::neg_infinity(), T::max))
        .collect();
    let mut onehot = vec![T::zero(); r * c];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * c + l as usize] = T::one();
    }
    let shift = tape.constant(Tensor::new([r, 1], shift)?);
    let onehot = tape.constant(Tensor::new([r, c], onehot)?);
    let z = tape.sub(logits, shift)?;
    let e = tape.exp(z);
    let s = tape.sum_axis(e, 1)?;
    let lse = tape.log(s)?;
    let logp = tape.sub(z, lse)?;
    let picked = tape.mul(logp, onehot)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -T::one() / T::lit(r as f64)))
}

/// Trains a fresh extractor; `progress` receives (epoch, seconds, test
/// accuracy) after every epoch.
pub fn train_proxy<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    cfg: &ProxyTrainConfig,
    mut progress: impl FnMut(usize, f64, f64),
) -> Result<ProxyExtractor<T>> {
    let mut model = ProxyExtractor::new(cfg.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    });
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        for (b, idx) in batches(train.len(), cfg.batch_size, cfg.seed, epoch as u64)?.iter().enumerate() {
            let mut tape = Tape::new();
            let vars = model.params.register(&mut tape);
            let x = tape.constant(train.images().gather_rows(idx));
            let labels: Vec<u8> = idx.iter().map(|&i| train.labels()[i]).collect();
            let (_, logits) = model.forward(&mut tape, &vars, x)?;
            let loss = cross_entropy(&mut tape, logits, &labels)?;
            if !tape.scalar(loss).is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = tape.backward(loss)?;
            model.params.load_grads(&grads, &vars)?;
            adam.step(&mut model.params)?;
        }
        let acc = model.accuracy(test)?;
        progress(epoch, start.elapsed().as_secs_f64(), acc);
    }
    Ok(model)
}
