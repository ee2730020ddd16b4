use rand::Rng;

use crate::diffcore::{ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hypersphere::normalize_to_radius_on;
use crate::nn::Linear;
use crate::scalar::Scalar;
use crate::vae::config::Mode;

/// Layer widths of the encoder; the decoder mirrors them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

/// Encoder heads on a tape. `sigma = exp(log_var / 2)`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub mu: Var,
    pub log_var: Var,
    pub sigma: Var,
}

impl EncoderOutput {
    pub fn from_log_var<T: Scalar>(tape: &mut Tape<T>, mu: Var, log_var: Var) -> Result<Self> {
        if tape.shape(mu) != tape.shape(log_var) {
            return Err(Error::shape("encoder output", tape.shape(mu), tape.shape(log_var)));
        }
        let half = tape.scale(log_var, T::lit(0.5));
        let sigma = tape.exp(half);
        Ok(EncoderOutput { mu, log_var, sigma })
    }

    /// From an explicit, strictly positive `sigma`.
    pub fn from_sigma<T: Scalar>(tape: &mut Tape<T>, mu: Var, sigma: Var) -> Result<Self> {
        if tape.shape(mu) != tape.shape(sigma) {
            return Err(Error::shape("encoder output", tape.shape(mu), tape.shape(sigma)));
        }
        if tape.value(sigma).iter().any(|s| !(*s > T::zero())) {
            return Err(Error::domain("encoder output", "sigma must be strictly positive"));
        }
        let sq = tape.square(sigma);
        let log_var = tape.log(sq)?;
        Ok(EncoderOutput { mu, log_var, sigma })
    }
}

/// Multilayer-perceptron VAE: ReLU hidden layers, a linear head producing
/// `mu` and `log sigma^2`, and a sigmoid output layer on the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Vae<T> {
    pub arch: Architecture,
    pub mode: Mode,
    pub params: ParamSet<T>,
    encoder: Vec<Linear>,
    decoder: Vec<Linear>,
}

fn check_finite<T: Scalar>(tape: &Tape<T>, v: Var, net: &'static str, layer: usize) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { net, layer })
    }
}

impl<T: Scalar> Vae<T> {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, mode: Mode, rng: &mut R) -> Result<Self> {
        if arch.input_dim == 0 || arch.latent_dim < 2 || arch.hidden.contains(&0) {
            return Err(Error::Invalid(format!("invalid architecture {arch:?}")));
        }
        let mut params = ParamSet::new();
        let mut encoder = Vec::new();
        let mut width = arch.input_dim;
        for (i, &h) in arch.hidden.iter().enumerate() {
            encoder.push(Linear::new(&mut params, &format!("enc{i}"), width, h, rng));
            width = h;
        }
        encoder.push(Linear::new(&mut params, "enc_head", width, 2 * arch.latent_dim, rng));

        let mut decoder = Vec::new();
        let mut width = arch.latent_dim;
        for (i, &h) in arch.hidden.iter().rev().enumerate() {
            decoder.push(Linear::new(&mut params, &format!("dec{i}"), width, h, rng));
            width = h;
        }
        decoder.push(Linear::new(&mut params, "dec_out", width, arch.input_dim, rng));
        Ok(Vae {
            arch,
            mode,
            params,
            encoder,
            decoder,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// Radius latent samples are projected to in hyperspherical mode.
    pub fn latent_radius(&self) -> T {
        T::lit(self.arch.latent_dim as f64).sqrt()
    }

    /// Records the parameters as differentiable leaves.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.register(tape)
    }

    /// Records the parameters as constants (inference only).
    pub fn register_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    pub fn encode(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<EncoderOutput> {
        let cols = tape.shape(x).get(1).copied();
        if tape.shape(x).len() != 2 || cols != Some(self.arch.input_dim) {
            return Err(Error::shape("encode", tape.shape(x), &[0, self.arch.input_dim]));
        }
        let mut h = x;
        let last = self.encoder.len() - 1;
        for (i, layer) in self.encoder.iter().enumerate() {
            h = layer.forward(tape, vars, h)?;
            if i < last {
                h = tape.relu(h);
            }
            check_finite(tape, h, "encoder", i)?;
        }
        let n = self.arch.latent_dim;
        let mu = tape.slice_cols(h, 0, n)?;
        let log_var = tape.slice_cols(h, n, 2 * n)?;
        let out = EncoderOutput::from_log_var(tape, mu, log_var)?;
        check_finite(tape, out.sigma, "encoder", last)?;
        Ok(out)
    }

    /// `z = mu + eps * sigma`, projected to radius `sqrt(n)` in
    /// hyperspherical mode.
    pub fn reparameterize(&self, tape: &mut Tape<T>, e: &EncoderOutput, eps: Var) -> Result<Var> {
        reparameterize(tape, e, eps, self.mode)
    }

    /// Deterministic latent code: `mu`, projected in hyperspherical mode.
    pub fn latent_code(&self, tape: &mut Tape<T>, e: &EncoderOutput) -> Result<Var> {
        match self.mode {
            Mode::Standard => Ok(e.mu),
            Mode::Hyperspherical => normalize_to_radius_on(tape, e.mu, self.latent_radius()),
        }
    }

    pub fn decode(&self, tape: &mut Tape<T>, vars: &[Var], z: Var) -> Result<Var> {
        let cols = tape.shape(z).get(1).copied();
        if tape.shape(z).len() != 2 || cols != Some(self.arch.latent_dim) {
            return Err(Error::shape("decode", tape.shape(z), &[0, self.arch.latent_dim]));
        }
        let mut h = z;
        let last = self.decoder.len() - 1;
        for (i, layer) in self.decoder.iter().enumerate() {
            h = layer.forward(tape, vars, h)?;
            h = if i < last { tape.relu(h) } else { tape.sigmoid(h) };
            check_finite(tape, h, "decoder", i)?;
        }
        Ok(h)
    }

    fn chunked(&self, x: &Tensor<T>, chunk: usize, f: impl Fn(&mut Tape<T>, &[Var], Var) -> Result<Var>) -> Result<Tensor<T>> {
        let chunk = chunk.max(1);
        let mut data = Vec::new();
        let mut cols = 0;
        let idx: Vec<usize> = (0..x.rows()).collect();
        for part in idx.chunks(chunk) {
            let mut tape = Tape::new();
            let vars = self.register_frozen(&mut tape);
            let xv = tape.constant(x.gather_rows(part));
            let out = f(&mut tape, &vars, xv)?;
            cols = tape.shape(out)[1];
            data.extend_from_slice(tape.value(out));
        }
        Tensor::new([x.rows(), cols], data)
    }

    /// Encoder means for every row of `x`.
    pub fn embed(&self, x: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.chunked(x, chunk, |tape, vars, xv| Ok(self.encode(tape, vars, xv)?.mu))
    }

    /// Decodes latent rows.
    pub fn decode_batch(&self, z: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.chunked(z, chunk, |tape, vars, zv| self.decode(tape, vars, zv))
    }

    /// Noise-free reconstruction through [`latent_code`](Self::latent_code).
    pub fn reconstruct(&self, x: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        self.chunked(x, chunk, |tape, vars, xv| {
            let e = self.encode(tape, vars, xv)?;
            let z = self.latent_code(tape, &e)?;
            self.decode(tape, vars, z)
        })
    }

    /// Replaces all parameters; shapes must match the architecture.
    pub fn set_params(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Invalid(format!("expected {} parameter arrays, got {}", self.params.len(), values.len())));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.numel() != v.numel() {
                return Err(Error::shape("set_params", p.value.shape(), v.shape()));
            }
            let shape = p.value.shape().to_vec();
            p.value = v.reshape(shape)?.with_requires_grad(true);
        }
        Ok(())
    }
}

/// `z = mu + eps * sigma`; in hyperspherical mode each row of `z` is then
/// rescaled to norm `sqrt(n)`.
pub fn reparameterize<T: Scalar>(tape: &mut Tape<T>, e: &EncoderOutput, eps: Var, mode: Mode) -> Result<Var> {
    if tape.shape(eps) != tape.shape(e.mu) {
        return Err(Error::shape("reparameterize", tape.shape(e.mu), tape.shape(eps)));
    }
    let noise = tape.mul(eps, e.sigma)?;
    let z = tape.add(e.mu, noise)?;
    match mode {
        Mode::Standard => Ok(z),
        Mode::Hyperspherical => {
            let n = tape.shape(z)[1];
            normalize_to_radius_on(tape, z, T::lit(n as f64).sqrt())
        }
    }
}
