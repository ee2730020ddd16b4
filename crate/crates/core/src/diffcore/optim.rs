use crate::diffcore::tape::{Gradients, Tape, Var};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Parameters in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.params.push(Param {
            name: name.into(),
            value: value.with_requires_grad(true),
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param<T> {
        &mut self.params[i]
    }

    pub fn find(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter as a leaf, returning handles in order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(&p.value)).collect()
    }

    /// Stores the adjoints of `vars` (as returned by [`register`]) on the
    /// parameters.
    ///
    /// [`register`]: ParamSet::register
    pub fn load_grads(&mut self, grads: &Gradients<T>, vars: &[Var]) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(vars) {
            grads.write_to(v, &mut p.value)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam first/second moment state.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update using the gradients stored on `params`.
    ///
    /// All gradients are checked before anything is modified, so a refused
    /// step leaves both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        for p in params.iter() {
            let g = p
                .value
                .grad()
                .ok_or_else(|| Error::Invalid(format!("parameter `{}` has no gradient", p.name)))?;
            if g.len() != p.value.numel() {
                return Err(Error::shape("adam", p.value.shape(), &[g.len()]));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGrad(p.name.clone()));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() {
            return Err(Error::Invalid(format!(
                "optimizer state tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }

        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.value.grad().expect("checked above").to_vec();
            for (((w, gi), mi), vi) in p.value.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * *gi;
                *vi = b2 * *vi + (T::one() - b2) * *gi * *gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
