use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use flashchan::rng::standard_normal;

use crate::element::Element;

/// A named weight tensor with its gradient and Adam moments. Non-trainable
/// entries hold running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub trainable: bool,
}

impl<T: Element> Param<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<T>, trainable: bool) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(value.len(), len, "parameter payload length");
        let z = if trainable { vec![T::zero(); len] } else { Vec::new() };
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            value,
            grad: z.clone(),
            m: z.clone(),
            v: z,
            trainable,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], x: T, trainable: bool) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![x; len], trainable)
    }

    pub fn normal(name: impl Into<String>, shape: &[usize], mean: f64, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let len = shape.iter().product();
        let value = (0..len)
            .map(|_| T::cst(mean + std * standard_normal(rng.next_u64(), rng.next_u64())))
            .collect();
        Self::new(name, shape, value, true)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// One Adam update at 1-based step `t`.
    pub fn adam(&mut self, h: &AdamParams, t: u64) {
        if !self.trainable {
            return;
        }
        let (b1, b2) = (T::cst(h.beta1), T::cst(h.beta2));
        let c1 = T::one() - T::cst(h.beta1.powi(t as i32));
        let c2 = T::one() - T::cst(h.beta2.powi(t as i32));
        let (lr, eps) = (T::cst(h.lr), T::cst(h.eps));
        for i in 0..self.value.len() {
            let g = self.grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            self.value[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Read and write access to every parameter of a network, in a fixed order.
pub trait Module<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self)
    where
        T: Element,
    {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn adam(&mut self, h: &AdamParams, t: u64)
    where
        T: Element,
    {
        for p in self.params_mut() {
            p.adam(h, t);
        }
    }

    /// First trainable parameter whose gradient is not finite.
    fn non_finite_grad(&self) -> Option<String>
    where
        T: Element,
    {
        self.params()
            .into_iter()
            .find(|p| p.grad.iter().any(|g| !g.is_finite()))
            .map(|p| p.name.clone())
    }
}
