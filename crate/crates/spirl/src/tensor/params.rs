use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Param { shape: shape.to_vec(), data: vec![0.0; n], grad: vec![0.0; n] }
    }
}

/// Ordered collection of named parameters. Iteration order is the sorted name
/// order, which fixes optimizer and snapshot determinism.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, param: Param) {
        assert!(
            self.params.insert(name.to_string(), param).is_none(),
            "duplicate parameter {name}"
        );
    }

    /// Truncated-normal init (std `std`, clipped at two sigmas).
    pub fn add_trunc_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            if z.abs() <= 2.0 {
                data.push(z * std);
            }
        }
        self.insert(name, Param { shape: shape.to_vec(), data, grad: vec![0.0; n] });
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Param::zeros(shape));
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) {
        let n: usize = shape.iter().product();
        self.insert(name, Param { shape: shape.to_vec(), data: vec![1.0; n], grad: vec![0.0; n] });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    /// Scalars across parameters whose name starts with `prefix`.
    pub fn num_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, p)| p.data.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }
}
