use std::collections::BTreeMap;

use super::{Real, Tape, Tensor, TensorError};

/// A named trainable array with its Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        let n = value.len();
        Self {
            shape,
            value,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn tensor(&self) -> Tensor<T> {
        Tensor::new(self.value.clone(), &self.shape).expect("param shape")
    }
}

/// Plain per-parameter gradients, detached from any tape so they can be
/// moved between threads and summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients<T>(pub BTreeMap<String, Vec<T>>);

impl<T: Real> Gradients<T> {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn insert(&mut self, name: impl Into<String>, g: Vec<T>) {
        self.0.insert(name.into(), g);
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.0.get(name).map(|v| v.as_slice())
    }

    /// Zero gradients shaped like every parameter in `store`.
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self(
            store
                .iter()
                .map(|(n, p)| (n.to_string(), vec![T::zero(); p.value.len()]))
                .collect(),
        )
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (name, g) in &other.0 {
            match self.0.get_mut(name) {
                Some(dst) => {
                    for (d, &s) in dst.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                None => {
                    self.0.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, c: T) {
        for g in self.0.values_mut() {
            for v in g.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.values().all(|g| g.iter().fold(true, |ok, v| ok & v.is_finite()))
    }
}

pub fn global_norm<T: Real>(grads: &Gradients<T>) -> T {
    grads
        .0
        .values()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut Gradients<T>, max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm && norm > T::zero() {
        grads.scale(max_norm / norm);
    }
    norm
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
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameters plus Adam state. Iteration order is by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<(), TensorError> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(TensorError::InvalidArgument {
                op: "ParamStore::insert",
                msg: format!("duplicate parameter `{name}`"),
            });
        }
        self.params
            .insert(name, Param::new(value.shape().to_vec(), value.to_vec()));
        Ok(())
    }

    pub(crate) fn insert_param(&mut self, name: String, p: Param<T>) {
        self.params.insert(name, p);
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor<T>, TensorError> {
        self.params
            .get(name)
            .map(Param::tensor)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn leaves(&self, tape: &Tape<T>) -> BTreeMap<String, Tensor<T>> {
        self.params
            .iter()
            .map(|(n, p)| (n.clone(), tape.var(p.tensor())))
            .collect()
    }

    /// Detached tensors for every parameter.
    pub fn constants(&self) -> BTreeMap<String, Tensor<T>> {
        self.params.iter().map(|(n, p)| (n.clone(), p.tensor())).collect()
    }

    /// One bias-corrected Adam update. Every parameter must have a gradient.
    pub fn adam_step(&mut self, grads: &Gradients<T>, cfg: &AdamConfig) -> Result<(), TensorError> {
        for (name, p) in &self.params {
            match grads.get(name) {
                Some(g) if g.len() == p.value.len() => {}
                Some(g) => {
                    return Err(TensorError::BadLength {
                        len: g.len(),
                        shape: p.shape.clone(),
                    })
                }
                None => return Err(TensorError::MissingGradient(name.clone())),
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let lr = T::lit(cfg.lr);
        let eps = T::lit(cfg.eps);
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for (name, p) in self.params.iter_mut() {
            let g = grads.get(name).expect("checked above");
            for (i, &gi) in g.iter().enumerate() {
                p.m[i] = b1 * p.m[i] + (T::one() - b1) * gi;
                p.v[i] = b2 * p.v[i] + (T::one() - b2) * gi * gi;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(vec![v])).unwrap();
        s
    }

    fn grads(g: f64) -> Gradients<f64> {
        let mut gr = Gradients::new();
        gr.insert("w", vec![g]);
        gr
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut s = store_with(0.7);
        s.adam_step(&grads(0.0), &AdamConfig::default()).unwrap();
        assert_eq!(s.get("w").unwrap().value, vec![0.7]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut s = store_with(0.0);
        let cfg = AdamConfig::default();
        s.adam_step(&grads(1.0), &cfg).unwrap();
        let expected = -cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((s.get("w").unwrap().value[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut s = store_with(0.3);
        let cfg = AdamConfig {
            lr: 0.0,
            ..Default::default()
        };
        s.adam_step(&grads(5.0), &cfg).unwrap();
        assert_eq!(s.get("w").unwrap().value, vec![0.3]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = store_with(0.3);
        let err = s.adam_step(&Gradients::new(), &AdamConfig::default()).unwrap_err();
        assert_eq!(err, TensorError::MissingGradient("w".into()));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store_with(0.0);
        assert!(s.insert("w", Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = Gradients::new();
        g.insert("a", vec![3.0, 4.0]);
        let before = g.clone();
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, before);

        let mut g = Gradients::new();
        g.insert("a", vec![12.0f64, 16.0]);
        assert_eq!(clip_grad_norm(&mut g, 10.0), 20.0);
        assert_eq!(g.get("a").unwrap(), &[6.0, 8.0]);
        assert!((global_norm(&g) - 10.0).abs() < 1e-9);

        let mut g = Gradients::new();
        g.insert("a", vec![0.0, 0.0]);
        clip_grad_norm(&mut g, 10.0);
        assert_eq!(g.get("a").unwrap(), &[0.0, 0.0]);
    }
}
