// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named parameters with gradient and Adam moment buffers.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};

use super::tensor::{Scalar, Tensor2D};
use crate::error::{Error, Result};
use crate::rng::LabRng;

/// Standard deviation of the normal initialiser for weight matrices.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor2D<T>,
    pub grad: Tensor2D<T>,
    m: Tensor2D<T>,
    v: Tensor2D<T>,
}

impl<T: Scalar> Param<T> {
    fn new(name: String, value: Tensor2D<T>) -> Self {
        let (r, c) = value.shape();
        Param {
            name,
            value,
            grad: Tensor2D::zeros(r, c),
            m: Tensor2D::zeros(r, c),
            v: Tensor2D::zeros(r, c),
        }
    }
}

/// Parameters in insertion order; iteration order is part of the
/// determinism contract.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar = f32> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2D<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param::new(name, value));
        Ok(id)
    }

    /// Inserts a `rows x cols` tensor drawn from normal(0, std).
    pub fn insert_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut LabRng,
    ) -> Result<usize> {
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let t = Tensor2D::from_fn(rows, cols, |_, _| T::from_f64(dist.sample(rng)));
        self.insert(name, t)
    }

    pub fn insert_const(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        value: f64,
    ) -> Result<usize> {
        let t = Tensor2D::from_fn(rows, cols, |_, _| T::from_f64(value));
        self.insert(name, t)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))
    }

    #[inline]
    pub fn value(&self, id: usize) -> &Tensor2D<T> {
        &self.params[id].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: usize) -> &mut Tensor2D<T> {
        &mut self.params[id].value
    }

    #[inline]
    pub fn grad_mut(&mut self, id: usize) -> &mut Tensor2D<T> {
        &mut self.params[id].grad
    }

    #[inline]
    pub fn grad(&self, id: usize) -> &Tensor2D<T> {
        &self.params[id].grad
    }

    /// The value and gradient buffer of one parameter, borrowed together.
    #[inline]
    pub fn value_and_grad_mut(&mut self, id: usize) -> (&Tensor2D<T>, &mut Tensor2D<T>) {
        let p = &mut self.params[id];
        (&p.value, &mut p.grad)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2D<T>> {
        Ok(self.value(self.id(name)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.rows() * p.value.cols()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::ZERO);
        }
    }

    /// Same names and values in another precision; moments start at zero.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.insert(p.name.clone(), p.value.cast())
                .expect("names are already unique");
        }
        out
    }

    pub fn grads_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.grad.data().iter().all(|g| g.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// One bias-corrected Adam update. `step` counts from 1. Gradients are
/// zeroed afterwards. On a non-finite update nothing is modified.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig, step: u64) -> Result<()> {
    if step == 0 {
        return Err(Error::Config("adam step index starts at 1".into()));
    }
    if !store.grads_finite() {
        return Err(Error::NonFiniteValue("gradient".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for p in &mut store.params {
        let n = p.value.data().len();
        for i in 0..n {
            let g = p.grad.data()[i].to_f64();
            let m = b1 * p.m.data()[i].to_f64() + (1.0 - b1) * g;
            let v = b2 * p.v.data()[i].to_f64() + (1.0 - b2) * g * g;
            let update = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
            p.m.data_mut()[i] = T::from_f64(m);
            p.v.data_mut()[i] = T::from_f64(v);
            p.value.data_mut()[i] -= T::from_f64(update);
        }
        if !p.value.data().iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteValue(format!("parameter {}", p.name)));
        }
        p.grad.fill(T::ZERO);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert_normal("w", 3, 4, INIT_STD, &mut rng::seeded(1)).unwrap();
        s.insert_const("b", 1, 4, 0.0).unwrap();
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store();
        assert!(s.insert_const("w", 1, 1, 0.0).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store();
        let before = s.get("w").unwrap().clone();
        adam_step(&mut s, &AdamConfig::default(), 1).unwrap();
        assert_eq!(s.get("w").unwrap(), &before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store();
        let id = s.id("w").unwrap();
        let before = s.value(id).clone();
        for (i, g) in s.grad_mut(id).data_mut().iter_mut().enumerate() {
            *g = if i % 2 == 0 { 0.37 } else { -2.5 };
        }
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        adam_step(&mut s, &cfg, 1).unwrap();
        for (i, (a, b)) in s.value(id).data().iter().zip(before.data()).enumerate() {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            assert!((a - b - sign * 0.01).abs() < 1e-8);
        }
        assert!(s.grad(id).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = store();
        let id = s.id("b").unwrap();
        s.grad_mut(id).data_mut()[0] = f64::INFINITY;
        let before = s.value(id).clone();
        assert!(adam_step(&mut s, &AdamConfig::default(), 1).is_err());
        assert_eq!(s.value(id), &before);
    }

    #[test]
    fn same_seed_same_init() {
        let a = store();
        let b = store();
        assert_eq!(a.get("w").unwrap(), b.get("w").unwrap());
    }
}
