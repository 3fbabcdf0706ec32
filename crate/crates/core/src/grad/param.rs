use std::collections::HashMap;

use super::{Real, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
    /// Adam first moment.
    pub m: Tensor<T>,
    /// Adam second moment.
    pub v: Tensor<T>,
}

/// Named parameters of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        let zeros = Tensor::zeros(tensor.shape());
        self.params.push(Parameter { name, m: zeros.clone(), v: zeros, tensor, trainable });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    /// Create tape variables for every parameter: trainable ones as leaves, others as constants.
    pub fn bind(&self, tape: &Tape<T>) -> Bound<T> {
        let vars = self
            .params
            .iter()
            .map(|p| if p.trainable { tape.leaf(p.tensor.clone()) } else { Var::constant(p.tensor.clone()) })
            .collect();
        Bound { vars }
    }

    /// Replace all values from `(name, tensor)` pairs; names and shapes must match exactly.
    pub fn load_values(&mut self, entries: Vec<(String, Tensor<f32>)>) -> Result<()> {
        if entries.len() != self.params.len() {
            return Err(dim_err!("checkpoint has {} parameters, model has {}", entries.len(), self.params.len()));
        }
        for (p, (name, t)) in self.params.iter_mut().zip(entries) {
            if p.name != name {
                return Err(dim_err!("checkpoint parameter {name} where model expects {}", p.name));
            }
            if p.tensor.shape() != t.shape() {
                return Err(dim_err!("parameter {name}: shape {:?} vs {:?}", t.shape(), p.tensor.shape()));
            }
            p.tensor = t.cast();
        }
        Ok(())
    }

    /// Convert element type; optimizer slots are reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.tensor.cast(), p.trainable).expect("names already unique");
        }
        out
    }
}

/// Parameter variables of one forward pass.
pub struct Bound<T> {
    vars: Vec<Var<T>>,
}

impl<T: Real> Bound<T> {
    pub fn var(&self, id: ParamId) -> &Var<T> {
        &self.vars[id.0]
    }

    /// Collect per-parameter gradients (zeros for parameters off the loss path).
    pub fn gradients(&self, grads: &mut super::Gradients<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.add("a.w", Tensor::zeros(&[2]), true).unwrap();
        assert!(s.add("a.w", Tensor::zeros(&[2]), true).is_err());
        assert_eq!(s.by_name("a.w").unwrap().index(), 0);
    }

    #[test]
    fn load_checks_names_and_shapes() {
        let mut s = ParamStore::<f64>::new();
        s.add("w", Tensor::zeros(&[2]), true).unwrap();
        assert!(s.load_values(vec![("v".into(), Tensor::zeros(&[2]))]).is_err());
        assert!(s.load_values(vec![("w".into(), Tensor::zeros(&[3]))]).is_err());
        s.load_values(vec![("w".into(), Tensor::full(&[2], 1.5))]).unwrap();
        assert_eq!(s.tensor(ParamId(0)).data(), &[1.5, 1.5]);
    }
}
