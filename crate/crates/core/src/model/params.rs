//! Named parameter storage with per-parameter trainability.

use std::collections::HashMap;
use std::fmt;

use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Visual parameters before the residual blocks (patch/position
    /// embeddings, pre-norm).
    Stem,
    Block(usize),
    PostNorm,
    Projection,
    Text,
    Head,
}

impl ParamGroup {
    pub fn is_visual(self) -> bool {
        matches!(
            self,
            ParamGroup::Stem | ParamGroup::Block(_) | ParamGroup::PostNorm | ParamGroup::Projection
        )
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamGroup::Stem => f.write_str("stem"),
            ParamGroup::Block(i) => write!(f, "block.{i}"),
            ParamGroup::PostNorm => f.write_str("post_norm"),
            ParamGroup::Projection => f.write_str("projection"),
            ParamGroup::Text => f.write_str("text"),
            ParamGroup::Head => f.write_str("head"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub var: Var,
    pub trainable: bool,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.var.elem_count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, tensor: &Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Backend(format!("duplicate parameter {name}")));
        }
        let var = Var::from_tensor(&tensor.detach())?;
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            group,
            var,
            trainable,
        });
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::Backend(format!("no parameter named {name}")))
    }

    /// Tensor for use in a forward pass. Frozen parameters are detached so
    /// no gradient is tracked for them.
    pub fn get(&self, name: &str) -> Result<Tensor> {
        let p = self.param(name)?;
        Ok(if p.trainable {
            p.var.as_tensor().clone()
        } else {
            p.var.as_detached_tensor()
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn set_trainable_where(&mut self, mut decide: impl FnMut(&Param) -> bool) {
        for p in &mut self.params {
            p.trainable = decide(p);
        }
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.var.clone())
            .collect()
    }

    pub fn count(&self, pred: impl Fn(&Param) -> bool) -> usize {
        self.params.iter().filter(|p| pred(p)).map(Param::numel).sum()
    }

    /// Detached copies of the selected parameters.
    pub fn snapshot(&self, pred: impl Fn(&Param) -> bool) -> Result<Vec<(String, Tensor)>> {
        self.params
            .iter()
            .filter(|p| pred(p))
            .map(|p| Ok((p.name.clone(), p.var.as_tensor().copy()?.detach())))
            .collect()
    }

    /// Overwrites parameters in place from `(name, tensor)` pairs.
    pub fn restore(&self, values: &[(String, Tensor)]) -> Result<()> {
        for (name, t) in values {
            let p = self.param(name)?;
            if p.var.shape() != t.shape() {
                return Err(Error::Shape {
                    expected: format!("{name} {:?}", p.var.dims()),
                    actual: format!("{:?}", t.dims()),
                });
            }
            p.var.set(&t.to_dtype(p.var.dtype())?)?;
        }
        Ok(())
    }

    /// SHA-256 over names and raw bytes of the selected parameters.
    pub fn digest(&self, pred: impl Fn(&Param) -> bool) -> Result<String> {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| pred(p)) {
            h.update(p.name.as_bytes());
            let values: Vec<f32> = p.var.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn frozen_parameters_do_not_receive_gradients() {
        let dev = Device::Cpu;
        let mut store = ParamStore::new();
        store
            .insert("a", ParamGroup::Head, &Tensor::new(&[1f32, 2.0], &dev).unwrap(), true)
            .unwrap();
        store
            .insert("b", ParamGroup::Stem, &Tensor::new(&[3f32, 4.0], &dev).unwrap(), false)
            .unwrap();
        let loss = (store.get("a").unwrap() * store.get("b").unwrap())
            .unwrap()
            .sum_all()
            .unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(store.param("a").unwrap().var.as_tensor()).is_some());
        assert!(grads.get(store.param("b").unwrap().var.as_tensor()).is_none());
        assert_eq!(store.trainable_vars().len(), 1);
        assert_eq!(store.count(|p| p.trainable), 2);
    }

    #[test]
    fn snapshot_restore_and_digest() {
        let dev = Device::Cpu;
        let mut store = ParamStore::new();
        store
            .insert("w", ParamGroup::Head, &Tensor::new(&[1f32, 2.0, 3.0], &dev).unwrap(), true)
            .unwrap();
        let before = store.digest(|_| true).unwrap();
        let snap = store.snapshot(|_| true).unwrap();
        store
            .param("w")
            .unwrap()
            .var
            .set(&Tensor::new(&[0f32, 0.0, 0.0], &dev).unwrap())
            .unwrap();
        assert_ne!(store.digest(|_| true).unwrap(), before);
        store.restore(&snap).unwrap();
        assert_eq!(store.digest(|_| true).unwrap(), before);
        assert!(store.insert("w", ParamGroup::Head, &snap[0].1, true).is_err());
    }
}
