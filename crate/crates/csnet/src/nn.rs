//! Small neural-net plumbing on top of the autodiff tape: a named
//! parameter map, Glorot initialization, and shared-MLP application
//! (the same linear layers applied to every row of an Nxd matrix).

use crate::autodiff::{Tape, Tensor, Value};
use crate::error::{CsError, Result};
use rand::Rng;
use std::collections::BTreeMap;

/// All learnable weights, addressable by hierarchical dotted name.
/// BTreeMap keeps iteration order deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.map.contains_key(&name) {
            return Err(CsError::invalid(format!("duplicate parameter {}", name)));
        }
        self.map.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| CsError::invalid(format!("unknown parameter {}", name)))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| CsError::invalid(format!("unknown parameter {}", name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn param_count(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Declare a linear layer `name.weight` ([fan_in, fan_out], He
    /// uniform — ReLU halves activation variance, so fan-in-only scaling
    /// keeps the forward signal from collapsing through deep chains) and
    /// `name.bias` ([1, fan_out], zeros). `zero_init` makes the weight
    /// zero too, used for shift layers that must start at identity.
    pub fn declare_linear(
        &mut self,
        rng: &mut impl Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        zero_init: bool,
    ) -> Result<()> {
        let weight = if zero_init {
            Tensor::zeros(fan_in, fan_out)
        } else {
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            Tensor::new(fan_in, fan_out, data)?
        };
        self.insert(format!("{}.weight", name), weight)?;
        self.insert(format!("{}.bias", name), Tensor::zeros(1, fan_out))?;
        Ok(())
    }

    /// Declare a chain of linear layers `name.0`, `name.1`, ...
    pub fn declare_mlp(
        &mut self,
        rng: &mut impl Rng,
        name: &str,
        widths: &[usize],
        zero_init_last: bool,
    ) -> Result<()> {
        for i in 0..widths.len() - 1 {
            let zero = zero_init_last && i == widths.len() - 2;
            self.declare_linear(rng, &format!("{}.{}", name, i), widths[i], widths[i + 1], zero)?;
        }
        Ok(())
    }
}

/// Binds parameters onto a tape once per forward pass and remembers the
/// resulting leaf so gradients can be read back by name.
pub struct Binder<'a> {
    params: &'a Params,
    bound: BTreeMap<String, Value>,
}

impl<'a> Binder<'a> {
    pub fn new(params: &'a Params) -> Binder<'a> {
        Binder {
            params,
            bound: BTreeMap::new(),
        }
    }

    pub fn bind(&mut self, tape: &mut Tape, name: &str) -> Result<Value> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?;
        let v = tape.leaf_tensor(t, true);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// All parameters bound during this forward pass.
    pub fn bound(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.bound.iter()
    }
}

/// y = x . W + b, bias broadcast over rows.
pub fn linear(tape: &mut Tape, binder: &mut Binder, name: &str, x: Value) -> Result<Value> {
    let w = binder.bind(tape, &format!("{}.weight", name))?;
    let b = binder.bind(tape, &format!("{}.bias", name))?;
    let y = tape.matmul(x, w)?;
    let (rows, _) = tape.shape(y);
    let bb = tape.broadcast_repeat(b, 0, rows)?;
    tape.add(y, bb)
}

/// Shared MLP over rows: linear layers with ReLU between them, no
/// activation after the last layer. `n_layers` must match the declared
/// chain length.
pub fn mlp(
    tape: &mut Tape,
    binder: &mut Binder,
    name: &str,
    n_layers: usize,
    x: Value,
) -> Result<Value> {
    let mut cur = x;
    for i in 0..n_layers {
        cur = linear(tape, binder, &format!("{}.{}", name, i), cur)?;
        if i + 1 < n_layers {
            cur = tape.relu(cur);
        }
    }
    Ok(cur)
}
