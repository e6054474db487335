use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Optimizer grouping: θ_F, θ_C and θ_D.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Classifier,
    Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Flat, ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Places every parameter of the listed groups on the tape. Trainable
    /// groups become gradient-carrying leaves, the rest constants.
    pub fn bind(&self, g: &mut Graph, groups: &[ParamGroup], trainable: &[ParamGroup]) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if !groups.contains(&p.group) {
                    None
                } else if trainable.contains(&p.group) {
                    Some(g.param(p.value.clone()))
                } else {
                    Some(g.constant(p.value.clone()))
                }
            })
            .collect();
        Binding { vars }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Largest absolute parameter entry; NaN if any entry is NaN.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for p in &self.params {
            for &v in p.value.data() {
                if v.is_nan() {
                    return f64::NAN;
                }
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Mapping from store entries to tape variables.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Option<Var>>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0].unwrap_or_else(|| panic!("parameter {} is not bound", id.0))
    }

    pub fn try_var(&self, id: ParamId) -> Option<Var> {
        self.vars[id.0]
    }

    /// Adds the gradients this tape holds for bound parameters into `grads`.
    pub fn collect_grads(&self, g: &Graph, grads: &mut Grads) {
        for (i, v) in self.vars.iter().enumerate() {
            if let Some(v) = v {
                if let Some(gv) = g.grad(*v) {
                    grads.add(ParamId(i), gv);
                }
            }
        }
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    data: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            data: vec![None; store.len()],
        }
    }

    pub fn add(&mut self, id: ParamId, g: &[f64]) {
        match &mut self.data[id.0] {
            Some(acc) => {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub fn merge(&mut self, other: &Grads) {
        for (i, g) in other.data.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.data[id.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Copies values for every name present in `source` into `target`.
pub fn copy_by_name(target: &mut ParamStore, source: &ParamStore) -> Result<()> {
    for (_, p) in source.iter() {
        let id = target
            .find(&p.name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {}", p.name)))?;
        if target.get(id).shape() != p.value.shape() {
            return Err(Error::Dimension {
                op: "load",
                lhs: target.get(id).shape().to_vec(),
                rhs: p.value.shape().to_vec(),
            });
        }
        *target.get_mut(id) = p.value.clone();
    }
    Ok(())
}
