//! Glue between a [`Tape`] and a [`Params`] store for one forward pass.
//!
//! Model code calls [`Graph::param`] to place a parameter on the tape;
//! repeated requests for the same parameter return the same node, so a
//! batch shares one leaf per parameter and gradients from every sample
//! accumulate into it. After `backward`, [`Graph::write_grads`] copies
//! gradients back into the store — exact zeros for parameters the loss
//! never reached.

use super::{ParamId, Params, Tape, TensorId};
use crate::error::Result;
use std::ops::{Deref, DerefMut};

pub struct Graph {
    tape: Tape,
    bound: Vec<(ParamId, TensorId)>,
}

impl Graph {
    pub fn new(seed: u64) -> Self {
        Graph {
            tape: Tape::new(seed),
            bound: Vec::new(),
        }
    }

    /// The tape node holding `id`'s current value (bound on first use).
    pub fn param(&mut self, params: &Params, id: ParamId) -> TensorId {
        if let Some(&(_, tid)) = self.bound.iter().find(|(pid, _)| *pid == id) {
            return tid;
        }
        let tid = self.tape.leaf(params.get(id));
        self.bound.push((id, tid));
        tid
    }

    /// Copies ∂loss/∂θ into every registered parameter's `grad` slot.
    /// Parameters never bound on this tape, or bound but unreached by the
    /// loss, receive all-zero gradients.
    pub fn write_grads(&mut self, params: &mut Params) -> Result<()> {
        for id in params.ids() {
            let n = params.get(id).numel();
            let grad = self
                .bound
                .iter()
                .find(|(pid, _)| *pid == id)
                .and_then(|&(_, tid)| self.tape.grad(tid))
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; n]);
            params.get_mut(id).set_grad(Some(grad));
        }
        Ok(())
    }
}

impl Deref for Graph {
    type Target = Tape;

    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for Graph {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}
