use crate::encoder::{ModelParams, ParamGroup};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState, Real};

/// Adam over the tensors of selected parameter groups. Tensors outside the
/// groups are never read or written.
#[derive(Debug, Clone)]
pub struct GroupAdam<T> {
    pub groups: Vec<ParamGroup>,
    pub cfg: AdamConfig,
    states: Vec<Option<AdamState<T>>>,
}

impl<T: Real> GroupAdam<T> {
    pub fn new(params: &ModelParams<T>, groups: &[ParamGroup], lr: f64) -> Self {
        let states = params
            .tensors()
            .iter()
            .map(|(_, g, t)| groups.contains(g).then(|| AdamState::new(t.len())))
            .collect();
        GroupAdam {
            groups: groups.to_vec(),
            cfg: AdamConfig::with_lr(lr),
            states,
        }
    }

    pub fn steps(&self) -> u64 {
        self.states
            .iter()
            .flatten()
            .map(|s| s.step)
            .max()
            .unwrap_or(0)
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        let gs = grads.tensors();
        for (k, (_, t)) in params.tensors_mut().into_iter().enumerate() {
            let Some(state) = self.states[k].as_mut() else {
                continue;
            };
            let g = gs[k].2;
            let (Some(p), Some(g)) = (t.as_slice_mut(), g.as_slice()) else {
                return Err(Error::Shape(format!(
                    "tensor `{}` is not contiguous",
                    gs[k].0
                )));
            };
            adam_step(p, g, state, &self.cfg)?;
        }
        Ok(())
    }
}
