use jamloc_nn::{Float, Graph, Layer, LayerSpec, Mode, NodeId, ParamStore};
use rand::Rng;

use crate::error::Result;

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// `[B, 3]` displacement in normalized units (see `DispNorm`).
    pub disp: NodeId,
    /// `[B, 2]` tanh outputs, `alpha / 180` and `beta / 90`.
    pub angle: NodeId,
    pub class: Option<NodeId>,
    pub subclass: Option<NodeId>,
}

/// Dense -> ReLU -> optional dropout -> Dense.
#[derive(Debug, Clone)]
pub struct Head {
    hidden: Layer,
    out: Layer,
    dropout: f64,
}

impl Head {
    pub fn new<T: Float, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Head {
            hidden: Layer::new(LayerSpec::Dense { input, output: hidden }, store, &format!("{name}.hidden"), rng)?,
            out: Layer::new(LayerSpec::Dense { input: hidden, output }, store, &format!("{name}.out"), rng)?,
            dropout,
        })
    }

    pub fn forward<T: Float, R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
        let h = self.hidden.forward(g, x, mode, rng)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, self.dropout, mode, rng)?;
        Ok(self.out.forward(g, h, mode, rng)?)
    }
}

/// Applies `layers` in order, inserting a ReLU after each one.
pub fn relu_stack<T: Float, R: Rng + ?Sized>(g: &mut Graph<'_, T>, layers: &[Layer], mut x: NodeId, mode: Mode, rng: &mut R) -> Result<NodeId> {
    for l in layers {
        x = l.forward(g, x, mode, rng)?;
        x = g.relu(x)?;
    }
    Ok(x)
}

pub fn check_dropout(p: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return crate::error::invalid(format!("{what} dropout {p} outside [0, 1)"));
    }
    Ok(())
}
