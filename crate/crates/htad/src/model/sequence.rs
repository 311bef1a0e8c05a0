//! Recurrent encoder for measurement series.
//!
//! A single-layer LSTM runs left to right over the per-tick measurement
//! vectors; the last hidden state is projected into the attention space to
//! act as one more type representation. A next-step prediction head supports
//! optional pre-training before joint fine-tuning.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{GradContext, ParamId, ParameterStore, Tensor, VarId};

const GATES: [&str; 4] = ["in", "forget", "cell", "out"];

#[derive(Debug, Clone)]
pub struct SequenceEncoder {
    wx: [ParamId; 4],
    wh: [ParamId; 4],
    b: [ParamId; 4],
    out_w: ParamId,
    out_b: ParamId,
    next_w: ParamId,
    next_b: ParamId,
    pub input_width: usize,
    pub hidden: usize,
}

impl SequenceEncoder {
    pub fn init(
        store: &mut ParameterStore,
        input_width: usize,
        hidden: usize,
        out_width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input_width == 0 || hidden == 0 {
            return Err(Error::Config("series encoder widths must be > 0".into()));
        }
        let mut wx = Vec::new();
        let mut wh = Vec::new();
        let mut b = Vec::new();
        for gate in GATES {
            wx.push(store.insert(
                &format!("seq_wx_{gate}"),
                Tensor::fan_scaled(hidden, input_width, rng),
            )?);
            wh.push(store.insert(
                &format!("seq_wh_{gate}"),
                Tensor::fan_scaled(hidden, hidden, rng),
            )?);
            b.push(store.insert(&format!("seq_b_{gate}"), Tensor::zeros(&[hidden]))?);
        }
        let out_w = store.insert("seq_out_w", Tensor::fan_scaled(out_width, hidden, rng))?;
        let out_b = store.insert("seq_out_b", Tensor::zeros(&[out_width]))?;
        let next_w = store.insert("seq_next_w", Tensor::fan_scaled(input_width, hidden, rng))?;
        let next_b = store.insert("seq_next_b", Tensor::zeros(&[input_width]))?;
        Ok(SequenceEncoder {
            wx: wx.try_into().unwrap(),
            wh: wh.try_into().unwrap(),
            b: b.try_into().unwrap(),
            out_w,
            out_b,
            next_w,
            next_b,
            input_width,
            hidden,
        })
    }

    pub fn resolve(
        store: &ParameterStore,
        input_width: usize,
        hidden: usize,
        out_width: usize,
    ) -> Result<Self> {
        let mut wx = Vec::new();
        let mut wh = Vec::new();
        let mut b = Vec::new();
        for gate in GATES {
            wx.push(store.id(&format!("seq_wx_{gate}"))?);
            wh.push(store.id(&format!("seq_wh_{gate}"))?);
            b.push(store.id(&format!("seq_b_{gate}"))?);
        }
        let enc = SequenceEncoder {
            wx: wx.try_into().unwrap(),
            wh: wh.try_into().unwrap(),
            b: b.try_into().unwrap(),
            out_w: store.id("seq_out_w")?,
            out_b: store.id("seq_out_b")?,
            next_w: store.id("seq_next_w")?,
            next_b: store.id("seq_next_b")?,
            input_width,
            hidden,
        };
        for (id, rows, cols) in [
            (enc.wx[0], hidden, input_width),
            (enc.wh[0], hidden, hidden),
            (enc.out_w, out_width, hidden),
        ] {
            let t = store.value(id);
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::Checkpoint(format!(
                    "series parameter `{}` has shape {:?}, expected {rows}x{cols}",
                    store.name(id),
                    t.shape()
                )));
            }
        }
        Ok(enc)
    }

    fn check_series(&self, series: &[Vec<f64>]) -> Result<()> {
        if series.is_empty() {
            return Err(Error::InvalidInput("empty measurement series".into()));
        }
        for row in series {
            if row.len() != self.input_width {
                return Err(Error::Shape(format!(
                    "series tick has width {}, expected {}",
                    row.len(),
                    self.input_width
                )));
            }
        }
        Ok(())
    }

    /// All hidden states `h_1..h_T`.
    pub fn hidden_states(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        series: &[Vec<f64>],
    ) -> Result<Vec<VarId>> {
        self.check_series(series)?;
        let mut h = tape.input(vec![0.0; self.hidden]);
        let mut c = tape.input(vec![0.0; self.hidden]);
        let mut states = Vec::with_capacity(series.len());
        for tick in series {
            let x = tape.input(tick.clone());
            let mut gates = Vec::with_capacity(4);
            for k in 0..4 {
                let from_x = tape.linear(store, self.wx[k], self.b[k], x)?;
                let from_h = tape.matvec(store, self.wh[k], h)?;
                gates.push(tape.add(from_x, from_h)?);
            }
            let i = tape.sigmoid(gates[0]);
            let f = tape.sigmoid(gates[1]);
            let g = tape.tanh(gates[2]);
            let o = tape.sigmoid(gates[3]);
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let ct = tape.tanh(c);
            h = tape.mul(o, ct)?;
            states.push(h);
        }
        Ok(states)
    }

    /// Project the final hidden state into the attention space.
    pub fn encode(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        series: &[Vec<f64>],
    ) -> Result<VarId> {
        let states = self.hidden_states(store, tape, series)?;
        let last = *states.last().expect("non-empty series");
        tape.linear(store, self.out_w, self.out_b, last)
    }

    /// Mean squared next-step prediction error; the pre-training objective.
    pub fn next_step_loss(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        series: &[Vec<f64>],
    ) -> Result<VarId> {
        if series.len() < 2 {
            return Err(Error::InvalidInput(
                "next-step pre-training needs at least two ticks".into(),
            ));
        }
        let states = self.hidden_states(store, tape, series)?;
        let mut terms = Vec::new();
        for (t, &h) in states.iter().enumerate().take(series.len() - 1) {
            let pred = tape.linear(store, self.next_w, self.next_b, h)?;
            let actual = tape.input(series[t + 1].clone());
            let diff = tape.sub(pred, actual)?;
            terms.push(tape.dot(diff, diff)?);
        }
        tape.mean(&terms)
    }
}
