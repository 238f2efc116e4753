//! Recurrent cell on the tape: coupled LSTM (input gate = 1 - forget gate)
//! or the standard four-gate variant.

use crate::autodiff::{Tape, TensorId};
use crate::error::Result;

use super::LstmKind;

#[derive(Debug, Clone, Copy)]
pub struct LstmIds {
    pub wf: TensorId,
    pub bf: TensorId,
    pub wo: TensorId,
    pub bo: TensorId,
    pub wc: TensorId,
    pub bc: TensorId,
    pub wi: Option<TensorId>,
    pub bi: Option<TensorId>,
}

/// One step: consumes `[x; h]`, returns `(h', c')`.
pub fn lstm_step(
    tape: &mut Tape,
    cell: &LstmIds,
    kind: LstmKind,
    ones_state: TensorId,
    x: TensorId,
    h: TensorId,
    c: TensorId,
) -> Result<(TensorId, TensorId)> {
    let xh = tape.concat(&[x, h])?;
    let gate = |tape: &mut Tape, w: TensorId, b: TensorId| -> Result<TensorId> {
        let z = tape.matmul(w, xh)?;
        tape.add(z, b)
    };
    let f_pre = gate(tape, cell.wf, cell.bf)?;
    let f = tape.sigmoid(f_pre)?;
    let o_pre = gate(tape, cell.wo, cell.bo)?;
    let o = tape.sigmoid(o_pre)?;
    let c_tilde_pre = gate(tape, cell.wc, cell.bc)?;
    let c_tilde = tape.tanh(c_tilde_pre)?;
    let i = match kind {
        LstmKind::Coupled => {
            let neg_f = tape.scale(f, -1.0)?;
            tape.add(ones_state, neg_f)?
        }
        LstmKind::Standard => {
            let i_pre = gate(
                tape,
                cell.wi.expect("standard LSTM has an input gate"),
                cell.bi.expect("standard LSTM has an input-gate bias"),
            )?;
            tape.sigmoid(i_pre)?
        }
    };
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, c_tilde)?;
    let c_new = tape.add(keep, write)?;
    let c_act = tape.tanh(c_new)?;
    let h_new = tape.mul(o, c_act)?;
    Ok((h_new, c_new))
}
