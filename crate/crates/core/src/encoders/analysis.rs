use super::input::EncoderInput;
use super::model::{biggnn_node_states, encode_from_initial, init_node_states, EncoderParams};
use crate::autodiff::{Mode, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

/// Change caused by adding `delta` to one node's initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationEffect {
    /// Per node, the largest absolute change of its state after all hops
    /// (all zeros when BiGGNN is disabled).
    pub node_state_change: Vec<f64>,
    /// L2 norm of the change in `h_g`, `h_c` and the joint encoding.
    pub graph_change: f64,
    pub sequence_change: f64,
    pub joint_change: f64,
}

struct Run {
    states: Option<Tensor>,
    graph: Vec<f64>,
    sequence: Vec<f64>,
    joint: Vec<f64>,
}

fn run(store: &ParamStore, params: &EncoderParams, item: &EncoderInput, shift: Option<(usize, &[f64])>) -> Result<Run> {
    let mut tape = Tape::new(Mode::Eval);
    let h0 = init_node_states(&mut tape, store, params, &[item])?;
    let mut init = tape.value(h0).clone();
    if let Some((node, delta)) = shift {
        let d = init.cols();
        for (x, dx) in init.data_mut()[node * d..(node + 1) * d].iter_mut().zip(delta) {
            *x += dx;
        }
    }
    let h0 = tape.constant(init)?;
    let states = if params.config.use_biggnn {
        let h = biggnn_node_states(&mut tape, store, params, &[item], h0)?;
        Some(tape.value(h).clone())
    } else {
        None
    };
    let enc = encode_from_initial(&mut tape, store, params, &[item], h0)?;
    Ok(Run {
        states,
        graph: tape.value(enc.graph).data().to_vec(),
        sequence: tape.value(enc.sequence).data().to_vec(),
        joint: tape.value(enc.joint).data().to_vec(),
    })
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Eval-mode comparison of an item's encoding with and without a shift of
/// `node`'s initial embedding by `delta`.
pub fn perturbation_effect(
    store: &ParamStore,
    params: &EncoderParams,
    item: &EncoderInput,
    node: usize,
    delta: &[f64],
) -> Result<PerturbationEffect> {
    if node >= item.num_nodes() {
        return Err(Error::UnknownNode(node));
    }
    if delta.len() != params.config.dim {
        return Err(Error::shape(
            "perturbation",
            format!("delta has length {}, dim is {}", delta.len(), params.config.dim),
        ));
    }
    let base = run(store, params, item, None)?;
    let moved = run(store, params, item, Some((node, delta)))?;
    let node_state_change = match (&base.states, &moved.states) {
        (Some(a), Some(b)) => (0..item.num_nodes())
            .map(|v| a.row(v).iter().zip(b.row(v)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .collect(),
        _ => vec![0.0; item.num_nodes()],
    };
    Ok(PerturbationEffect {
        node_state_change,
        graph_change: l2_diff(&base.graph, &moved.graph),
        sequence_change: l2_diff(&base.sequence, &moved.sequence),
        joint_change: l2_diff(&base.joint, &moved.joint),
    })
}
