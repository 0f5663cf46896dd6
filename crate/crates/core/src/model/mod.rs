//! Attention encoder-decoder: front end, pyramid bidirectional LSTM encoder,
//! LSTM decoder with additive attention, softmax output layer.

mod config;
mod network;
mod params;

pub use config::{Frontend, ModelConfig};
pub use network::{
    decoder_step, decoder_step_graph, encode, encode_graph, forward_teacher_forced, initial_state_graph,
    teacher_forced_graph, DecoderState, Dropout, EncodedVars, EncoderOutput, StateVars, StepOutput, StepVars,
};
pub use params::{BoundParams, LstmVars, ModelParams, INIT_RANGE};

#[cfg(test)]
mod tests;
