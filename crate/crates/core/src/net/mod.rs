//! Recurrent cells, bidirectional stacks, attention and the output head,
//! with hand-derived gradients.

mod attention;
mod cell;
pub mod gradcheck;
mod matrix;
mod model;

pub use attention::{attention_forward, AttentionParams, AttentionTrace};
pub use cell::{
    gru_cell_forward, lstm_cell_forward, scan_backward, scan_forward, CellKind, CellParams,
    CellTrace, GateParams,
};
pub use gradcheck::{
    compare_gradients, compare_gradients_with, gradient_check, gradient_check_with, GradCheckConfig,
    GradCheckReport, TensorCheck,
};
pub use matrix::{sigmoid, softmax, Matrix};
pub use model::{
    accumulate_gradients, model_backward, model_forward, model_forward_train, output_layer,
    run_bidirectional_stack, ForwardTrace, LayerTrace, ModelParams, ModelSpec, OutputResult,
    RecurrentLayer,
};
