//! Temporal (sequence) learning layers: recurrent cells, n-dimensional and
//! dilated convolution with pooling, temporal convolutional networks, and
//! scaled dot-product attention.

mod attention;
mod cells;
mod conv;
mod tcn;

pub use attention::{positional_encoding, sdpa, sdpa_weights, MhaLayer};
pub use cells::{GruCell, LstmCell, RnnCell};
pub use conv::{dilated_conv, dilation_mask, pool};
pub use tcn::{causal_tcn_forward, gated_tcn_forward, tcn_forward};
