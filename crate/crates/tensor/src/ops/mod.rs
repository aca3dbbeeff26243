pub(crate) mod basic;
pub mod conv;
pub(crate) mod loss;
mod matmul;
mod norm;
mod rnn;
pub mod roi;
