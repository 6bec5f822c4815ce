pub mod error;
pub mod gram;
pub mod matrix;
pub mod prox;
