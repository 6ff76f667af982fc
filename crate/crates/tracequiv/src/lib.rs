//! Exact arithmetic over prime fields for testing equivalence to the trace of
//! iterated matrix multiplication, its reduction to determinant equivalence,
//! and matrix algebra isomorphism through tensor isomorphism.

pub mod field;
pub mod linalg;
pub mod poly;
pub mod trimm;
pub mod lie;
pub mod abp;
pub mod oracles;
pub mod reduction;
pub mod tensor;
pub mod fmai;
pub mod format;
pub mod acceptance;
