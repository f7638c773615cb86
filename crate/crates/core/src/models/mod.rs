//! Concrete model wirings: the delayed-oscillator toy problem and the
//! two-strain gene expression problem.

pub mod bio;
pub mod enso;
