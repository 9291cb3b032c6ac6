pub mod evaluate;
pub mod gradcheck;
pub mod synth;
pub mod train;
