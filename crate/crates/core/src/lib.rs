//! Multichannel far-field speech front-end.

pub mod audio;
pub mod beamform;
pub mod count;
pub(crate) mod fft;
pub mod pipeline;
pub mod scoring;
pub mod select;
pub mod sim;
