//! Comparison systems: a digital Fairbanks clock generation network and a
//! clock-tree skew model.

pub mod fairbanks;
pub mod tree;
