pub mod applications;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;
pub mod lp;
pub mod par;
pub mod samplers;
pub mod selection;
pub mod spatial;
