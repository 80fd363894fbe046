//! Triangle and quad-dominant remeshing.

mod edit;
pub mod quad;
pub mod tri;
