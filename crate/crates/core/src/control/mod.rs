//! The controller hierarchy and its software-defined sub-controllers.

pub mod decision;
pub mod node;
pub mod sdcompute;
pub mod sdiot;
pub mod sdn;
pub mod sds;
pub mod units;
