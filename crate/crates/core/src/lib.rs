//! Material-network runtime with a progressive, lock-free material cache.
//!
//! Pipeline: [`matgraph`] loads and validates a node graph, [`analysis`]
//! folds constants and picks cache points, [`stackvm`] compiles the result
//! to a stack program that consults a [`matcache::MaterialCache`] keyed by
//! ray-cone derived virtual-texture texels ([`raycone`]). [`tracer`] is a
//! small path tracer that drives all of it.

pub mod analysis;
pub mod imageio;
pub mod matcache;
pub mod matgraph;
pub mod math;
pub mod raycone;
pub mod stackvm;
pub mod tracer;
