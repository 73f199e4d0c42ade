//! Grounding natural-language robot commands to lifted reward functions at
//! the right level of a planning hierarchy, and planning them in Cleanup
//! World with flat and hierarchical planners.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod grounder;
pub mod grounding;
pub mod ibm2;
pub mod neural;
pub mod nn;
pub mod planners;
pub mod session;
pub mod world;
