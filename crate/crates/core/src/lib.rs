//! Reach-set computation for hybrid systems.
//!
//! * [`geometry`]: H-polyhedra, faces, LP-backed queries, 2D vertices and hulls.
//! * [`flow`]: matrix exponentials, RK4 flows and reverse flows, norms.
//! * [`grid`]: sparse cell occupancy used as over- and under-approximations.
//! * [`facelift`]: boundary-only reach tubes, bounded-time and invariant-constrained.
//! * [`polyapprox`]: polyhedral over-approximation of one linear flow-pipe step.
//! * [`hybrid`]: hybrid automata, the Post operator and a reachability semi-decision.

pub mod facelift;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod hybrid;
pub mod linalg;
pub mod lp;
pub mod polyapprox;
