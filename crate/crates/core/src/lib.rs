//! Generalized hyperbolic circle packings on polygonal cellular
//! decompositions, and the prescribed total geodesic curvature flow
//! `ds_i/dt = -(T_i - T̂_i)` on finite truncations of infinite complexes.

pub mod facepacking;
pub mod diskrealize;
pub mod cellcomplex;
pub mod curvaturefield;
pub mod flow;
pub mod conditions;
