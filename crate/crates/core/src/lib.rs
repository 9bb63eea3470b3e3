//! Capacitated location routing (CLR).
//!
//! The crate implements a bifactor approximation for location routing with
//! capacitated vehicles and capacitated facilities, together with the two
//! combinatorial lower bounds it is analysed against, a random instance
//! generator, an exact brute-force solver for tiny instances and the file
//! formats used by the `clr` command line tool.
//!
//! The algorithm runs in three steps:
//!
//! 1. [`clustering`]: a minimum spanning tree of the augmented graph built by
//!    [`lowerbounds`] is preprocessed and cut into clusters of demand at most
//!    `eps * vehicle_capacity`.
//! 2. [`assignment`]: clusters are assigned to open facilities, either by
//!    rounding an extreme point of a transportation LP (facilities chosen by a
//!    capacitated facility location solve, see [`cfl`]) or by an integer
//!    program with capacity escalation.
//! 3. [`routing`]: each cluster tree is turned into a tour by doubling and
//!    shortcutting, optionally improved by 2-opt and Or-opt moves.
//!
//! [`pipeline`] glues the steps together for the four algorithm variants.

pub mod assignment;
pub mod cfl;
pub mod clustering;
pub mod error;
pub mod generator;
pub mod io;
pub mod lowerbounds;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rational;
pub mod routing;
pub mod transport;

pub use error::{Error, Result};
pub use model::{Evaluation, Instance, Solution, Tour};
pub use rational::Rational;
