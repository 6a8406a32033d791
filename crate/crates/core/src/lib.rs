//! Parallel Monte Carlo tree search built on a lock-free shared tree, with
//! three interchangeable schedulers (sequential, tree-parallel and a
//! five-stage token pipeline) and a Horner-scheme polynomial optimization
//! domain to drive them.

pub mod poly;
pub mod problem;
pub mod seed;
pub mod tree;
pub mod mcts;
pub mod sched;
pub mod bench;
