//! Neural execution of Ford-Fulkerson on bipartite matching instances.
//!
//! A message-passing network learns the three subroutines of
//! Ford-Fulkerson (shortest augmenting path via Bellman-Ford, bottleneck
//! finding, capacity augmentation) plus BFS reachability, and is scored by
//! running the whole algorithm with the learned subroutines plugged in.

pub mod bitcodec;
pub mod classical;
pub mod datagen;
pub mod flowgraph;
pub mod gnncore;
pub mod heads;
pub mod simulator;
pub mod tape;
pub mod trainer;
