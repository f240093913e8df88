pub mod cli;
pub mod control;
pub mod engine;
pub mod middleware;
pub mod packet;
mod pairs;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod security;
pub mod topology;
