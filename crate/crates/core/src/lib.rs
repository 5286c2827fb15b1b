pub mod agentization;
pub mod analysis;
pub mod backend;
pub mod config;
pub mod memory;
pub mod scheduler;
pub mod seed;
pub mod topology;
