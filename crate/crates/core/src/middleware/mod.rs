//! The bridge between control layers: the kernel scheduler and the services
//! (registration, messenger, fault tolerance, emergency, position tracking,
//! speed stamps, time stamps, time translation, time sync, resource tracking).

pub mod clock;
pub mod registry;
pub mod resources;
pub mod scheduler;
pub mod tracking;
