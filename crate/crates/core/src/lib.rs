//! Slotted-time simulator for back-pressure routing and scheduling, the
//! shadow-queue PARN algorithm and its XOR network-coding extension.

pub mod audit;
pub mod backpressure;
pub mod coding;
pub mod error;
pub mod net;
pub mod packet;
pub mod router;
pub mod shadow;
pub mod sim;
pub mod traffic;

pub use error::{NetError, SimError};
