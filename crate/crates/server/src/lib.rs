//! Live teleoperation host for the capsule twin.
//!
//! [`session::Session`] owns the simulation and is driven by requests and
//! wall-clock ticks; [`net::serve`] puts it behind a TCP socket speaking the
//! line protocol in [`protocol`].

pub mod net;
pub mod protocol;
pub mod session;

pub use net::{serve, ServeOptions};
pub use protocol::{Request, ServerMessage, PROTOCOL_VERSION};
pub use session::{Audience, Outbound, Session, SessionOptions};
