//! Service, client and exploration layers over `meerkat-core`.
//!
//! * [`hub`] owns one runtime configuration and turns protocol requests into
//!   submissions and replies. It has no I/O.
//! * [`server`] serves a hub over TCP with line-delimited JSON.
//! * [`repl`] is the interactive client, talking to a server or to an
//!   in-process hub.
//! * [`sim`] explores schedules of a scenario and checks the runtime's
//!   properties against an independent oracle.

pub mod hub;
pub mod json;
pub mod protocol;
pub mod repl;
pub mod server;
pub mod sim;
