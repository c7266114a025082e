//! Wire protocol: one JSON object per LF-terminated line.
//!
//! The first client line must be `{"type":"hello","version":1}`, optionally
//! with `"role": "programmer" | "user"` (default programmer). Afterwards each
//! request carries a client-chosen `req` token (any JSON value) that is
//! echoed in exactly one terminal response.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Programmer,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello {
        version: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<Role>,
    },
    Evolve { req: Json, code: String },
    Do { req: Json, expr: String },
    Read { req: Json, name: String },
    /// `req` is optional; when present the reply is a `value` with the
    /// name's current value (or `null` if it is not bound yet).
    Subscribe {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        req: Option<Json>,
    },
    Unsubscribe {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        req: Option<Json>,
    },
    Env { req: Json },
    Dump { req: Json },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireChange {
    pub name: String,
    pub old: Json,
    pub new: Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Hello { version: u64 },
    Accepted { req: Json },
    Rejected { req: Json, reason: String, detail: Json },
    Executed { req: Json, changes: Vec<WireChange> },
    Failed {
        req: Json,
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<Json>,
    },
    Value { req: Json, value: Json },
    Changed { name: String, old: Json, new: Json, txn: u64 },
    QueueDied { req: Json },
    Error {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        req: Option<Json>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
}

impl Response {
    pub fn error(reason: &str, req: Option<Json>, message: impl Into<String>) -> Response {
        Response::Error { reason: reason.into(), req, message: Some(message.into()) }
    }

    /// The correlation token if this is a terminal response to a request.
    pub fn req(&self) -> Option<&Json> {
        match self {
            Response::Accepted { req }
            | Response::Rejected { req, .. }
            | Response::Executed { req, .. }
            | Response::Failed { req, .. }
            | Response::Value { req, .. }
            | Response::QueueDied { req } => Some(req),
            Response::Error { req, .. } => req.as_ref(),
            Response::Hello { .. } | Response::Changed { .. } => None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses always serialise")
    }
}

/// Parses one request line. The error is the reply to send back.
pub fn parse_request(line: &str) -> Result<Request, Response> {
    let raw: Json = serde_json::from_str(line)
        .map_err(|e| Response::error("parse", None, format!("malformed JSON: {e}")))?;
    let req = raw.get("req").cloned();
    serde_json::from_value(raw).map_err(|e| Response::error("schema", req, e.to_string()))
}
