//! Session bookkeeping and message dispatch around one [`Config`].
//!
//! The hub is transport-free: the TCP server and the embedded REPL both feed
//! it requests and forward the responses it returns. [`Hub::handle_message`]
//! only enqueues or answers queries; [`Hub::pump`] steps the configuration to
//! quiescence and turns every step into `changed` events (for subscribers)
//! followed by the terminal responses of the submitters.

use std::collections::{BTreeMap, BTreeSet};

use meerkat_core::runtime::{ActionError, FirstEnabled, ScheduleSource, StepChoice, StepOutcome, StepRecord};
use meerkat_core::syntax::{parse_do, parse_expr, parse_program, DoStmt, ParseError, Program};
use meerkat_core::Config;
use serde_json::{json, Value as Json};

use crate::json;
use crate::protocol::{parse_request, Request, Response, Role, WireChange};
use crate::sim::SeededSchedule;

pub type SessionId = u64;

/// Messages to deliver, in order.
pub type Outbox = Vec<(SessionId, Response)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: SessionId,
    pub role: Role,
    pub subscriptions: BTreeSet<String>,
}

/// How the hub picks among enabled steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Concurrent pairs first, then the first enabled step.
    PreferPairs,
    /// Uniformly random among enabled steps.
    Seeded(u64),
    FirstEnabled,
}

#[derive(Clone, Debug)]
pub struct HubOptions {
    /// Let `user` sessions evolve code too.
    pub open: bool,
    pub hist_cap: usize,
    pub policy: Policy,
    /// Record one trace line per step.
    pub trace: bool,
}

impl Default for HubOptions {
    fn default() -> HubOptions {
        HubOptions {
            open: false,
            hist_cap: meerkat_core::store::DEFAULT_HIST_CAP,
            policy: Policy::PreferPairs,
            trace: false,
        }
    }
}

struct PreferPairs;

impl ScheduleSource for PreferPairs {
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize> {
        let pair = enabled
            .iter()
            .position(|c| matches!(c, StepChoice::EvolveTwo(..) | StepChoice::DoTwo(..)));
        Some(pair.unwrap_or(0))
    }
}

struct Pending {
    session: SessionId,
    req: Json,
}

pub struct Hub {
    cfg: Config,
    sessions: BTreeMap<SessionId, Session>,
    pending: BTreeMap<u64, Pending>,
    next_session: SessionId,
    open: bool,
    schedule: Box<dyn ScheduleSource + Send>,
    trace: Option<Vec<Json>>,
}

impl Hub {
    pub fn new(opts: HubOptions) -> Hub {
        let schedule: Box<dyn ScheduleSource + Send> = match opts.policy {
            Policy::PreferPairs => Box::new(PreferPairs),
            Policy::Seeded(seed) => Box::new(SeededSchedule::new(seed)),
            Policy::FirstEnabled => Box::new(FirstEnabled),
        };
        Hub {
            cfg: Config::with_hist_cap(opts.hist_cap),
            sessions: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_session: 1,
            open: opts.open,
            schedule,
            trace: opts.trace.then(Vec::new),
        }
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    /// Installs a start-up program before any session connects.
    pub fn boot(&mut self, r: Program) -> Result<(), String> {
        let t = self.cfg.submit_evolution(r, "init");
        let recs = self.run();
        for rec in &recs {
            for o in &rec.outcomes {
                if let StepOutcome::Rejected { sub, reason } = o {
                    if sub.id == t.id {
                        return Err(reason.to_string());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn connect(&mut self, role: Role) -> SessionId {
        let id = self.next_session;
        self.next_session += 1;
        self.sessions.insert(id, Session { id, role, subscriptions: BTreeSet::new() });
        id
    }

    /// Forgets the session. Its queued work still runs; replies are dropped.
    pub fn disconnect(&mut self, id: SessionId) {
        self.sessions.remove(&id);
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    /// Trace lines recorded since the last call.
    pub fn take_trace(&mut self) -> Vec<Json> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn handle_line(&mut self, id: SessionId, line: &str) -> Outbox {
        match parse_request(line) {
            Ok(req) => self.handle_message(id, req),
            Err(resp) => vec![(id, resp)],
        }
    }

    /// Dispatches one request without stepping the configuration.
    pub fn handle_message(&mut self, id: SessionId, msg: Request) -> Outbox {
        let Some(session) = self.sessions.get_mut(&id) else {
            return Vec::new();
        };
        let reply = match msg {
            Request::Hello { .. } => Response::error("protocol", None, "already greeted"),
            Request::Evolve { req, code } => {
                if session.role == Role::User && !self.open {
                    Response::Rejected {
                        req,
                        reason: "Forbidden".into(),
                        detail: json!({ "message": "user sessions cannot evolve code" }),
                    }
                } else {
                    match parse_program(&code) {
                        Ok(r) => {
                            let t = self.cfg.submit_evolution(r, &id.to_string());
                            self.pending.insert(t.id, Pending { session: id, req });
                            return Vec::new();
                        }
                        Err(e) => parse_rejection(req, &e),
                    }
                }
            }
            Request::Do { req, expr } => match parse_do_text(&expr) {
                Ok(d) => {
                    let t = self.cfg.submit_do(d, &id.to_string());
                    self.pending.insert(t.id, Pending { session: id, req });
                    return Vec::new();
                }
                Err(e) => parse_rejection(req, &e),
            },
            Request::Read { req, name } => match self.cfg.read(&name) {
                Some(v) => Response::Value { req, value: json::value(&v) },
                None => Response::error("unbound", Some(req), format!("`{name}` is not bound")),
            },
            Request::Subscribe { name, req } => {
                session.subscriptions.insert(name.clone());
                match req {
                    Some(req) => Response::Value { req, value: json::option_value(self.cfg.read(&name).as_ref()) },
                    None => return Vec::new(),
                }
            }
            Request::Unsubscribe { name, req } => {
                session.subscriptions.remove(&name);
                match req {
                    Some(req) => Response::Value { req, value: Json::Null },
                    None => return Vec::new(),
                }
            }
            Request::Env { req } => Response::Value { req, value: json::env(self.cfg.env()) },
            Request::Dump { req } => Response::Value { req, value: json::dump(self.cfg.store()) },
        };
        vec![(id, reply)]
    }

    fn run(&mut self) -> Vec<StepRecord> {
        let mut recs = Vec::new();
        while let Some(rec) = self.cfg.step_with(&mut *self.schedule) {
            if let Some(t) = &mut self.trace {
                t.push(json::trace_line(&rec));
            }
            recs.push(rec);
        }
        recs
    }

    /// Steps until quiescent and returns the resulting messages.
    pub fn pump(&mut self) -> Outbox {
        let mut out = Vec::new();
        for rec in self.run() {
            self.route(&rec, &mut out);
        }
        out
    }

    fn route(&mut self, rec: &StepRecord, out: &mut Outbox) {
        for c in &rec.changes {
            for s in self.sessions.values().filter(|s| s.subscriptions.contains(&c.name)) {
                out.push((
                    s.id,
                    Response::Changed {
                        name: c.name.clone(),
                        old: json::option_value(c.old.as_ref()),
                        new: json::value(&c.new),
                        txn: c.txn.0,
                    },
                ));
            }
        }
        for o in &rec.outcomes {
            for t in o.tickets() {
                let Some(p) = self.pending.remove(&t.id) else { continue };
                if !self.sessions.contains_key(&p.session) {
                    continue;
                }
                out.push((p.session, terminal(o, p.req)));
            }
        }
    }
}

fn terminal(o: &StepOutcome, req: Json) -> Response {
    match o {
        StepOutcome::Accepted { .. } => Response::Accepted { req },
        StepOutcome::Rejected { reason, .. } => {
            let (reason, detail) = json::rejection(reason);
            Response::Rejected { req, reason, detail }
        }
        StepOutcome::Executed { changes, .. } => Response::Executed {
            req,
            changes: changes
                .iter()
                .map(|c| WireChange {
                    name: c.name.clone(),
                    old: json::option_value(c.old.as_ref()),
                    new: json::value(&c.new),
                })
                .collect(),
        },
        StepOutcome::ActionFailed { error: error @ ActionError::Type(_), .. } => {
            Response::Rejected { req, reason: error.code().into(), detail: json::action_error(error) }
        }
        StepOutcome::ActionFailed { error, .. } => Response::Failed {
            req,
            reason: error.code().into(),
            detail: Some(json::action_error(error)),
        },
        StepOutcome::QueueDied { .. } => Response::QueueDied { req },
    }
}

fn parse_rejection(req: Json, e: &ParseError) -> Response {
    Response::Rejected { req, reason: "ParseError".into(), detail: json::parse_error(e) }
}

/// Accepts `do e` or a bare `e`.
pub fn parse_do_text(text: &str) -> Result<DoStmt, ParseError> {
    parse_do(text).or_else(|e| parse_expr(text).map(DoStmt::new).map_err(|_| e))
}
