//! Line-oriented client, either connected to a server or running a hub
//! in-process.
//!
//! Commands:
//!
//! ```text
//! :evolve <<EOF      submit the following lines, up to a line `EOF`
//! :evolve CODE       submit one line of code
//! :load FILE         submit a file
//! do EXPR            submit an action
//! :read NAME         print the committed value
//! :watch NAME        print `! NAME: old -> new` on every change
//! :unwatch NAME
//! :env               print the typing environment
//! :graph             print dependency edges, one `def -> dep` per line
//! :dump FILE         write the store as JSON
//! :help
//! :quit
//! ```

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value as Json};

use crate::hub::{Hub, HubOptions, Policy, SessionId};
use crate::protocol::{Request, Response, Role, PROTOCOL_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_LOST: i32 = 2;

#[derive(Clone, Debug, Default)]
pub struct ReplOptions {
    pub connect: Option<String>,
    pub embedded: bool,
    pub script: Option<PathBuf>,
    /// Schedule seed of the embedded hub.
    pub seed: u64,
    pub role: Role,
    /// Print a prompt before each command.
    pub prompt: bool,
}

/// Output shared with the remote event thread; each message is written
/// while holding the lock, so lines never interleave.
pub type Sink = Arc<Mutex<dyn Write + Send>>;

fn emit(out: &Sink, line: &str) {
    let mut w = out.lock().unwrap_or_else(|e| e.into_inner());
    let _ = writeln!(w, "{line}");
    let _ = w.flush();
}

/// The connection was lost; the REPL exits with [`EXIT_LOST`].
#[derive(Debug)]
struct Lost(String);

trait Backend {
    /// Sends one request and returns its terminal response. Events that
    /// arrive meanwhile are printed.
    fn call(&mut self, req: Request) -> Result<Response, Lost>;
}

struct Embedded {
    hub: Hub,
    id: SessionId,
    out: Sink,
}

impl Embedded {
    fn new(seed: u64, role: Role, out: Sink) -> Embedded {
        let mut hub = Hub::new(HubOptions { open: true, policy: Policy::Seeded(seed), ..HubOptions::default() });
        let id = hub.connect(role);
        Embedded { hub, id, out }
    }
}

impl Backend for Embedded {
    fn call(&mut self, req: Request) -> Result<Response, Lost> {
        let mut msgs = self.hub.handle_message(self.id, req);
        msgs.extend(self.hub.pump());
        let mut terminal = None;
        for (_, m) in msgs {
            match m {
                Response::Changed { .. } => emit(&self.out, &render_event(&m)),
                m if terminal.is_none() && m.req().is_some() => terminal = Some(m),
                _ => {}
            }
        }
        terminal.ok_or_else(|| Lost("no reply".into()))
    }
}

struct Remote {
    stream: TcpStream,
    replies: mpsc::Receiver<Response>,
}

impl Remote {
    fn connect(addr: &str, role: Role, out: Sink) -> Result<Remote, Lost> {
        let stream = TcpStream::connect(addr).map_err(|e| Lost(format!("cannot connect to {addr}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let mut reader = BufReader::new(stream.try_clone().map_err(|e| Lost(e.to_string()))?);
        let mut w = &stream;
        let hello = json!({ "type": "hello", "version": PROTOCOL_VERSION, "role": role });
        writeln!(w, "{hello}").map_err(|e| Lost(e.to_string()))?;
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(|e| Lost(e.to_string()))? == 0 {
            return Err(Lost("server closed the connection during the handshake".into()));
        }
        match serde_json::from_str::<Response>(&line) {
            Ok(Response::Hello { .. }) => {}
            Ok(m @ Response::Error { .. }) => return Err(Lost(render(&m, ""))),
            _ => return Err(Lost(format!("unexpected handshake reply: {}", line.trim_end()))),
        }
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                let Ok(m) = serde_json::from_str::<Response>(&line) else { continue };
                match &m {
                    Response::Changed { .. } => emit(&out, &render_event(&m)),
                    _ if m.req().is_none() => emit(&out, &render(&m, "")),
                    _ => {
                        if tx.send(m).is_err() {
                            break;
                        }
                    }
                }
            }
        });
        Ok(Remote { stream, replies: rx })
    }
}

impl Backend for Remote {
    fn call(&mut self, req: Request) -> Result<Response, Lost> {
        let token = request_token(&req);
        let mut w = &self.stream;
        let line = serde_json::to_string(&req).expect("requests serialise");
        writeln!(w, "{line}").map_err(|e| Lost(e.to_string()))?;
        loop {
            let m = self.replies.recv().map_err(|_| Lost("connection closed".into()))?;
            if m.req() == token.as_ref() {
                return Ok(m);
            }
        }
    }
}

fn request_token(r: &Request) -> Option<Json> {
    match r {
        Request::Evolve { req, .. }
        | Request::Do { req, .. }
        | Request::Read { req, .. }
        | Request::Env { req }
        | Request::Dump { req } => Some(req.clone()),
        Request::Subscribe { req, .. } | Request::Unsubscribe { req, .. } => req.clone(),
        Request::Hello { .. } => None,
    }
}

fn show(v: &Json) -> String {
    v.to_string()
}

fn detail_message(d: Option<&Json>) -> String {
    d.and_then(|d| d.get("message")).and_then(Json::as_str).unwrap_or("").to_string()
}

fn render_event(m: &Response) -> String {
    match m {
        Response::Changed { name, old, new, .. } => format!("! {name}: {} -> {}", show(old), show(new)),
        _ => String::new(),
    }
}

/// One line for a terminal response. `name` labels `value` replies.
fn render(m: &Response, name: &str) -> String {
    match m {
        Response::Hello { version } => format!("connected (protocol {version})"),
        Response::Accepted { .. } => "accepted".into(),
        Response::Rejected { reason, detail, .. } => format!("rejected: {reason}: {}", detail_message(Some(detail))),
        Response::Executed { changes, .. } => match changes.len() {
            1 => "executed (1 change)".into(),
            n => format!("executed ({n} changes)"),
        },
        Response::Failed { reason, detail, .. } => format!("failed: {reason}: {}", detail_message(detail.as_ref())),
        Response::Value { value, .. } => format!("{name} = {}", show(value)),
        Response::Changed { .. } => render_event(m),
        Response::QueueDied { .. } => "queue died: evolution discarded".into(),
        Response::Error { reason, message, .. } => match message {
            Some(msg) => format!("error: {reason}: {msg}"),
            None => format!("error: {reason}"),
        },
    }
}

const HELP: &str = "\
commands:
  :evolve <<EOF ... EOF   submit an evolution spanning several lines
  :evolve CODE            submit a one-line evolution
  :load FILE              submit the contents of FILE
  do EXPR                 run an action
  :read NAME              print a committed value
  :watch NAME             print changes to NAME as they commit
  :unwatch NAME
  :env                    print the typing environment
  :graph                  print dependency edges
  :dump FILE              write the store to FILE as JSON
  :quit";

fn env_lines(env: &Json) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(b) = env.get("bindings").and_then(Json::as_object) {
        for (name, v) in b {
            let kind = v["kind"].as_str().unwrap_or("?");
            let ty = v["type"].as_str().unwrap_or("?");
            let deps: Vec<&str> = v["deps"].as_object().map(|d| d.keys().map(String::as_str).collect()).unwrap_or_default();
            if kind == "def" {
                out.push(format!("def {name}: {ty} <- {{{}}}", deps.join(", ")));
            } else {
                out.push(format!("var {name}: {ty}"));
            }
        }
    }
    out
}

fn graph_lines(env: &Json) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(b) = env.get("bindings").and_then(Json::as_object) {
        for (name, v) in b {
            if let Some(d) = v["deps"].as_object() {
                for dep in d.keys() {
                    out.push(format!("{name} -> {dep}"));
                }
            }
        }
    }
    out
}

struct Session<'a> {
    backend: Box<dyn Backend + 'a>,
    out: Sink,
    next_req: u64,
}

enum Flow {
    Continue,
    Quit,
}

impl Session<'_> {
    fn token(&mut self) -> Json {
        self.next_req += 1;
        json!(self.next_req)
    }

    fn say(&self, line: &str) {
        emit(&self.out, line);
    }

    fn evolve(&mut self, code: String) -> Result<(), Lost> {
        let req = self.token();
        let r = self.backend.call(Request::Evolve { req, code })?;
        self.say(&render(&r, ""));
        Ok(())
    }

    fn query(&mut self, make: impl FnOnce(Json) -> Request) -> Result<Response, Lost> {
        let req = self.token();
        self.backend.call(make(req))
    }

    fn command(&mut self, line: &str, more: &mut dyn FnMut() -> Option<String>) -> Result<Flow, Lost> {
        let line = line.trim();
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match head {
            "" => {}
            _ if head.starts_with('#') => {}
            ":quit" | ":q" => return Ok(Flow::Quit),
            ":help" => self.say(HELP),
            "do" => {
                let r = self.query(|req| Request::Do { req, expr: line.to_string() })?;
                self.say(&render(&r, ""));
            }
            ":evolve" if rest.starts_with("<<") => {
                let term = rest[2..].trim();
                let term = if term.is_empty() { "EOF" } else { term };
                let mut code = String::new();
                loop {
                    match more() {
                        Some(l) if l.trim_end() == term => break,
                        Some(l) => {
                            code.push_str(&l);
                            code.push('\n');
                        }
                        None => {
                            self.say(&format!("error: usage: missing `{term}` terminator"));
                            return Ok(Flow::Continue);
                        }
                    }
                }
                self.evolve(code)?;
            }
            ":evolve" => self.evolve(rest.to_string())?,
            ":load" => match std::fs::read_to_string(rest) {
                Ok(code) => self.evolve(code)?,
                Err(e) => self.say(&format!("error: io: cannot read {rest}: {e}")),
            },
            ":read" if !rest.is_empty() => {
                let r = self.query(|req| Request::Read { req, name: rest.to_string() })?;
                self.say(&render(&r, rest));
            }
            ":watch" if !rest.is_empty() => {
                let r = self.query(|req| Request::Subscribe { name: rest.to_string(), req: Some(req) })?;
                match r {
                    Response::Value { value, .. } => self.say(&format!("watching {rest} = {}", show(&value))),
                    other => self.say(&render(&other, rest)),
                }
            }
            ":unwatch" if !rest.is_empty() => {
                self.query(|req| Request::Unsubscribe { name: rest.to_string(), req: Some(req) })?;
                self.say(&format!("stopped watching {rest}"));
            }
            ":env" | ":graph" => {
                let r = self.query(|req| Request::Env { req })?;
                let Response::Value { value, .. } = r else {
                    self.say(&render(&r, ""));
                    return Ok(Flow::Continue);
                };
                let lines = if head == ":env" { env_lines(&value) } else { graph_lines(&value) };
                if lines.is_empty() {
                    self.say(if head == ":env" { "(empty environment)" } else { "(no edges)" });
                }
                for l in lines {
                    self.say(&l);
                }
            }
            ":dump" if !rest.is_empty() => {
                let r = self.query(|req| Request::Dump { req })?;
                let Response::Value { value, .. } = r else {
                    self.say(&render(&r, ""));
                    return Ok(Flow::Continue);
                };
                let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
                match std::fs::write(rest, text) {
                    Ok(()) => self.say(&format!("dumped to {rest}")),
                    Err(e) => self.say(&format!("error: io: cannot write {rest}: {e}")),
                }
            }
            _ => self.say(&format!("error: usage: unknown command `{line}` (try :help)")),
        }
        Ok(Flow::Continue)
    }
}

/// Runs the REPL over `input`, writing to `out`. Returns the exit code.
///
/// When `echo` is set every consumed line is repeated after `> ` (or `. `
/// inside a heredoc), which keeps scripted transcripts self-describing.
pub fn run(opts: &ReplOptions, input: &mut dyn BufRead, out: Sink, echo: bool) -> i32 {
    let backend: Box<dyn Backend> = match (&opts.connect, opts.embedded) {
        (Some(addr), false) => match Remote::connect(addr, opts.role, out.clone()) {
            Ok(r) => Box::new(r),
            Err(Lost(msg)) => {
                emit(&out, &format!("error: connection: {msg}"));
                return EXIT_LOST;
            }
        },
        (None, true) => Box::new(Embedded::new(opts.seed, opts.role, out.clone())),
        _ => {
            emit(&out, "error: usage: pass exactly one of --connect HOST:PORT or --embedded");
            return EXIT_USAGE;
        }
    };
    let mut s = Session { backend, out: out.clone(), next_req: 0 };
    let mut read_line = |prefix: &str| -> Option<String> {
        let mut l = String::new();
        match input.read_line(&mut l) {
            Ok(0) | Err(_) => None,
            Ok(_) => {
                let l = l.trim_end_matches(['\n', '\r']).to_string();
                if echo {
                    emit(&out, &format!("{prefix}{l}"));
                }
                Some(l)
            }
        }
    };
    loop {
        if opts.prompt {
            let mut w = s.out.lock().unwrap_or_else(|e| e.into_inner());
            let _ = write!(w, "meerkat> ");
            let _ = w.flush();
        }
        let Some(line) = read_line("> ") else { return EXIT_OK };
        let mut more = || read_line(". ");
        match s.command(&line, &mut more) {
            Ok(Flow::Continue) => {}
            Ok(Flow::Quit) => return EXIT_OK,
            Err(Lost(msg)) => {
                s.say(&format!("error: connection lost: {msg}"));
                return EXIT_LOST;
            }
        }
    }
}

/// An in-memory [`Sink`] target, for capturing transcripts.
#[derive(Clone, Default)]
pub struct Transcript(pub Arc<Mutex<Vec<u8>>>);

impl Transcript {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap()).into_owned()
    }
}

impl Write for Transcript {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// `run` with an in-memory transcript, echo on.
pub fn run_script(opts: &ReplOptions, script: &str) -> (i32, String) {
    let t = Transcript::default();
    let sink: Sink = Arc::new(Mutex::new(t.clone()));
    let code = run(opts, &mut script.as_bytes(), sink, true);
    (code, t.text())
}
