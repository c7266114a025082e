//! TCP front end: one coordinator task owns the [`Hub`]; each connection
//! gets a reader and a writer task.
//!
//! The coordinator drains every command that is already waiting, then pumps
//! the hub to quiescence, so requests that arrive together are stepped
//! together and may be paired. Replies go out through bounded per-session
//! queues. A session whose queue fills up is cut off with an `overflow`
//! error instead of stalling the stepper.

use std::collections::BTreeMap;
use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};

use crate::hub::{Hub, SessionId};
use crate::protocol::{parse_request, Request, Response, Role, PROTOCOL_VERSION};

pub const DEFAULT_BIND: &str = "127.0.0.1:7788";

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Responses buffered per session before it is dropped.
    pub buffer: usize,
    /// Append the scheduler trace here, one JSON object per step.
    pub trace: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> ServeOptions {
        ServeOptions { buffer: 1024, trace: None }
    }
}

enum Cmd {
    Connect { role: Role, out: Outlet, reply: oneshot::Sender<SessionId> },
    Line(SessionId, String),
    Gone(SessionId),
}

struct Outlet {
    tx: mpsc::Sender<Response>,
    overflow: Arc<AtomicBool>,
}

/// Accepts connections until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    hub: Hub,
    opts: ServeOptions,
    shutdown: impl Future<Output = ()>,
) -> io::Result<()> {
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let trace = match &opts.trace {
        Some(p) => Some(std::fs::OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let coordinator = tokio::spawn(coordinate(hub, cmd_rx, trace));
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => {
                let (stream, _) = match accepted {
                    Ok(s) => s,
                    // Transient accept failures (e.g. too many open files)
                    // should not take the server down.
                    Err(_) => continue,
                };
                tokio::spawn(connection(stream, cmd_tx.clone(), opts.buffer));
            }
        }
    }
    drop(cmd_tx);
    coordinator.abort();
    Ok(())
}

async fn coordinate(mut hub: Hub, mut rx: mpsc::UnboundedReceiver<Cmd>, mut trace: Option<std::fs::File>) {
    let mut outlets: BTreeMap<SessionId, Outlet> = BTreeMap::new();
    while let Some(first) = rx.recv().await {
        let mut cmd = Some(first);
        while let Some(c) = cmd {
            match c {
                Cmd::Connect { role, out, reply } => {
                    let id = hub.connect(role);
                    outlets.insert(id, out);
                    if reply.send(id).is_err() {
                        hub.disconnect(id);
                        outlets.remove(&id);
                    }
                }
                Cmd::Line(id, line) => {
                    let out = hub.handle_line(id, &line);
                    deliver(&mut hub, &mut outlets, out);
                }
                Cmd::Gone(id) => {
                    hub.disconnect(id);
                    outlets.remove(&id);
                }
            }
            cmd = rx.try_recv().ok();
        }
        let out = hub.pump();
        // The trace is written before replies go out, so a reply implies
        // its step is on disk.
        if let Some(f) = &mut trace {
            let mut buf = String::new();
            for line in hub.take_trace() {
                buf.push_str(&line.to_string());
                buf.push('\n');
            }
            if !buf.is_empty() {
                // Tracing is diagnostic; a full disk must not stop stepping.
                let _ = io::Write::write_all(f, buf.as_bytes());
            }
        }
        deliver(&mut hub, &mut outlets, out);
    }
}

fn deliver(hub: &mut Hub, outlets: &mut BTreeMap<SessionId, Outlet>, out: Vec<(SessionId, Response)>) {
    for (id, msg) in out {
        let Some(o) = outlets.get(&id) else { continue };
        match o.tx.try_send(msg) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(_)) => {
                o.overflow.store(true, Ordering::SeqCst);
                outlets.remove(&id);
                hub.disconnect(id);
            }
            Err(mpsc::error::TrySendError::Closed(_)) => {
                outlets.remove(&id);
                hub.disconnect(id);
            }
        }
    }
}

async fn write_line<W: AsyncWrite + Unpin>(w: &mut W, msg: &Response) -> io::Result<()> {
    let mut line = msg.to_line();
    line.push('\n');
    w.write_all(line.as_bytes()).await
}

async fn connection(stream: TcpStream, cmds: mpsc::UnboundedSender<Cmd>, buffer: usize) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();

    let role = match lines.next_line().await {
        Ok(Some(line)) => match parse_request(&line) {
            Ok(Request::Hello { version, role }) if version == PROTOCOL_VERSION => role.unwrap_or_default(),
            Ok(Request::Hello { version, .. }) => {
                let msg = format!("server speaks version {PROTOCOL_VERSION}, client sent {version}");
                let _ = write_line(&mut write, &Response::error("version", None, msg)).await;
                return;
            }
            Ok(_) => {
                let msg = "the first message must be hello";
                let _ = write_line(&mut write, &Response::error("handshake", None, msg)).await;
                return;
            }
            Err(e) => {
                let _ = write_line(&mut write, &e).await;
                return;
            }
        },
        _ => return,
    };
    if write_line(&mut write, &Response::Hello { version: PROTOCOL_VERSION }).await.is_err() {
        return;
    }

    let (tx, mut rx) = mpsc::channel(buffer.max(1));
    let overflow = Arc::new(AtomicBool::new(false));
    let (reply_tx, reply_rx) = oneshot::channel();
    let out = Outlet { tx, overflow: overflow.clone() };
    if cmds.send(Cmd::Connect { role, out, reply: reply_tx }).is_err() {
        return;
    }
    let Ok(id) = reply_rx.await else { return };

    let mut writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            if write_line(&mut write, &msg).await.is_err() {
                return;
            }
        }
        if overflow.load(Ordering::SeqCst) {
            let msg = Response::error("overflow", None, "client too slow; disconnecting");
            let _ = write_line(&mut write, &msg).await;
        }
        let _ = write.shutdown().await;
    });

    let mut writer_done = false;
    loop {
        tokio::select! {
            line = lines.next_line() => match line {
                Ok(Some(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    if cmds.send(Cmd::Line(id, line)).is_err() {
                        break;
                    }
                }
                _ => break,
            },
            // The coordinator dropped us (overflow); stop reading.
            _ = &mut writer => {
                writer_done = true;
                break;
            }
        }
    }
    let _ = cmds.send(Cmd::Gone(id));
    if !writer_done {
        let _ = writer.await;
    }
}
