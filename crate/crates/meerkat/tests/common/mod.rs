#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use meerkat::hub::{Hub, HubOptions};
use meerkat::server::{serve, ServeOptions};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub struct Server {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn spawn_server(hub: Hub, opts: ServeOptions) -> Server {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(l.local_addr().unwrap()).unwrap();
            serve(l, hub, opts, async {
                let _ = stop_rx.await;
            })
            .await
            .unwrap();
        });
        rt.shutdown_timeout(Duration::from_secs(1));
    });
    let addr = addr_rx.recv().unwrap();
    Server { addr, stop: Some(stop_tx), thread: Some(thread) }
}

pub fn default_server() -> Server {
    spawn_server(Hub::new(HubOptions::default()), ServeOptions::default())
}

pub struct Client {
    pub w: TcpStream,
    pub r: BufReader<TcpStream>,
}

impl Client {
    /// Connects without greeting.
    pub fn raw(addr: SocketAddr) -> Client {
        let w = TcpStream::connect(addr).unwrap();
        w.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        let r = BufReader::new(w.try_clone().unwrap());
        Client { w, r }
    }

    pub fn connect(addr: SocketAddr, role: &str) -> Client {
        let mut c = Client::raw(addr);
        c.send(json!({"type":"hello","version":1,"role":role}));
        assert_eq!(c.recv(), json!({"type":"hello","version":1}));
        c
    }

    pub fn send(&mut self, v: Value) {
        self.send_raw(&v.to_string());
    }

    pub fn send_raw(&mut self, line: &str) {
        writeln!(self.w, "{line}").unwrap();
    }

    pub fn recv(&mut self) -> Value {
        self.try_recv().expect("connection closed")
    }

    /// `None` on end of stream.
    pub fn try_recv(&mut self) -> Option<Value> {
        let mut line = String::new();
        match self.r.read_line(&mut line) {
            Ok(0) => None,
            Ok(_) => Some(serde_json::from_str(&line).unwrap()),
            Err(e) => panic!("read failed: {e}"),
        }
    }

    /// Reads until the terminal reply for `req`, returning it and any
    /// events seen on the way.
    pub fn until(&mut self, req: &Value) -> (Value, Vec<Value>) {
        let mut seen = Vec::new();
        loop {
            let m = self.recv();
            if m.get("req") == Some(req) {
                return (m, seen);
            }
            seen.push(m);
        }
    }

    pub fn call(&mut self, v: Value) -> Value {
        let req = v["req"].clone();
        self.send(v);
        self.until(&req).0
    }
}
