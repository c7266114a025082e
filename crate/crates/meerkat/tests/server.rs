mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{default_server, spawn_server, Client};
use meerkat::hub::{Hub, HubOptions};
use meerkat::server::ServeOptions;
use serde_json::{json, Value};

const CHAIN: &str = "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;";

#[test]
fn evolve_then_read_over_tcp() {
    let srv = default_server();
    let mut c = Client::connect(srv.addr, "programmer");
    assert_eq!(
        c.call(json!({"type":"evolve","req":"e","code":CHAIN})),
        json!({"type":"accepted","req":"e"})
    );
    assert_eq!(
        c.call(json!({"type":"read","req":"r","name":"inc2"})),
        json!({"type":"value","req":"r","value":3})
    );
    let err = c.call(json!({"type":"read","req":"n","name":"nosuch"}));
    assert_eq!((err["type"].as_str(), err["reason"].as_str()), (Some("error"), Some("unbound")));
}

#[test]
fn version_mismatch_is_refused() {
    let srv = default_server();
    let mut c = Client::raw(srv.addr);
    c.send(json!({"type":"hello","version":2}));
    let m = c.recv();
    assert_eq!((m["type"].as_str(), m["reason"].as_str()), (Some("error"), Some("version")));
    assert_eq!(c.try_recv(), None);
}

#[test]
fn first_line_must_be_hello() {
    let srv = default_server();
    let mut c = Client::raw(srv.addr);
    c.send(json!({"type":"env","req":1}));
    assert_eq!(c.recv()["reason"], "handshake");
    assert_eq!(c.try_recv(), None);
}

#[test]
fn malformed_lines_are_isolated() {
    let srv = default_server();
    let mut a = Client::connect(srv.addr, "programmer");
    let mut b = Client::connect(srv.addr, "programmer");
    b.send(json!({"type":"evolve","req":"b1","code":"var k = 1;"}));
    a.send_raw("{not json");
    assert_eq!(a.recv()["reason"], "parse");
    a.send(json!({"type":"read","req":1}));
    let m = a.recv();
    assert_eq!((m["reason"].as_str(), &m["req"]), (Some("schema"), &json!(1)));
    assert_eq!(b.until(&json!("b1")).0["type"], "accepted");
    // Both sessions keep working.
    assert_eq!(a.call(json!({"type":"read","req":2,"name":"k"}))["value"], 1);
    assert_eq!(b.call(json!({"type":"env","req":3}))["value"]["bindings"]["k"]["kind"], "var");
}

#[test]
fn concurrent_disjoint_evolutions_notify_a_subscriber() {
    let srv = default_server();
    let mut obs = Client::connect(srv.addr, "user");
    for n in ["a", "b"] {
        obs.send(json!({"type":"subscribe","name":n}));
    }
    // An ack round trip makes sure both subscriptions are registered.
    assert_eq!(obs.call(json!({"type":"env","req":0}))["type"], "value");
    let mut p1 = Client::connect(srv.addr, "programmer");
    let mut p2 = Client::connect(srv.addr, "programmer");
    p1.send(json!({"type":"evolve","req":1,"code":"var a = 1;"}));
    p2.send(json!({"type":"evolve","req":2,"code":"var b = 2;"}));
    assert_eq!(p1.until(&json!(1)).0["type"], "accepted");
    assert_eq!(p2.until(&json!(2)).0["type"], "accepted");
    let mut got = BTreeMap::new();
    while got.len() < 2 {
        let m = obs.recv();
        assert_eq!(m["type"], "changed");
        assert_eq!(m["old"], Value::Null);
        got.insert(m["name"].as_str().unwrap().to_string(), m["new"].clone());
    }
    assert_eq!(got, BTreeMap::from([("a".into(), json!(1)), ("b".into(), json!(2))]));
}

#[test]
fn subscriber_sees_chain_propagation() {
    let srv = default_server();
    let mut p = Client::connect(srv.addr, "programmer");
    p.call(json!({"type":"evolve","req":0,"code":CHAIN}));
    let mut u = Client::connect(srv.addr, "user");
    let ack = u.call(json!({"type":"subscribe","name":"inc1","req":"s"}));
    assert_eq!(ack["value"], 2);
    let (done, events) = {
        u.send(json!({"type":"do","req":"d","expr":"do (action { x := 2 })"}));
        u.until(&json!("d"))
    };
    assert_eq!(done["type"], "executed");
    assert_eq!(events.len(), 1);
    let e = &events[0];
    assert_eq!((&e["name"], &e["old"], &e["new"]), (&json!("inc1"), &json!(2), &json!(3)));
    assert!(e["txn"].as_u64().unwrap() >= 2);
    // After unsubscribing no further events arrive.
    u.call(json!({"type":"unsubscribe","name":"inc1","req":"x"}));
    let (_, events) = {
        u.send(json!({"type":"do","req":"d2","expr":"do (action { x := 7 })"}));
        u.until(&json!("d2"))
    };
    assert!(events.is_empty());
}

#[test]
fn pipelined_requests_each_get_one_reply() {
    let srv = default_server();
    let mut c = Client::connect(srv.addr, "programmer");
    let reqs = [
        json!({"type":"evolve","req":1,"code":CHAIN}),
        json!({"type":"do","req":2,"expr":"do (action { x := 5 })"}),
        json!({"type":"do","req":3,"expr":"do 1"}),
        json!({"type":"read","req":4,"name":"x"}),
        json!({"type":"evolve","req":5,"code":"def broken = nosuch;"}),
        json!({"type":"do","req":6,"expr":"do (action { x := 1 / 0 })"}),
        json!({"type":"env","req":7}),
        json!({"type":"dump","req":8}),
        json!({"type":"evolve","req":9,"code":"def;"}),
    ];
    for r in &reqs {
        c.send(r.clone());
    }
    let mut replies = BTreeMap::new();
    while replies.len() < reqs.len() {
        let m = c.recv();
        let q = m["req"].as_u64().expect("every message here is a reply");
        assert!(replies.insert(q, m).is_none(), "duplicate reply for {q}");
    }
    assert_eq!(replies[&1]["type"], "accepted");
    assert_eq!(replies[&2]["type"], "executed");
    assert_eq!(replies[&3]["reason"], "NotAnAction");
    assert_eq!(replies[&5]["type"], "rejected");
    assert_eq!(replies[&6]["type"], "failed");
    assert_eq!(replies[&9]["reason"], "ParseError");
    assert_eq!(c.call(json!({"type":"read","req":10,"name":"inc2"}))["value"], 7);
}

#[test]
fn roles_are_enforced_unless_open() {
    let srv = default_server();
    let mut u = Client::connect(srv.addr, "user");
    assert_eq!(u.call(json!({"type":"evolve","req":1,"code":"var a = 1;"}))["reason"], "Forbidden");
    let open = spawn_server(Hub::new(HubOptions { open: true, ..HubOptions::default() }), ServeOptions::default());
    let mut u = Client::connect(open.addr, "user");
    assert_eq!(u.call(json!({"type":"evolve","req":1,"code":"var a = 1;"}))["type"], "accepted");
}

#[test]
fn closed_sessions_still_have_their_work_done() {
    let srv = default_server();
    {
        let mut c = Client::connect(srv.addr, "programmer");
        c.send(json!({"type":"evolve","req":1,"code":"var left = 42;"}));
    }
    let mut c = Client::connect(srv.addr, "programmer");
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let m = c.call(json!({"type":"read","req":"r","name":"left"}));
        if m["type"] == "value" {
            assert_eq!(m["value"], 42);
            break;
        }
        assert!(Instant::now() < deadline, "evolution never applied");
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn slow_subscriber_is_dropped_with_overflow() {
    let srv = spawn_server(Hub::new(HubOptions::default()), ServeOptions { buffer: 4, trace: None });
    let mut p = Client::connect(srv.addr, "programmer");
    p.call(json!({"type":"evolve","req":0,"code":"var s = \"\";"}));
    let mut slow = Client::connect(srv.addr, "user");
    slow.call(json!({"type":"subscribe","name":"s","req":"sub"}));
    let big = |c: char| c.to_string().repeat(200_000);
    let start = Instant::now();
    for i in 0..80 {
        let text = big(if i % 2 == 0 { 'a' } else { 'b' });
        let m = p.call(json!({"type":"do","req":i,"expr":format!("do (action {{ s := \"{text}\" }})")}));
        assert_eq!(m["type"], "executed");
    }
    // The writer never waited on the slow reader.
    assert!(start.elapsed() < Duration::from_secs(60));
    let mut last = Value::Null;
    let mut n = 0;
    while let Some(m) = slow.try_recv() {
        n += 1;
        last = m;
    }
    assert!(n < 80, "all {n} events were delivered");
    assert_eq!((last["type"].as_str(), last["reason"].as_str()), (Some("error"), Some("overflow")));
}

#[test]
fn trace_file_lists_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    let hub = Hub::new(HubOptions { trace: true, ..HubOptions::default() });
    let srv = spawn_server(hub, ServeOptions { trace: Some(path.clone()), ..ServeOptions::default() });
    let mut c = Client::connect(srv.addr, "programmer");
    c.call(json!({"type":"evolve","req":1,"code":CHAIN}));
    c.call(json!({"type":"do","req":2,"expr":"do (action { x := 2 })"}));
    drop(srv);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines, [json!({"step":"evolve_one","tickets":[1],"txns":[1]}), json!({"step":"do_one","tickets":[2],"txns":[2]})]);
}
