mod common;

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};

use common::*;
use minewatch_core::alerting::{AlertRule, Comparator, Scope};
use minewatch_core::{Channel, NodeAddress};
use minewatch_gateway::{parse_snapshot, render_snapshot, GatewayOptions};

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn snapshot_requests_before_and_after_publication() {
    let cfg = lab_config(0.0);
    let gw = gateway(&cfg, GatewayOptions::default());
    let server = start(gw.clone()).await;
    let mut c = LineClient::connect(&server).await;
    assert_eq!(c.request("GET SNAPSHOT").await, "ERR 409 no snapshot published yet\n");
    assert!(c.request("GET CLUSTER 1").await.starts_with("ERR 409"));

    let snaps = snapshots(&cfg, 1);
    gw.publish(snaps[0].clone()).unwrap();
    let body = c.request("GET SNAPSHOT").await;
    assert_eq!(body.as_bytes(), render_snapshot(&snaps[0]).as_slice());
    assert_eq!(parse_snapshot(body.as_bytes()).unwrap().entries.len(), 12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_and_unknown_requests() {
    let cfg = lab_config(0.0);
    let gw = gateway(&cfg, GatewayOptions::default());
    gw.publish(snapshots(&cfg, 1).remove(0)).unwrap();
    let server = start(gw).await;
    let mut c = LineClient::connect(&server).await;
    assert!(c.request("HELLO").await.starts_with("ERR 400 "));
    assert!(c.request("GET CLUSTER 3").await.starts_with("ERR 404 "));
    assert!(c.request("GET CLUSTER 1.x").await.starts_with("ERR 400 "));
    assert!(c.request("GET SERIES 9 TEMP_C 0 1").await.starts_with("ERR 404 "));
    assert!(c.request("GET SERIES 1 CO_PPM 0 1").await.starts_with("ERR 404 "));
    assert!(c.request("SUBSCRIBE 7").await.starts_with("ERR 404 "));
    // the connection survives errors
    assert!(c.request("GET SNAPSHOT").await.starts_with("SNAPSHOT 0 0\n"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn cluster_filter_is_sound_and_complete() {
    let cfg = lab_config(0.2);
    let gw = gateway(&cfg, GatewayOptions::default());
    let server = start(gw.clone()).await;
    let mut c = LineClient::connect(&server).await;
    for s in snapshots(&cfg, 30) {
        gw.publish(s.clone()).unwrap();
        let full = parse_snapshot(c.request("GET SNAPSHOT").await.as_bytes()).unwrap();
        assert_eq!(full, parse_snapshot(&render_snapshot(&s)).unwrap());
        for node in cfg.topology.nodes() {
            let root = &node.address;
            let body = c.request(&format!("GET CLUSTER {root}")).await;
            let filtered = parse_snapshot(body.as_bytes()).unwrap();
            let expected: Vec<_> = full.entries.iter().filter(|e| e.address.is_descendant_of(root)).cloned().collect();
            assert_eq!(filtered.entries, expected, "cluster {root}");
            assert_eq!(filtered.seq, s.seq);
        }
    }
    let one = c.request("GET CLUSTER 1").await;
    let addrs: HashSet<String> =
        parse_snapshot(one.as_bytes()).unwrap().entries.iter().map(|e| e.address.to_string()).collect();
    assert_eq!(addrs, HashSet::from(["1".into(), "1.1".into(), "1.2".into()]));
    assert_eq!(c.request("GET CLUSTER 0").await, c.request("GET SNAPSHOT").await);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_snapshot_requests_are_identical() {
    let cfg = lab_config(0.05);
    let gw = gateway(&cfg, GatewayOptions::default());
    for s in snapshots(&cfg, 8) {
        gw.publish(s).unwrap();
    }
    let server = Arc::new(start(gw).await);
    let mut handles = Vec::new();
    for _ in 0..10 {
        let server = server.clone();
        handles.push(tokio::spawn(async move { LineClient::connect(&server).await.request("GET SNAPSHOT").await }));
    }
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.iter().all(|b| b == &bodies[0]));
    assert!(bodies[0].starts_with("SNAPSHOT 7 7000\n"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn subscriber_sees_every_publication_in_order() {
    let cfg = lab_config(0.0);
    let gw = gateway(&cfg, GatewayOptions::default());
    let snaps = snapshots(&cfg, 10);
    for s in &snaps[..5] {
        gw.publish(s.clone()).unwrap();
    }
    let server = start(gw.clone()).await;
    let mut sub = LineClient::connect(&server).await;
    sub.send("SUBSCRIBE").await;
    wait_for_subscribers(&gw, 1).await;
    for s in &snaps[5..] {
        gw.publish(s.clone()).unwrap();
    }
    for s in &snaps[5..] {
        assert_eq!(sub.block().await.as_bytes(), render_snapshot(s).as_slice());
    }
    server.shutdown(Duration::from_secs(2)).await;
    assert_eq!(sub.line().await, None, "stream closes on shutdown");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn filtered_subscription_carries_alarms() {
    let cfg = lab_config(0.0);
    let rule = AlertRule {
        id: "warm".into(),
        channel: Channel::TempC,
        scope: Scope::All,
        comparator: Comparator::Ge,
        threshold: -40.0,
        consecutive: 2,
    };
    let gw = Arc::new(
        minewatch_gateway::Gateway::new(cfg.topology.clone(), GatewayOptions::default()).with_rules([rule]).unwrap(),
    );
    let server = start(gw.clone()).await;
    let mut sub = LineClient::connect(&server).await;
    sub.send("SUBSCRIBE 2").await;
    wait_for_subscribers(&gw, 1).await;
    let snaps = snapshots(&cfg, 2);
    gw.publish(snaps[0].clone()).unwrap();
    gw.publish(snaps[1].clone()).unwrap();
    let first = sub.block().await;
    assert_eq!(first.as_bytes(), render_snapshot(&snaps[0].cluster(&"2".parse().unwrap())).as_slice());
    let second = sub.block().await;
    assert!(second.starts_with("SNAPSHOT 1 1000\nNODE 2 "));
    let mut alarms = Vec::new();
    for _ in 0..3 {
        alarms.push(sub.line().await.unwrap());
    }
    assert!(alarms.iter().all(|a| a.starts_with("ALARM RAISED warm 2") && a.ends_with(" 1\n")), "{alarms:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn series_window() {
    let cfg = lab_config(0.05);
    let gw = gateway(&cfg, GatewayOptions::default());
    let server = start(gw.clone()).await;
    let mut c = LineClient::connect(&server).await;
    assert_eq!(c.request("GET SERIES 1.1 TEMP_C 0 599").await, "seq,sim_time_ms,value\nEND\n");
    let snaps = snapshots(&cfg, 600);
    for s in &snaps {
        gw.publish(s.clone()).unwrap();
    }
    let csv = c.request("GET SERIES 1.1 TEMP_C 0 599").await;
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "seq,sim_time_ms,value");
    assert_eq!(*rows.last().unwrap(), "END");
    assert_eq!(rows.len(), 602);
    let a: NodeAddress = "1.1".parse().unwrap();
    for (row, s) in rows[1..601].iter().zip(&snaps) {
        let v = s.value(&a, Channel::TempC).unwrap();
        let expected =
            format!("{},{},{}", s.seq, s.sim_time_ms(), v.map(|x| Channel::TempC.format_value(x)).unwrap_or_default());
        assert_eq!(*row, expected);
    }
    let part = c.request("GET SERIES 1.1 LIGHT_RAW 10 19").await;
    assert_eq!(part.lines().count(), 12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn slow_subscriber_is_cut_off_without_stalling_others() {
    const N: usize = 6000;
    let cfg = lab_config(0.0);
    let gw = gateway(&cfg, GatewayOptions { subscriber_queue: 16, ..Default::default() });
    let server = start(gw.clone()).await;
    // a client that never reads, with a tiny receive window so the server's writes back up
    let socket = tokio::net::TcpSocket::new_v4().unwrap();
    socket.set_recv_buffer_size(1024).unwrap();
    let mut slow = socket.connect(server.tcp_addr.unwrap()).await.unwrap();
    slow.write_all(b"SUBSCRIBE\n").await.unwrap();
    let mut fast = LineClient::connect(&server).await;
    fast.send("SUBSCRIBE").await;
    wait_for_subscribers(&gw, 2).await;

    let snaps = snapshots(&cfg, N as u64);
    let reader = tokio::spawn(async move {
        let mut seqs = Vec::new();
        for _ in 0..N {
            let block = fast.block().await;
            seqs.push(parse_snapshot(block.as_bytes()).unwrap().seq);
        }
        seqs
    });
    for (i, s) in snaps.into_iter().enumerate() {
        gw.publish(s).unwrap();
        if i % 4 == 3 {
            tokio::time::sleep(Duration::from_millis(1)).await;
        }
    }
    let seqs = reader.await.unwrap();
    assert_eq!(seqs, (0..N as u64).collect::<Vec<u64>>());

    let mut received = Vec::new();
    tokio::time::timeout(Duration::from_secs(10), slow.read_to_end(&mut received)).await.unwrap().unwrap();
    let text = String::from_utf8_lossy(&received);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("ERR 503 subscriber too slow"), "last line: {last:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn hammering_readers_never_see_torn_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snapshot.txt");
    let cfg = lab_config(0.1);
    let gw = gateway(&cfg, GatewayOptions { snapshot_file: Some(path.clone()), ..Default::default() });
    let snaps = snapshots(&cfg, 400);
    gw.publish(snaps[0].clone()).unwrap();

    let done = Arc::new(AtomicBool::new(false));
    let malformed = Arc::new(AtomicUsize::new(0));
    let reads = Arc::new(AtomicUsize::new(0));
    let mut readers = Vec::new();
    for _ in 0..3 {
        let (done, malformed, reads, path, gw) =
            (done.clone(), malformed.clone(), reads.clone(), path.clone(), gw.clone());
        readers.push(std::thread::spawn(move || {
            while !done.load(Ordering::Relaxed) {
                let bytes = std::fs::read(&path).unwrap();
                if parse_snapshot(&bytes).map(|s| s.entries.len()) != Ok(12) {
                    malformed.fetch_add(1, Ordering::Relaxed);
                }
                let current = gw.current().unwrap();
                if parse_snapshot(&current.rendered).ok().as_ref() != Some(&current.snapshot) {
                    malformed.fetch_add(1, Ordering::Relaxed);
                }
                reads.fetch_add(1, Ordering::Relaxed);
            }
        }));
    }
    for s in &snaps[1..] {
        gw.publish(s.clone()).unwrap();
    }
    done.store(true, Ordering::Relaxed);
    for r in readers {
        r.join().unwrap();
    }
    assert!(reads.load(Ordering::Relaxed) > 0);
    assert_eq!(malformed.load(Ordering::Relaxed), 0);
}

#[test]
fn series_matches_each_published_snapshot() {
    let cfg = lab_config(0.1);
    let gw = gateway(&cfg, GatewayOptions::default());
    let snaps = snapshots(&cfg, 120);
    for s in &snaps {
        gw.publish(s.clone()).unwrap();
    }
    for (addr, channel) in cfg.topology.sensing_pairs() {
        let pts = gw.series(addr, channel, 0, u64::MAX).unwrap();
        assert_eq!(pts.len(), snaps.len());
        for (p, s) in pts.iter().zip(&snaps) {
            assert_eq!(p.seq, s.seq);
            assert_eq!(Some(p.value), s.value(addr, channel));
        }
    }
}
