#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use minewatch_core::config::RunConfig;
use minewatch_gateway::{build_snapshot, serve, Gateway, GatewayOptions, Server, Snapshot};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

pub const LAB: &str = include_str!("../../../../scenarios/paper.toml");

pub fn lab_config(loss: f64) -> RunConfig {
    let mut cfg = RunConfig::parse(LAB).unwrap();
    cfg.link.loss_prob = loss;
    cfg
}

pub fn snapshots(cfg: &RunConfig, rounds: u64) -> Vec<Snapshot> {
    let mut sim_cfg = cfg.clone();
    sim_cfg.sim.rounds = rounds;
    let sim = sim_cfg.simulator().unwrap();
    sim.run_sim().map(|r| build_snapshot(&r, &cfg.topology).unwrap()).collect()
}

pub fn gateway(cfg: &RunConfig, options: GatewayOptions) -> Arc<Gateway> {
    Arc::new(Gateway::new(cfg.topology.clone(), options))
}

pub async fn start(gw: Arc<Gateway>) -> Server {
    let tcp = minewatch_gateway::bind("127.0.0.1:0").await.unwrap();
    let http = minewatch_gateway::bind("127.0.0.1:0").await.unwrap();
    serve(gw, Some(tcp), Some(http))
}

pub struct LineClient {
    reader: BufReader<tokio::net::tcp::OwnedReadHalf>,
    writer: tokio::net::tcp::OwnedWriteHalf,
}

impl LineClient {
    pub async fn connect(server: &Server) -> Self {
        let stream = TcpStream::connect(server.tcp_addr.unwrap()).await.unwrap();
        let (r, w) = stream.into_split();
        LineClient { reader: BufReader::new(r), writer: w }
    }

    pub async fn send(&mut self, line: &str) {
        self.writer.write_all(format!("{line}\n").as_bytes()).await.unwrap();
    }

    pub async fn line(&mut self) -> Option<String> {
        let mut s = String::new();
        let n = tokio::time::timeout(Duration::from_secs(10), self.reader.read_line(&mut s))
            .await
            .expect("timed out waiting for a line")
            .unwrap();
        (n > 0).then_some(s)
    }

    /// Reads lines until one equal to `END` (inclusive) or an `ERR` line.
    pub async fn block(&mut self) -> String {
        let mut out = String::new();
        while let Some(l) = self.line().await {
            out.push_str(&l);
            if l == "END\n" || l.starts_with("ERR ") {
                break;
            }
        }
        out
    }

    pub async fn request(&mut self, line: &str) -> String {
        self.send(line).await;
        self.block().await
    }
}

pub async fn wait_for_subscribers(gw: &Gateway, n: usize) {
    for _ in 0..500 {
        if gw.subscriber_count() >= n {
            return;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("subscribers never connected");
}

/// Minimal HTTP/1.1 client: returns (status, body).
pub async fn http(server: &Server, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(server.http_addr.unwrap()).await.unwrap();
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    tokio::time::timeout(Duration::from_secs(10), stream.read_to_end(&mut raw)).await.unwrap().unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, rest) = text.split_once("\r\n\r\n").unwrap();
    let status: u16 = head.split(' ').nth(1).unwrap().parse().unwrap();
    let body =
        if head.to_ascii_lowercase().contains("transfer-encoding: chunked") { dechunk(rest) } else { rest.to_string() };
    (status, body)
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    while let Some((size, rest)) = s.split_once("\r\n") {
        let n = usize::from_str_radix(size.trim(), 16).unwrap_or(0);
        if n == 0 {
            break;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
    out
}
