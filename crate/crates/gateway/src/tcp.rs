//! Line protocol over TCP.
//!
//! One request per line. Snapshot responses are snapshot renderings, series
//! responses are the CSV body followed by an `END` line, and `SUBSCRIBE`
//! turns the connection into a stream of publications until the client
//! disconnects, the gateway shuts down or the subscriber falls more than the
//! queue length behind (`ERR 503`).

use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast::error::RecvError;
use tokio::time::timeout;

use crate::request::{handle_line, render_publication, ClientResponse, ErrorCode, ErrorResponse, Subscription};
use crate::state::Gateway;

const MAX_LINE: usize = 4096;
const WRITE_TIMEOUT: Duration = Duration::from_secs(5);
/// Kernel send buffer for subscriber connections. Kept small so a stalled
/// client shows up as queue lag instead of megabytes of socket buffering.
const STREAM_SEND_BUFFER: usize = 64 * 1024;

pub async fn serve_tcp(listener: TcpListener, gateway: Arc<Gateway>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                debug!("line client {peer} connected");
                let gw = gateway.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle_connection(stream, gw).await {
                        debug!("line client {peer}: {e}");
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

async fn write_with_timeout<W: AsyncWrite + Unpin>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    match timeout(WRITE_TIMEOUT, w.write_all(bytes)).await {
        Ok(r) => r,
        Err(_) => Err(std::io::Error::new(std::io::ErrorKind::TimedOut, "client not reading")),
    }
}

async fn handle_connection(stream: TcpStream, gateway: Arc<Gateway>) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = String::new();
    loop {
        line.clear();
        let n = (&mut reader).take(MAX_LINE as u64).read_line(&mut line).await?;
        if n == 0 {
            return Ok(());
        }
        if !line.ends_with('\n') && n == MAX_LINE {
            write.write_all(&ErrorResponse::new(ErrorCode::BadRequest, "line too long").to_line()).await?;
            return Ok(());
        }
        match handle_line(line.trim_end_matches(['\r', '\n']), &gateway) {
            ClientResponse::Snapshot(bytes) => write_with_timeout(&mut write, &bytes).await?,
            ClientResponse::Csv(mut bytes) => {
                bytes.extend_from_slice(b"END\n");
                write_with_timeout(&mut write, &bytes).await?;
            }
            ClientResponse::Error(e) => write_with_timeout(&mut write, &e.to_line()).await?,
            ClientResponse::Stream(sub) => {
                socket2::SockRef::from(write.as_ref()).set_send_buffer_size(STREAM_SEND_BUFFER)?;
                return stream_to(&mut write, sub, &gateway).await;
            }
        }
    }
}

async fn stream_to<W: AsyncWrite + Unpin>(
    w: &mut W,
    mut sub: Subscription,
    gateway: &Arc<Gateway>,
) -> std::io::Result<()> {
    let _guard = gateway.stream_guard();
    loop {
        match sub.rx.recv().await {
            Ok(p) => write_with_timeout(w, &render_publication(&p, sub.cluster.as_ref())).await?,
            Err(RecvError::Lagged(n)) => {
                let err =
                    ErrorResponse::new(ErrorCode::Unavailable, format!("subscriber too slow, {n} publications behind"));
                let _ = write_with_timeout(w, &err.to_line()).await;
                return w.shutdown().await;
            }
            Err(RecvError::Closed) => return w.shutdown().await,
        }
    }
}
