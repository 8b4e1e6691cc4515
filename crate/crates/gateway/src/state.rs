//! Shared gateway state: the current snapshot, history, alert engine and the
//! publication feed.
//!
//! There is a single writer ([`Gateway::publish`]). Readers only ever clone
//! an `Arc` to an immutable [`Published`] value, so they observe one whole
//! snapshot or the previous one, never a mix.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};

use minewatch_core::alerting::{AlarmEvent, AlertEngine, AlertError, AlertRule, RuleCommand, RuleResponse};
use minewatch_core::config::{DEFAULT_HISTORY_CAPACITY, DEFAULT_SUBSCRIBER_QUEUE};
use minewatch_core::{Channel, NodeAddress, Topology};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::series::{SeriesPoint, SeriesStore};
use crate::snapshot::{render_snapshot, Snapshot};

#[derive(Debug, Error)]
pub enum PublishError {
    #[error("snapshot seq {seq} is not after last published seq {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("cannot write snapshot file {path}: {source}")]
    Storage { path: PathBuf, source: std::io::Error },
}

/// A snapshot together with its canonical rendering.
#[derive(Debug)]
pub struct Published {
    pub snapshot: Snapshot,
    pub rendered: Vec<u8>,
}

/// One item on the subscription feed.
#[derive(Debug)]
pub struct Publication {
    pub published: Arc<Published>,
    pub alarms: Vec<AlarmEvent>,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub history_capacity: usize,
    pub subscriber_queue: usize,
    pub snapshot_file: Option<PathBuf>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            history_capacity: DEFAULT_HISTORY_CAPACITY,
            subscriber_queue: DEFAULT_SUBSCRIBER_QUEUE,
            snapshot_file: None,
        }
    }
}

pub struct Gateway {
    topology: Arc<Topology>,
    snapshot_file: Option<PathBuf>,
    current: RwLock<Option<Arc<Published>>>,
    store: RwLock<SeriesStore>,
    alerts: Mutex<AlertEngine>,
    last_seq: Mutex<Option<u64>>,
    feed: Mutex<Option<broadcast::Sender<Arc<Publication>>>>,
    streams: AtomicUsize,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

impl Gateway {
    pub fn new(topology: Arc<Topology>, options: GatewayOptions) -> Self {
        let (tx, _) = broadcast::channel(options.subscriber_queue.max(1));
        Gateway {
            store: RwLock::new(SeriesStore::new(&topology, options.history_capacity)),
            topology,
            snapshot_file: options.snapshot_file,
            current: RwLock::new(None),
            alerts: Mutex::new(AlertEngine::new()),
            last_seq: Mutex::new(None),
            feed: Mutex::new(Some(tx)),
            streams: AtomicUsize::new(0),
        }
    }

    pub fn with_rules(self, rules: impl IntoIterator<Item = AlertRule>) -> Result<Self, AlertError> {
        {
            let mut engine = lock(&self.alerts);
            for rule in rules {
                engine.add(rule)?;
            }
        }
        Ok(self)
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn snapshot_file(&self) -> Option<&Path> {
        self.snapshot_file.as_deref()
    }

    pub fn current(&self) -> Option<Arc<Published>> {
        self.current.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn last_seq(&self) -> Option<u64> {
        *lock(&self.last_seq)
    }

    /// Publishes `s`: snapshot file, history, alerts, current view, feed.
    ///
    /// The file is written first; if that fails nothing else changes.
    pub fn publish(&self, s: Snapshot) -> Result<Vec<AlarmEvent>, PublishError> {
        let mut last = lock(&self.last_seq);
        if let Some(prev) = *last {
            if s.seq <= prev {
                return Err(PublishError::OutOfOrder { seq: s.seq, last: prev });
            }
        }
        let rendered = render_snapshot(&s);
        if let Some(path) = &self.snapshot_file {
            write_atomically(path, &rendered).map_err(|source| PublishError::Storage { path: path.clone(), source })?;
        }
        self.store.write().unwrap_or_else(PoisonError::into_inner).append(&s);
        let alarms = lock(&self.alerts).evaluate(s.seq, s.entries.iter().map(|e| (&e.address, e.channel, e.value)));
        let published = Arc::new(Published { snapshot: s, rendered });
        *self.current.write().unwrap_or_else(PoisonError::into_inner) = Some(published.clone());
        *last = Some(published.snapshot.seq);
        if let Some(tx) = lock(&self.feed).as_ref() {
            // no subscribers is not an error
            let _ = tx.send(Arc::new(Publication { published, alarms: alarms.clone() }));
        }
        Ok(alarms)
    }

    /// A receiver for every publication after this call; `None` once closed.
    pub fn subscribe(&self) -> Option<broadcast::Receiver<Arc<Publication>>> {
        lock(&self.feed).as_ref().map(broadcast::Sender::subscribe)
    }

    /// Number of live feed receivers.
    pub fn subscriber_count(&self) -> usize {
        lock(&self.feed).as_ref().map_or(0, broadcast::Sender::receiver_count)
    }

    /// Ends the feed; subscribers drain what is queued and then stop.
    pub fn close(&self) {
        lock(&self.feed).take();
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.feed).is_none()
    }

    /// Connections currently streaming publications.
    pub fn active_streams(&self) -> usize {
        self.streams.load(Ordering::SeqCst)
    }

    pub(crate) fn stream_guard(self: &Arc<Self>) -> StreamGuard {
        self.streams.fetch_add(1, Ordering::SeqCst);
        StreamGuard(self.clone())
    }

    pub fn series(&self, addr: &NodeAddress, channel: Channel, from: u64, to: u64) -> Option<Vec<SeriesPoint>> {
        self.store.read().unwrap_or_else(PoisonError::into_inner).window(addr, channel, from, to)
    }

    /// Rule mutations share the lock taken by alert evaluation in `publish`,
    /// so they are applied strictly between publications.
    pub fn manage_rules(&self, command: RuleCommand) -> Result<RuleResponse, AlertError> {
        lock(&self.alerts).manage(command)
    }
}

pub(crate) struct StreamGuard(Arc<Gateway>);

impl Drop for StreamGuard {
    fn drop(&mut self) {
        self.0.streams.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Write-to-temp-then-rename so readers never observe a partial file.
fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().ok_or_else(|| std::io::Error::other("snapshot path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.flush()?;
    drop(f);
    std::fs::rename(&tmp, path)
}
