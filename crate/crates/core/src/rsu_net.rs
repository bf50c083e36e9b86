//! Simulated roadside radio over UDP.
//!
//! The [`Broadcaster`] owns the socket. PSMs go out on a fixed tick using
//! absolute deadlines; alerts are sent as soon as they arrive. BSMs sent to
//! the broadcaster's address are decoded into a table the pipeline can read.
//! [`VehicleClient`] is the receiving side and produces [`LatencyRecord`]s.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::{self, Write as _};
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{bounded, select, Receiver, Sender, TrySendError};
use thiserror::Error;
use tracing::{debug, warn};

use crate::messages::{decode, encode, Alert, Bsm, Message, Psm, MSG_COUNT_MAX};
use crate::pscw::AlertCooldown;

pub const DEFAULT_PSM_PERIOD_MS: u64 = 100;
pub const DEFAULT_ALERT_COOLDOWN_MS: u64 = 1_000;
const MAX_DATAGRAM: usize = 64;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("psm period must be positive")]
    ZeroPeriod,
    #[error("socket error: {0}")]
    Socket(#[from] io::Error),
    #[error("no latency records")]
    EmptySample,
}

/// Epoch milliseconds derived from one monotonic clock, so every stamp taken
/// in this process is comparable.
#[derive(Debug, Clone, Copy)]
pub struct HostClock {
    start: Instant,
    epoch_at_start_ms: f64,
}

impl HostClock {
    pub fn new() -> Self {
        let epoch = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        Self { start: Instant::now(), epoch_at_start_ms: epoch.as_secs_f64() * 1e3 }
    }

    /// The process-wide clock.
    pub fn global() -> &'static HostClock {
        static CLOCK: OnceLock<HostClock> = OnceLock::new();
        CLOCK.get_or_init(HostClock::new)
    }

    pub fn now_ms(&self) -> f64 {
        self.at(Instant::now())
    }

    pub fn at(&self, instant: Instant) -> f64 {
        self.epoch_at_start_ms + instant.saturating_duration_since(self.start).as_secs_f64() * 1e3
    }

    /// Whole milliseconds, rounded down, for message timestamps.
    pub fn now_epoch_ms(&self) -> u64 {
        self.now_ms().floor() as u64
    }
}

impl Default for HostClock {
    fn default() -> Self {
        Self::new()
    }
}

/// Bounded queue that evicts the oldest entry instead of blocking the
/// producer.
#[derive(Debug, Clone)]
pub struct DropOldest<T> {
    tx: Sender<T>,
    rx: Receiver<T>,
    drops: Arc<AtomicU64>,
}

impl<T> DropOldest<T> {
    pub fn new(capacity: usize) -> Self {
        let (tx, rx) = bounded(capacity.max(1));
        Self { tx, rx, drops: Arc::new(AtomicU64::new(0)) }
    }

    pub fn push(&self, mut item: T) {
        loop {
            match self.tx.try_send(item) {
                Ok(()) => return,
                Err(TrySendError::Full(back)) => {
                    if self.rx.try_recv().is_ok() {
                        self.drops.fetch_add(1, Ordering::Relaxed);
                    }
                    item = back;
                }
                Err(TrySendError::Disconnected(_)) => return,
            }
        }
    }

    /// Waits for room instead of evicting.
    pub fn push_blocking(&self, item: T) {
        let _ = self.tx.send(item);
    }

    pub fn receiver(&self) -> &Receiver<T> {
        &self.rx
    }

    pub fn drops(&self) -> u64 {
        self.drops.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone)]
pub struct BroadcastConfig {
    pub bind: SocketAddr,
    /// Where datagrams are sent: a unicast, broadcast or multicast address.
    pub dest: SocketAddr,
    pub psm_period_ms: u64,
    pub alert_cooldown_ms: u64,
    /// A snapshot not refreshed for this long stops being re-broadcast.
    pub stale_after_ms: u64,
    pub snapshot_queue: usize,
    pub alert_queue: usize,
    /// Keep every tick's start time in [`BroadcastStats::tick_times_ms`].
    pub record_ticks: bool,
}

impl Default for BroadcastConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
            dest: SocketAddr::from((Ipv4Addr::LOCALHOST, 5900)),
            psm_period_ms: DEFAULT_PSM_PERIOD_MS,
            alert_cooldown_ms: DEFAULT_ALERT_COOLDOWN_MS,
            stale_after_ms: 1_000,
            snapshot_queue: 4,
            alert_queue: 256,
            record_ticks: false,
        }
    }
}

impl BroadcastConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.psm_period_ms == 0 {
            return Err(NetError::ZeroPeriod);
        }
        Ok(())
    }
}

/// The PSMs of one processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub frame_ts: u64,
    pub built_ts: f64,
    pub psms: Vec<Psm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AlertEnvelope {
    alert: Alert,
    built_ts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendStamp {
    pub frame_ts: u64,
    pub built_ts: f64,
    pub sent_ts: f64,
}

type Datagram = Vec<u8>;
type SendIndex = (HashMap<Datagram, SendStamp>, VecDeque<Datagram>);

/// Recent outgoing frames keyed by their bytes, so an in-process receiver
/// can recover build and send stamps.
#[derive(Debug)]
pub struct SendLog {
    capacity: usize,
    inner: Mutex<SendIndex>,
}

impl SendLog {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), inner: Mutex::new((HashMap::new(), VecDeque::new())) }
    }

    pub fn record(&self, bytes: &[u8], stamp: SendStamp) {
        let mut guard = self.inner.lock().unwrap();
        let (map, order) = &mut *guard;
        if map.insert(bytes.to_vec(), stamp).is_none() {
            order.push_back(bytes.to_vec());
        }
        while order.len() > self.capacity {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
    }

    pub fn lookup(&self, bytes: &[u8]) -> Option<SendStamp> {
        self.inner.lock().unwrap().0.get(bytes).copied()
    }
}

#[derive(Debug, Default)]
pub struct BroadcastStats {
    pub ticks: AtomicU64,
    pub missed_ticks: AtomicU64,
    pub psms_sent: AtomicU64,
    pub alerts_sent: AtomicU64,
    pub alerts_suppressed: AtomicU64,
    pub send_failures: AtomicU64,
    pub encode_failures: AtomicU64,
    pub bsms_received: AtomicU64,
    pub bsm_decode_errors: AtomicU64,
    pub tick_times_ms: Mutex<Vec<f64>>,
}

impl BroadcastStats {
    pub fn get(counter: &AtomicU64) -> u64 {
        counter.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertDisposition {
    Queued,
    Suppressed,
}

pub type TickHook = Box<dyn FnMut(u64) + Send>;

/// Handle to a running broadcaster. Dropping it stops and joins the threads.
pub struct Broadcaster {
    local_addr: SocketAddr,
    snapshots: DropOldest<TrackSnapshot>,
    alerts: DropOldest<AlertEnvelope>,
    cooldown: Mutex<AlertCooldown>,
    bsms: Arc<Mutex<BTreeMap<u32, (Bsm, Instant)>>>,
    stats: Arc<BroadcastStats>,
    send_log: Arc<SendLog>,
    stop_tx: Sender<()>,
    running: Arc<AtomicBool>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl std::fmt::Debug for Broadcaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broadcaster").field("local_addr", &self.local_addr).finish_non_exhaustive()
    }
}

impl Broadcaster {
    pub fn spawn(cfg: BroadcastConfig) -> Result<Self, NetError> {
        Self::spawn_with_hook(cfg, None)
    }

    /// `on_tick` runs at the start of every tick with the tick index, before
    /// any PSM is sent. Tests use it to inject stalls.
    pub fn spawn_with_hook(cfg: BroadcastConfig, on_tick: Option<TickHook>) -> Result<Self, NetError> {
        cfg.validate()?;
        let socket = UdpSocket::bind(cfg.bind)?;
        socket.set_broadcast(true)?;
        let local_addr = socket.local_addr()?;
        let recv_socket = socket.try_clone()?;
        recv_socket.set_read_timeout(Some(Duration::from_millis(50)))?;

        let snapshots = DropOldest::new(cfg.snapshot_queue);
        let alerts = DropOldest::new(cfg.alert_queue);
        let stats = Arc::new(BroadcastStats::default());
        let send_log = Arc::new(SendLog::new(1 << 16));
        let bsms = Arc::new(Mutex::new(BTreeMap::new()));
        let running = Arc::new(AtomicBool::new(true));
        let (stop_tx, stop_rx) = bounded::<()>(1);

        let tx_loop = TxLoop {
            socket,
            cfg: cfg.clone(),
            snapshots: snapshots.receiver().clone(),
            alerts: alerts.receiver().clone(),
            stop: stop_rx,
            stats: stats.clone(),
            send_log: send_log.clone(),
            on_tick,
            msg_counts: HashMap::new(),
            latest: None,
        };
        let tx_thread = thread::Builder::new().name("rsu-broadcast".into()).spawn(move || tx_loop.run())?;

        let rx_bsms = bsms.clone();
        let rx_stats = stats.clone();
        let rx_running = running.clone();
        let rx_thread = thread::Builder::new()
            .name("rsu-bsm-rx".into())
            .spawn(move || bsm_receive_loop(recv_socket, rx_bsms, rx_stats, rx_running))?;

        Ok(Self {
            local_addr,
            snapshots,
            alerts,
            cooldown: Mutex::new(AlertCooldown::new(cfg.alert_cooldown_ms)),
            bsms,
            stats,
            send_log,
            stop_tx,
            running,
            threads: Mutex::new(vec![tx_thread, rx_thread]),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> &Arc<BroadcastStats> {
        &self.stats
    }

    pub fn send_log(&self) -> &Arc<SendLog> {
        &self.send_log
    }

    pub fn snapshot_drops(&self) -> u64 {
        self.snapshots.drops()
    }

    pub fn alert_drops(&self) -> u64 {
        self.alerts.drops()
    }

    /// Replaces the set of PSMs broadcast on each tick. Never blocks.
    pub fn publish(&self, snapshot: TrackSnapshot) {
        self.snapshots.push(snapshot);
    }

    /// Queues an alert for immediate transmission unless the pair is cooling
    /// down. Never blocks.
    pub fn send_alert(&self, alert: Alert, built_ts: f64) -> AlertDisposition {
        if !self.cooldown.lock().unwrap().admit(&alert) {
            self.stats.alerts_suppressed.fetch_add(1, Ordering::Relaxed);
            return AlertDisposition::Suppressed;
        }
        self.alerts.push(AlertEnvelope { alert, built_ts });
        AlertDisposition::Queued
    }

    /// Latest BSM per vehicle received within `max_age`.
    pub fn latest_bsms(&self, max_age: Duration) -> Vec<Bsm> {
        let now = Instant::now();
        let mut table = self.bsms.lock().unwrap();
        table.retain(|_, (_, at)| now.saturating_duration_since(*at) <= max_age);
        table.values().map(|(b, _)| *b).collect()
    }

    /// Stops and joins the threads. Idempotent.
    pub fn stop(&self) {
        self.running.store(false, Ordering::Relaxed);
        let _ = self.stop_tx.try_send(());
        let threads: Vec<_> = self.threads.lock().unwrap().drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for Broadcaster {
    fn drop(&mut self) {
        self.stop();
    }
}

struct TxLoop {
    socket: UdpSocket,
    cfg: BroadcastConfig,
    snapshots: Receiver<TrackSnapshot>,
    alerts: Receiver<AlertEnvelope>,
    stop: Receiver<()>,
    stats: Arc<BroadcastStats>,
    send_log: Arc<SendLog>,
    on_tick: Option<TickHook>,
    msg_counts: HashMap<u32, u8>,
    latest: Option<(TrackSnapshot, Instant)>,
}

impl TxLoop {
    fn run(mut self) {
        let period = Duration::from_millis(self.cfg.psm_period_ms);
        let mut deadline = Instant::now() + period;
        let mut tick: u64 = 0;
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            select! {
                recv(self.stop) -> _ => return,
                recv(self.alerts) -> env => match env {
                    Ok(env) => self.send_alert(env),
                    Err(_) => return,
                },
                default(wait) => {
                    self.tick(tick);
                    tick += 1;
                    deadline += period;
                    let now = Instant::now();
                    while deadline + period <= now {
                        deadline += period;
                        self.stats.missed_ticks.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
    }

    fn transmit(&mut self, msg: Message, frame_ts: u64, built_ts: f64) -> bool {
        let bytes = match encode(&msg) {
            Ok(b) => b,
            Err(e) => {
                warn!(error = %e, "dropping unencodable message");
                self.stats.encode_failures.fetch_add(1, Ordering::Relaxed);
                return false;
            }
        };
        let clock = HostClock::global();
        let sent_ts = clock.now_ms();
        self.send_log.record(&bytes, SendStamp { frame_ts, built_ts, sent_ts });
        match self.socket.send_to(&bytes, self.cfg.dest) {
            Ok(_) => true,
            Err(e) => {
                warn!(error = %e, dest = %self.cfg.dest, "send failed");
                self.stats.send_failures.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    fn send_alert(&mut self, env: AlertEnvelope) {
        if self.transmit(Message::Alert(env.alert), env.alert.timestamp_ms, env.built_ts) {
            self.stats.alerts_sent.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn tick(&mut self, index: u64) {
        if let Some(hook) = self.on_tick.as_mut() {
            hook(index);
        }
        let now = Instant::now();
        self.stats.ticks.fetch_add(1, Ordering::Relaxed);
        if self.cfg.record_ticks {
            self.stats.tick_times_ms.lock().unwrap().push(HostClock::global().at(now));
        }
        while let Ok(s) = self.snapshots.try_recv() {
            self.latest = Some((s, now));
        }
        let stale = Duration::from_millis(self.cfg.stale_after_ms);
        let Some((snap, at)) = self.latest.clone() else { return };
        if now.saturating_duration_since(at) > stale {
            debug!(frame_ts = snap.frame_ts, "snapshot went stale");
            self.latest = None;
            return;
        }
        for mut psm in snap.psms {
            let count = self.msg_counts.entry(psm.temp_id).or_insert(0);
            psm.msg_count = *count;
            *count = if *count >= MSG_COUNT_MAX { 0 } else { *count + 1 };
            if self.transmit(Message::Psm(psm), snap.frame_ts, snap.built_ts) {
                self.stats.psms_sent.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

fn bsm_receive_loop(
    socket: UdpSocket,
    table: Arc<Mutex<BTreeMap<u32, (Bsm, Instant)>>>,
    stats: Arc<BroadcastStats>,
    running: Arc<AtomicBool>,
) {
    let mut buf = [0u8; 512];
    while running.load(Ordering::Relaxed) {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                // ICMP unreachable from an earlier send surfaces here on some
                // platforms; it is not fatal.
                debug!(error = %e, "bsm receive error");
                continue;
            }
        };
        match decode(&buf[..n]) {
            Ok(Message::Bsm(bsm)) => {
                stats.bsms_received.fetch_add(1, Ordering::Relaxed);
                table.lock().unwrap().insert(bsm.temp_id, (bsm, Instant::now()));
            }
            Ok(_) => {}
            Err(_) => {
                stats.bsm_decode_errors.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

/// Stamps of one received message. `built_ts` and `sent_ts` are known only
/// when the receiver shares a [`SendLog`] with the sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRecord {
    pub msg_type: u8,
    pub frame_ts: f64,
    pub built_ts: Option<f64>,
    pub sent_ts: Option<f64>,
    pub received_ts: f64,
}

impl LatencyRecord {
    pub fn compute_ms(&self) -> Option<f64> {
        self.built_ts.map(|b| b - self.frame_ts)
    }

    pub fn network_ms(&self) -> Option<f64> {
        self.sent_ts.map(|s| self.received_ts - s)
    }

    pub fn end_to_end_ms(&self) -> f64 {
        self.received_ts - self.frame_ts
    }
}

#[derive(Debug, Clone, Default)]
pub struct ListenConfig {
    pub bind: Option<SocketAddr>,
    /// Multicast group to join, if the broadcaster sends to one.
    pub group: Option<Ipv4Addr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub message: Message,
    pub record: LatencyRecord,
    pub from: SocketAddr,
}

/// Vehicle-side endpoint: receives PSMs and alerts, sends BSMs.
#[derive(Debug)]
pub struct VehicleClient {
    socket: UdpSocket,
    send_log: Option<Arc<SendLog>>,
    decode_errors: AtomicU64,
}

impl VehicleClient {
    pub fn bind(cfg: &ListenConfig) -> Result<Self, NetError> {
        let addr = cfg.bind.unwrap_or_else(|| SocketAddr::from((Ipv4Addr::LOCALHOST, 0)));
        let socket = UdpSocket::bind(addr)?;
        if let Some(group) = cfg.group {
            socket.join_multicast_v4(&group, &Ipv4Addr::UNSPECIFIED)?;
        }
        Ok(Self { socket, send_log: None, decode_errors: AtomicU64::new(0) })
    }

    /// Joins received frames against the sender's log.
    pub fn with_send_log(mut self, log: Arc<SendLog>) -> Self {
        self.send_log = Some(log);
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr, NetError> {
        Ok(self.socket.local_addr()?)
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors.load(Ordering::Relaxed)
    }

    /// Waits up to `timeout` for the next decodable datagram. Undecodable
    /// datagrams are counted and skipped.
    pub fn recv(&self, timeout: Duration) -> Result<Option<Received>, NetError> {
        let end = Instant::now() + timeout;
        let mut buf = [0u8; 512];
        loop {
            let left = end.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.socket.set_read_timeout(Some(left))?;
            let (n, from) = match self.socket.recv_from(&mut buf) {
                Ok(v) => v,
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(None),
                Err(e) if e.kind() == io::ErrorKind::ConnectionReset => continue,
                Err(e) => return Err(e.into()),
            };
            let received_ts = HostClock::global().now_ms();
            let bytes = &buf[..n];
            let message = match decode(bytes) {
                Ok(m) => m,
                Err(e) => {
                    debug!(error = %e, len = n, "undecodable datagram");
                    self.decode_errors.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            };
            let stamp = self.send_log.as_ref().and_then(|l| l.lookup(bytes));
            let record = LatencyRecord {
                msg_type: message.msg_type(),
                frame_ts: message.timestamp_ms() as f64,
                built_ts: stamp.map(|s| s.built_ts),
                sent_ts: stamp.map(|s| s.sent_ts),
                received_ts,
            };
            return Ok(Some(Received { message, record, from }));
        }
    }

    pub fn send_bsm(&self, bsm: &Bsm, to: SocketAddr) -> Result<(), NetError> {
        let bytes = encode(&Message::Bsm(*bsm)).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        debug_assert!(bytes.len() <= MAX_DATAGRAM);
        self.socket.send_to(&bytes, to)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub kind: &'static str,
    pub count: usize,
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySummary {
    pub rows: Vec<LatencyRow>,
    /// End-to-end latency in 1 ms bins: (bin start, count), contiguous.
    pub histogram: Vec<(i64, usize)>,
}

fn row(kind: &'static str, values: &[f64]) -> Option<LatencyRow> {
    if values.is_empty() {
        return None;
    }
    let min_ms = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ms = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_ms = values.iter().sum::<f64>() / values.len() as f64;
    Some(LatencyRow { kind, count: values.len(), min_ms, max_ms, mean_ms })
}

pub fn latency_report(records: &[LatencyRecord]) -> Result<LatencySummary, NetError> {
    if records.is_empty() {
        return Err(NetError::EmptySample);
    }
    let compute: Vec<f64> = records.iter().filter_map(|r| r.compute_ms()).collect();
    let network: Vec<f64> = records.iter().filter_map(|r| r.network_ms()).collect();
    let e2e: Vec<f64> = records.iter().map(|r| r.end_to_end_ms()).collect();
    let rows = [row("compute", &compute), row("network", &network), row("end_to_end", &e2e)]
        .into_iter()
        .flatten()
        .collect();

    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for v in &e2e {
        *bins.entry(v.floor() as i64).or_default() += 1;
    }
    let lo = *bins.keys().next().unwrap();
    let hi = *bins.keys().next_back().unwrap();
    let histogram = (lo..=hi).map(|b| (b, bins.get(&b).copied().unwrap_or(0))).collect();
    Ok(LatencySummary { rows, histogram })
}

impl LatencySummary {
    pub fn write_csv(&self, summary: &mut impl io::Write, histogram: &mut impl io::Write) -> io::Result<()> {
        writeln!(summary, "type,min_ms,max_ms,mean_ms")?;
        for r in &self.rows {
            writeln!(summary, "{},{:.3},{:.3},{:.3}", r.kind, r.min_ms, r.max_ms, r.mean_ms)?;
        }
        writeln!(histogram, "bin_start_ms,count")?;
        for (b, c) in &self.histogram {
            writeln!(histogram, "{b},{c}")?;
        }
        Ok(())
    }

    /// Writes `latency.csv` and `histogram.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut s = io::BufWriter::new(fs::File::create(dir.join("latency.csv"))?);
        let mut h = io::BufWriter::new(fs::File::create(dir.join("histogram.csv"))?);
        self.write_csv(&mut s, &mut h)?;
        s.flush()?;
        h.flush()
    }
}

/// Nearest-rank percentile, `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Waits for a message accepted by `want`, discarding others.
pub fn recv_matching(
    client: &VehicleClient,
    timeout: Duration,
    mut want: impl FnMut(&Message) -> bool,
) -> Result<Option<Received>, NetError> {
    let end = Instant::now() + timeout;
    loop {
        let left = end.saturating_duration_since(Instant::now());
        match client.recv(left)? {
            Some(r) if want(&r.message) => return Ok(Some(r)),
            Some(_) => continue,
            None => return Ok(None),
        }
    }
}
