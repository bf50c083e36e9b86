//! A running roadside node: ingestion feeds frames to a pipeline thread,
//! which hands PSM snapshots and alerts to the [`Broadcaster`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, select, Receiver, Sender};
use tracing::warn;

use crate::config::Calibration;
use crate::pipeline::{Frame, Pipeline, PipelineConfig};
use crate::rsu_net::{BroadcastConfig, BroadcastStats, Broadcaster, DropOldest, HostClock, NetError, TrackSnapshot};

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub broadcast: BroadcastConfig,
    pub pipeline: PipelineConfig,
    pub frame_queue: usize,
    /// Sleep before processing each frame, standing in for detector inference.
    pub detector_delay: Duration,
    pub bsm_max_age: Duration,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            broadcast: BroadcastConfig::default(),
            pipeline: PipelineConfig::default(),
            frame_queue: 8,
            detector_delay: Duration::ZERO,
            bsm_max_age: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Default)]
pub struct NodeCounters {
    pub frames: AtomicU64,
    pub pipeline_errors: AtomicU64,
    pub pair_errors: AtomicU64,
    pub alerts_raised: AtomicU64,
    pub live_tracks: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeSummary {
    pub frames: u64,
    pub frames_dropped: u64,
    pub live_tracks: u64,
    pub pipeline_errors: u64,
    pub pair_errors: u64,
    pub alerts_raised: u64,
    pub alerts_sent: u64,
    pub alerts_suppressed: u64,
    pub psms_sent: u64,
    pub ticks: u64,
    pub snapshot_drops: u64,
    pub send_failures: u64,
    pub bsms_received: u64,
}

pub struct Node {
    frames: DropOldest<Frame>,
    stop_tx: Sender<()>,
    worker: Option<JoinHandle<()>>,
    broadcaster: Arc<Broadcaster>,
    counters: Arc<NodeCounters>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("broadcaster", &self.broadcaster).finish_non_exhaustive()
    }
}

impl Node {
    pub fn start(calib: Calibration, cfg: NodeConfig) -> Result<Self, NetError> {
        let broadcaster = Arc::new(Broadcaster::spawn(cfg.broadcast.clone())?);
        let frames = DropOldest::new(cfg.frame_queue);
        let counters = Arc::new(NodeCounters::default());
        let (stop_tx, stop_rx) = bounded(1);
        let worker = Worker {
            pipeline: Pipeline::new(calib, cfg.pipeline),
            frames: frames.receiver().clone(),
            stop: stop_rx,
            broadcaster: broadcaster.clone(),
            counters: counters.clone(),
            detector_delay: cfg.detector_delay,
            bsm_max_age: cfg.bsm_max_age,
        };
        let worker = thread::Builder::new().name("rsu-pipeline".into()).spawn(move || worker.run())?;
        Ok(Self { frames, stop_tx, worker: Some(worker), broadcaster, counters })
    }

    /// Queues a frame, waiting for room. Use for replay, where every frame
    /// matters more than freshness.
    pub fn submit(&self, frame: Frame) {
        self.frames.push_blocking(frame);
    }

    /// Queues a frame, evicting the oldest queued one if full. Use for live
    /// sources.
    pub fn offer(&self, frame: Frame) {
        self.frames.push(frame);
    }

    pub fn broadcaster(&self) -> &Broadcaster {
        &self.broadcaster
    }

    pub fn summary(&self) -> NodeSummary {
        let c = &self.counters;
        let s: &BroadcastStats = self.broadcaster.stats();
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        NodeSummary {
            frames: get(&c.frames),
            frames_dropped: self.frames.drops(),
            live_tracks: get(&c.live_tracks),
            pipeline_errors: get(&c.pipeline_errors),
            pair_errors: get(&c.pair_errors),
            alerts_raised: get(&c.alerts_raised),
            alerts_sent: get(&s.alerts_sent),
            alerts_suppressed: get(&s.alerts_suppressed),
            psms_sent: get(&s.psms_sent),
            ticks: get(&s.ticks),
            snapshot_drops: self.broadcaster.snapshot_drops(),
            send_failures: get(&s.send_failures),
            bsms_received: get(&s.bsms_received),
        }
    }

    /// Processes whatever is still queued, then stops every thread.
    pub fn shutdown(mut self) -> NodeSummary {
        self.join_worker();
        self.broadcaster.stop();
        self.summary()
    }

    fn join_worker(&mut self) {
        let _ = self.stop_tx.try_send(());
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.join_worker();
        self.broadcaster.stop();
    }
}

struct Worker {
    pipeline: Pipeline,
    frames: Receiver<Frame>,
    stop: Receiver<()>,
    broadcaster: Arc<Broadcaster>,
    counters: Arc<NodeCounters>,
    detector_delay: Duration,
    bsm_max_age: Duration,
}

impl Worker {
    fn run(mut self) {
        loop {
            select! {
                recv(self.frames) -> f => match f {
                    Ok(f) => self.handle(f),
                    Err(_) => return,
                },
                recv(self.stop) -> _ => {
                    while let Ok(f) = self.frames.try_recv() {
                        self.handle(f);
                    }
                    return;
                }
            }
        }
    }

    fn handle(&mut self, frame: Frame) {
        if !self.detector_delay.is_zero() {
            thread::sleep(self.detector_delay);
        }
        self.counters.frames.fetch_add(1, Ordering::Relaxed);
        let bsms = self.broadcaster.latest_bsms(self.bsm_max_age);
        let out = match self.pipeline.process(&frame, &bsms) {
            Ok(out) => out,
            Err(e) => {
                warn!(error = %e, ts = frame.ts, "frame dropped");
                self.counters.pipeline_errors.fetch_add(1, Ordering::Relaxed);
                return;
            }
        };
        let built_ts = HostClock::global().now_ms();
        for a in &out.evaluation.alerts {
            self.counters.alerts_raised.fetch_add(1, Ordering::Relaxed);
            self.broadcaster.send_alert(*a, built_ts);
        }
        for e in &out.evaluation.errors {
            warn!(ped = e.pedestrian_temp_id, veh = e.vehicle_temp_id, error = %e.error, "pair skipped");
        }
        self.counters.pair_errors.fetch_add(out.evaluation.errors.len() as u64, Ordering::Relaxed);
        self.counters.live_tracks.store(self.pipeline.tracker().tracks().len() as u64, Ordering::Relaxed);
        self.broadcaster.publish(TrackSnapshot { frame_ts: out.ts, built_ts, psms: out.psms });
    }
}
