use std::error::Error;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use pedalert_core::config::load_calibration;
use pedalert_core::eval::{compare_records, detection_accuracy, read_records, run_scenario, ScenarioConfig};
use pedalert_core::geometry::GeoPosition;
use pedalert_core::ingest::{serve_detections, RealtimePacer, ReplayReader};
use pedalert_core::messages::{build_bsm, Message, VehicleState, DEFAULT_VEHICLE_LENGTH_M};
use pedalert_core::node::{Node, NodeConfig, NodeSummary};
use pedalert_core::pipeline::PipelineConfig;
use pedalert_core::rsu_net::{latency_report, percentile, BroadcastConfig, HostClock, ListenConfig, VehicleClient};
use pedalert_core::tracking::TrackerConfig;
use tracing::info;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Debug, Parser)]
#[command(name = "pedalert", version, about = "Roadside pedestrian safety messages and collision alerts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the roadside pipeline on a replay file or a live detection stream.
    Run(RunArgs),
    /// Run a synthetic crossing scenario and write report.csv and trajectories.csv.
    Scenario(ScenarioArgs),
    /// Act as a vehicle: print received messages and record latency.
    Listen(ListenArgs),
    /// Compare estimates with ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Calibration file (TOML).
    #[arg(long)]
    pub calib: PathBuf,
    /// Detection replay CSV.
    #[arg(long, conflicts_with = "detect_socket", required_unless_present = "detect_socket")]
    pub replay: Option<PathBuf>,
    /// Accept live detections on this TCP address, e.g. `:5800`.
    #[arg(long)]
    pub detect_socket: Option<String>,
    /// Local address of the roadside socket; vehicles send BSMs here.
    #[arg(long, default_value = "0.0.0.0:5901")]
    pub bind: SocketAddr,
    /// Destination port for PSMs and alerts.
    #[arg(long, default_value_t = 5900)]
    pub port: u16,
    /// Destination address: unicast, broadcast or multicast group.
    #[arg(long, default_value = "127.0.0.1")]
    pub group: IpAddr,
    /// PSM broadcast period.
    #[arg(long, default_value_t = 100)]
    pub period_ms: u64,
    /// Minimum spacing of repeat alerts for one pedestrian/vehicle pair.
    #[arg(long, default_value_t = 1000)]
    pub alert_cooldown_ms: u64,
    /// Pace replay frames by their timestamps and restamp them with the
    /// current time.
    #[arg(long)]
    pub realtime: bool,
    /// Seed for track ID generation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Artificial per-frame delay standing in for detector inference.
    #[arg(long, default_value_t = 0)]
    pub detector_delay_ms: u64,
    /// Seconds between stats lines; 0 disables them.
    #[arg(long, default_value_t = 1.0)]
    pub stats_interval_s: f64,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "scenario-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ListenArgs {
    #[arg(long, default_value_t = 5900)]
    pub port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    pub bind_addr: IpAddr,
    /// Multicast group to join.
    #[arg(long)]
    pub group: Option<Ipv4Addr>,
    /// Write latency.csv and histogram.csv here on exit.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Stop after this many messages.
    #[arg(long)]
    pub count: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Roadside address to send this vehicle's BSMs to, at 10 Hz.
    #[arg(long, requires = "vehicle")]
    pub bsm_to: Option<SocketAddr>,
    /// Vehicle state as `lat,lon,speed_mps,heading_deg`.
    #[arg(long, value_parser = parse_vehicle)]
    pub vehicle: Option<VehicleState>,
    #[arg(long, default_value_t = 0x0000_0100)]
    pub vehicle_id: u32,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth CSV: ts,actor_id,lat,lon,velocity_mps,cardinal
    #[arg(long, requires = "estimate")]
    pub truth: Option<PathBuf>,
    /// Estimate CSV with the same columns, row-aligned with the truth.
    #[arg(long, requires = "truth")]
    pub estimate: Option<PathBuf>,
    /// One row per direction (EW, WE, NS, SN) instead of one overall row.
    #[arg(long)]
    pub by_direction: bool,
    /// True-positive detections, for detection accuracy.
    #[arg(long, requires = "fp")]
    pub tp: Option<u64>,
    /// False-positive detections.
    #[arg(long, requires = "tp")]
    pub fp: Option<u64>,
}

fn parse_vehicle(s: &str) -> std::result::Result<VehicleState, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("cannot parse `{p}`")))
        .collect::<std::result::Result<_, _>>()?;
    let [lat, lon, speed_mps, heading_deg] = v[..] else {
        return Err("expected lat,lon,speed_mps,heading_deg".into());
    };
    let position = GeoPosition::new(lat, lon).map_err(|e| e.to_string())?;
    Ok(VehicleState { position, speed_mps, heading_deg, elevation_m: 201.0, length_m: DEFAULT_VEHICLE_LENGTH_M })
}

/// `:5800` means all interfaces.
pub fn parse_listen_addr(s: &str) -> std::result::Result<SocketAddr, String> {
    let full = if s.starts_with(':') { format!("0.0.0.0{s}") } else { s.to_string() };
    full.parse().map_err(|_| format!("invalid socket address `{s}`"))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Listen(a) => cmd_listen(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let running = Arc::new(AtomicBool::new(true));
    let r = running.clone();
    // A second registration in the same process fails; the first flag wins.
    let _ = ctrlc::set_handler(move || r.store(false, Ordering::Relaxed));
    running
}

fn print_summary(label: &str, s: &NodeSummary, out: &mut impl Write) -> io::Result<()> {
    writeln!(
        out,
        "{label} frames={} tracks={} psms_sent={} alerts_sent={} alerts_suppressed={} frame_drops={} snapshot_drops={} send_failures={} pipeline_errors={} bsms={}",
        s.frames,
        s.live_tracks,
        s.psms_sent,
        s.alerts_sent,
        s.alerts_suppressed,
        s.frames_dropped,
        s.snapshot_drops,
        s.send_failures,
        s.pipeline_errors,
        s.bsms_received
    )
}

fn cmd_run(a: RunArgs) -> Result<()> {
    if a.period_ms == 0 {
        return Err("invalid field `period-ms`: must be positive".into());
    }
    let calib = load_calibration(&a.calib)?;
    let cfg = NodeConfig {
        broadcast: BroadcastConfig {
            bind: a.bind,
            dest: SocketAddr::new(a.group, a.port),
            psm_period_ms: a.period_ms,
            alert_cooldown_ms: a.alert_cooldown_ms,
            ..BroadcastConfig::default()
        },
        pipeline: PipelineConfig { tracker: TrackerConfig { seed: a.seed, ..TrackerConfig::default() }, ..PipelineConfig::default() },
        detector_delay: Duration::from_millis(a.detector_delay_ms),
        ..NodeConfig::default()
    };
    let node = Arc::new(Node::start(calib, cfg)?);
    info!(addr = %node.broadcaster().local_addr(), "roadside node up");
    let running = interrupt_flag();

    let stats_stop = Arc::new(AtomicBool::new(false));
    let stats_thread = (a.stats_interval_s > 0.0).then(|| {
        let node = node.clone();
        let stop = stats_stop.clone();
        let every = Duration::from_secs_f64(a.stats_interval_s);
        thread::spawn(move || {
            let mut last = node.summary();
            let mut next = Instant::now() + every;
            while !stop.load(Ordering::Relaxed) {
                if Instant::now() < next {
                    thread::sleep(Duration::from_millis(20));
                    continue;
                }
                let s = node.summary();
                let psm_rate = (s.psms_sent - last.psms_sent) as f64 / every.as_secs_f64();
                println!(
                    "stats tracks={} psm_per_s={psm_rate:.1} alerts={} suppressed={} frame_drops={} snapshot_drops={}",
                    s.live_tracks, s.alerts_sent, s.alerts_suppressed, s.frames_dropped, s.snapshot_drops
                );
                last = s;
                next += every;
            }
        })
    });

    let outcome = if let Some(path) = &a.replay {
        run_replay(&node, path, a.realtime, &running, Duration::from_millis(a.period_ms))
    } else {
        let addr = parse_listen_addr(a.detect_socket.as_deref().unwrap_or_default())?;
        let listener = TcpListener::bind(addr)?;
        info!(%addr, "waiting for detector");
        let node_in = node.clone();
        let clock = HostClock::global();
        serve_detections(listener, &running, |mut f| {
            if f.ts == 0 {
                f.ts = clock.now_epoch_ms();
            }
            node_in.offer(f)
        })
        .map_err(Into::into)
    };

    stats_stop.store(true, Ordering::Relaxed);
    if let Some(t) = stats_thread {
        let _ = t.join();
    }
    let node = Arc::try_unwrap(node).map_err(|_| "node still shared at shutdown")?;
    let summary = node.shutdown();
    print_summary("summary", &summary, &mut io::stdout())?;
    outcome
}

fn run_replay(node: &Node, path: &Path, realtime: bool, running: &AtomicBool, period: Duration) -> Result<()> {
    let file = File::open(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut pacer = RealtimePacer::new();
    let clock = HostClock::global();
    for frame in ReplayReader::new(BufReader::new(file)) {
        if !running.load(Ordering::Relaxed) {
            break;
        }
        let frame = frame.map_err(|e| format!("{}: {e}", path.display()))?;
        let frame = if realtime { pacer.pace(frame, || clock.now_epoch_ms()) } else { frame };
        node.submit(frame);
    }
    // Let the broadcaster send the final snapshot at least once.
    thread::sleep(period + Duration::from_millis(10));
    Ok(())
}

fn cmd_scenario(a: ScenarioArgs) -> Result<()> {
    let cfg = ScenarioConfig::load(&a.config)?;
    let report = run_scenario(&cfg)?;
    report.write_dir(&a.out).map_err(|e| format!("cannot write {}: {e}", a.out.display()))?;
    print!("{}", report.report_csv());
    Ok(())
}

fn cmd_listen(a: ListenArgs) -> Result<()> {
    let client = VehicleClient::bind(&ListenConfig { bind: Some(SocketAddr::new(a.bind_addr, a.port)), group: a.group })?;
    let running = interrupt_flag();
    let start = Instant::now();
    let end = a.duration_s.map(|s| start + Duration::from_secs_f64(s));

    let bsm_thread = match (a.bsm_to, a.vehicle) {
        (Some(to), Some(state)) => {
            let socket = UdpSocket::bind(("0.0.0.0", 0))?;
            let running = running.clone();
            let id = a.vehicle_id;
            Some(thread::spawn(move || {
                let clock = HostClock::global();
                let mut count: u8 = 0;
                while running.load(Ordering::Relaxed) && end.is_none_or(|e| Instant::now() < e) {
                    if let Ok(bsm) = build_bsm(&state, clock.now_epoch_ms(), count, id) {
                        if let Ok(bytes) = pedalert_core::messages::encode(&Message::Bsm(bsm)) {
                            let _ = socket.send_to(&bytes, to);
                        }
                    }
                    count = (count + 1) % 128;
                    thread::sleep(Duration::from_millis(100));
                }
            }))
        }
        _ => None,
    };

    let mut records = Vec::new();
    let mut out = io::stdout().lock();
    let mut seen = 0u64;
    while running.load(Ordering::Relaxed) && a.count.is_none_or(|c| seen < c) {
        let wait = match end {
            Some(e) if Instant::now() >= e => break,
            Some(e) => e.saturating_duration_since(Instant::now()).min(Duration::from_millis(200)),
            None => Duration::from_millis(200),
        };
        let Some(r) = client.recv(wait)? else { continue };
        seen += 1;
        writeln!(out, "{}", format_message(&r.message))?;
        records.push(r.record);
    }
    drop(out);
    running.store(false, Ordering::Relaxed);
    if let Some(t) = bsm_thread {
        let _ = t.join();
    }

    eprintln!("received={} decode_errors={}", records.len(), client.decode_errors());
    if let Some(dir) = &a.report {
        match latency_report(&records) {
            Ok(summary) => {
                summary.write_dir(dir).map_err(|e| format!("cannot write {}: {e}", dir.display()))?;
                let e2e: Vec<f64> = records.iter().map(|r| r.end_to_end_ms()).collect();
                if let Some(p99) = percentile(&e2e, 99.0) {
                    eprintln!("end_to_end_p99_ms={p99:.3}");
                }
            }
            Err(e) => eprintln!("no latency report: {e}"),
        }
    }
    Ok(())
}

pub fn format_message(m: &Message) -> String {
    match m {
        Message::Psm(p) => {
            let pos = p.position();
            format!(
                "PSM ts={} type={} dsecond={} msg_count={} id={:08x} lat={:.7} lon={:.7} elevation_m={:.1} accuracy_m={:.2} speed_mps={:.2} heading_deg={:.4} direction={}",
                p.timestamp_ms,
                p.device_user_type.label(),
                p.dsecond,
                p.msg_count,
                p.temp_id,
                pos.lat,
                pos.lon,
                p.elevation_m(),
                p.positional_accuracy_m(),
                p.speed_mps(),
                p.heading_deg(),
                p.cardinal.abbrev()
            )
        }
        Message::Bsm(b) => {
            let pos = b.position();
            format!(
                "BSM ts={} msg_count={} id={:08x} lat={:.7} lon={:.7} speed_mps={:.2} heading_deg={:.4} length_m={:.1}",
                b.timestamp_ms,
                b.msg_count,
                b.temp_id,
                pos.lat,
                pos.lon,
                b.speed_mps(),
                b.heading_deg(),
                b.length_m()
            )
        }
        Message::Alert(al) => {
            let c = al.collision_point();
            format!(
                "ALERT ts={} pedestrian={:08x} vehicle={:08x} ttc_s={:.3} collision_lat={:.7} collision_lon={:.7}",
                al.timestamp_ms,
                al.pedestrian_temp_id,
                al.vehicle_temp_id,
                al.ttc_s(),
                c.lat,
                c.lon
            )
        }
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if a.truth.is_none() && a.tp.is_none() {
        return Err("nothing to evaluate: give --truth/--estimate and/or --tp/--fp".into());
    }
    let mut out = io::stdout().lock();
    if let (Some(t), Some(e)) = (&a.truth, &a.estimate) {
        let truth = read_records(t)?;
        let est = read_records(e)?;
        let rows = compare_records(&truth, &est, a.by_direction)?;
        writeln!(out, "group,samples,rmse_location_m,rmse_velocity_mps")?;
        for r in rows {
            writeln!(out, "{},{},{:.6},{:.6}", r.group, r.samples, r.rmse_location_m, r.rmse_velocity_mps)?;
        }
    }
    if let (Some(tp), Some(fp)) = (a.tp, a.fp) {
        writeln!(out, "detection_accuracy,{:.6}", detection_accuracy(tp, fp)?)?;
    }
    Ok(())
}
