//! Experiment driver: builds the node, RIC, and xApp from a scenario, wires
//! them over the configured transport, runs the deterministic slot loop, and
//! exports the run artifacts.
//!
//! Given identical (scenario, seed) every output file is byte-identical
//! across runs and across the inproc/socket transports: the same frames flow
//! in the same order either way, the store appends in frame order, and the
//! ingest clock derives from simulation time.

use crate::channel::{
    evaluate, geometry, los_probability, sample_los, shadowing_db, ChannelError,
};
use crate::e2::{self, CodecError, KPM_FUNCTION_ID};
use crate::mobility::{position_at, Trajectory};
use crate::ran_node::{NodeConfig, NodeError, RanNode, UeContext};
use crate::ric::{ClockMode, Ric, RicError, SubStatus};
use crate::scenario::{Scenario, ScenarioError, TransportCfg};
use crate::seed;
use crate::store::{MetricStore, StoreError};
use crate::transport::{duplex, Connection};
use crate::xapp_kpm::{export_series_to_path, KpmXapp, SeriesPoint};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use thiserror::Error;

const STORE_FILE: &str = "kpm.store";
const SERIES_FILE: &str = "series.csv";
const SUMMARY_FILE: &str = "summary.txt";
const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Ric(#[from] RicError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Series(#[from] crate::xapp_kpm::SeriesError),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

/// Everything a completed run leaves behind.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub store_path: PathBuf,
    pub series_path: PathBuf,
    pub summary_path: PathBuf,
    pub manifest_path: PathBuf,
    pub series: Vec<SeriesPoint>,
    pub sub_id: u32,
    pub indications_delivered: u64,
    pub stored_rows: usize,
}

/// Runs a scenario end to end. On failure the out directory keeps whatever
/// partial outputs exist plus an `ABORTED.txt` flag describing the error.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunArtifacts, RunError> {
    match run_inner(scenario, out_dir) {
        Ok(a) => Ok(a),
        Err(e) => {
            let _ = std::fs::write(
                out_dir.join("ABORTED.txt"),
                format!("run aborted: {e}\noutputs in this directory are partial\n"),
            );
            Err(e)
        }
    }
}

fn run_inner(scenario: &Scenario, out_dir: &Path) -> Result<RunArtifacts, RunError> {
    scenario.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(format!(
        "creating output directory {}",
        out_dir.display()
    )))?;
    let store_path = out_dir.join(STORE_FILE);
    let store = MetricStore::create(&store_path)?;
    let ric = Ric::new(store, ClockMode::FromRecords);

    // transport: one E2 connection between the node (here) and the RIC
    let (mut node_conn, conn_thread) = match &scenario.transport {
        TransportCfg::Inproc => {
            let (ric_side, node_side) = duplex();
            let handle = ric.serve_connection(ric_side);
            (node_side, handle)
        }
        TransportCfg::Socket { address } => {
            let listener = std::net::TcpListener::bind(address)
                .map_err(io_err(format!("binding {address}")))?;
            let local = listener
                .local_addr()
                .map_err(io_err("resolving listener address"))?;
            let ric_clone = ric.clone();
            let handle = std::thread::spawn(move || {
                if let Ok((stream, _)) = listener.accept() {
                    if let Ok(conn) = Connection::from_tcp(stream) {
                        ric_clone.serve_connection(conn).join().ok();
                    }
                }
            });
            let stream = std::net::TcpStream::connect(local)
                .map_err(io_err(format!("connecting to {local}")))?;
            (
                Connection::from_tcp(stream).map_err(io_err("splitting socket"))?,
                handle,
            )
        }
    };

    // build the node from the scenario
    let node_cfg = NodeConfig {
        node_id: 1,
        tdd: scenario.tdd,
        sched: scenario.sched,
        channel: scenario.channel.clone(),
        ..NodeConfig::default()
    };
    let mut ue_trajs: Vec<(u32, Trajectory)> = Vec::new();
    let mut ues = Vec::new();
    for spec in &scenario.ues {
        let traj = scenario
            .resolve_trajectory(&spec.trajectory)
            .expect("validated");
        ue_trajs.push((spec.id, traj.clone()));
        ues.push(UeContext::new(
            spec.id,
            spec.attach,
            spec.offered_load_bps,
            spec.sdu_size_bits,
            traj,
        ));
    }
    ue_trajs.sort_by_key(|(id, _)| *id);
    let mut node = RanNode::new(node_cfg, ues)?;

    // E2 setup exchange
    node_conn
        .writer
        .write_frame(&e2::encode(&node.setup_request())?)
        .map_err(io_err("sending setup"))?;
    let frame = node_conn
        .reader
        .read_frame()
        .map_err(io_err("awaiting setup response"))?
        .ok_or_else(|| RunError::Protocol("connection closed during setup".into()))?;
    node.handle_setup_response(&e2::decode(&frame)?)?;

    // xApp registration and subscription, then pump the node until active
    let xapp_id = ric.register_xapp("kpm_mon");
    let (sub_id, rx) = ric.xapp_subscribe(
        xapp_id,
        KPM_FUNCTION_ID,
        scenario.xapp.report_period_ms as u32,
    )?;
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        while let Some(frame) = node_conn
            .reader
            .poll_frame()
            .map_err(io_err("polling control"))?
        {
            if let Some(resp) = node.handle_control(e2::decode(&frame)?) {
                node_conn
                    .writer
                    .write_frame(&e2::encode(&resp)?)
                    .map_err(io_err("answering control"))?;
            }
        }
        match ric.sub_status(sub_id) {
            Some(SubStatus::Active) => break,
            Some(SubStatus::Rejected(code)) => {
                return Err(RunError::Protocol(format!(
                    "subscription rejected with reason {code}"
                )))
            }
            _ if Instant::now() > deadline => {
                return Err(RunError::Protocol("subscription never became active".into()))
            }
            _ => std::thread::sleep(Duration::from_micros(200)),
        }
    }

    // xApp consumer
    let gnb_pos = scenario.gnb_pos;
    let xapp_thread = std::thread::spawn(move || {
        let mut xapp = KpmXapp::new(gnb_pos);
        xapp.own_subscription(sub_id);
        let mut delivered = 0u64;
        for d in rx {
            xapp.on_indication(d.sub_id, d.seq, &d.records);
            delivered += 1;
        }
        (xapp, delivered)
    });

    // deterministic slot loop
    let slot_us = node.slot_us();
    let duration_us = (scenario.duration_s * 1e6).round() as u64;
    let total_slots = duration_us / slot_us;
    let update_us = scenario.channel.update_period_ms * 1000;
    let mut los_rng = seed::stream(scenario.seed, "los");
    let mut shadow_rng = seed::stream(scenario.seed, "shadow");
    let mut cqi_map: BTreeMap<u32, u8> = BTreeMap::new();

    for _ in 0..total_slots {
        let t_us = node.now_us();
        if t_us % update_us == 0 {
            let t_s = t_us as f64 / 1e6;
            for (ue_id, traj) in &ue_trajs {
                let pos = position_at(traj, t_s);
                let geo = geometry(pos, gnb_pos)?;
                let p_los = los_probability(&scenario.channel, geo.elevation_deg);
                let los = sample_los(p_los, &mut los_rng);
                let shadow = shadowing_db(&scenario.channel, &mut shadow_rng);
                let state = evaluate(
                    &scenario.channel,
                    &scenario.budget,
                    pos,
                    gnb_pos,
                    los,
                    shadow,
                )?;
                cqi_map.insert(*ue_id, state.cqi);
            }
        }
        let outcome = node.advance_slot(&cqi_map);
        for msg in &outcome.outbound {
            node_conn
                .writer
                .write_frame(&e2::encode(msg)?)
                .map_err(io_err("sending indication"))?;
        }
        while let Some(frame) = node_conn
            .reader
            .poll_frame()
            .map_err(io_err("polling control"))?
        {
            if let Some(resp) = node.handle_control(e2::decode(&frame)?) {
                node_conn
                    .writer
                    .write_frame(&e2::encode(&resp)?)
                    .map_err(io_err("answering control"))?;
            }
        }
    }

    // teardown: close the node side, let the RIC drain, then stop delivery
    drop(node_conn);
    conn_thread
        .join()
        .map_err(|_| RunError::Protocol("ric connection thread panicked".into()))?;
    ric.flush_store()?;
    let stored_rows = ric.stored_rows().len();
    ric.close_delivery();
    let (xapp, indications_delivered) = xapp_thread
        .join()
        .map_err(|_| RunError::Protocol("xapp thread panicked".into()))?;

    // artifacts
    let series_path = out_dir.join(SERIES_FILE);
    export_series_to_path(&xapp.series, &series_path)?;
    let summary_path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, summarize(scenario, &xapp.series))
        .map_err(io_err("writing summary"))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_manifest(out_dir, &[STORE_FILE, SERIES_FILE, SUMMARY_FILE], &manifest_path)?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        store_path,
        series_path,
        summary_path,
        manifest_path,
        series: xapp.series,
        sub_id,
        indications_delivered,
        stored_rows,
    })
}

/// Per-UE throughput/latency/RB statistics plus the distance-binned table.
pub fn summarize(scenario: &Scenario, series: &[SeriesPoint]) -> String {
    let mut out = String::new();
    out.push_str(&format!("run: {}\n", scenario.name));
    out.push_str(&format!("seed: {}\n", scenario.seed));
    out.push_str(&format!("duration_s: {}\n", scenario.duration_s));
    for spec in &scenario.ues {
        let points: Vec<&SeriesPoint> = series.iter().filter(|p| p.ue_id == spec.id).collect();
        if points.is_empty() {
            out.push_str(&format!("ue {}: no report windows\n", spec.id));
            continue;
        }
        let thp: Vec<f64> = points.iter().map(|p| p.dl_thp_mbps).collect();
        let mean = thp.iter().sum::<f64>() / thp.len() as f64;
        let min = thp.iter().copied().fold(f64::INFINITY, f64::min);
        let max = thp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lats: Vec<f64> = points.iter().filter_map(|p| p.sdu_latency_ms).collect();
        let lat = if lats.is_empty() {
            "-".to_string()
        } else {
            format!("{:.3}", lats.iter().sum::<f64>() / lats.len() as f64)
        };
        let rb_total: u64 = points.iter().map(|p| u64::from(p.rb_count)).sum();
        out.push_str(&format!(
            "ue {} ({:?}): windows={} thp_mbps mean={:.3} min={:.3} max={:.3} sdu_latency_ms mean={} rb_total={}\n",
            spec.id,
            spec.attach,
            points.len(),
            mean,
            min,
            max,
            lat,
            rb_total
        ));
    }
    out.push_str(&format!("\nbinned by {} m:\n", scenario.xapp.bin_m));
    out.push_str("ue,bin_start_m,samples,thp_mbps_mean,rb_mean,latency_ms_mean\n");
    for b in crate::xapp_kpm::bin_by_distance(series, scenario.xapp.bin_m) {
        let lat = b
            .mean_latency_ms
            .map(|l| format!("{l:.3}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{},{},{},{:.3},{:.1},{}\n",
            b.ue_id, b.bin_start_m, b.samples, b.mean_thp_mbps, b.mean_rb, lat
        ));
    }
    out
}

/// Writes the manifest: one `sha256 <hex>  <file>` line per output file.
fn write_manifest(dir: &Path, files: &[&str], manifest_path: &Path) -> Result<(), RunError> {
    let mut out = String::new();
    for name in files {
        let bytes =
            std::fs::read(dir.join(name)).map_err(io_err(format!("hashing {name}")))?;
        let mut h = Sha256::new();
        h.update(&bytes);
        let digest = h.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!("sha256 {hex}  {name}\n"));
    }
    let mut f =
        std::fs::File::create(manifest_path).map_err(io_err("creating manifest"))?;
    f.write_all(out.as_bytes()).map_err(io_err("writing manifest"))?;
    Ok(())
}
