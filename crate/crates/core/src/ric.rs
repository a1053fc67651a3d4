//! Near-RT RIC: E2 server state machine, subscription management, the
//! xApp-facing internal interface, and metric ingest.
//!
//! Each accepted connection runs `AwaitSetup -> Established`; per
//! subscription the RIC tracks `Pending -> Active -> Deleted`. Any protocol
//! violation closes the connection after an ErrorIndication when the stream
//! still accepts writes. Indications are appended to the metric store
//! *before* delivery, so the database is never behind an xApp's view.
//! Delivery queues are bounded FIFOs per subscription; a full queue blocks
//! the ingesting connection instead of dropping.

use crate::e2::{self, error_code, reason, E2Message, KpmRecord};
use crate::store::{MetricStore, StoreError, StoredRow};
use crate::transport::{Connection, FrameWriter};
use std::collections::BTreeMap;
use std::sync::mpsc::{Receiver, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use thiserror::Error;

pub use crate::e2::KPM_FUNCTION_ID;

/// Delivery queue capacity per subscription.
const DELIVERY_QUEUE: usize = 1024;

pub type ConnId = u64;

/// Where ingest timestamps come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Ingest time = the indication's last record t_ms. Deterministic;
    /// the default for reproducible runs.
    FromRecords,
    /// Unix milliseconds at ingest.
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStatus {
    Pending,
    Active,
    Rejected(u8),
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Xapp(u32),
    Wire(ConnId),
}

#[derive(Debug, Clone)]
pub struct SubscriptionState {
    pub sub_id: u32,
    pub owner: Owner,
    pub function_id: u16,
    pub report_period_ms: u32,
    pub status: SubStatus,
    pub last_seq: Option<u64>,
    /// Connection of the E2 node serving this subscription.
    pub serving_conn: ConnId,
}

/// An indication as delivered to an xApp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivered {
    pub sub_id: u32,
    pub seq: u64,
    pub records: Vec<KpmRecord>,
}

#[derive(Debug, Error)]
pub enum RicError {
    #[error("no connected node advertises function {0}")]
    UnknownFunction(u16),
    #[error("unknown xApp id {0}")]
    UnknownXapp(u32),
    #[error("report period must be positive")]
    BadPeriod,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConnState {
    AwaitSetup,
    Established,
    Closed,
}

struct ConnEntry {
    state: ConnState,
    writer: FrameWriter,
    node_id: Option<u32>,
}

struct RicState {
    next_conn_id: ConnId,
    next_xapp_id: u32,
    next_sub_id: u32,
    conns: BTreeMap<ConnId, ConnEntry>,
    /// function_id -> serving node connection.
    functions: BTreeMap<u16, ConnId>,
    subs: BTreeMap<u32, SubscriptionState>,
    xapps: BTreeMap<u32, String>,
    delivery: BTreeMap<u32, SyncSender<Delivered>>,
    store: MetricStore,
    clock: ClockMode,
}

impl RicState {
    fn ingest_ms(&self, records: &[KpmRecord]) -> u64 {
        match self.clock {
            ClockMode::FromRecords => records.last().map_or(0, |r| r.t_ms),
            ClockMode::System => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

/// The RIC. Cloneable handle; connection handlers run on their own threads.
#[derive(Clone)]
pub struct Ric {
    inner: Arc<Mutex<RicState>>,
}

impl Ric {
    pub fn new(store: MetricStore, clock: ClockMode) -> Self {
        Ric {
            inner: Arc::new(Mutex::new(RicState {
                next_conn_id: 1,
                next_xapp_id: 1,
                next_sub_id: 1,
                conns: BTreeMap::new(),
                functions: BTreeMap::new(),
                subs: BTreeMap::new(),
                xapps: BTreeMap::new(),
                delivery: BTreeMap::new(),
                store,
                clock,
            })),
        }
    }

    /// Registers an xApp by name; ids count up from 1.
    pub fn register_xapp(&self, name: &str) -> u32 {
        let mut st = self.inner.lock().unwrap();
        let id = st.next_xapp_id;
        st.next_xapp_id += 1;
        st.xapps.insert(id, name.to_string());
        id
    }

    /// Maps an xApp subscription onto an E2 subscription 1:1: allocates a
    /// sub_id, sends the SubscriptionRequest to the advertising node, and
    /// hands back the delivery queue. The subscription starts Pending and
    /// turns Active when the node accepts.
    pub fn xapp_subscribe(
        &self,
        xapp_id: u32,
        function_id: u16,
        report_period_ms: u32,
    ) -> Result<(u32, Receiver<Delivered>), RicError> {
        if report_period_ms == 0 {
            return Err(RicError::BadPeriod);
        }
        let mut st = self.inner.lock().unwrap();
        if !st.xapps.contains_key(&xapp_id) {
            return Err(RicError::UnknownXapp(xapp_id));
        }
        let &serving = st
            .functions
            .get(&function_id)
            .ok_or(RicError::UnknownFunction(function_id))?;
        let sub_id = st.next_sub_id;
        st.next_sub_id += 1;
        let (tx, rx) = std::sync::mpsc::sync_channel(DELIVERY_QUEUE);
        st.subs.insert(
            sub_id,
            SubscriptionState {
                sub_id,
                owner: Owner::Xapp(xapp_id),
                function_id,
                report_period_ms,
                status: SubStatus::Pending,
                last_seq: None,
                serving_conn: serving,
            },
        );
        st.delivery.insert(sub_id, tx);
        let writer = st.conns[&serving].writer.clone();
        drop(st);
        let frame = e2::encode(&E2Message::SubscriptionRequest {
            sub_id,
            function_id,
            report_period_ms,
        })
        .expect("static message encodes");
        writer.write_frame(&frame)?;
        Ok((sub_id, rx))
    }

    /// Deletes a subscription, notifying the serving node.
    pub fn delete_subscription(&self, sub_id: u32) -> Result<(), RicError> {
        let mut st = self.inner.lock().unwrap();
        let Some(sub) = st.subs.get_mut(&sub_id) else {
            return Ok(());
        };
        sub.status = SubStatus::Deleted;
        let serving = sub.serving_conn;
        st.delivery.remove(&sub_id);
        let writer = st.conns.get(&serving).map(|c| c.writer.clone());
        drop(st);
        if let Some(w) = writer {
            w.write_frame(
                &e2::encode(&E2Message::SubscriptionDelete { sub_id }).expect("static message"),
            )?;
        }
        Ok(())
    }

    pub fn sub_status(&self, sub_id: u32) -> Option<SubStatus> {
        self.inner
            .lock()
            .unwrap()
            .subs
            .get(&sub_id)
            .map(|s| s.status)
    }

    pub fn advertised_functions(&self) -> Vec<u16> {
        self.inner.lock().unwrap().functions.keys().copied().collect()
    }

    /// Rows matching the filters from the backing store, ordered by t_ms.
    pub fn query_metrics(
        &self,
        ue_id: Option<u32>,
        t_range: Option<(u64, u64)>,
    ) -> Vec<KpmRecord> {
        self.inner.lock().unwrap().store.query(ue_id, t_range)
    }

    pub fn stored_rows(&self) -> Vec<StoredRow> {
        self.inner.lock().unwrap().store.rows().to_vec()
    }

    pub fn flush_store(&self) -> Result<(), RicError> {
        Ok(self.inner.lock().unwrap().store.flush()?)
    }

    /// Drops all delivery queues so xApp consumers see end-of-stream.
    pub fn close_delivery(&self) {
        self.inner.lock().unwrap().delivery.clear();
    }

    /// Serves one E2 connection on a dedicated thread.
    pub fn serve_connection(&self, conn: Connection) -> JoinHandle<()> {
        let ric = self.clone();
        std::thread::spawn(move || ric.run_connection(conn))
    }

    fn run_connection(&self, conn: Connection) {
        let Connection { mut reader, writer } = conn;
        let conn_id = {
            let mut st = self.inner.lock().unwrap();
            let id = st.next_conn_id;
            st.next_conn_id += 1;
            st.conns.insert(
                id,
                ConnEntry {
                    state: ConnState::AwaitSetup,
                    writer: writer.clone(),
                    node_id: None,
                },
            );
            id
        };
        loop {
            let frame = match reader.read_frame() {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(_) => break,
            };
            let msg = match e2::decode(&frame) {
                Ok(m) => m,
                Err(err) => {
                    let _ = writer.write_frame(
                        &e2::encode(&E2Message::ErrorIndication {
                            code: error_code::MALFORMED_MESSAGE,
                            detail: err.to_string(),
                        })
                        .expect("static message"),
                    );
                    self.inner.lock().unwrap().conns.get_mut(&conn_id).unwrap().state =
                        ConnState::Closed;
                    break;
                }
            };
            if !self.handle_message(conn_id, msg) {
                break;
            }
        }
        self.cleanup_connection(conn_id);
    }

    /// Applies one inbound message. Returns false when the connection must
    /// close. Delivery sends happen outside the state lock so backpressure
    /// never wedges the RIC.
    fn handle_message(&self, conn_id: ConnId, msg: E2Message) -> bool {
        let mut pending_delivery: Option<(SyncSender<Delivered>, Delivered)> = None;
        let mut keep_open = true;

        let mut st = self.inner.lock().unwrap();
        let conn_state = st.conns[&conn_id].state;
        match (conn_state, msg) {
            (ConnState::AwaitSetup, E2Message::SetupRequest { node_id, functions }) => {
                let mut accepted = Vec::new();
                for f in &functions {
                    st.functions.insert(f.function_id, conn_id);
                    accepted.push(f.function_id);
                }
                let c = st.conns.get_mut(&conn_id).unwrap();
                c.state = ConnState::Established;
                c.node_id = Some(node_id);
                let w = c.writer.clone();
                drop(st);
                let _ = w.write_frame(
                    &e2::encode(&E2Message::SetupResponse {
                        accepted_function_ids: accepted,
                    })
                    .expect("static message"),
                );
                return true;
            }
            (ConnState::AwaitSetup, _) => {
                keep_open = false;
                let w = st.conns[&conn_id].writer.clone();
                st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
                drop(st);
                let _ = w.write_frame(
                    &e2::encode(&E2Message::ErrorIndication {
                        code: error_code::PROTOCOL_VIOLATION,
                        detail: "message before setup".into(),
                    })
                    .expect("static message"),
                );
                return keep_open;
            }
            (
                ConnState::Established,
                E2Message::SubscriptionRequest {
                    sub_id,
                    function_id,
                    report_period_ms,
                },
            ) => {
                // Wire subscription from an established peer. The proposed
                // sub_id is used verbatim when free everywhere; otherwise
                // rejected as a duplicate and the connection stays up.
                let reason_code = if report_period_ms == 0 {
                    Some(reason::BAD_PERIOD)
                } else if !st.functions.contains_key(&function_id) {
                    Some(reason::UNKNOWN_FUNCTION)
                } else if st
                    .subs
                    .get(&sub_id)
                    .is_some_and(|s| s.status != SubStatus::Deleted)
                {
                    Some(reason::DUPLICATE_SUB_ID)
                } else {
                    None
                };
                let w = st.conns[&conn_id].writer.clone();
                match reason_code {
                    Some(code) => {
                        drop(st);
                        let _ = w.write_frame(
                            &e2::encode(&E2Message::SubscriptionResponse {
                                sub_id,
                                accepted: false,
                                reason_code: code,
                            })
                            .expect("static message"),
                        );
                    }
                    None => {
                        let serving = st.functions[&function_id];
                        st.next_sub_id = st.next_sub_id.max(sub_id + 1);
                        st.subs.insert(
                            sub_id,
                            SubscriptionState {
                                sub_id,
                                owner: Owner::Wire(conn_id),
                                function_id,
                                report_period_ms,
                                status: SubStatus::Pending,
                                last_seq: None,
                                serving_conn: serving,
                            },
                        );
                        let node_w = st.conns[&serving].writer.clone();
                        drop(st);
                        let _ = node_w.write_frame(
                            &e2::encode(&E2Message::SubscriptionRequest {
                                sub_id,
                                function_id,
                                report_period_ms,
                            })
                            .expect("static message"),
                        );
                    }
                }
                return true;
            }
            (
                ConnState::Established,
                E2Message::SubscriptionResponse {
                    sub_id,
                    accepted,
                    reason_code,
                },
            ) => {
                let valid = st
                    .subs
                    .get(&sub_id)
                    .is_some_and(|s| s.serving_conn == conn_id && s.status == SubStatus::Pending);
                if !valid {
                    keep_open = false;
                    let w = st.conns[&conn_id].writer.clone();
                    st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
                    drop(st);
                    let _ = w.write_frame(
                        &e2::encode(&E2Message::ErrorIndication {
                            code: error_code::PROTOCOL_VIOLATION,
                            detail: format!("unsolicited subscription response for {sub_id}"),
                        })
                        .expect("static message"),
                    );
                    return keep_open;
                }
                let sub = st.subs.get_mut(&sub_id).unwrap();
                sub.status = if accepted {
                    SubStatus::Active
                } else {
                    SubStatus::Rejected(reason_code)
                };
                let owner = sub.owner;
                if let Owner::Wire(owner_conn) = owner {
                    let w = st.conns.get(&owner_conn).map(|c| c.writer.clone());
                    drop(st);
                    if let Some(w) = w {
                        let _ = w.write_frame(
                            &e2::encode(&E2Message::SubscriptionResponse {
                                sub_id,
                                accepted,
                                reason_code,
                            })
                            .expect("static message"),
                        );
                    }
                }
                return true;
            }
            (
                ConnState::Established,
                E2Message::Indication {
                    sub_id,
                    seq,
                    records,
                },
            ) => {
                let Some(sub) = st.subs.get(&sub_id) else {
                    keep_open = false;
                    let w = st.conns[&conn_id].writer.clone();
                    st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
                    drop(st);
                    let _ = w.write_frame(
                        &e2::encode(&E2Message::ErrorIndication {
                            code: error_code::PROTOCOL_VIOLATION,
                            detail: format!("indication for unknown subscription {sub_id}"),
                        })
                        .expect("static message"),
                    );
                    return keep_open;
                };
                if sub.serving_conn != conn_id || sub.status == SubStatus::Deleted {
                    // late indication after delete: drop silently
                    return true;
                }
                if sub.last_seq.is_some_and(|l| seq <= l) {
                    keep_open = false;
                    let w = st.conns[&conn_id].writer.clone();
                    st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
                    drop(st);
                    let _ = w.write_frame(
                        &e2::encode(&E2Message::ErrorIndication {
                            code: error_code::PROTOCOL_VIOLATION,
                            detail: format!("non-increasing seq {seq} on subscription {sub_id}"),
                        })
                        .expect("static message"),
                    );
                    return keep_open;
                }
                let owner = sub.owner;
                st.subs.get_mut(&sub_id).unwrap().last_seq = Some(seq);
                // store before delivery
                let ingest = st.ingest_ms(&records);
                for r in &records {
                    if let Err(err) = st.store.append(sub_id, ingest, r.clone()) {
                        eprintln!("ric: store append failed: {err}");
                    }
                }
                match owner {
                    Owner::Xapp(_) => {
                        if let Some(tx) = st.delivery.get(&sub_id).cloned() {
                            pending_delivery = Some((
                                tx,
                                Delivered {
                                    sub_id,
                                    seq,
                                    records,
                                },
                            ));
                        }
                    }
                    Owner::Wire(owner_conn) => {
                        let w = st.conns.get(&owner_conn).map(|c| c.writer.clone());
                        if let Some(w) = w {
                            let frame = e2::encode(&E2Message::Indication {
                                sub_id,
                                seq,
                                records,
                            })
                            .expect("valid indication");
                            drop(st);
                            let _ = w.write_frame(&frame);
                            return true;
                        }
                    }
                }
            }
            (ConnState::Established, E2Message::SubscriptionDelete { sub_id }) => {
                let known = st.subs.get(&sub_id).map(|s| (s.owner, s.serving_conn));
                match known {
                    Some((owner, serving))
                        if owner == Owner::Wire(conn_id) || serving == conn_id =>
                    {
                        st.subs.get_mut(&sub_id).unwrap().status = SubStatus::Deleted;
                        st.delivery.remove(&sub_id);
                        if owner == Owner::Wire(conn_id) && serving != conn_id {
                            let w = st.conns.get(&serving).map(|c| c.writer.clone());
                            drop(st);
                            if let Some(w) = w {
                                let _ = w.write_frame(
                                    &e2::encode(&E2Message::SubscriptionDelete { sub_id })
                                        .expect("static message"),
                                );
                            }
                            return true;
                        }
                    }
                    _ => {} // unknown delete: ignore
                }
            }
            (ConnState::Established, E2Message::SetupRequest { .. }) => {
                keep_open = false;
                let w = st.conns[&conn_id].writer.clone();
                st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
                drop(st);
                let _ = w.write_frame(
                    &e2::encode(&E2Message::ErrorIndication {
                        code: error_code::PROTOCOL_VIOLATION,
                        detail: "duplicate setup".into(),
                    })
                    .expect("static message"),
                );
                return keep_open;
            }
            (ConnState::Established, E2Message::SetupResponse { .. }) => {
                keep_open = false;
                st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
            }
            (ConnState::Established, E2Message::ErrorIndication { code, detail }) => {
                eprintln!("ric: peer error {code}: {detail}");
                keep_open = false;
                st.conns.get_mut(&conn_id).unwrap().state = ConnState::Closed;
            }
            (ConnState::Closed, _) => {
                keep_open = false;
            }
        }
        drop(st);
        if let Some((tx, delivered)) = pending_delivery {
            // bounded queue: blocks here (never drops) when the xApp lags
            let _ = tx.send(delivered);
        }
        keep_open
    }

    fn cleanup_connection(&self, conn_id: ConnId) {
        let mut st = self.inner.lock().unwrap();
        st.functions.retain(|_, c| *c != conn_id);
        let mut notify: Vec<(ConnId, u32)> = Vec::new();
        for sub in st.subs.values_mut() {
            if sub.serving_conn == conn_id && sub.status != SubStatus::Deleted {
                sub.status = SubStatus::Deleted;
            }
            if sub.owner == Owner::Wire(conn_id) && sub.status != SubStatus::Deleted {
                sub.status = SubStatus::Deleted;
                notify.push((sub.serving_conn, sub.sub_id));
            }
        }
        let deleted: Vec<u32> = st
            .subs
            .values()
            .filter(|s| s.status == SubStatus::Deleted)
            .map(|s| s.sub_id)
            .collect();
        for id in deleted {
            st.delivery.remove(&id);
        }
        // dropping the entry releases the last writer handle, signalling EOF
        st.conns.remove(&conn_id);
        let writers: Vec<(FrameWriter, u32)> = notify
            .into_iter()
            .filter_map(|(serving, sub_id)| {
                st.conns.get(&serving).map(|c| (c.writer.clone(), sub_id))
            })
            .collect();
        drop(st);
        for (w, sub_id) in writers {
            let _ = w.write_frame(
                &e2::encode(&E2Message::SubscriptionDelete { sub_id }).expect("static message"),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::e2::RanFunction;
    use crate::transport::duplex;

    fn new_ric(dir: &std::path::Path) -> Ric {
        let store = MetricStore::create(&dir.join("kpm.store")).unwrap();
        Ric::new(store, ClockMode::FromRecords)
    }

    fn setup_msg() -> E2Message {
        E2Message::SetupRequest {
            node_id: 1,
            functions: vec![RanFunction {
                function_id: KPM_FUNCTION_ID,
                name: "kpm".into(),
            }],
        }
    }

    #[test]
    fn xapp_ids_count_from_one() {
        let dir = tempfile::tempdir().unwrap();
        let ric = new_ric(dir.path());
        assert_eq!(ric.register_xapp("kpm_mon"), 1);
        assert_eq!(ric.register_xapp("other"), 2);
    }

    #[test]
    fn subscribe_without_node_rejected_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let ric = new_ric(dir.path());
        let x = ric.register_xapp("kpm_mon");
        assert!(matches!(
            ric.xapp_subscribe(x, 99, 100),
            Err(RicError::UnknownFunction(99))
        ));
    }

    #[test]
    fn setup_then_wire_subscribe_walk() {
        let dir = tempfile::tempdir().unwrap();
        let ric = new_ric(dir.path());
        let (ric_side, mut peer) = duplex();
        let handle = ric.serve_connection(ric_side);

        peer.writer
            .write_frame(&e2::encode(&setup_msg()).unwrap())
            .unwrap();
        let resp = e2::decode(&peer.reader.read_frame().unwrap().unwrap()).unwrap();
        assert_eq!(
            resp,
            E2Message::SetupResponse {
                accepted_function_ids: vec![KPM_FUNCTION_ID]
            }
        );

        // wire subscribe: the RIC forwards the request to the advertising
        // node, which is this same connection
        peer.writer
            .write_frame(
                &e2::encode(&E2Message::SubscriptionRequest {
                    sub_id: 1,
                    function_id: KPM_FUNCTION_ID,
                    report_period_ms: 100,
                })
                .unwrap(),
            )
            .unwrap();
        let fwd = e2::decode(&peer.reader.read_frame().unwrap().unwrap()).unwrap();
        assert_eq!(
            fwd,
            E2Message::SubscriptionRequest {
                sub_id: 1,
                function_id: KPM_FUNCTION_ID,
                report_period_ms: 100
            }
        );
        peer.writer
            .write_frame(
                &e2::encode(&E2Message::SubscriptionResponse {
                    sub_id: 1,
                    accepted: true,
                    reason_code: reason::OK,
                })
                .unwrap(),
            )
            .unwrap();
        let answer = e2::decode(&peer.reader.read_frame().unwrap().unwrap()).unwrap();
        assert_eq!(
            answer,
            E2Message::SubscriptionResponse {
                sub_id: 1,
                accepted: true,
                reason_code: reason::OK
            }
        );
        assert_eq!(ric.sub_status(1), Some(SubStatus::Active));

        // duplicate sub_id: rejected, connection stays up
        peer.writer
            .write_frame(
                &e2::encode(&E2Message::SubscriptionRequest {
                    sub_id: 1,
                    function_id: KPM_FUNCTION_ID,
                    report_period_ms: 100,
                })
                .unwrap(),
            )
            .unwrap();
        let dup = e2::decode(&peer.reader.read_frame().unwrap().unwrap()).unwrap();
        assert_eq!(
            dup,
            E2Message::SubscriptionResponse {
                sub_id: 1,
                accepted: false,
                reason_code: reason::DUPLICATE_SUB_ID
            }
        );

        drop(peer);
        handle.join().unwrap();
    }

    #[test]
    fn subscribe_before_setup_closes() {
        let dir = tempfile::tempdir().unwrap();
        let ric = new_ric(dir.path());
        let (ric_side, mut peer) = duplex();
        let handle = ric.serve_connection(ric_side);

        peer.writer
            .write_frame(
                &e2::encode(&E2Message::SubscriptionRequest {
                    sub_id: 1,
                    function_id: KPM_FUNCTION_ID,
                    report_period_ms: 100,
                })
                .unwrap(),
            )
            .unwrap();
        let err = e2::decode(&peer.reader.read_frame().unwrap().unwrap()).unwrap();
        assert!(matches!(
            err,
            E2Message::ErrorIndication {
                code: error_code::PROTOCOL_VIOLATION,
                ..
            }
        ));
        // connection closed by the RIC
        assert_eq!(peer.reader.read_frame().unwrap(), None);
        handle.join().unwrap();
    }
}
