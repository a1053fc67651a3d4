//! E2-inspired monitoring protocol: message set and bit-exact codec.
//!
//! Framing is a 4-byte big-endian payload length followed by the payload.
//! The payload starts with a 1-byte type tag (0x01..=0x07 in the order
//! below); integers are fixed-width big-endian, strings are a 2-byte length
//! plus UTF-8, lists are a 2-byte element count plus the elements. Tags
//! 0x08 and above are reserved for future control verbs.

use thiserror::Error;

/// Hard ceiling on a frame payload; larger length prefixes are rejected
/// before any allocation.
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

/// RAN function id of the KPM monitoring service in bundled scenarios.
pub const KPM_FUNCTION_ID: u16 = 2;

pub const TAG_SETUP_REQUEST: u8 = 0x01;
pub const TAG_SETUP_RESPONSE: u8 = 0x02;
pub const TAG_SUBSCRIPTION_REQUEST: u8 = 0x03;
pub const TAG_SUBSCRIPTION_RESPONSE: u8 = 0x04;
pub const TAG_INDICATION: u8 = 0x05;
pub const TAG_SUBSCRIPTION_DELETE: u8 = 0x06;
pub const TAG_ERROR_INDICATION: u8 = 0x07;

/// Subscription rejection reasons carried in `SubscriptionResponse`.
pub mod reason {
    pub const OK: u8 = 0;
    pub const UNKNOWN_FUNCTION: u8 = 1;
    pub const BAD_PERIOD: u8 = 2;
    pub const DUPLICATE_SUB_ID: u8 = 3;
}

/// Error codes carried in `ErrorIndication`.
pub mod error_code {
    pub const PROTOCOL_VIOLATION: u8 = 1;
    pub const MALFORMED_MESSAGE: u8 = 2;
}

/// A RAN function advertised during setup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RanFunction {
    pub function_id: u16,
    pub name: String,
}

/// One telemetry row reported by the E2 node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KpmRecord {
    /// Simulation time at the end of the report window (ms).
    pub t_ms: u64,
    pub ue_id: u32,
    /// Served DL rate over the window (kbit/s).
    pub dl_thp_kbps: u32,
    /// RBs granted over the window.
    pub rb_count: u32,
    /// Mean RLC SDU latency over the window (us); absent when the window
    /// completed no SDUs.
    pub sdu_latency_us: Option<u32>,
    /// Position snapshot at window end, centimeters.
    pub pos_cm: [i32; 3],
    pub cqi: u8,
    pub mcs: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum E2Message {
    SetupRequest {
        node_id: u32,
        functions: Vec<RanFunction>,
    },
    SetupResponse {
        accepted_function_ids: Vec<u16>,
    },
    SubscriptionRequest {
        sub_id: u32,
        function_id: u16,
        report_period_ms: u32,
    },
    SubscriptionResponse {
        sub_id: u32,
        accepted: bool,
        reason_code: u8,
    },
    Indication {
        sub_id: u32,
        seq: u64,
        records: Vec<KpmRecord>,
    },
    SubscriptionDelete {
        sub_id: u32,
    },
    ErrorIndication {
        code: u8,
        detail: String,
    },
}

impl E2Message {
    pub fn tag(&self) -> u8 {
        match self {
            E2Message::SetupRequest { .. } => TAG_SETUP_REQUEST,
            E2Message::SetupResponse { .. } => TAG_SETUP_RESPONSE,
            E2Message::SubscriptionRequest { .. } => TAG_SUBSCRIPTION_REQUEST,
            E2Message::SubscriptionResponse { .. } => TAG_SUBSCRIPTION_RESPONSE,
            E2Message::Indication { .. } => TAG_INDICATION,
            E2Message::SubscriptionDelete { .. } => TAG_SUBSCRIPTION_DELETE,
            E2Message::ErrorIndication { .. } => TAG_ERROR_INDICATION,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown message type tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("truncated payload: need {needed} more byte(s) for {what}")]
    Truncated { what: &'static str, needed: usize },
    #[error("frame length mismatch: declared {declared}, parsed {parsed}")]
    LengthMismatch { declared: usize, parsed: usize },
    #[error("frame payload {0} exceeds the {MAX_PAYLOAD} byte limit")]
    FrameTooLarge(usize),
    #[error("string is not valid UTF-8")]
    BadUtf8,
    #[error("invalid value for {0}")]
    BadValue(&'static str),
    #[error("string or list too long to encode: {0} elements")]
    TooLong(usize),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated {
                what,
                needed: n - (self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CodecError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CodecError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32(&mut self, what: &'static str) -> Result<i32, CodecError> {
        Ok(self.u32(what)? as i32)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CodecError> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }

    fn string(&mut self, what: &'static str) -> Result<String, CodecError> {
        let len = self.u16(what)? as usize;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| CodecError::BadUtf8)
    }

    fn boolean(&mut self, what: &'static str) -> Result<bool, CodecError> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CodecError::BadValue(what)),
        }
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) -> Result<(), CodecError> {
    let len: u16 = s
        .len()
        .try_into()
        .map_err(|_| CodecError::TooLong(s.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_count(out: &mut Vec<u8>, n: usize) -> Result<(), CodecError> {
    let n: u16 = n.try_into().map_err(|_| CodecError::TooLong(n))?;
    out.extend_from_slice(&n.to_be_bytes());
    Ok(())
}

fn put_record(out: &mut Vec<u8>, r: &KpmRecord) {
    out.extend_from_slice(&r.t_ms.to_be_bytes());
    out.extend_from_slice(&r.ue_id.to_be_bytes());
    out.extend_from_slice(&r.dl_thp_kbps.to_be_bytes());
    out.extend_from_slice(&r.rb_count.to_be_bytes());
    match r.sdu_latency_us {
        None => out.push(0),
        Some(us) => {
            out.push(1);
            out.extend_from_slice(&us.to_be_bytes());
        }
    }
    for c in r.pos_cm {
        out.extend_from_slice(&c.to_be_bytes());
    }
    out.push(r.cqi);
    out.push(r.mcs);
}

fn read_record(r: &mut Reader) -> Result<KpmRecord, CodecError> {
    let t_ms = r.u64("record t_ms")?;
    let ue_id = r.u32("record ue_id")?;
    let dl_thp_kbps = r.u32("record dl_thp_kbps")?;
    let rb_count = r.u32("record rb_count")?;
    let sdu_latency_us = if r.boolean("record latency flag")? {
        Some(r.u32("record sdu_latency_us")?)
    } else {
        None
    };
    let pos_cm = [
        r.i32("record pos_x_cm")?,
        r.i32("record pos_y_cm")?,
        r.i32("record pos_z_cm")?,
    ];
    let cqi = r.u8("record cqi")?;
    let mcs = r.u8("record mcs")?;
    Ok(KpmRecord {
        t_ms,
        ue_id,
        dl_thp_kbps,
        rb_count,
        sdu_latency_us,
        pos_cm,
        cqi,
        mcs,
    })
}

/// Serializes one KPM record with the wire field encoding (no framing).
pub fn record_to_bytes(r: &KpmRecord) -> Vec<u8> {
    let mut out = Vec::new();
    put_record(&mut out, r);
    out
}

/// Parses one KPM record from the front of `bytes`, returning the record and
/// the bytes consumed.
pub fn record_from_bytes(bytes: &[u8]) -> Result<(KpmRecord, usize), CodecError> {
    let mut r = Reader::new(bytes);
    let rec = read_record(&mut r)?;
    Ok((rec, r.pos))
}

/// Encodes a message into a complete frame (length prefix included).
pub fn encode(m: &E2Message) -> Result<Vec<u8>, CodecError> {
    let mut payload = vec![m.tag()];
    match m {
        E2Message::SetupRequest { node_id, functions } => {
            payload.extend_from_slice(&node_id.to_be_bytes());
            put_count(&mut payload, functions.len())?;
            for f in functions {
                payload.extend_from_slice(&f.function_id.to_be_bytes());
                put_string(&mut payload, &f.name)?;
            }
        }
        E2Message::SetupResponse {
            accepted_function_ids,
        } => {
            put_count(&mut payload, accepted_function_ids.len())?;
            for id in accepted_function_ids {
                payload.extend_from_slice(&id.to_be_bytes());
            }
        }
        E2Message::SubscriptionRequest {
            sub_id,
            function_id,
            report_period_ms,
        } => {
            payload.extend_from_slice(&sub_id.to_be_bytes());
            payload.extend_from_slice(&function_id.to_be_bytes());
            payload.extend_from_slice(&report_period_ms.to_be_bytes());
        }
        E2Message::SubscriptionResponse {
            sub_id,
            accepted,
            reason_code,
        } => {
            payload.extend_from_slice(&sub_id.to_be_bytes());
            payload.push(u8::from(*accepted));
            payload.push(*reason_code);
        }
        E2Message::Indication {
            sub_id,
            seq,
            records,
        } => {
            payload.extend_from_slice(&sub_id.to_be_bytes());
            payload.extend_from_slice(&seq.to_be_bytes());
            put_count(&mut payload, records.len())?;
            for r in records {
                put_record(&mut payload, r);
            }
        }
        E2Message::SubscriptionDelete { sub_id } => {
            payload.extend_from_slice(&sub_id.to_be_bytes());
        }
        E2Message::ErrorIndication { code, detail } => {
            payload.push(*code);
            put_string(&mut payload, detail)?;
        }
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(CodecError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes exactly one frame (length prefix included). The buffer must hold
/// the whole frame and nothing else.
pub fn decode(bytes: &[u8]) -> Result<E2Message, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            what: "frame length prefix",
            needed: 4 - bytes.len(),
        });
    }
    let declared = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if declared > MAX_PAYLOAD {
        return Err(CodecError::FrameTooLarge(declared));
    }
    let body = &bytes[4..];
    if body.len() < declared {
        return Err(CodecError::Truncated {
            what: "frame payload",
            needed: declared - body.len(),
        });
    }
    if body.len() > declared {
        return Err(CodecError::LengthMismatch {
            declared,
            parsed: body.len(),
        });
    }
    let m = decode_payload(body)?;
    Ok(m)
}

/// Decodes a frame payload (tag + body, no length prefix).
pub fn decode_payload(payload: &[u8]) -> Result<E2Message, CodecError> {
    let mut r = Reader::new(payload);
    let tag = r.u8("type tag")?;
    let m = match tag {
        TAG_SETUP_REQUEST => {
            let node_id = r.u32("node_id")?;
            let n = r.u16("function count")?;
            let mut functions = Vec::new();
            for _ in 0..n {
                let function_id = r.u16("function_id")?;
                let name = r.string("function name")?;
                functions.push(RanFunction { function_id, name });
            }
            E2Message::SetupRequest { node_id, functions }
        }
        TAG_SETUP_RESPONSE => {
            let n = r.u16("accepted count")?;
            let mut accepted_function_ids = Vec::new();
            for _ in 0..n {
                accepted_function_ids.push(r.u16("accepted function id")?);
            }
            E2Message::SetupResponse {
                accepted_function_ids,
            }
        }
        TAG_SUBSCRIPTION_REQUEST => E2Message::SubscriptionRequest {
            sub_id: r.u32("sub_id")?,
            function_id: r.u16("function_id")?,
            report_period_ms: r.u32("report_period_ms")?,
        },
        TAG_SUBSCRIPTION_RESPONSE => E2Message::SubscriptionResponse {
            sub_id: r.u32("sub_id")?,
            accepted: r.boolean("accepted flag")?,
            reason_code: r.u8("reason_code")?,
        },
        TAG_INDICATION => {
            let sub_id = r.u32("sub_id")?;
            let seq = r.u64("seq")?;
            let n = r.u16("record count")?;
            let mut records = Vec::new();
            for _ in 0..n {
                records.push(read_record(&mut r)?);
            }
            E2Message::Indication {
                sub_id,
                seq,
                records,
            }
        }
        TAG_SUBSCRIPTION_DELETE => E2Message::SubscriptionDelete {
            sub_id: r.u32("sub_id")?,
        },
        TAG_ERROR_INDICATION => E2Message::ErrorIndication {
            code: r.u8("error code")?,
            detail: r.string("error detail")?,
        },
        other => return Err(CodecError::UnknownTag(other)),
    };
    if r.pos != payload.len() {
        return Err(CodecError::LengthMismatch {
            declared: payload.len(),
            parsed: r.pos,
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_record(ue_id: u32) -> KpmRecord {
        KpmRecord {
            t_ms: 100,
            ue_id,
            dl_thp_kbps: 17_993,
            rb_count: 2_120,
            sdu_latency_us: Some(412),
            pos_cm: [3000, 0, 1000],
            cqi: 12,
            mcs: 12,
        }
    }

    #[test]
    fn subscription_delete_exact_bytes() {
        let m = E2Message::SubscriptionDelete { sub_id: 7 };
        let bytes = encode(&m).unwrap();
        assert_eq!(bytes, vec![0, 0, 0, 5, 0x06, 0, 0, 0, 7]);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn indication_round_trip() {
        let m = E2Message::Indication {
            sub_id: 1,
            seq: 42,
            records: vec![
                sample_record(1),
                KpmRecord {
                    sdu_latency_us: None,
                    pos_cm: [-250, 13, 0],
                    ..sample_record(2)
                },
            ],
        };
        let bytes = encode(&m).unwrap();
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn setup_round_trip() {
        let m = E2Message::SetupRequest {
            node_id: 9,
            functions: vec![RanFunction {
                function_id: 2,
                name: "kpm".into(),
            }],
        };
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn truncated_payload_rejected() {
        // frame claims 5 payload bytes but carries 3
        let bytes = vec![0, 0, 0, 5, 0x06, 0, 0];
        assert!(matches!(
            decode(&bytes),
            Err(CodecError::Truncated {
                what: "frame payload",
                needed: 2
            })
        ));
    }

    #[test]
    fn unknown_tag_rejected() {
        let bytes = vec![0, 0, 0, 1, 0x7f];
        assert_eq!(decode(&bytes), Err(CodecError::UnknownTag(0x7f)));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&E2Message::SubscriptionDelete { sub_id: 7 }).unwrap();
        bytes.push(0);
        assert_eq!(
            decode(&bytes),
            Err(CodecError::LengthMismatch {
                declared: 5,
                parsed: 6
            })
        );
        // payload longer than the message body consumes
        let bad = vec![0, 0, 0, 6, 0x06, 0, 0, 0, 7, 0xaa];
        assert!(matches!(
            decode(&bad),
            Err(CodecError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn oversized_length_prefix_rejected() {
        let bytes = vec![0xff, 0xff, 0xff, 0xff, 0x06];
        assert!(matches!(decode(&bytes), Err(CodecError::FrameTooLarge(_))));
    }
}
