//! KPM monitoring xApp: accumulates indication records into derived series
//! (rate/latency/RB against time and distance) and exports them as CSV.
//!
//! The series is a pure function of the indication stream; duplicate
//! (sub_id, seq) deliveries are ignored, so replaying stored indications
//! reproduces identical CSV bytes.

use crate::e2::KpmRecord;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// xApp knobs from the scenario `xapp` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XappCfg {
    pub report_period_ms: u64,
    /// Distance bin width for the averaged curves (m).
    pub bin_m: f64,
}

impl Default for XappCfg {
    fn default() -> Self {
        XappCfg {
            report_period_ms: 100,
            bin_m: 10.0,
        }
    }
}

pub const SERIES_HEADER: &str =
    "t_ms,ue_id,horizontal_m,altitude_m,dl_thp_mbps,rb_count,sdu_latency_ms";

/// One derived sample: a KPM record joined with the gNB geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub t_ms: u64,
    pub ue_id: u32,
    /// Horizontal distance to the gNB (m).
    pub horizontal_m: f64,
    pub altitude_m: f64,
    pub dl_thp_mbps: f64,
    pub rb_count: u32,
    pub sdu_latency_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

/// xApp state: owned subscriptions, replay dedup, and the derived series.
#[derive(Debug)]
pub struct KpmXapp {
    gnb_pos: [f64; 3],
    owned: BTreeSet<u32>,
    seen: BTreeSet<(u32, u64)>,
    pub series: Vec<SeriesPoint>,
    pub ignored_indications: u64,
}

impl KpmXapp {
    pub fn new(gnb_pos: [f64; 3]) -> Self {
        KpmXapp {
            gnb_pos,
            owned: BTreeSet::new(),
            seen: BTreeSet::new(),
            series: Vec::new(),
            ignored_indications: 0,
        }
    }

    pub fn own_subscription(&mut self, sub_id: u32) {
        self.owned.insert(sub_id);
    }

    fn derive(&self, r: &KpmRecord) -> SeriesPoint {
        let x = f64::from(r.pos_cm[0]) / 100.0 - self.gnb_pos[0];
        let y = f64::from(r.pos_cm[1]) / 100.0 - self.gnb_pos[1];
        SeriesPoint {
            t_ms: r.t_ms,
            ue_id: r.ue_id,
            horizontal_m: (x * x + y * y).sqrt(),
            altitude_m: f64::from(r.pos_cm[2]) / 100.0,
            dl_thp_mbps: f64::from(r.dl_thp_kbps) / 1000.0,
            rb_count: r.rb_count,
            sdu_latency_ms: r.sdu_latency_us.map(|us| f64::from(us) / 1000.0),
        }
    }

    /// Appends derived points for one indication. Duplicate (sub_id, seq)
    /// replays are idempotent; indications for subscriptions the xApp does
    /// not own are counted and skipped.
    pub fn on_indication(&mut self, sub_id: u32, seq: u64, records: &[KpmRecord]) {
        if !self.owned.contains(&sub_id) {
            self.ignored_indications += 1;
            eprintln!("xapp: ignoring indication for unknown subscription {sub_id}");
            return;
        }
        if !self.seen.insert((sub_id, seq)) {
            return;
        }
        for r in records {
            self.series.push(self.derive(r));
        }
    }
}

/// Per-(UE, bin) means over the series. Empty bins are simply absent.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBin {
    pub ue_id: u32,
    /// Lower edge of the half-open bin `[bin_start_m, bin_start_m + bin_m)`.
    pub bin_start_m: f64,
    pub samples: usize,
    pub mean_thp_mbps: f64,
    pub mean_rb: f64,
    /// Mean over samples that reported a latency; absent when none did.
    pub mean_latency_ms: Option<f64>,
}

pub fn bin_by_distance(series: &[SeriesPoint], bin_m: f64) -> Vec<DistanceBin> {
    assert!(bin_m > 0.0, "bin_m must be positive");
    #[derive(Default)]
    struct Acc {
        n: usize,
        thp: f64,
        rb: f64,
        lat: f64,
        lat_n: usize,
    }
    let mut bins: BTreeMap<(u32, i64), Acc> = BTreeMap::new();
    for p in series {
        let idx = (p.horizontal_m / bin_m).floor() as i64;
        let acc = bins.entry((p.ue_id, idx)).or_default();
        acc.n += 1;
        acc.thp += p.dl_thp_mbps;
        acc.rb += f64::from(p.rb_count);
        if let Some(l) = p.sdu_latency_ms {
            acc.lat += l;
            acc.lat_n += 1;
        }
    }
    bins.into_iter()
        .map(|((ue_id, idx), acc)| DistanceBin {
            ue_id,
            bin_start_m: idx as f64 * bin_m,
            samples: acc.n,
            mean_thp_mbps: acc.thp / acc.n as f64,
            mean_rb: acc.rb / acc.n as f64,
            mean_latency_ms: (acc.lat_n > 0).then(|| acc.lat / acc.lat_n as f64),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the series CSV (fixed header; floats in shortest round-trip form,
/// absent latency as an empty field).
pub fn export_series<W: Write>(series: &[SeriesPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for p in series {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.t_ms,
            p.ue_id,
            p.horizontal_m,
            p.altitude_m,
            p.dl_thp_mbps,
            p.rb_count,
            fmt_opt(p.sdu_latency_ms)
        )?;
    }
    Ok(())
}

pub fn export_series_to_path(series: &[SeriesPoint], path: &Path) -> Result<(), SeriesError> {
    let ctx = |source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(ctx)?;
    let mut w = io::BufWriter::new(file);
    export_series(series, &mut w).map_err(ctx)?;
    w.flush().map_err(ctx)
}

/// Reads a series CSV back; exact inverse of `export_series`.
pub fn import_series<R: io::Read>(r: R, path: &str) -> Result<Vec<SeriesPoint>, SeriesError> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| SeriesError::Io {
            path: path.to_string(),
            source,
        })?;
        if i == 0 {
            if line != SERIES_HEADER {
                return Err(SeriesError::Parse {
                    path: path.to_string(),
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(SeriesError::Parse {
                path: path.to_string(),
                line: i + 1,
                msg: format!("expected 7 columns, got {}", cols.len()),
            });
        }
        let parse_err = |msg: String| SeriesError::Parse {
            path: path.to_string(),
            line: i + 1,
            msg,
        };
        out.push(SeriesPoint {
            t_ms: cols[0].parse().map_err(|e| parse_err(format!("t_ms: {e}")))?,
            ue_id: cols[1]
                .parse()
                .map_err(|e| parse_err(format!("ue_id: {e}")))?,
            horizontal_m: cols[2]
                .parse()
                .map_err(|e| parse_err(format!("horizontal_m: {e}")))?,
            altitude_m: cols[3]
                .parse()
                .map_err(|e| parse_err(format!("altitude_m: {e}")))?,
            dl_thp_mbps: cols[4]
                .parse()
                .map_err(|e| parse_err(format!("dl_thp_mbps: {e}")))?,
            rb_count: cols[5]
                .parse()
                .map_err(|e| parse_err(format!("rb_count: {e}")))?,
            sdu_latency_ms: if cols[6].is_empty() {
                None
            } else {
                Some(
                    cols[6]
                        .parse()
                        .map_err(|e| parse_err(format!("sdu_latency_ms: {e}")))?,
                )
            },
        });
    }
    Ok(out)
}

pub fn import_series_from_path(path: &Path) -> Result<Vec<SeriesPoint>, SeriesError> {
    let file = std::fs::File::open(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    import_series(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ue: u32, t_ms: u64, pos_cm: [i32; 3], kbps: u32) -> KpmRecord {
        KpmRecord {
            t_ms,
            ue_id: ue,
            dl_thp_kbps: kbps,
            rb_count: 300,
            sdu_latency_us: Some(1_500),
            pos_cm,
            cqi: 11,
            mcs: 11,
        }
    }

    #[test]
    fn derives_geometry_and_dedupes() {
        let mut xapp = KpmXapp::new([0.0, 0.0, 2.5]);
        xapp.own_subscription(1);
        let records = vec![rec(1, 100, [3000, 0, 1000], 10_000)];
        xapp.on_indication(1, 1, &records);
        xapp.on_indication(1, 1, &records); // duplicate seq replay
        assert_eq!(xapp.series.len(), 1);
        let p = &xapp.series[0];
        assert!((p.horizontal_m - 30.0).abs() < 1e-12);
        assert!((p.altitude_m - 10.0).abs() < 1e-12);
        assert!((p.dl_thp_mbps - 10.0).abs() < 1e-12);

        // unknown subscription ignored
        xapp.on_indication(9, 1, &records);
        assert_eq!(xapp.series.len(), 1);
        assert_eq!(xapp.ignored_indications, 1);
    }

    #[test]
    fn point_count_tracks_indications() {
        let mut xapp = KpmXapp::new([0.0, 0.0, 2.5]);
        xapp.own_subscription(1);
        for seq in 1..=10u64 {
            let records = vec![
                rec(1, seq * 100, [1500, 0, 500], 9_000),
                rec(2, seq * 100, [2000, 0, 100], 2_000),
            ];
            xapp.on_indication(1, seq, &records);
        }
        assert_eq!(xapp.series.len(), 20);
    }

    #[test]
    fn binning_means_and_boundaries() {
        let mk = |h: f64, thp: f64| SeriesPoint {
            t_ms: 0,
            ue_id: 1,
            horizontal_m: h,
            altitude_m: 5.0,
            dl_thp_mbps: thp,
            rb_count: 100,
            sdu_latency_ms: None,
        };
        // one bin holding {10, 14} and the half-open boundary check: 20.0
        // falls in [20, 30), not [10, 20)
        let series = vec![mk(12.0, 10.0), mk(17.0, 14.0), mk(20.0, 99.0)];
        let bins = bin_by_distance(&series, 10.0);
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].bin_start_m, 10.0);
        assert_eq!(bins[0].samples, 2);
        assert!((bins[0].mean_thp_mbps - 12.0).abs() < 1e-12);
        assert_eq!(bins[1].bin_start_m, 20.0);
        assert_eq!(bins[1].samples, 1);

        // single point per bin reproduces the points
        let lone = bin_by_distance(&[mk(42.0, 7.5)], 10.0);
        assert_eq!(lone[0].samples, 1);
        assert!((lone[0].mean_thp_mbps - 7.5).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_exact() {
        let series = vec![
            SeriesPoint {
                t_ms: 100,
                ue_id: 1,
                horizontal_m: 30.0000000001,
                altitude_m: 10.0,
                dl_thp_mbps: 17.993,
                rb_count: 2120,
                sdu_latency_ms: Some(0.412),
            },
            SeriesPoint {
                t_ms: 200,
                ue_id: 2,
                horizontal_m: 20.0,
                altitude_m: 1.0,
                dl_thp_mbps: 0.0,
                rb_count: 0,
                sdu_latency_ms: None,
            },
        ];
        let mut buf = Vec::new();
        export_series(&series, &mut buf).unwrap();
        let back = import_series(&buf[..], "mem").unwrap();
        assert_eq!(back, series);
        // and re-export is byte identical
        let mut buf2 = Vec::new();
        export_series(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn empty_series_header_only() {
        let mut buf = Vec::new();
        export_series(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{SERIES_HEADER}\n"));
    }
}
