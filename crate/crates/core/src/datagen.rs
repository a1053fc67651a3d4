//! Deterministic throughput-curve generation across transmit powers.
//!
//! Because SNR is exactly linear in transmit power, a measured
//! throughput-vs-distance curve at one power implies curves at other powers:
//! invert each uncapped point through the CQI chain to an SNR, shift by the
//! power delta, and map forward again. Points at the offered-load cap carry
//! no SNR information; they stay capped for upward shifts and are re-derived
//! from the cap-boundary SNR for downward ones.
//!
//! The inverse works against the discrete per-CQI achievable rates (with the
//! transport-block floor folded in, exactly what the simulator serves), with
//! interpolation knots at each CQI region's SNR midpoint. That keeps a
//! forward-then-inverted SNR within one CQI step and makes shifts by whole
//! steps land exactly.

use crate::channel::ChannelCfg;
use crate::mac_sched::tb_bits;
use crate::phy_frame::{derive_tdd_pattern, dl_data_symbols, TddConfig};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub horizontal_m: f64,
    pub throughput_mbps: f64,
}

/// A throughput-vs-distance curve measured (or generated) at one transmit
/// power, saturating at the offered load.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredCurve {
    pub power_dbm: f64,
    pub offered_load_mbps: f64,
    pub points: Vec<CurvePoint>,
}

impl MeasuredCurve {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self
            .points
            .windows(2)
            .any(|w| !(w[1].horizontal_m > w[0].horizontal_m))
        {
            return Err(DatagenError::BadCurve(
                "horizontal_m must be strictly increasing".into(),
            ));
        }
        if self
            .points
            .iter()
            .any(|p| !(0.0..=self.offered_load_mbps).contains(&p.throughput_mbps))
        {
            return Err(DatagenError::BadCurve(
                "throughput must lie in [0, offered_load]".into(),
            ));
        }
        Ok(())
    }

    fn is_capped(&self, p: &CurvePoint) -> bool {
        p.throughput_mbps >= self.offered_load_mbps
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("point at the offered-load cap has no unique SNR inverse")]
    Capped,
    #[error("distance ranges do not overlap")]
    DisjointRanges,
    #[error("no uncapped points to score")]
    NoUncappedPoints,
    #[error("invalid curve: {0}")]
    BadCurve(String),
    #[error("curve file {path}: {msg}")]
    File { path: String, msg: String },
}

/// The quantized SNR -> rate chain of a scenario: per-CQI achievable rates on
/// the carrier (or an `rb_share` of it).
#[derive(Debug, Clone, PartialEq)]
pub struct RateChain {
    pub snr_min_db: f64,
    pub snr_step_db: f64,
    /// Achievable rate at CQI index+1, Mb/s.
    pub rates_mbps: [f64; 15],
}

impl RateChain {
    /// Builds the chain from the scenario's TDD layout, carrier size, and
    /// channel constants. `rb_share` scales for multi-UE splits (1.0 = the
    /// whole carrier).
    pub fn from_scenario_parts(
        tdd: &TddConfig,
        overhead_symbols: u32,
        channel: &ChannelCfg,
        rb_share: f64,
    ) -> Result<Self, crate::phy_frame::TddConfigError> {
        let pattern = derive_tdd_pattern(tdd)?;
        let periods_per_s = 1000.0 / f64::from(tdd.period_ms);
        let mut rates = [0.0f64; 15];
        for (i, rate) in rates.iter_mut().enumerate() {
            let eff = channel.cqi_efficiency[i];
            let bits_per_period: u64 = pattern
                .slots
                .iter()
                .map(|s| {
                    let syms = dl_data_symbols(s, overhead_symbols);
                    if syms > 0 {
                        tb_bits(tdd.n_prb, syms, eff)
                    } else {
                        0
                    }
                })
                .sum();
            *rate = bits_per_period as f64 * periods_per_s * rb_share / 1e6;
        }
        Ok(RateChain {
            snr_min_db: channel.snr_min_db,
            snr_step_db: channel.snr_step_db,
            rates_mbps: rates,
        })
    }

    pub fn default_chain() -> Self {
        RateChain::from_scenario_parts(
            &TddConfig::default(),
            crate::mac_sched::SchedConfig::default().overhead_symbols,
            &ChannelCfg::default(),
            1.0,
        )
        .expect("default config is valid")
    }

    fn quantize_cqi(&self, snr_db: f64) -> usize {
        let idx = 1.0 + ((snr_db - self.snr_min_db) / self.snr_step_db).floor();
        idx.clamp(1.0, 15.0) as usize
    }

    /// Achievable rate (uncapped) at an SNR.
    pub fn rate_at_snr(&self, snr_db: f64) -> f64 {
        self.rates_mbps[self.quantize_cqi(snr_db) - 1]
    }

    /// SNR midpoint of a CQI's quantization region; the interpolation knots.
    fn knot_snr(&self, cqi: usize) -> f64 {
        self.snr_min_db + (cqi as f64 - 1.0) * self.snr_step_db + self.snr_step_db / 2.0
    }

    /// Monotone piecewise-linear inverse of the rate chain, extended linearly
    /// past both ends. Throughput 0 maps well below `snr_min_db`.
    pub fn snr_at_rate(&self, thp_mbps: f64) -> f64 {
        let r = &self.rates_mbps;
        let seg = |lo: usize, hi: usize, thp: f64| -> f64 {
            let (r0, r1) = (r[lo - 1], r[hi - 1]);
            let (s0, s1) = (self.knot_snr(lo), self.knot_snr(hi));
            if r1 > r0 {
                s0 + (thp - r0) * (s1 - s0) / (r1 - r0)
            } else {
                s0
            }
        };
        if thp_mbps <= r[0] {
            return seg(1, 2, thp_mbps);
        }
        for k in 1..15 {
            if thp_mbps <= r[k] {
                return seg(k, k + 1, thp_mbps);
            }
        }
        seg(14, 15, thp_mbps)
    }
}

/// Implied SNR for an uncapped curve point. Capped points are rejected: the
/// saturation hides the true SNR.
pub fn invert_rate_to_snr(
    point: &CurvePoint,
    curve: &MeasuredCurve,
    chain: &RateChain,
) -> Result<f64, DatagenError> {
    if point.throughput_mbps >= curve.offered_load_mbps {
        return Err(DatagenError::Capped);
    }
    Ok(chain.snr_at_rate(point.throughput_mbps))
}

/// Generates the curve at a different transmit power. Uncapped points shift
/// through the chain; capped points stay capped for delta >= 0 and re-derive
/// from the cap-boundary SNR for delta < 0.
pub fn power_shift_curve(
    curve: &MeasuredCurve,
    new_power_dbm: f64,
    chain: &RateChain,
) -> MeasuredCurve {
    let delta = new_power_dbm - curve.power_dbm;
    if delta == 0.0 {
        return MeasuredCurve {
            power_dbm: new_power_dbm,
            ..curve.clone()
        };
    }
    let cap = curve.offered_load_mbps;
    let points = curve
        .points
        .iter()
        .map(|p| {
            let throughput = if curve.is_capped(p) {
                if delta >= 0.0 {
                    cap
                } else {
                    let cap_snr = chain.snr_at_rate(cap);
                    chain.rate_at_snr(cap_snr + delta).min(cap)
                }
            } else {
                let snr = chain.snr_at_rate(p.throughput_mbps);
                chain.rate_at_snr(snr + delta).min(cap)
            };
            CurvePoint {
                horizontal_m: p.horizontal_m,
                throughput_mbps: throughput,
            }
        })
        .collect();
    MeasuredCurve {
        power_dbm: new_power_dbm,
        offered_load_mbps: cap,
        points,
    }
}

/// Deviation metrics of a generated curve against an oracle curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub median_rel_err: f64,
    pub max_rel_err: f64,
    pub fraction_within_10pct: f64,
    /// Points that entered the metrics (uncapped in both curves).
    pub n_scored: usize,
}

/// Scores `gen` against `oracle` over uncapped points. Oracle values are
/// linearly resampled onto the generated grid where the grids differ;
/// disjoint distance ranges are an error.
pub fn score_generated(gen: &MeasuredCurve, oracle: &MeasuredCurve) -> Result<Scores, DatagenError> {
    gen.validate()?;
    oracle.validate()?;
    if gen.points.is_empty() || oracle.points.is_empty() {
        return Err(DatagenError::DisjointRanges);
    }
    let o_min = oracle.points[0].horizontal_m;
    let o_max = oracle.points[oracle.points.len() - 1].horizontal_m;
    let overlap = gen
        .points
        .iter()
        .filter(|p| p.horizontal_m >= o_min && p.horizontal_m <= o_max);

    let mut errs = Vec::new();
    let mut any_overlap = false;
    for p in overlap {
        any_overlap = true;
        let o_thp = interp(&oracle.points, p.horizontal_m);
        let capped_gen = p.throughput_mbps >= gen.offered_load_mbps;
        let capped_oracle = o_thp >= oracle.offered_load_mbps;
        if capped_gen || capped_oracle {
            continue;
        }
        let rel = if o_thp == 0.0 {
            if p.throughput_mbps == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (p.throughput_mbps - o_thp).abs() / o_thp
        };
        errs.push(rel);
    }
    if !any_overlap {
        return Err(DatagenError::DisjointRanges);
    }
    if errs.is_empty() {
        return Err(DatagenError::NoUncappedPoints);
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 {
        errs[n / 2]
    } else {
        (errs[n / 2 - 1] + errs[n / 2]) / 2.0
    };
    let within = errs.iter().filter(|e| **e <= 0.10).count();
    Ok(Scores {
        median_rel_err: median,
        max_rel_err: errs[n - 1],
        fraction_within_10pct: within as f64 / n as f64,
        n_scored: n,
    })
}

fn interp(points: &[CurvePoint], x: f64) -> f64 {
    if x <= points[0].horizontal_m {
        return points[0].throughput_mbps;
    }
    for w in points.windows(2) {
        if x <= w[1].horizontal_m {
            let t = (x - w[0].horizontal_m) / (w[1].horizontal_m - w[0].horizontal_m);
            return w[0].throughput_mbps + t * (w[1].throughput_mbps - w[0].throughput_mbps);
        }
    }
    points[points.len() - 1].throughput_mbps
}

/// Builds a measured curve from distance-binned xApp output for one UE,
/// clamped at the offered load.
pub fn curve_from_series(
    series: &[crate::xapp_kpm::SeriesPoint],
    ue_id: u32,
    bin_m: f64,
    power_dbm: f64,
    offered_load_mbps: f64,
) -> MeasuredCurve {
    let filtered: Vec<_> = series.iter().filter(|p| p.ue_id == ue_id).cloned().collect();
    let bins = crate::xapp_kpm::bin_by_distance(&filtered, bin_m);
    let points = bins
        .iter()
        .map(|b| CurvePoint {
            horizontal_m: b.bin_start_m + bin_m / 2.0,
            throughput_mbps: b.mean_thp_mbps.min(offered_load_mbps),
        })
        .collect();
    MeasuredCurve {
        power_dbm,
        offered_load_mbps,
        points,
    }
}

/// Writes a curve CSV: a `# power_dbm=<v> offered_load_mbps=<v>` comment
/// line, the header, then the points.
pub fn write_curve<W: Write>(curve: &MeasuredCurve, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "# power_dbm={} offered_load_mbps={}",
        curve.power_dbm, curve.offered_load_mbps
    )?;
    writeln!(w, "horizontal_m,throughput_mbps")?;
    for p in &curve.points {
        writeln!(w, "{},{}", p.horizontal_m, p.throughput_mbps)?;
    }
    Ok(())
}

pub fn write_curve_to_path(curve: &MeasuredCurve, path: &Path) -> Result<(), DatagenError> {
    let err = |msg: String| DatagenError::File {
        path: path.display().to_string(),
        msg,
    };
    let file = std::fs::File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = io::BufWriter::new(file);
    write_curve(curve, &mut w).map_err(|e| err(e.to_string()))?;
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn read_curve<R: io::Read>(r: R, path: &str) -> Result<MeasuredCurve, DatagenError> {
    let err = |msg: String| DatagenError::File {
        path: path.to_string(),
        msg,
    };
    let reader = BufReader::new(r);
    let mut power_dbm = None;
    let mut offered = None;
    let mut points = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some(v) = token.strip_prefix("power_dbm=") {
                    power_dbm =
                        Some(v.parse::<f64>().map_err(|e| {
                            err(format!("line {}: power_dbm: {e}", i + 1))
                        })?);
                } else if let Some(v) = token.strip_prefix("offered_load_mbps=") {
                    offered = Some(v.parse::<f64>().map_err(|e| {
                        err(format!("line {}: offered_load_mbps: {e}", i + 1))
                    })?);
                }
            }
            continue;
        }
        if !saw_header {
            if line != "horizontal_m,throughput_mbps" {
                return Err(err(format!("line {}: unexpected header {line:?}", i + 1)));
            }
            saw_header = true;
            continue;
        }
        let (h, t) = line
            .split_once(',')
            .ok_or_else(|| err(format!("line {}: expected two columns", i + 1)))?;
        points.push(CurvePoint {
            horizontal_m: h
                .parse()
                .map_err(|e| err(format!("line {}: horizontal_m: {e}", i + 1)))?,
            throughput_mbps: t
                .parse()
                .map_err(|e| err(format!("line {}: throughput_mbps: {e}", i + 1)))?,
        });
    }
    let curve = MeasuredCurve {
        power_dbm: power_dbm.ok_or_else(|| err("missing power_dbm comment".into()))?,
        offered_load_mbps: offered.ok_or_else(|| err("missing offered_load_mbps comment".into()))?,
        points,
    };
    curve.validate()?;
    Ok(curve)
}

pub fn read_curve_from_path(path: &Path) -> Result<MeasuredCurve, DatagenError> {
    let file = std::fs::File::open(path).map_err(|e| DatagenError::File {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    read_curve(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> RateChain {
        RateChain::default_chain()
    }

    fn curve(power: f64, offered: f64, pts: &[(f64, f64)]) -> MeasuredCurve {
        MeasuredCurve {
            power_dbm: power,
            offered_load_mbps: offered,
            points: pts
                .iter()
                .map(|&(h, t)| CurvePoint {
                    horizontal_m: h,
                    throughput_mbps: t,
                })
                .collect(),
        }
    }

    #[test]
    fn default_chain_rates() {
        let c = chain();
        // CQI 15 on the default carrier: 7 full slots of floor(106*144*5.55)
        // plus the 4-symbol special slot, 200 periods/s
        let full = tb_bits(106, 12, 5.55);
        let special = tb_bits(106, 4, 5.55);
        let expect = (7 * full + special) as f64 * 200.0 / 1e6;
        assert!((c.rates_mbps[14] - expect).abs() < 1e-9);
        assert!(c.rates_mbps.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn forward_then_invert_within_one_step() {
        // holds inside the table span; the clamped regions outside it have
        // no unique inverse by construction
        let c = chain();
        for snr10 in (-60..240).step_by(7) {
            let snr = snr10 as f64 / 10.0;
            let rate = c.rate_at_snr(snr);
            let implied = c.snr_at_rate(rate);
            assert!(
                (implied - snr).abs() <= c.snr_step_db + 1e-9,
                "snr {snr} -> rate {rate} -> implied {implied}"
            );
        }
    }

    #[test]
    fn capped_point_rejected_and_zero_maps_low() {
        let c = chain();
        let mc = curve(-27.0, 18.0, &[(10.0, 18.0), (200.0, 3.0)]);
        assert!(matches!(
            invert_rate_to_snr(&mc.points[0], &mc, &c),
            Err(DatagenError::Capped)
        ));
        let zero = CurvePoint {
            horizontal_m: 300.0,
            throughput_mbps: 0.0,
        };
        assert!(invert_rate_to_snr(&zero, &mc, &c).unwrap() <= c.snr_min_db);
    }

    #[test]
    fn zero_shift_is_identity() {
        let c = chain();
        let mc = curve(-27.0, 18.0, &[(10.0, 18.0), (100.0, 9.5), (200.0, 3.0)]);
        let out = power_shift_curve(&mc, -27.0, &c);
        assert_eq!(out, mc);
    }

    #[test]
    fn upward_shift_monotone_and_capped() {
        let c = chain();
        let rates = c.rates_mbps;
        let mc = curve(
            -27.0,
            18.0,
            &[
                (50.0, 18.0),
                (100.0, rates[4].min(17.9)),
                (200.0, rates[1]),
                (300.0, 0.4),
            ],
        );
        let out = power_shift_curve(&mc, -21.0, &c);
        assert_eq!(out.power_dbm, -21.0);
        for (a, b) in mc.points.iter().zip(&out.points) {
            assert!(b.throughput_mbps >= a.throughput_mbps - 1e-12);
            assert!(b.throughput_mbps <= 18.0);
        }
        // a whole-step shift moves exactly 3 CQI steps: CQI2 rate -> CQI5 rate
        assert!((out.points[2].throughput_mbps - rates[4].min(18.0)).abs() < 1e-9);
    }

    #[test]
    fn composition_within_one_step() {
        let c = chain();
        let mc = curve(
            -27.0,
            200.0,
            &[(60.0, c.rates_mbps[2]), (120.0, c.rates_mbps[6]), (240.0, c.rates_mbps[10])],
        );
        let one = power_shift_curve(&power_shift_curve(&mc, -24.0, &c), -19.0, &c);
        let direct = power_shift_curve(&mc, -19.0, &c);
        for (a, b) in one.points.iter().zip(&direct.points) {
            // within one CQI quantization step per point
            let sa = c.snr_at_rate(a.throughput_mbps);
            let sb = c.snr_at_rate(b.throughput_mbps);
            assert!((sa - sb).abs() <= c.snr_step_db + 1e-9);
        }
    }

    #[test]
    fn scores_examples() {
        let mc = curve(-27.0, 100.0, &[(10.0, 10.0), (20.0, 8.0), (30.0, 4.0)]);
        let same = score_generated(&mc, &mc).unwrap();
        assert_eq!(same.median_rel_err, 0.0);
        assert_eq!(same.max_rel_err, 0.0);
        assert_eq!(same.fraction_within_10pct, 1.0);

        let scaled = curve(
            -27.0,
            100.0,
            &[(10.0, 10.5), (20.0, 8.4), (30.0, 4.2)],
        );
        let s = score_generated(&scaled, &mc).unwrap();
        assert!((s.median_rel_err - 0.05).abs() < 1e-9);

        let disjoint = curve(-27.0, 100.0, &[(500.0, 1.0), (600.0, 0.5)]);
        assert!(matches!(
            score_generated(&disjoint, &mc),
            Err(DatagenError::DisjointRanges)
        ));
    }

    #[test]
    fn curve_csv_round_trip() {
        let mc = curve(-27.0, 18.0, &[(0.5, 18.0), (10.5, 9.25), (20.5, 0.0)]);
        let mut buf = Vec::new();
        write_curve(&mc, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# power_dbm=-27 offered_load_mbps=18\n"));
        let back = read_curve(&buf[..], "mem").unwrap();
        assert_eq!(back, mc);
    }
}
