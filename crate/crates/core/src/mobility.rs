//! Waypoint replay for UAV and ground-node positions.
//!
//! Coordinates are local Cartesian meters with the gNB antenna base at the
//! origin. Positions are pure functions of (trajectory, t).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    /// Dwell at each waypoint for its hold time, transiting between holds at
    /// `speed_mps` (instantaneously if no speed is given — the scenario
    /// loader warns about such teleports).
    HoverSequence,
    /// Piecewise-linear flight through the waypoints at `speed_mps`.
    ConstantSpeedPath,
    /// Pinned to the first waypoint.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub pos: [f64; 3],
    /// Dwell in seconds (hover mode). Defaults to 10 s.
    #[serde(default = "default_hold_s")]
    pub hold_s: f64,
}

fn default_hold_s() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    #[serde(default)]
    pub name: String,
    pub mode: TrajectoryMode,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub speed_mps: Option<f64>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.is_empty() {
            return Err("trajectory needs at least one waypoint".into());
        }
        if self.mode == TrajectoryMode::ConstantSpeedPath {
            match self.speed_mps {
                Some(s) if s > 0.0 => {}
                _ => return Err("constant_speed_path requires speed_mps > 0".into()),
            }
        }
        if let Some(s) = self.speed_mps {
            if !(s > 0.0) {
                return Err("speed_mps must be > 0".into());
            }
        }
        if self.waypoints.iter().any(|w| w.hold_s < 0.0) {
            return Err("hold_s must be >= 0".into());
        }
        Ok(())
    }

    /// True for hover sequences that jump between holds because no transit
    /// speed was configured.
    pub fn teleports(&self) -> bool {
        self.mode == TrajectoryMode::HoverSequence
            && self.speed_mps.is_none()
            && self.waypoints.len() > 1
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Position at time `t_s` (seconds from trajectory start). After the final
/// waypoint the position holds there.
pub fn position_at(traj: &Trajectory, t_s: f64) -> [f64; 3] {
    let wps = &traj.waypoints;
    match traj.mode {
        TrajectoryMode::Static => wps[0].pos,
        TrajectoryMode::ConstantSpeedPath => {
            let speed = traj.speed_mps.unwrap_or(1.0);
            let mut t = t_s.max(0.0);
            for w in wps.windows(2) {
                let leg = dist(w[0].pos, w[1].pos);
                let leg_t = leg / speed;
                if t < leg_t {
                    return lerp(w[0].pos, w[1].pos, if leg_t > 0.0 { t / leg_t } else { 1.0 });
                }
                t -= leg_t;
            }
            wps[wps.len() - 1].pos
        }
        TrajectoryMode::HoverSequence => {
            let mut t = t_s.max(0.0);
            for (i, w) in wps.iter().enumerate() {
                if t < w.hold_s {
                    return w.pos;
                }
                t -= w.hold_s;
                if i + 1 < wps.len() {
                    if let Some(speed) = traj.speed_mps {
                        let leg = dist(w.pos, wps[i + 1].pos);
                        let leg_t = leg / speed;
                        if t < leg_t {
                            return lerp(
                                w.pos,
                                wps[i + 1].pos,
                                if leg_t > 0.0 { t / leg_t } else { 1.0 },
                            );
                        }
                        t -= leg_t;
                    }
                    // no speed: instantaneous move to the next hold
                }
            }
            wps[wps.len() - 1].pos
        }
    }
}

fn hover(name: &str, speed_mps: f64, points: &[[f64; 3]]) -> Trajectory {
    Trajectory {
        name: name.into(),
        mode: TrajectoryMode::HoverSequence,
        waypoints: points
            .iter()
            .map(|&pos| Waypoint { pos, hold_s: 10.0 })
            .collect(),
        speed_mps: Some(speed_mps),
    }
}

/// Built-in trajectories, resolvable by name from any scenario:
///
/// * `fig3_hover` — hold grid at 15 m and 20 m horizontal (5 m altitude),
///   30 m and 50 m (10 m altitude), then altitude steps to 15 m and 20 m at
///   growing distance. The 5/10 m positions are the measured grid; the
///   altitude-step coordinates are extrapolation. 10 s per hold.
/// * `fig4_flythrough` — straight line from above the gNB out to 300 m
///   horizontal at 10 m/s, 10 m altitude.
/// * `ground_static` — fixed ground node at 20 m horizontal, 1 m height.
pub fn bundled_scenarios() -> BTreeMap<String, Trajectory> {
    let mut m = BTreeMap::new();
    m.insert(
        "fig3_hover".to_string(),
        hover(
            "fig3_hover",
            5.0,
            &[
                [15.0, 0.0, 5.0],
                [20.0, 0.0, 5.0],
                [30.0, 0.0, 10.0],
                [50.0, 0.0, 10.0],
                [60.0, 0.0, 15.0],
                [70.0, 0.0, 20.0],
            ],
        ),
    );
    m.insert(
        "fig4_flythrough".to_string(),
        Trajectory {
            name: "fig4_flythrough".into(),
            mode: TrajectoryMode::ConstantSpeedPath,
            waypoints: vec![
                Waypoint {
                    pos: [0.0, 0.0, 10.0],
                    hold_s: 0.0,
                },
                Waypoint {
                    pos: [300.0, 0.0, 10.0],
                    hold_s: 0.0,
                },
            ],
            speed_mps: Some(10.0),
        },
    );
    m.insert(
        "ground_static".to_string(),
        Trajectory {
            name: "ground_static".into(),
            mode: TrajectoryMode::Static,
            waypoints: vec![Waypoint {
                pos: [20.0, 0.0, 1.0],
                hold_s: 0.0,
            }],
            speed_mps: None,
        },
    );
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_interpolation() {
        let traj = Trajectory {
            name: "t".into(),
            mode: TrajectoryMode::ConstantSpeedPath,
            waypoints: vec![
                Waypoint {
                    pos: [0.0, 0.0, 5.0],
                    hold_s: 0.0,
                },
                Waypoint {
                    pos: [100.0, 0.0, 5.0],
                    hold_s: 0.0,
                },
            ],
            speed_mps: Some(10.0),
        };
        assert_eq!(position_at(&traj, 0.0), [0.0, 0.0, 5.0]);
        assert_eq!(position_at(&traj, 5.0), [50.0, 0.0, 5.0]);
        // terminal hover past the end
        assert_eq!(position_at(&traj, 1e4), [100.0, 0.0, 5.0]);
    }

    #[test]
    fn hover_holds_and_transits() {
        let traj = hover("h", 5.0, &[[0.0, 0.0, 5.0], [10.0, 0.0, 5.0]]);
        assert_eq!(position_at(&traj, 0.0), [0.0, 0.0, 5.0]);
        assert_eq!(position_at(&traj, 9.9), [0.0, 0.0, 5.0]);
        // transit 10 m at 5 m/s: halfway at t = 11
        assert_eq!(position_at(&traj, 11.0), [5.0, 0.0, 5.0]);
        assert_eq!(position_at(&traj, 12.5), [10.0, 0.0, 5.0]);
        assert_eq!(position_at(&traj, 100.0), [10.0, 0.0, 5.0]);
    }

    #[test]
    fn hover_without_speed_teleports() {
        let mut traj = hover("h", 5.0, &[[0.0, 0.0, 5.0], [10.0, 0.0, 5.0]]);
        traj.speed_mps = None;
        assert!(traj.teleports());
        assert_eq!(position_at(&traj, 10.0), [10.0, 0.0, 5.0]);
    }

    #[test]
    fn bundled_names_and_shapes() {
        let b = bundled_scenarios();
        let fig3 = &b["fig3_hover"];
        assert!(fig3
            .waypoints
            .iter()
            .any(|w| w.pos == [15.0, 0.0, 5.0]));
        let fig4 = &b["fig4_flythrough"];
        let far = fig4
            .waypoints
            .iter()
            .map(|w| w.pos[0])
            .fold(0.0_f64, f64::max);
        assert!(far >= 260.0);
        let ground = &b["ground_static"];
        for t in [0.0, 3.7, 1000.0] {
            assert_eq!(position_at(ground, t), [20.0, 0.0, 1.0]);
        }
        for traj in b.values() {
            traj.validate().unwrap();
            assert!(!traj.teleports());
        }
    }

    #[test]
    fn path_speed_bound() {
        let traj = bundled_scenarios()["fig4_flythrough"].clone();
        let speed = traj.speed_mps.unwrap();
        let mut t = 0.0;
        while t < 40.0 {
            let d = dist(position_at(&traj, t), position_at(&traj, t + 0.05));
            assert!(d <= speed * 0.05 + 1e-9);
            t += 0.05;
        }
    }
}
