//! Random Waypoint movement for a single node.

use rand::Rng;

use super::{MobilityConfig, Point};
use crate::rng::SimRng;

/// Sampled speeds below this are treated as "not moving".
const SPEED_EPS: f64 = 1e-9;

/// Generate the timestamped positions of one Random Waypoint walker:
/// alternate travel legs toward uniformly random destinations at a speed
/// drawn from `[speed_min, speed_max]` with pauses of `pause_time` between
/// them, truncated exactly at `duration`.
pub(super) fn rwp_points(
    config: &MobilityConfig,
    duration_s: f64,
    rng: &mut SimRng,
) -> Vec<(f64, Point)> {
    let area = &config.area;
    let start = Point {
        x: rng.random_range(0.0..=area.width_m),
        y: rng.random_range(0.0..=area.height_m),
    };
    let mut points = vec![(0.0, start)];
    if duration_s <= 0.0 || config.speed_max_mps <= 0.0 {
        return points;
    }
    let mut now = 0.0;
    let mut pos = start;
    while now < duration_s {
        let dest = Point {
            x: rng.random_range(0.0..=area.width_m),
            y: rng.random_range(0.0..=area.height_m),
        };
        let speed = sample_speed(config, rng);
        if speed < SPEED_EPS {
            // Degenerate draw: the node stays put for the remaining time.
            points.push((duration_s, pos));
            return points;
        }
        let dist = pos.distance(&dest);
        if dist < 1e-12 {
            continue;
        }
        let arrival = now + dist / speed;
        if arrival >= duration_s {
            let frac = (duration_s - now) / (arrival - now);
            let cut = Point {
                x: pos.x + (dest.x - pos.x) * frac,
                y: pos.y + (dest.y - pos.y) * frac,
            };
            points.push((duration_s, cut));
            return points;
        }
        points.push((arrival, dest));
        now = arrival;
        pos = dest;
        if config.pause_time_s > 0.0 {
            let resume = now + config.pause_time_s;
            if resume >= duration_s {
                points.push((duration_s, pos));
                return points;
            }
            points.push((resume, pos));
            now = resume;
        }
    }
    points
}

fn sample_speed(config: &MobilityConfig, rng: &mut SimRng) -> f64 {
    if config.speed_max_mps > config.speed_min_mps {
        rng.random_range(config.speed_min_mps..=config.speed_max_mps)
    } else {
        config.speed_min_mps
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate, Area, MobilityConfig, MobilityModel};
    use crate::rng::sub_stream;
    use rand::Rng;

    fn config(min: f64, max: f64) -> MobilityConfig {
        MobilityConfig {
            model: MobilityModel::RandomWaypoint,
            speed_min_mps: min,
            speed_max_mps: max,
            ..MobilityConfig::default()
        }
    }

    #[test]
    fn zero_duration_yields_one_waypoint() {
        let traces = generate(&config(2.0, 25.0), 5, 0.0, 1).unwrap();
        for t in &traces {
            assert_eq!(t.waypoints.len(), 1);
            assert_eq!(t.waypoints[0].time_s, 0.0);
        }
    }

    #[test]
    fn zero_speed_nodes_never_move() {
        let traces = generate(&config(0.0, 0.0), 3, 120.0, 2).unwrap();
        for t in &traces {
            assert_eq!(t.waypoints.len(), 1);
            let p0 = t.position_at(0.0).unwrap();
            assert_eq!(t.position_at(77.7).unwrap(), p0);
        }
    }

    #[test]
    fn sampled_leg_speed_mean_matches_uniform_distribution() {
        // Mean of Uniform[2, 25] is 13.5; check the empirical mean of 10^4
        // sampled leg speeds.
        let mut rng = sub_stream(3, "test-rwp-speeds", 0);
        let cfg = config(2.0, 25.0);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| super::sample_speed(&cfg, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 13.5).abs() < 13.5 * 0.02,
            "empirical mean {mean}, expected 13.5 +/- 2%"
        );
    }

    #[test]
    fn leg_speeds_stay_in_the_configured_interval() {
        let traces = generate(&config(2.0, 25.0), 10, 120.0, 4).unwrap();
        for t in &traces {
            for pair in t.waypoints.windows(2) {
                let s = pair[0].speed_to_next_mps;
                if s > 0.0 {
                    assert!(
                        (2.0 - 1e-9..=25.0 + 1e-9).contains(&s),
                        "leg speed {s} outside [2, 25]"
                    );
                }
            }
        }
    }

    #[test]
    fn positions_stay_inside_the_area() {
        let area = Area::default();
        let traces = generate(&config(2.0, 25.0), 10, 120.0, 5).unwrap();
        let mut rng = sub_stream(5, "test-rwp-containment", 1);
        for t in &traces {
            t.validate(&area).unwrap();
            for _ in 0..100 {
                let q = rng.random_range(0.0..=120.0);
                let p = t.position_at(q).unwrap();
                assert!(area.contains(p), "({}, {}) escaped the area", p.x, p.y);
            }
        }
    }

    #[test]
    fn pause_time_inserts_stationary_legs() {
        let cfg = MobilityConfig {
            pause_time_s: 3.0,
            ..config(5.0, 5.0)
        };
        let traces = generate(&cfg, 1, 300.0, 6).unwrap();
        let t = &traces[0];
        let pauses = t
            .waypoints
            .windows(2)
            .filter(|w| w[0].pos == w[1].pos && w[0].speed_to_next_mps == 0.0)
            .count();
        assert!(pauses > 0, "expected at least one pause leg");
    }

    #[test]
    fn same_seed_reproduces_the_trace() {
        let a = generate(&config(2.0, 25.0), 8, 60.0, 42).unwrap();
        let b = generate(&config(2.0, 25.0), 8, 60.0, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn traces_end_exactly_at_duration() {
        let traces = generate(&config(2.0, 25.0), 10, 120.0, 7).unwrap();
        for t in &traces {
            assert_eq!(t.waypoints.last().unwrap().time_s, 120.0);
        }
    }
}
