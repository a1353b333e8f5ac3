//! Reference Point Group Mobility.
//!
//! Each group has a logical center following a Random Waypoint trace; every
//! member tracks its center with a bounded random offset (its reference
//! point), resampled once per center leg. Member positions interpolate
//! between reference points, so member speed and direction derive from the
//! center's with a bounded deviation, and member-to-center distance never
//! exceeds the deviation radius.

use std::f64::consts::TAU;

use rand::Rng;

use super::{rwp, MobilityConfig, MobilityError, MobilityTrace, Point};
use crate::rng::{sub_stream, SimRng};
use crate::NodeId;

pub struct RpgmTraces {
    pub members: Vec<MobilityTrace>,
    pub centers: Vec<MobilityTrace>,
    /// Group index of each member node.
    pub group_of: Vec<usize>,
}

/// Generate RPGM traces, also exposing the (virtual) group-center traces for
/// cohesion checks.
pub fn generate_rpgm_with_centers(
    config: &MobilityConfig,
    node_count: usize,
    duration_s: f64,
    master_seed: u64,
) -> Result<RpgmTraces, MobilityError> {
    config.validate(node_count)?;
    let groups = config.rpgm.group_count;
    let radius = config.rpgm.deviation_radius_m;

    let centers: Vec<MobilityTrace> = (0..groups)
        .map(|g| {
            let mut rng = sub_stream(master_seed, "mobility-rpgm-center", g as u64);
            let points = rwp::rwp_points(config, duration_s, &mut rng);
            MobilityTrace::from_points(g, duration_s, points)
        })
        .collect();

    // Nodes partition evenly; remainder nodes join the last group.
    let base = node_count / groups;
    let group_of: Vec<usize> = (0..node_count)
        .map(|node| (node / base.max(1)).min(groups - 1))
        .collect();

    let members = (0..node_count)
        .map(|node| {
            let mut rng = sub_stream(master_seed, "mobility-rpgm-member", node as u64);
            member_trace(
                node,
                &centers[group_of[node]],
                radius,
                config,
                duration_s,
                &mut rng,
            )
        })
        .collect();

    Ok(RpgmTraces {
        members,
        centers,
        group_of,
    })
}

fn member_trace(
    node: NodeId,
    center: &MobilityTrace,
    radius: f64,
    config: &MobilityConfig,
    duration_s: f64,
    rng: &mut SimRng,
) -> MobilityTrace {
    let points = center
        .waypoints
        .iter()
        .map(|w| {
            let offset = disk_offset(radius, rng);
            let pos = config.area.clamp(Point {
                x: w.pos.x + offset.x,
                y: w.pos.y + offset.y,
            });
            (w.time_s, pos)
        })
        .collect();
    MobilityTrace::from_points(node, duration_s, points)
}

/// Uniform random offset within a disk of the given radius.
fn disk_offset(radius: f64, rng: &mut SimRng) -> Point {
    if radius <= 0.0 {
        return Point::new(0.0, 0.0);
    }
    let r = radius * rng.random_range(0.0..=1.0f64).sqrt();
    let theta = rng.random_range(0.0..TAU);
    Point {
        x: r * theta.cos(),
        y: r * theta.sin(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate, MobilityConfig, MobilityError, MobilityModel, RpgmParams};
    use super::*;

    fn config(groups: usize, radius: f64) -> MobilityConfig {
        MobilityConfig {
            model: MobilityModel::Rpgm,
            speed_min_mps: 2.0,
            speed_max_mps: 25.0,
            rpgm: RpgmParams {
                group_count: groups,
                deviation_radius_m: radius,
            },
            ..MobilityConfig::default()
        }
    }

    #[test]
    fn zero_deviation_members_equal_their_center() {
        let out = generate_rpgm_with_centers(&config(3, 0.0), 9, 60.0, 11).unwrap();
        for (node, member) in out.members.iter().enumerate() {
            let center = &out.centers[out.group_of[node]];
            assert_eq!(member.waypoints.len(), center.waypoints.len());
            for (m, c) in member.waypoints.iter().zip(&center.waypoints) {
                assert_eq!(m.time_s, c.time_s);
                assert_eq!(m.pos, c.pos);
            }
        }
    }

    #[test]
    fn single_node_single_group_behaves_like_its_rwp_center() {
        let out = generate_rpgm_with_centers(&config(1, 0.0), 1, 120.0, 13).unwrap();
        let member = &out.members[0];
        let center = &out.centers[0];
        assert_eq!(member.waypoints, center.waypoints);
        // The center is a plain RWP trace: leg speeds within the interval.
        for pair in center.waypoints.windows(2) {
            let s = pair[0].speed_to_next_mps;
            if s > 0.0 {
                assert!((2.0 - 1e-9..=25.0 + 1e-9).contains(&s));
            }
        }
    }

    #[test]
    fn members_stay_within_the_deviation_radius_of_their_center() {
        let radius = 50.0;
        let out = generate_rpgm_with_centers(&config(5, radius), 50, 120.0, 17).unwrap();
        let mut rng = sub_stream(17, "test-rpgm-cohesion", 0);
        // 10^3 sampled (node, t) pairs.
        for _ in 0..1_000 {
            let node = rng.random_range(0..50);
            let t = rng.random_range(0.0..=120.0);
            let member = out.members[node].position_at(t).unwrap();
            let center = out.centers[out.group_of[node]].position_at(t).unwrap();
            let d = member.distance(&center);
            assert!(
                d <= radius + 1e-9,
                "node {node} at t={t}: distance {d} exceeds radius {radius}"
            );
        }
    }

    #[test]
    fn members_stay_inside_the_area() {
        let cfg = config(5, 80.0);
        let traces = generate(&cfg, 30, 60.0, 19).unwrap();
        for t in &traces {
            t.validate(&cfg.area).unwrap();
        }
    }

    #[test]
    fn remainder_nodes_join_the_last_group() {
        let out = generate_rpgm_with_centers(&config(3, 10.0), 11, 10.0, 23).unwrap();
        assert_eq!(out.group_of, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn more_groups_than_nodes_is_a_config_error() {
        let err = generate(&config(10, 10.0), 5, 10.0, 29).unwrap_err();
        assert_eq!(
            err,
            MobilityError::GroupCount {
                groups: 10,
                nodes: 5
            }
        );
    }
}
