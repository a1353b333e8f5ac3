//! Node mobility: trace generation and position queries.
//!
//! Three models generate per-node piecewise-linear movement schedules over a
//! bounded rectangular area: Random Waypoint (independent random
//! destinations with optional pauses), Reference Point Group (members
//! deviating around a group leader that itself follows Random Waypoint), and
//! Manhattan Grid (movement along the street lines of a regular block grid
//! with probabilistic turns at intersections).
//!
//! A [`MobilityTrace`] is an ordered waypoint sequence covering the whole
//! simulation interval; [`MobilityTrace::position_at`] answers position
//! queries by linear interpolation. Traces round-trip through a plain text
//! format (see [`export_traces`] / [`parse_traces`]).

mod manhattan;
mod rpgm;
mod rwp;

use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::sub_stream;
use crate::NodeId;

pub use manhattan::{interior_turn_frequencies, ManhattanGrid};
pub use rpgm::generate_rpgm_with_centers;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("area dimensions must be positive, got {width} x {height}")]
    BadArea { width: f64, height: f64 },
    #[error("speed interval invalid: require 0 <= min <= max, got [{min}, {max}]")]
    BadSpeeds { min: f64, max: f64 },
    #[error("{field} must be nonnegative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("group count {groups} exceeds node count {nodes}")]
    GroupCount { groups: usize, nodes: usize },
    #[error("manhattan grid needs at least one row and one column of blocks")]
    EmptyGrid,
    #[error("turn probabilities must sum to 1, got {0}")]
    TurnProbabilities(f64),
    #[error("position query at t={t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("trace file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace for node {node} invalid: {message}")]
    InvalidTrace { node: NodeId, message: String },
}

/// A planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Bounded rectangular simulation area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for Area {
    fn default() -> Self {
        Area {
            width_m: 500.0,
            height_m: 500.0,
        }
    }
}

impl Area {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.width_m > 0.0 && self.height_m > 0.0 {
            Ok(())
        } else {
            Err(MobilityError::BadArea {
                width: self.width_m,
                height: self.height_m,
            })
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width_m && p.y >= 0.0 && p.y <= self.height_m
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point {
            x: p.x.clamp(0.0, self.width_m),
            y: p.y.clamp(0.0, self.height_m),
        }
    }
}

/// One waypoint: where a node is at `time_s` and how fast it travels toward
/// the next waypoint (0 while pausing or at the trace end).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub time_s: f64,
    pub pos: Point,
    pub speed_to_next_mps: f64,
}

/// Piecewise-linear position schedule for one node over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub node: NodeId,
    pub duration_s: f64,
    pub waypoints: Vec<Waypoint>,
}

impl MobilityTrace {
    /// Build a trace from timestamped positions; leg speeds are derived from
    /// the geometry so the recorded speed always equals distance / dt.
    pub fn from_points(node: NodeId, duration_s: f64, points: Vec<(f64, Point)>) -> Self {
        assert!(!points.is_empty(), "a trace needs at least one waypoint");
        let mut waypoints: Vec<Waypoint> = Vec::with_capacity(points.len());
        for (idx, &(time_s, pos)) in points.iter().enumerate() {
            let speed = match points.get(idx + 1) {
                Some(&(t_next, p_next)) => {
                    let dt = t_next - time_s;
                    let dist = pos.distance(&p_next);
                    if dt > 0.0 && dist > 0.0 {
                        dist / dt
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            waypoints.push(Waypoint {
                time_s,
                pos,
                speed_to_next_mps: speed,
            });
        }
        MobilityTrace {
            node,
            duration_s,
            waypoints,
        }
    }

    /// Position at time `t` by linear interpolation between the bracketing
    /// waypoints; exact waypoint positions at waypoint times.
    pub fn position_at(&self, t: f64) -> Result<Point, MobilityError> {
        if !(0.0..=self.duration_s).contains(&t) {
            return Err(MobilityError::TimeOutOfRange {
                t,
                duration: self.duration_s,
            });
        }
        let wps = &self.waypoints;
        // Index of the first waypoint with time > t.
        let after = wps.partition_point(|w| w.time_s <= t);
        if after == 0 {
            return Ok(wps[0].pos);
        }
        let prev = &wps[after - 1];
        if after == wps.len() || prev.time_s == t {
            return Ok(prev.pos);
        }
        let next = &wps[after];
        let frac = (t - prev.time_s) / (next.time_s - prev.time_s);
        Ok(Point {
            x: prev.pos.x + (next.pos.x - prev.pos.x) * frac,
            y: prev.pos.y + (next.pos.y - prev.pos.y) * frac,
        })
    }

    /// Check structural invariants: first waypoint at 0, strictly increasing
    /// times, containment in `area`, and speed/geometry consistency.
    pub fn validate(&self, area: &Area) -> Result<(), MobilityError> {
        let fail = |message: String| {
            Err(MobilityError::InvalidTrace {
                node: self.node,
                message,
            })
        };
        if self.waypoints.is_empty() {
            return fail("empty waypoint list".into());
        }
        if self.waypoints[0].time_s != 0.0 {
            return fail(format!(
                "first waypoint at {} instead of 0",
                self.waypoints[0].time_s
            ));
        }
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.time_s <= a.time_s {
                return fail(format!(
                    "waypoint times non-increasing: {} then {}",
                    a.time_s, b.time_s
                ));
            }
            let implied = a.pos.distance(&b.pos) / (b.time_s - a.time_s);
            let recorded = a.speed_to_next_mps;
            let tolerance = 1e-9 * recorded.max(1.0);
            if (implied - recorded).abs() > tolerance {
                return fail(format!(
                    "implied speed {implied} differs from recorded {recorded}"
                ));
            }
        }
        for w in &self.waypoints {
            if !area.contains(w.pos) {
                return fail(format!("waypoint ({}, {}) outside area", w.pos.x, w.pos.y));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityModel {
    RandomWaypoint,
    Rpgm,
    ManhattanGrid,
}

impl MobilityModel {
    pub fn name(self) -> &'static str {
        match self {
            MobilityModel::RandomWaypoint => "rwp",
            MobilityModel::Rpgm => "rpgm",
            MobilityModel::ManhattanGrid => "manhattan",
        }
    }
}

/// Reference Point Group parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpgmParams {
    pub group_count: usize,
    pub deviation_radius_m: f64,
}

impl Default for RpgmParams {
    fn default() -> Self {
        RpgmParams {
            group_count: 5,
            deviation_radius_m: 50.0,
        }
    }
}

/// Manhattan Grid parameters. `grid_rows` x `grid_cols` blocks are embedded
/// in the area; street lines run along every block boundary including the
/// area border.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManhattanParams {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Probability of perturbing the speed at each intersection.
    pub speed_change_prob: f64,
    /// Standard deviation of the speed perturbation as a fraction of the
    /// mean speed.
    pub speed_std_dev_rel: f64,
    /// Lower clamp for the perturbed speed.
    pub speed_floor_mps: f64,
    pub prob_straight: f64,
    pub prob_left: f64,
    pub prob_right: f64,
}

impl Default for ManhattanParams {
    fn default() -> Self {
        ManhattanParams {
            grid_rows: 10,
            grid_cols: 10,
            speed_change_prob: 0.2,
            speed_std_dev_rel: 0.2,
            speed_floor_mps: 0.1,
            prob_straight: 0.5,
            prob_left: 0.25,
            prob_right: 0.25,
        }
    }
}

/// Full mobility configuration; model-specific fields are ignored by the
/// other models.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub area: Area,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_time_s: f64,
    pub rpgm: RpgmParams,
    pub manhattan: ManhattanParams,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            model: MobilityModel::RandomWaypoint,
            area: Area::default(),
            speed_min_mps: 10.0,
            speed_max_mps: 10.0,
            pause_time_s: 0.0,
            rpgm: RpgmParams::default(),
            manhattan: ManhattanParams::default(),
        }
    }
}

impl MobilityConfig {
    pub fn mean_speed_mps(&self) -> f64 {
        0.5 * (self.speed_min_mps + self.speed_max_mps)
    }

    pub fn validate(&self, node_count: usize) -> Result<(), MobilityError> {
        self.area.validate()?;
        if !(0.0 <= self.speed_min_mps && self.speed_min_mps <= self.speed_max_mps) {
            return Err(MobilityError::BadSpeeds {
                min: self.speed_min_mps,
                max: self.speed_max_mps,
            });
        }
        if self.pause_time_s < 0.0 {
            return Err(MobilityError::Negative {
                field: "pause_time",
                value: self.pause_time_s,
            });
        }
        match self.model {
            MobilityModel::RandomWaypoint => {}
            MobilityModel::Rpgm => {
                if self.rpgm.deviation_radius_m < 0.0 {
                    return Err(MobilityError::Negative {
                        field: "deviation_radius",
                        value: self.rpgm.deviation_radius_m,
                    });
                }
                if self.rpgm.group_count == 0 || self.rpgm.group_count > node_count {
                    return Err(MobilityError::GroupCount {
                        groups: self.rpgm.group_count,
                        nodes: node_count,
                    });
                }
            }
            MobilityModel::ManhattanGrid => {
                let m = &self.manhattan;
                if m.grid_rows == 0 || m.grid_cols == 0 {
                    return Err(MobilityError::EmptyGrid);
                }
                let sum = m.prob_straight + m.prob_left + m.prob_right;
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MobilityError::TurnProbabilities(sum));
                }
            }
        }
        Ok(())
    }
}

/// Generate traces for all nodes under the configured model. The mobility
/// randomness is drawn from named sub-streams of `master_seed`, independent
/// of every other randomness axis.
pub fn generate(
    config: &MobilityConfig,
    node_count: usize,
    duration_s: f64,
    master_seed: u64,
) -> Result<Vec<MobilityTrace>, MobilityError> {
    config.validate(node_count)?;
    if duration_s < 0.0 {
        return Err(MobilityError::Negative {
            field: "duration",
            value: duration_s,
        });
    }
    match config.model {
        MobilityModel::RandomWaypoint => Ok((0..node_count)
            .map(|node| {
                let mut rng = sub_stream(master_seed, "mobility-rwp", node as u64);
                let points = rwp::rwp_points(config, duration_s, &mut rng);
                MobilityTrace::from_points(node, duration_s, points)
            })
            .collect()),
        MobilityModel::Rpgm => {
            Ok(generate_rpgm_with_centers(config, node_count, duration_s, master_seed)?.members)
        }
        MobilityModel::ManhattanGrid => manhattan::generate(config, node_count, duration_s, master_seed),
    }
}

const TRACE_HEADER_PREFIX: &str = "#manet-trace v1";

/// Serialize traces to the text trace format:
///
/// ```text
/// #manet-trace v1 nodes=<N> duration=<s>
/// <node_id> <time_s> <x_m> <y_m>
/// ```
///
/// Node blocks in ascending node id, times ascending within a block.
pub fn export_traces(traces: &[MobilityTrace]) -> String {
    let duration = traces.first().map_or(0.0, |t| t.duration_s);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{TRACE_HEADER_PREFIX} nodes={} duration={}",
        traces.len(),
        duration
    );
    let mut sorted: Vec<&MobilityTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| t.node);
    for trace in sorted {
        for w in &trace.waypoints {
            let _ = writeln!(
                out,
                "{} {:.15e} {:.15e} {:.15e}",
                trace.node, w.time_s, w.pos.x, w.pos.y
            );
        }
    }
    out
}

/// Parse the trace format written by [`export_traces`].
pub fn parse_traces(text: &str) -> Result<Vec<MobilityTrace>, MobilityError> {
    let parse_err = |line: usize, message: String| MobilityError::Parse { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let rest = header
        .strip_prefix(TRACE_HEADER_PREFIX)
        .ok_or_else(|| parse_err(1, format!("missing `{TRACE_HEADER_PREFIX}` header")))?;
    let mut nodes: Option<usize> = None;
    let mut duration: Option<f64> = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("nodes=") {
            nodes = Some(
                v.parse()
                    .map_err(|e| parse_err(1, format!("bad nodes field: {e}")))?,
            );
        } else if let Some(v) = field.strip_prefix("duration=") {
            duration = Some(
                v.parse()
                    .map_err(|e| parse_err(1, format!("bad duration field: {e}")))?,
            );
        } else {
            return Err(parse_err(1, format!("unknown header field `{field}`")));
        }
    }
    let node_count = nodes.ok_or_else(|| parse_err(1, "missing nodes= field".into()))?;
    let duration_s = duration.ok_or_else(|| parse_err(1, "missing duration= field".into()))?;

    let mut per_node: Vec<Vec<(f64, Point)>> = vec![Vec::new(); node_count];
    let mut last_node: Option<usize> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad node id: {e}")))?;
        if node >= node_count {
            return Err(parse_err(
                line_no,
                format!("node id {node} out of range (nodes={node_count})"),
            ));
        }
        if let Some(prev) = last_node {
            if node < prev {
                return Err(parse_err(
                    line_no,
                    format!("node blocks out of order: {node} after {prev}"),
                ));
            }
        }
        last_node = Some(node);
        let mut nums = [0.0f64; 3];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad number `{field}`: {e}")))?;
        }
        let (t, x, y) = (nums[0], nums[1], nums[2]);
        if let Some((prev_t, _)) = per_node[node].last() {
            if t <= *prev_t {
                return Err(parse_err(
                    line_no,
                    format!("waypoint times non-increasing for node {node}: {prev_t} then {t}"),
                ));
            }
        }
        per_node[node].push((t, Point::new(x, y)));
    }

    let mut traces = Vec::with_capacity(node_count);
    for (node, points) in per_node.into_iter().enumerate() {
        if points.is_empty() {
            return Err(MobilityError::InvalidTrace {
                node,
                message: "no waypoints in file".into(),
            });
        }
        traces.push(MobilityTrace::from_points(node, duration_s, points));
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(points: Vec<(f64, Point)>) -> MobilityTrace {
        MobilityTrace::from_points(0, 10.0, points)
    }

    #[test]
    fn single_waypoint_trace_is_stationary() {
        let t = trace_of(vec![(0.0, Point::new(0.0, 0.0))]);
        for q in [0.0, 3.3, 10.0] {
            assert_eq!(t.position_at(q).unwrap(), Point::new(0.0, 0.0));
        }
    }

    #[test]
    fn linear_motion_interpolates_midpoint() {
        let t = trace_of(vec![
            (0.0, Point::new(0.0, 0.0)),
            (10.0, Point::new(10.0, 0.0)),
        ]);
        assert_eq!(t.position_at(5.0).unwrap(), Point::new(5.0, 0.0));
    }

    #[test]
    fn waypoint_times_return_exact_positions() {
        let p1 = Point::new(1.2345678901, 9.87654321);
        let p2 = Point::new(7.7, 3.3);
        let t = trace_of(vec![(0.0, Point::new(0.0, 0.0)), (4.0, p1), (9.0, p2)]);
        assert_eq!(t.position_at(4.0).unwrap(), p1);
        assert_eq!(t.position_at(9.0).unwrap(), p2);
        assert_eq!(t.position_at(0.0).unwrap(), Point::new(0.0, 0.0));
    }

    #[test]
    fn queries_outside_the_window_are_rejected() {
        let t = trace_of(vec![(0.0, Point::new(0.0, 0.0))]);
        assert!(matches!(
            t.position_at(-0.1),
            Err(MobilityError::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            t.position_at(10.1),
            Err(MobilityError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn derived_speeds_match_geometry() {
        let t = trace_of(vec![
            (0.0, Point::new(0.0, 0.0)),
            (5.0, Point::new(30.0, 40.0)), // 50 m in 5 s
            (7.0, Point::new(30.0, 40.0)), // pause
            (10.0, Point::new(33.0, 44.0)),
        ]);
        assert!((t.waypoints[0].speed_to_next_mps - 10.0).abs() < 1e-12);
        assert_eq!(t.waypoints[1].speed_to_next_mps, 0.0);
        assert!(t.validate(&Area::default()).is_ok());
    }

    #[test]
    fn empty_node_set_round_trips() {
        let text = export_traces(&[]);
        assert!(text.starts_with("#manet-trace v1 nodes=0"));
        assert_eq!(text.lines().count(), 1);
        let traces = parse_traces(&text).unwrap();
        assert!(traces.is_empty());
    }

    #[test]
    fn two_waypoint_trace_round_trips() {
        let t = MobilityTrace::from_points(
            0,
            10.0,
            vec![
                (0.0, Point::new(1.5, 2.5)),
                (10.0, Point::new(400.123456789, 499.987654321)),
            ],
        );
        let text = export_traces(std::slice::from_ref(&t));
        assert_eq!(text.lines().count(), 3);
        let parsed = parse_traces(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        for (a, b) in t.waypoints.iter().zip(&parsed[0].waypoints) {
            assert!((a.time_s - b.time_s).abs() < 1e-9);
            assert!(a.pos.distance(&b.pos) < 1e-9);
        }
    }

    #[test]
    fn malformed_lines_name_their_line_number() {
        let text = "#manet-trace v1 nodes=1 duration=10\n0 0.0 1.0\n";
        match parse_traces(text) {
            Err(MobilityError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_times_are_rejected() {
        let text = "#manet-trace v1 nodes=1 duration=10\n0 1.0 0.0 0.0\n0 1.0 5.0 5.0\n";
        match parse_traces(text) {
            Err(MobilityError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("non-increasing"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
