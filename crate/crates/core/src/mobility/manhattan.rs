//! Manhattan Grid mobility.
//!
//! Nodes move only along the street lines of a `rows x cols` block grid
//! embedded in the area (streets on every block boundary, border included).
//! At each intersection the direction is resampled: straight 0.5, left 0.25,
//! right 0.25 by default, with probabilities of illegal directions
//! redistributed proportionally among the legal ones; a U-turn happens only
//! when it is the only legal move. Speed is perturbed at intersections with
//! a configured probability by a zero-mean normal increment, clamped below.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{MobilityConfig, MobilityError, MobilityTrace, Point};
use crate::rng::{sub_stream, SimRng};

const SPEED_EPS: f64 = 1e-9;

/// Street-line geometry of the block grid.
#[derive(Debug, Clone, Copy)]
pub struct ManhattanGrid {
    pub cols: usize,
    pub rows: usize,
    pub width_m: f64,
    pub height_m: f64,
}

impl ManhattanGrid {
    pub fn new(config: &MobilityConfig) -> Self {
        ManhattanGrid {
            cols: config.manhattan.grid_cols,
            rows: config.manhattan.grid_rows,
            width_m: config.area.width_m,
            height_m: config.area.height_m,
        }
    }

    pub fn block_dx(&self) -> f64 {
        self.width_m / self.cols as f64
    }

    pub fn block_dy(&self) -> f64 {
        self.height_m / self.rows as f64
    }

    /// Exact x coordinate of vertical street line `i` (0..=cols).
    pub fn x(&self, i: usize) -> f64 {
        if i == self.cols {
            self.width_m
        } else {
            i as f64 * self.block_dx()
        }
    }

    /// Exact y coordinate of horizontal street line `j` (0..=rows).
    pub fn y(&self, j: usize) -> f64 {
        if j == self.rows {
            self.height_m
        } else {
            j as f64 * self.block_dy()
        }
    }

    pub fn intersection(&self, i: usize, j: usize) -> Point {
        Point::new(self.x(i), self.y(j))
    }

    /// Interior intersections have all four street segments available.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && i < self.cols && j > 0 && j < self.rows
    }

    /// True when one coordinate of `p` lies within `tol` of a street line.
    pub fn on_street(&self, p: Point, tol: f64) -> bool {
        let on_vertical = (0..=self.cols).any(|i| (p.x - self.x(i)).abs() <= tol);
        let on_horizontal = (0..=self.rows).any(|j| (p.y - self.y(j)).abs() <= tol);
        on_vertical || on_horizontal
    }

    /// Lattice index of `p` if it sits on an intersection (within `tol`).
    pub fn intersection_index(&self, p: Point, tol: f64) -> Option<(usize, usize)> {
        let i = (0..=self.cols).find(|&i| (p.x - self.x(i)).abs() <= tol)?;
        let j = (0..=self.rows).find(|&j| (p.y - self.y(j)).abs() <= tol)?;
        Some((i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Dir {
    East,
    West,
    North,
    South,
}

impl Dir {
    pub(super) fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    pub(super) fn right(self) -> Dir {
        self.left().left().left()
    }

    pub(super) fn reverse(self) -> Dir {
        self.left().left()
    }
}

fn legal(grid: &ManhattanGrid, i: usize, j: usize, dir: Dir) -> bool {
    match dir {
        Dir::East => i < grid.cols,
        Dir::West => i > 0,
        Dir::North => j < grid.rows,
        Dir::South => j > 0,
    }
}

/// Pick the outgoing direction: straight/left/right weighted by the turn
/// probabilities, restricted to legal moves with proportional
/// renormalization; U-turn only when nothing else is legal.
fn choose_direction(
    grid: &ManhattanGrid,
    i: usize,
    j: usize,
    incoming: Dir,
    config: &MobilityConfig,
    rng: &mut SimRng,
) -> Dir {
    let m = &config.manhattan;
    let candidates = [
        (incoming, m.prob_straight),
        (incoming.left(), m.prob_left),
        (incoming.right(), m.prob_right),
    ];
    let total: f64 = candidates
        .iter()
        .filter(|(d, _)| legal(grid, i, j, *d))
        .map(|(_, p)| p)
        .sum();
    if total <= 0.0 {
        return incoming.reverse();
    }
    let mut pick = rng.random_range(0.0..total);
    for (d, p) in candidates {
        if !legal(grid, i, j, d) {
            continue;
        }
        if pick < p {
            return d;
        }
        pick -= p;
    }
    incoming.reverse()
}

pub(super) fn generate(
    config: &MobilityConfig,
    node_count: usize,
    duration_s: f64,
    master_seed: u64,
) -> Result<Vec<MobilityTrace>, MobilityError> {
    let grid = ManhattanGrid::new(config);
    Ok((0..node_count)
        .map(|node| {
            let mut rng = sub_stream(master_seed, "mobility-manhattan", node as u64);
            let points = walk(&grid, config, duration_s, &mut rng);
            MobilityTrace::from_points(node, duration_s, points)
        })
        .collect())
}

struct Walker {
    i: usize,
    j: usize,
    dir: Dir,
    speed: f64,
}

fn walk(
    grid: &ManhattanGrid,
    config: &MobilityConfig,
    duration_s: f64,
    rng: &mut SimRng,
) -> Vec<(f64, Point)> {
    let mean_speed = config.mean_speed_mps();
    let (start, mut state) = place_on_street(grid, mean_speed, rng);
    let mut points = vec![(0.0, start)];
    if duration_s <= 0.0 || mean_speed < SPEED_EPS {
        return points;
    }
    let sigma = config.manhattan.speed_std_dev_rel * mean_speed;
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite std dev");

    // First leg: from the (possibly mid-block) start to the next
    // intersection ahead.
    let first = grid.intersection(state.i, state.j);
    let mut now = 0.0;
    let dist = start.distance(&first);
    if dist > 0.0 {
        let arrival = dist / state.speed;
        if arrival >= duration_s {
            let frac = duration_s / arrival;
            points.push((duration_s, lerp(start, first, frac)));
            return points;
        }
        now = arrival;
        points.push((now, first));
    }

    loop {
        // Speed perturbation happens at each position update (intersection).
        if config.manhattan.speed_change_prob > 0.0
            && rng.random_bool(config.manhattan.speed_change_prob)
        {
            let next = state.speed + normal.sample(rng);
            state.speed = next.max(config.manhattan.speed_floor_mps);
        }
        state.dir = choose_direction(grid, state.i, state.j, state.dir, config, rng);
        let (ni, nj) = match state.dir {
            Dir::East => (state.i + 1, state.j),
            Dir::West => (state.i - 1, state.j),
            Dir::North => (state.i, state.j + 1),
            Dir::South => (state.i, state.j - 1),
        };
        let from = grid.intersection(state.i, state.j);
        let to = grid.intersection(ni, nj);
        let leg = from.distance(&to) / state.speed;
        if now + leg >= duration_s {
            let frac = (duration_s - now) / leg;
            points.push((duration_s, lerp(from, to, frac)));
            return points;
        }
        now += leg;
        points.push((now, to));
        state.i = ni;
        state.j = nj;
    }
}

fn lerp(a: Point, b: Point, frac: f64) -> Point {
    Point {
        x: a.x + (b.x - a.x) * frac,
        y: a.y + (b.y - a.y) * frac,
    }
}

/// Uniform position on the street network (lines weighted by length), plus
/// the walker state aiming at the next intersection ahead.
fn place_on_street(grid: &ManhattanGrid, speed: f64, rng: &mut SimRng) -> (Point, Walker) {
    let horizontal_len = (grid.rows + 1) as f64 * grid.width_m;
    let vertical_len = (grid.cols + 1) as f64 * grid.height_m;
    let on_horizontal = rng.random_range(0.0..horizontal_len + vertical_len) < horizontal_len;
    if on_horizontal {
        let j = rng.random_range(0..=grid.rows);
        let x = rng.random_range(0.0..=grid.width_m);
        let start = Point::new(x, grid.y(j));
        let east_ok = x < grid.width_m;
        let west_ok = x > 0.0;
        let dir = pick_axis_dir(Dir::East, Dir::West, east_ok, west_ok, rng);
        let i = match dir {
            Dir::East => next_index_up(x, grid.block_dx(), grid.cols),
            _ => next_index_down(x, grid.block_dx()),
        };
        (
            start,
            Walker {
                i,
                j,
                dir,
                speed,
            },
        )
    } else {
        let i = rng.random_range(0..=grid.cols);
        let y = rng.random_range(0.0..=grid.height_m);
        let start = Point::new(grid.x(i), y);
        let north_ok = y < grid.height_m;
        let south_ok = y > 0.0;
        let dir = pick_axis_dir(Dir::North, Dir::South, north_ok, south_ok, rng);
        let j = match dir {
            Dir::North => next_index_up(y, grid.block_dy(), grid.rows),
            _ => next_index_down(y, grid.block_dy()),
        };
        (
            start,
            Walker {
                i,
                j,
                dir,
                speed,
            },
        )
    }
}

fn pick_axis_dir(fwd: Dir, back: Dir, fwd_ok: bool, back_ok: bool, rng: &mut SimRng) -> Dir {
    match (fwd_ok, back_ok) {
        (true, true) => {
            if rng.random_bool(0.5) {
                fwd
            } else {
                back
            }
        }
        (true, false) => fwd,
        _ => back,
    }
}

/// First lattice index strictly ahead when moving toward larger coordinates.
fn next_index_up(coord: f64, step: f64, max_index: usize) -> usize {
    let idx = (coord / step).floor() as usize + 1;
    idx.min(max_index)
}

/// First lattice index strictly behind when moving toward smaller coordinates.
fn next_index_down(coord: f64, step: f64) -> usize {
    let ratio = coord / step;
    let floor = ratio.floor();
    if ratio == floor {
        (floor as usize).saturating_sub(1)
    } else {
        floor as usize
    }
}

/// Classify the turns taken at interior intersections of already-generated
/// traces; returns `(straight, left, right)` counts. The classification is
/// derived purely from trace geometry, independent of the walker internals.
pub fn interior_turn_frequencies(
    traces: &[MobilityTrace],
    grid: &ManhattanGrid,
) -> (u64, u64, u64) {
    let mut counts = (0u64, 0u64, 0u64);
    let tol = 1e-9;
    for trace in traces {
        for triple in trace.waypoints.windows(3) {
            let (a, b, c) = (&triple[0], &triple[1], &triple[2]);
            let Some((i, j)) = grid.intersection_index(b.pos, tol) else {
                continue;
            };
            if !grid.is_interior(i, j) {
                continue;
            }
            let (Some(incoming), Some(outgoing)) =
                (segment_dir(a.pos, b.pos), segment_dir(b.pos, c.pos))
            else {
                continue;
            };
            if outgoing == incoming {
                counts.0 += 1;
            } else if outgoing == incoming.left() {
                counts.1 += 1;
            } else if outgoing == incoming.right() {
                counts.2 += 1;
            }
        }
    }
    counts
}

fn segment_dir(a: Point, b: Point) -> Option<Dir> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    if dx.abs() > dy.abs() {
        Some(if dx > 0.0 { Dir::East } else { Dir::West })
    } else if dy.abs() > 0.0 {
        Some(if dy > 0.0 { Dir::North } else { Dir::South })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate, Area, MobilityConfig, MobilityModel};
    use super::*;
    use crate::rng::sub_stream;

    fn config() -> MobilityConfig {
        MobilityConfig {
            model: MobilityModel::ManhattanGrid,
            speed_min_mps: 10.0,
            speed_max_mps: 10.0,
            ..MobilityConfig::default()
        }
    }

    #[test]
    fn positions_stay_on_street_lines() {
        let cfg = config();
        let grid = ManhattanGrid::new(&cfg);
        let traces = generate(&cfg, 10, 120.0, 31).unwrap();
        let mut rng = sub_stream(31, "test-manhattan-street", 0);
        for _ in 0..1_000 {
            let node = rng.random_range(0..10usize);
            let t = rng.random_range(0.0..=120.0);
            let p = traces[node].position_at(t).unwrap();
            assert!(
                grid.on_street(p, 1e-6),
                "({}, {}) off the street grid",
                p.x,
                p.y
            );
        }
    }

    #[test]
    fn turn_frequencies_match_configured_probabilities() {
        let cfg = config();
        let grid = ManhattanGrid::new(&cfg);
        let traces = generate(&cfg, 20, 5_000.0, 37).unwrap();
        let (s, l, r) = interior_turn_frequencies(&traces, &grid);
        let total = (s + l + r) as f64;
        assert!(total >= 10_000.0, "only {total} interior decisions sampled");
        let fs = s as f64 / total;
        let fl = l as f64 / total;
        let fr = r as f64 / total;
        assert!((fs - 0.50).abs() <= 0.02, "straight frequency {fs}");
        assert!((fl - 0.25).abs() <= 0.02, "left frequency {fl}");
        assert!((fr - 0.25).abs() <= 0.02, "right frequency {fr}");
    }

    #[test]
    fn degenerate_strip_collapses_to_one_line() {
        // A 1 x 1 block grid over a hair-thin strip: the street ring
        // degenerates to a single horizontal line; every position is
        // collinear with it to within the strip height.
        let cfg = MobilityConfig {
            area: Area {
                width_m: 500.0,
                height_m: 1e-7,
            },
            manhattan: super::super::ManhattanParams {
                grid_rows: 1,
                grid_cols: 1,
                ..Default::default()
            },
            ..config()
        };
        let traces = generate(&cfg, 4, 300.0, 41).unwrap();
        let mut rng = sub_stream(41, "test-manhattan-strip", 0);
        for trace in &traces {
            for _ in 0..200 {
                let t = rng.random_range(0.0..=300.0);
                let p = trace.position_at(t).unwrap();
                assert!(p.y.abs() <= 1e-6, "position y={} not collinear", p.y);
            }
        }
    }

    #[test]
    fn speeds_never_drop_below_the_floor() {
        let cfg = config();
        let traces = generate(&cfg, 10, 300.0, 43).unwrap();
        for trace in &traces {
            for pair in trace.waypoints.windows(2) {
                let s = pair[0].speed_to_next_mps;
                if s > 0.0 {
                    assert!(s >= cfg.manhattan.speed_floor_mps - 1e-9, "speed {s}");
                }
            }
        }
    }

    #[test]
    fn traces_validate_and_end_at_duration() {
        let cfg = config();
        let traces = generate(&cfg, 10, 120.0, 47).unwrap();
        for trace in &traces {
            trace.validate(&cfg.area).unwrap();
            assert_eq!(trace.waypoints.last().unwrap().time_s, 120.0);
        }
    }

    #[test]
    fn same_seed_reproduces_traces() {
        let cfg = config();
        let a = generate(&cfg, 6, 60.0, 53).unwrap();
        let b = generate(&cfg, 6, 60.0, 53).unwrap();
        assert_eq!(a, b);
    }
}
