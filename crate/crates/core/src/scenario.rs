//! Scenario configuration: defaults, validation, the flat key=value config
//! file format, and the metadata echo that records every defaulted modeling
//! decision in the output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::energy::EnergyParams;
use crate::mac::ChannelModel;
use crate::mobility::{MobilityConfig, MobilityModel, Point};
use crate::routing::{Protocol, RoutingConfig};
use crate::traffic::{TrafficConfig, TrafficKind};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub routing: RoutingConfig,
    pub channel: ChannelModel,
    pub energy: EnergyParams,
    pub node_count: usize,
    pub duration_s: f64,
    pub flow_count: usize,
    pub master_seed: u64,
    /// Fixed node positions instead of generated mobility (static
    /// topologies for tests and oracles).
    pub static_positions: Option<Vec<Point>>,
    /// Fixed flow endpoints instead of seeded random pairs.
    pub flows_override: Option<Vec<crate::traffic::FlowSpec>>,
    pub record_event_log: bool,
    pub record_protocol_log: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: Protocol::Aodv,
            mobility: MobilityConfig::default(),
            traffic: TrafficConfig::default(),
            routing: RoutingConfig::default(),
            channel: ChannelModel::default(),
            energy: EnergyParams::default(),
            node_count: 50,
            duration_s: 120.0,
            flow_count: 10,
            master_seed: 1,
            static_positions: None,
            flows_override: None,
            record_event_log: false,
            record_protocol_log: false,
        }
    }
}

impl ScenarioConfig {
    /// Set the mobility speed axis to a single value, the way the sweep
    /// interprets "average speed".
    pub fn with_speed(mut self, speed_mps: f64) -> Self {
        self.mobility.speed_min_mps = speed_mps;
        self.mobility.speed_max_mps = speed_mps;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.node_count < 2 {
            return Err(ScenarioError::Invalid(format!(
                "node_count must be at least 2, got {}",
                self.node_count
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        self.mobility
            .validate(self.node_count)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.traffic
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.channel
            .validate()
            .map_err(ScenarioError::Invalid)?;
        if let Some(positions) = &self.static_positions {
            if positions.len() != self.node_count {
                return Err(ScenarioError::Invalid(format!(
                    "{} static positions for {} nodes",
                    positions.len(),
                    self.node_count
                )));
            }
        }
        let e = &self.energy;
        for (name, v) in [
            ("initial_energy", e.initial_energy_j),
            ("idle_power", e.idle_power_w),
            ("rx_power", e.rx_power_w),
            ("tx_power", e.tx_power_w),
            ("transition_power", e.transition_power_w),
            ("sleep_power", e.sleep_power_w),
            ("transition_time", e.transition_time_s),
        ] {
            if v < 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Echo of every defaulted modeling decision, attached to reports so the
    /// choices behind the numbers are auditable.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put(
            "traffic.rate_interpretation",
            "within-burst rate in packets/s of fixed-size packets".into(),
        );
        put(
            "traffic.packet_size_bits",
            self.traffic.packet_size_bits.to_string(),
        );
        put("traffic.send_rate_pps", self.traffic.send_rate_pps.to_string());
        put("traffic.on_mean_s", self.traffic.on_mean_s.to_string());
        put("traffic.off_mean_s", self.traffic.off_mean_s.to_string());
        put("traffic.pareto_shape", self.traffic.pareto_shape.to_string());
        put(
            "traffic.on_quantization",
            "burst carries max(1, round(rate*duration)) packets at 1/rate spacing".into(),
        );
        put("flows.count", self.flow_count.to_string());
        put("flows.selection", "seeded random source-destination pairs".into(),);
        put(
            "mobility.speed_rule",
            "sweep speed v pins speed_min = speed_max = v".into(),
        );
        put("mobility.pause_time_s", self.mobility.pause_time_s.to_string());
        put("mobility.rpgm_groups", self.mobility.rpgm.group_count.to_string());
        put(
            "mobility.rpgm_deviation_radius_m",
            self.mobility.rpgm.deviation_radius_m.to_string(),
        );
        put(
            "mobility.manhattan_grid",
            format!(
                "{}x{} blocks",
                self.mobility.manhattan.grid_rows, self.mobility.manhattan.grid_cols
            ),
        );
        put(
            "mobility.manhattan_speed_change_prob",
            self.mobility.manhattan.speed_change_prob.to_string(),
        );
        put(
            "mobility.manhattan_speed_std_dev_rel",
            self.mobility.manhattan.speed_std_dev_rel.to_string(),
        );
        put(
            "mobility.manhattan_turn_probs",
            format!(
                "straight {} left {} right {}",
                self.mobility.manhattan.prob_straight,
                self.mobility.manhattan.prob_left,
                self.mobility.manhattan.prob_right
            ),
        );
        put("mac.bit_rate_bps", self.channel.bit_rate_bps.to_string());
        put("mac.range_m", self.channel.range_m.to_string());
        put("mac.cs_range_m", self.channel.cs_range_m.to_string());
        put(
            "mac.timing_us",
            format!(
                "slot {} difs {} sifs {}",
                self.channel.slot_s * 1e6,
                self.channel.difs_s * 1e6,
                self.channel.sifs_s * 1e6
            ),
        );
        put("mac.cw_slots", self.channel.cw_slots.to_string());
        put("mac.retry_limit", self.channel.retry_limit.to_string());
        put(
            "mac.rts_threshold_bits",
            match self.channel.rts_threshold_bits {
                Some(t) => t.to_string(),
                None => "inf".into(),
            },
        );
        put(
            "mac.frame_bits",
            format!(
                "rts {} cts {} ack {} data-header {}",
                self.channel.rts_bits,
                self.channel.cts_bits,
                self.channel.ack_bits,
                self.channel.data_header_bits
            ),
        );
        put(
            "routing.control_sizes_bytes",
            format!(
                "rreq {} rrep {} rerr {}+{}/dest dsr {}+{}/node dsdv {}+{}/entry",
                self.routing.sizes.aodv_rreq_bytes,
                self.routing.sizes.aodv_rrep_bytes,
                self.routing.sizes.aodv_rerr_base_bytes,
                self.routing.sizes.aodv_rerr_per_dest_bytes,
                self.routing.sizes.dsr_base_bytes,
                self.routing.sizes.dsr_per_node_bytes,
                self.routing.sizes.dsdv_base_bytes,
                self.routing.sizes.dsdv_per_entry_bytes
            ),
        );
        put(
            "routing.aodv_route_lifetime_s",
            self.routing.aodv_route_lifetime_s.to_string(),
        );
        put(
            "routing.rreq_retry",
            format!(
                "{} retries at {} s spacing",
                self.routing.rreq_retry_limit, self.routing.rreq_retry_interval_s
            ),
        );
        put("routing.dsdv_period_s", self.routing.dsdv_period_s.to_string());
        put(
            "routing.dsdv_first_dump",
            "staggered uniformly over one period per node (seeded)".into(),
        );
        put(
            "routing.buffer_capacity",
            format!("{} packets, drop-oldest", self.routing.buffer_capacity),
        );
        put(
            "energy.rx_exposure_policy",
            "any in-range exposure is charged as Rx, including collided frames".into(),
        );
        put(
            "energy.params",
            format!(
                "initial {} J idle {} rx {} tx {} transition {} sleep {} W",
                self.energy.initial_energy_j,
                self.energy.idle_power_w,
                self.energy.rx_power_w,
                self.energy.tx_power_w,
                self.energy.transition_power_w,
                self.energy.sleep_power_w
            ),
        );
        m
    }
}

/// Parse the flat `key = value` config format (`#` comments, unknown keys
/// are errors) onto the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::default();
    let mut speed: Option<f64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScenarioError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, &mut speed, key, value).map_err(|message| match message {
            KeyError::Unknown => ScenarioError::UnknownKey {
                line: line_no,
                key: key.to_string(),
            },
            KeyError::Bad(message) => ScenarioError::Parse {
                line: line_no,
                message,
            },
        })?;
    }
    if let Some(v) = speed {
        cfg = cfg.with_speed(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

enum KeyError {
    Unknown,
    Bad(String),
}

fn apply_key(
    cfg: &mut ScenarioConfig,
    speed: &mut Option<f64>,
    key: &str,
    value: &str,
) -> Result<(), KeyError> {
    fn num<T: std::str::FromStr>(value: &str) -> Result<T, KeyError>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse()
            .map_err(|e| KeyError::Bad(format!("bad value `{value}`: {e}")))
    }
    match key {
        "protocol" => {
            cfg.protocol = match value {
                "aodv" => Protocol::Aodv,
                "dsr" => Protocol::Dsr,
                "dsdv" => Protocol::Dsdv,
                _ => return Err(KeyError::Bad(format!("unknown protocol `{value}`"))),
            };
            cfg.routing.protocol = cfg.protocol;
        }
        "mobility" => {
            cfg.mobility.model = match value {
                "rwp" => MobilityModel::RandomWaypoint,
                "rpgm" => MobilityModel::Rpgm,
                "manhattan" => MobilityModel::ManhattanGrid,
                _ => return Err(KeyError::Bad(format!("unknown mobility model `{value}`"))),
            }
        }
        "traffic" => {
            cfg.traffic.kind = match value {
                "cbr" => TrafficKind::Cbr,
                "exp" => TrafficKind::Exponential,
                "pareto" => TrafficKind::Pareto,
                _ => return Err(KeyError::Bad(format!("unknown traffic kind `{value}`"))),
            }
        }
        "node_count" => cfg.node_count = num(value)?,
        "duration_s" => cfg.duration_s = num(value)?,
        "area_width_m" => cfg.mobility.area.width_m = num(value)?,
        "area_height_m" => cfg.mobility.area.height_m = num(value)?,
        "speed_mps" => *speed = Some(num(value)?),
        "speed_min_mps" => cfg.mobility.speed_min_mps = num(value)?,
        "speed_max_mps" => cfg.mobility.speed_max_mps = num(value)?,
        "pause_time_s" => cfg.mobility.pause_time_s = num(value)?,
        "rpgm_groups" => cfg.mobility.rpgm.group_count = num(value)?,
        "rpgm_deviation_radius_m" => cfg.mobility.rpgm.deviation_radius_m = num(value)?,
        "manhattan_rows" => cfg.mobility.manhattan.grid_rows = num(value)?,
        "manhattan_cols" => cfg.mobility.manhattan.grid_cols = num(value)?,
        "manhattan_speed_change_prob" => cfg.mobility.manhattan.speed_change_prob = num(value)?,
        "manhattan_speed_std_dev_rel" => cfg.mobility.manhattan.speed_std_dev_rel = num(value)?,
        "manhattan_speed_floor_mps" => cfg.mobility.manhattan.speed_floor_mps = num(value)?,
        "packet_size_bytes" => cfg.traffic.packet_size_bits = num::<u32>(value)? * 8,
        "packet_size_bits" => cfg.traffic.packet_size_bits = num(value)?,
        "send_rate_pps" => cfg.traffic.send_rate_pps = num(value)?,
        "on_mean_s" => cfg.traffic.on_mean_s = num(value)?,
        "off_mean_s" => cfg.traffic.off_mean_s = num(value)?,
        "pareto_shape" => cfg.traffic.pareto_shape = num(value)?,
        "flow_count" => cfg.flow_count = num(value)?,
        "master_seed" => cfg.master_seed = num(value)?,
        "bit_rate_bps" => {
            cfg.channel.bit_rate_bps = num(value)?;
            cfg.energy.bit_rate_bps = cfg.channel.bit_rate_bps;
        }
        "range_m" => {
            cfg.channel.range_m = num(value)?;
            cfg.channel.cs_range_m = cfg.channel.range_m;
        }
        "cs_range_m" => cfg.channel.cs_range_m = num(value)?,
        "rts_threshold_bytes" => {
            cfg.channel.rts_threshold_bits = if value == "inf" {
                None
            } else {
                Some(num::<u32>(value)? * 8)
            }
        }
        "slot_us" => cfg.channel.slot_s = num::<f64>(value)? * 1e-6,
        "difs_us" => cfg.channel.difs_s = num::<f64>(value)? * 1e-6,
        "sifs_us" => cfg.channel.sifs_s = num::<f64>(value)? * 1e-6,
        "cw_slots" => cfg.channel.cw_slots = num(value)?,
        "mac_retry_limit" => cfg.channel.retry_limit = num(value)?,
        "rts_bits" => cfg.channel.rts_bits = num(value)?,
        "cts_bits" => cfg.channel.cts_bits = num(value)?,
        "ack_bits" => cfg.channel.ack_bits = num(value)?,
        "data_header_bits" => cfg.channel.data_header_bits = num(value)?,
        "initial_energy_j" => cfg.energy.initial_energy_j = num(value)?,
        "idle_power_w" => cfg.energy.idle_power_w = num(value)?,
        "rx_power_w" => cfg.energy.rx_power_w = num(value)?,
        "tx_power_w" => cfg.energy.tx_power_w = num(value)?,
        "transition_power_w" => cfg.energy.transition_power_w = num(value)?,
        "sleep_power_w" => cfg.energy.sleep_power_w = num(value)?,
        "transition_time_s" => cfg.energy.transition_time_s = num(value)?,
        "aodv_route_lifetime_s" => cfg.routing.aodv_route_lifetime_s = num(value)?,
        "rreq_retry_limit" => cfg.routing.rreq_retry_limit = num(value)?,
        "rreq_retry_interval_s" => cfg.routing.rreq_retry_interval_s = num(value)?,
        "dsdv_period_s" => cfg.routing.dsdv_period_s = num(value)?,
        "buffer_capacity" => cfg.routing.buffer_capacity = num(value)?,
        "aodv_rreq_bytes" => cfg.routing.sizes.aodv_rreq_bytes = num(value)?,
        "aodv_rrep_bytes" => cfg.routing.sizes.aodv_rrep_bytes = num(value)?,
        "aodv_rerr_base_bytes" => cfg.routing.sizes.aodv_rerr_base_bytes = num(value)?,
        "aodv_rerr_per_dest_bytes" => cfg.routing.sizes.aodv_rerr_per_dest_bytes = num(value)?,
        "dsr_base_bytes" => cfg.routing.sizes.dsr_base_bytes = num(value)?,
        "dsr_per_node_bytes" => cfg.routing.sizes.dsr_per_node_bytes = num(value)?,
        "dsdv_base_bytes" => cfg.routing.sizes.dsdv_base_bytes = num(value)?,
        "dsdv_per_entry_bytes" => cfg.routing.sizes.dsdv_per_entry_bytes = num(value)?,
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

/// Render a config back to the key=value format (round-trip friendly).
pub fn render_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "protocol = {}", cfg.protocol.name());
    let _ = writeln!(s, "mobility = {}", cfg.mobility.model.name());
    let _ = writeln!(s, "traffic = {}", cfg.traffic.kind.name());
    let _ = writeln!(s, "node_count = {}", cfg.node_count);
    let _ = writeln!(s, "duration_s = {}", cfg.duration_s);
    let _ = writeln!(s, "area_width_m = {}", cfg.mobility.area.width_m);
    let _ = writeln!(s, "area_height_m = {}", cfg.mobility.area.height_m);
    let _ = writeln!(s, "speed_min_mps = {}", cfg.mobility.speed_min_mps);
    let _ = writeln!(s, "speed_max_mps = {}", cfg.mobility.speed_max_mps);
    let _ = writeln!(s, "pause_time_s = {}", cfg.mobility.pause_time_s);
    let _ = writeln!(s, "rpgm_groups = {}", cfg.mobility.rpgm.group_count);
    let _ = writeln!(
        s,
        "rpgm_deviation_radius_m = {}",
        cfg.mobility.rpgm.deviation_radius_m
    );
    let _ = writeln!(s, "manhattan_rows = {}", cfg.mobility.manhattan.grid_rows);
    let _ = writeln!(s, "manhattan_cols = {}", cfg.mobility.manhattan.grid_cols);
    let _ = writeln!(s, "flow_count = {}", cfg.flow_count);
    let _ = writeln!(s, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(s, "range_m = {}", cfg.channel.range_m);
    let _ = writeln!(
        s,
        "rts_threshold_bytes = {}",
        match cfg.channel.rts_threshold_bits {
            Some(bits) => (bits / 8).to_string(),
            None => "inf".into(),
        }
    );
    s
}
