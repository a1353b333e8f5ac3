//! Application-layer traffic generation.
//!
//! Three source kinds attach to unidirectional source-destination flows:
//! CBR emits at a fixed rate with no randomness; Exponential and Pareto
//! sources alternate ON bursts and OFF idle periods with the respective
//! duration distributions (defaults: mean ON 1.5 s, mean OFF 0.5 s, Pareto
//! shape 2.5). During a burst, packets are spaced `1/rate` apart with the
//! phase reset at each burst start; a burst carries a whole number of
//! packets, so its realized length is the sampled duration rounded to the
//! packet grid (at least one packet per burst).

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto};
use thiserror::Error;

use crate::rng::SimRng;
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("flow source and destination must differ (both {0})")]
    LoopFlow(NodeId),
    #[error("flow window invalid: start {start} must precede stop {stop}")]
    EmptyWindow { start: f64, stop: f64 },
    #[error("flow stop {stop} exceeds scenario duration {duration}")]
    StopPastDuration { stop: f64, duration: f64 },
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("pareto shape must exceed 1 for a finite mean, got {0}")]
    InfiniteMean(f64),
}

/// One unidirectional application flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub source: NodeId,
    pub dest: NodeId,
    pub start_s: f64,
    pub stop_s: f64,
}

impl FlowSpec {
    pub fn validate(&self, duration_s: f64) -> Result<(), TrafficError> {
        if self.source == self.dest {
            return Err(TrafficError::LoopFlow(self.source));
        }
        if !(self.start_s < self.stop_s) {
            return Err(TrafficError::EmptyWindow {
                start: self.start_s,
                stop: self.stop_s,
            });
        }
        if self.stop_s > duration_s {
            return Err(TrafficError::StopPastDuration {
                stop: self.stop_s,
                duration: duration_s,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficKind {
    Cbr,
    Exponential,
    Pareto,
}

impl TrafficKind {
    pub fn name(self) -> &'static str {
        match self {
            TrafficKind::Cbr => "cbr",
            TrafficKind::Exponential => "exp",
            TrafficKind::Pareto => "pareto",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub kind: TrafficKind,
    pub packet_size_bits: u32,
    /// Packets per second during active periods.
    pub send_rate_pps: f64,
    pub on_mean_s: f64,
    pub off_mean_s: f64,
    pub pareto_shape: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            kind: TrafficKind::Cbr,
            // 512-byte packets, 4 packets/s while sending.
            packet_size_bits: 4096,
            send_rate_pps: 4.0,
            on_mean_s: 1.5,
            off_mean_s: 0.5,
            pareto_shape: 2.5,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let positive = [
            ("packet_size", self.packet_size_bits as f64),
            ("send_rate", self.send_rate_pps),
            ("on_mean", self.on_mean_s),
            ("off_mean", self.off_mean_s),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(TrafficError::NonPositive { field, value });
            }
        }
        if self.pareto_shape <= 1.0 {
            return Err(TrafficError::InfiniteMean(self.pareto_shape));
        }
        Ok(())
    }
}

/// Ordered emission times for one flow; strictly increasing, all within
/// `[start, stop)`.
pub type SendSchedule = Vec<f64>;

/// Scale of a Pareto distribution with the given mean and shape, via
/// `mean = shape * scale / (shape - 1)`.
pub fn pareto_scale(mean_s: f64, shape: f64) -> Result<f64, TrafficError> {
    if shape <= 1.0 {
        return Err(TrafficError::InfiniteMean(shape));
    }
    if !(mean_s > 0.0) {
        return Err(TrafficError::NonPositive {
            field: "mean",
            value: mean_s,
        });
    }
    Ok(mean_s * (shape - 1.0) / shape)
}

/// CBR: emissions at `start + k/rate` for k = 0, 1, ... strictly below stop.
pub fn cbr_schedule(flow: &FlowSpec, config: &TrafficConfig) -> SendSchedule {
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = flow.start_s + k as f64 / config.send_rate_pps;
        if t >= flow.stop_s {
            return times;
        }
        times.push(t);
        k += 1;
    }
}

/// Sampler for the raw ON/OFF duration distributions; the schedule builders
/// quantize ON durations to the packet grid, the diagnostics report the raw
/// distributions.
pub enum OnOffSampler {
    Exponential { on: Exp<f64>, off: Exp<f64> },
    Pareto { on: Pareto<f64>, off: Pareto<f64> },
}

impl OnOffSampler {
    pub fn exponential(config: &TrafficConfig) -> Result<Self, TrafficError> {
        config.validate()?;
        Ok(OnOffSampler::Exponential {
            on: Exp::new(1.0 / config.on_mean_s).expect("positive rate"),
            off: Exp::new(1.0 / config.off_mean_s).expect("positive rate"),
        })
    }

    pub fn pareto(config: &TrafficConfig) -> Result<Self, TrafficError> {
        config.validate()?;
        let on_scale = pareto_scale(config.on_mean_s, config.pareto_shape)?;
        let off_scale = pareto_scale(config.off_mean_s, config.pareto_shape)?;
        Ok(OnOffSampler::Pareto {
            on: Pareto::new(on_scale, config.pareto_shape).expect("valid pareto"),
            off: Pareto::new(off_scale, config.pareto_shape).expect("valid pareto"),
        })
    }

    pub fn sample_on(&self, rng: &mut SimRng) -> f64 {
        match self {
            OnOffSampler::Exponential { on, .. } => on.sample(rng),
            OnOffSampler::Pareto { on, .. } => on.sample(rng),
        }
    }

    pub fn sample_off(&self, rng: &mut SimRng) -> f64 {
        match self {
            OnOffSampler::Exponential { off, .. } => off.sample(rng),
            OnOffSampler::Pareto { off, .. } => off.sample(rng),
        }
    }
}

/// ON/OFF schedule plus the realized ON windows (for diagnostics and tests).
pub struct OnOffSchedule {
    pub times: SendSchedule,
    /// Realized ON windows `[start, end)` after packet-grid quantization.
    pub on_windows: Vec<(f64, f64)>,
    /// Realized OFF durations.
    pub off_durations: Vec<f64>,
}

fn on_off_schedule(
    flow: &FlowSpec,
    config: &TrafficConfig,
    sampler: &OnOffSampler,
    rng: &mut SimRng,
) -> OnOffSchedule {
    let rate = config.send_rate_pps;
    let mut times = Vec::new();
    let mut on_windows = Vec::new();
    let mut off_durations = Vec::new();
    let mut cursor = flow.start_s;
    'cycles: loop {
        if cursor >= flow.stop_s {
            break;
        }
        // A burst carries a whole number of packets at 1/rate spacing; the
        // sampled duration is rounded to that grid, with at least one packet.
        let sampled_on = sampler.sample_on(rng);
        let packets = ((sampled_on * rate).round() as u64).max(1);
        for k in 0..packets {
            let t = cursor + k as f64 / rate;
            if t >= flow.stop_s {
                on_windows.push((cursor, flow.stop_s));
                break 'cycles;
            }
            times.push(t);
        }
        let on_end = cursor + packets as f64 / rate;
        on_windows.push((cursor, on_end.min(flow.stop_s)));
        let off = sampler.sample_off(rng);
        off_durations.push(off);
        cursor = on_end + off;
    }
    OnOffSchedule {
        times,
        on_windows,
        off_durations,
    }
}

/// Exponential ON/OFF schedule: alternating ON ~ Exp(on_mean) and
/// OFF ~ Exp(off_mean) periods starting with ON.
pub fn exponential_schedule(
    flow: &FlowSpec,
    config: &TrafficConfig,
    rng: &mut SimRng,
) -> Result<OnOffSchedule, TrafficError> {
    let sampler = OnOffSampler::exponential(config)?;
    Ok(on_off_schedule(flow, config, &sampler, rng))
}

/// Pareto ON/OFF schedule: ON and OFF ~ Pareto(shape, scale from the
/// configured means).
pub fn pareto_schedule(
    flow: &FlowSpec,
    config: &TrafficConfig,
    rng: &mut SimRng,
) -> Result<OnOffSchedule, TrafficError> {
    let sampler = OnOffSampler::pareto(config)?;
    Ok(on_off_schedule(flow, config, &sampler, rng))
}

/// Build the emission schedule for one flow under the configured kind.
pub fn build_schedule(
    flow: &FlowSpec,
    config: &TrafficConfig,
    rng: &mut SimRng,
) -> Result<SendSchedule, TrafficError> {
    config.validate()?;
    match config.kind {
        TrafficKind::Cbr => Ok(cbr_schedule(flow, config)),
        TrafficKind::Exponential => Ok(exponential_schedule(flow, config, rng)?.times),
        TrafficKind::Pareto => Ok(pareto_schedule(flow, config, rng)?.times),
    }
}

/// Pick `count` random source-destination flows over `node_count` nodes.
pub fn random_flows(
    node_count: usize,
    count: usize,
    start_s: f64,
    stop_s: f64,
    rng: &mut SimRng,
) -> Vec<FlowSpec> {
    assert!(node_count >= 2, "need at least two nodes for a flow");
    let mut flows = Vec::with_capacity(count);
    for _ in 0..count {
        let source = rng.random_range(0..node_count);
        let mut dest = rng.random_range(0..node_count - 1);
        if dest >= source {
            dest += 1;
        }
        flows.push(FlowSpec {
            source,
            dest,
            start_s,
            stop_s,
        });
    }
    flows
}

/// Hill estimator of the tail index from the `k` largest samples.
pub fn hill_tail_index(samples: &[f64], k: usize) -> f64 {
    assert!(k + 1 <= samples.len(), "need at least k+1 samples");
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let mean_log: f64 = sorted[..k]
        .iter()
        .map(|x| (x / threshold).ln())
        .sum::<f64>()
        / k as f64;
    1.0 / mean_log
}
