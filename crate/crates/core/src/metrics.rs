//! CBR traffic source, the UE-side delivery sink and every run metric:
//! windowed throughput and latency, association trace, signaling rate,
//! losses, and aggregation over runs.

use crate::channel::EnbId;
use crate::config::Mode;
use crate::dataplane::PdcpPacket;
use crate::error::{Result, SimError};
use crate::sim::SimTime;

/// Constant bit rate downlink source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CbrProfile {
    pub packet_size: u32,
    pub interarrival: SimTime,
}

impl CbrProfile {
    pub fn new(packet_size: u32, interarrival: SimTime) -> Self {
        CbrProfile {
            packet_size,
            interarrival,
        }
    }

    pub fn rate_bps(&self) -> f64 {
        f64::from(self.packet_size) * 8.0 / self.interarrival.as_secs_f64()
    }

    /// Number of packets created strictly before `horizon`.
    pub fn count(&self, horizon: SimTime) -> u64 {
        horizon.as_us().div_ceil(self.interarrival.as_us())
    }

    pub fn created(&self, sn: u64) -> SimTime {
        SimTime(sn * self.interarrival.as_us())
    }
}

/// Packets `sn = 0, 1, ...` created at `sn * interarrival`, up to `horizon`.
pub fn generate_traffic(profile: CbrProfile, horizon: SimTime) -> impl Iterator<Item = PdcpPacket> {
    (0..profile.count(horizon))
        .map(move |sn| PdcpPacket::new(sn, profile.packet_size, profile.created(sn)))
}

/// Contiguous, non-overlapping windows starting at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSeries {
    pub window: SimTime,
    pub values: Vec<(SimTime, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyWindow {
    pub start: SimTime,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub count: u64,
}

/// A maximal interval over which the UE received data from one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssociationSegment {
    pub start: SimTime,
    pub end: SimTime,
    pub cell: EnbId,
}

#[derive(Clone, Copy, Debug, Default)]
struct WindowAcc {
    bytes: u64,
    lat_sum_us: u64,
    lat_count: u64,
    lat_max_us: u64,
}

/// Per-run delivery sink.
#[derive(Clone, Debug)]
pub struct MetricsCollector {
    window: SimTime,
    horizon: SimTime,
    windows: Vec<WindowAcc>,
    seen: Vec<u64>,
    gross_bytes: u64,
    net_bytes: u64,
    deliveries: u64,
    unique: u64,
    duplicates: u64,
    late: u64,
    lat_sum_us: u64,
    lat_max_us: u64,
}

impl MetricsCollector {
    pub fn new(window: SimTime, horizon: SimTime) -> Self {
        let n = horizon.as_us().div_ceil(window.as_us()) as usize;
        MetricsCollector {
            window,
            horizon,
            windows: vec![WindowAcc::default(); n],
            seen: Vec::new(),
            gross_bytes: 0,
            net_bytes: 0,
            deliveries: 0,
            unique: 0,
            duplicates: 0,
            late: 0,
            lat_sum_us: 0,
            lat_max_us: 0,
        }
    }

    /// Records a delivery at the UE. Deliveries after the horizon are not
    /// counted as delivered (the packet is still in flight at run end).
    /// Returns whether the delivery fell inside the horizon.
    pub fn record_delivery(&mut self, sn: u64, size: u32, created: SimTime, delivered: SimTime) -> bool {
        debug_assert!(delivered >= created);
        if delivered >= self.horizon {
            self.late += 1;
            return false;
        }
        let w = (delivered.as_us() / self.window.as_us()) as usize;
        let lat = (delivered - created).as_us();
        let acc = &mut self.windows[w];
        acc.bytes += u64::from(size);
        acc.lat_sum_us += lat;
        acc.lat_count += 1;
        acc.lat_max_us = acc.lat_max_us.max(lat);
        self.gross_bytes += u64::from(size);
        self.deliveries += 1;
        self.lat_sum_us += lat;
        self.lat_max_us = self.lat_max_us.max(lat);

        let word = (sn / 64) as usize;
        if word >= self.seen.len() {
            self.seen.resize(word + 1, 0);
        }
        let bit = 1u64 << (sn % 64);
        if self.seen[word] & bit == 0 {
            self.seen[word] |= bit;
            self.net_bytes += u64::from(size);
            self.unique += 1;
        } else {
            self.duplicates += 1;
        }
        true
    }

    pub fn deliveries(&self) -> u64 {
        self.deliveries
    }

    pub fn unique_deliveries(&self) -> u64 {
        self.unique
    }

    /// Deliveries that would have completed after the horizon.
    pub fn late_deliveries(&self) -> u64 {
        self.late
    }

    pub fn throughput_series(&self) -> WindowedSeries {
        let w_s = self.window.as_secs_f64();
        WindowedSeries {
            window: self.window,
            values: self
                .windows
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    (
                        SimTime(i as u64 * self.window.as_us()),
                        a.bytes as f64 * 8.0 / w_s / 1e6,
                    )
                })
                .collect(),
        }
    }

    pub fn latency_series(&self) -> Vec<LatencyWindow> {
        self.windows
            .iter()
            .enumerate()
            .map(|(i, a)| LatencyWindow {
                start: SimTime(i as u64 * self.window.as_us()),
                mean_ms: if a.lat_count > 0 {
                    a.lat_sum_us as f64 / a.lat_count as f64 / 1e3
                } else {
                    0.0
                },
                max_ms: a.lat_max_us as f64 / 1e3,
                count: a.lat_count,
            })
            .collect()
    }
}

/// Everything besides deliveries that [`finalize_run`] needs.
#[derive(Clone, Debug, Default)]
pub struct RunTotals {
    pub mode: Option<Mode>,
    pub run_index: u32,
    pub seed: u64,
    pub config_id: u64,
    pub generated: u64,
    pub dropped_overflow: u64,
    pub dropped_retx: u64,
    /// Packets still queued, on a backhaul, or not yet at the anchor.
    pub in_flight: u64,
    pub forwarded_x2: u64,
    pub retransmitted_bursts: u64,
    pub association: Vec<AssociationSegment>,
    pub air_bytes: u64,
    pub x2_bytes: u64,
    pub s1_bytes: u64,
    pub handovers: u64,
    pub switches: u64,
    pub rlf: u64,
    pub outage_events: u64,
    pub data_blocked: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub mode: Mode,
    pub run_index: u32,
    pub seed: u64,
    pub config_id: u64,
    pub horizon: SimTime,
    pub gross_throughput_bps: f64,
    pub net_goodput_bps: f64,
    pub mean_latency_s: f64,
    pub max_latency_s: f64,
    /// Largest per-window mean latency.
    pub peak_window_latency_s: f64,
    /// Median of the per-window mean latencies (windows with deliveries).
    pub median_window_latency_s: f64,
    pub throughput_series: WindowedSeries,
    pub latency_series: Vec<LatencyWindow>,
    pub association: Vec<AssociationSegment>,
    pub rrc_air_bytes: u64,
    pub rrc_air_bytes_per_s: f64,
    pub x2_signaling_bytes: u64,
    pub s1_signaling_bytes: u64,
    pub packets_generated: u64,
    pub packets_delivered: u64,
    pub duplicates: u64,
    pub dropped_overflow: u64,
    pub dropped_retx: u64,
    pub in_flight_end: u64,
    pub forwarded_x2: u64,
    pub retransmitted_bursts: u64,
    pub handovers: u64,
    pub switches: u64,
    pub rlf: u64,
    pub outage_events: u64,
    pub data_blocked_s: f64,
}

impl RunMetrics {
    /// Scalar fields in a fixed order, as `(name, value)`.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gross_throughput_mbps", self.gross_throughput_bps / 1e6),
            ("net_goodput_mbps", self.net_goodput_bps / 1e6),
            ("mean_latency_ms", self.mean_latency_s * 1e3),
            ("max_latency_ms", self.max_latency_s * 1e3),
            ("peak_window_latency_ms", self.peak_window_latency_s * 1e3),
            ("median_window_latency_ms", self.median_window_latency_s * 1e3),
            ("rrc_air_bytes", self.rrc_air_bytes as f64),
            ("rrc_air_bytes_per_s", self.rrc_air_bytes_per_s),
            ("x2_signaling_bytes", self.x2_signaling_bytes as f64),
            ("s1_signaling_bytes", self.s1_signaling_bytes as f64),
            ("packets_generated", self.packets_generated as f64),
            ("packets_delivered", self.packets_delivered as f64),
            ("duplicates", self.duplicates as f64),
            ("dropped_overflow", self.dropped_overflow as f64),
            ("dropped_retx", self.dropped_retx as f64),
            ("in_flight_end", self.in_flight_end as f64),
            ("forwarded_x2", self.forwarded_x2 as f64),
            ("retransmitted_bursts", self.retransmitted_bursts as f64),
            ("handovers", self.handovers as f64),
            ("switches", self.switches as f64),
            ("rlf", self.rlf as f64),
            ("outage_events", self.outage_events as f64),
            ("data_blocked_ms", self.data_blocked_s * 1e3),
        ]
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Computes the run metrics and checks packet conservation:
/// `generated = delivered + dropped_overflow + dropped_retx + in_flight`.
pub fn finalize_run(collector: MetricsCollector, totals: RunTotals) -> Result<RunMetrics> {
    let accounted = collector.unique + totals.dropped_overflow + totals.dropped_retx + totals.in_flight;
    if accounted != totals.generated {
        return Err(SimError::Conservation(format!(
            "generated {} != delivered {} + overflow {} + retx {} + in flight {}",
            totals.generated,
            collector.unique,
            totals.dropped_overflow,
            totals.dropped_retx,
            totals.in_flight
        )));
    }
    let horizon = collector.horizon;
    let secs = horizon.as_secs_f64();
    let per_s = |v: f64| if secs > 0.0 { v / secs } else { 0.0 };
    let latency_series = collector.latency_series();
    let mut window_means: Vec<f64> = latency_series
        .iter()
        .filter(|w| w.count > 0)
        .map(|w| w.mean_ms / 1e3)
        .collect();
    let peak_window = window_means.iter().copied().fold(0.0, f64::max);
    let median_window = median(&mut window_means);
    Ok(RunMetrics {
        mode: totals.mode.unwrap_or(Mode::Dc),
        run_index: totals.run_index,
        seed: totals.seed,
        config_id: totals.config_id,
        horizon,
        gross_throughput_bps: per_s(collector.gross_bytes as f64 * 8.0),
        net_goodput_bps: per_s(collector.net_bytes as f64 * 8.0),
        mean_latency_s: if collector.deliveries > 0 {
            collector.lat_sum_us as f64 / collector.deliveries as f64 / 1e6
        } else {
            0.0
        },
        max_latency_s: collector.lat_max_us as f64 / 1e6,
        peak_window_latency_s: peak_window,
        median_window_latency_s: median_window,
        throughput_series: collector.throughput_series(),
        latency_series,
        association: totals.association,
        rrc_air_bytes: totals.air_bytes,
        rrc_air_bytes_per_s: per_s(totals.air_bytes as f64),
        x2_signaling_bytes: totals.x2_bytes,
        s1_signaling_bytes: totals.s1_bytes,
        packets_generated: totals.generated,
        packets_delivered: collector.unique,
        duplicates: collector.duplicates,
        dropped_overflow: totals.dropped_overflow,
        dropped_retx: totals.dropped_retx,
        in_flight_end: totals.in_flight,
        forwarded_x2: totals.forwarded_x2,
        retransmitted_bursts: totals.retransmitted_bursts,
        handovers: totals.handovers,
        switches: totals.switches,
        rlf: totals.rlf,
        outage_events: totals.outage_events,
        data_blocked_s: totals.data_blocked.as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateField {
    pub name: &'static str,
    pub mean: f64,
    pub stddev: f64,
}

/// Mean and sample standard deviation of every scalar over N runs.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateMetrics {
    pub mode: Mode,
    pub runs: usize,
    pub fields: Vec<AggregateField>,
}

impl AggregateMetrics {
    pub fn get(&self, name: &str) -> Option<&AggregateField> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn mean(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |f| f.mean)
    }
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates runs of one configuration. Runs must share mode and
/// configuration and differ only in their seed.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateMetrics> {
    let first = runs
        .first()
        .ok_or_else(|| SimError::Aggregate("no runs to aggregate".into()))?;
    if let Some(bad) = runs
        .iter()
        .find(|r| r.config_id != first.config_id || r.mode != first.mode)
    {
        return Err(SimError::Aggregate(format!(
            "run {} has a different configuration than run {}",
            bad.run_index, first.run_index
        )));
    }
    let per_run: Vec<Vec<(&'static str, f64)>> = runs.iter().map(RunMetrics::scalars).collect();
    let fields = per_run[0]
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let vals: Vec<f64> = per_run.iter().map(|s| s[i].1).collect();
            let (mean, stddev) = mean_std(&vals);
            AggregateField { name, mean, stddev }
        })
        .collect();
    Ok(AggregateMetrics {
        mode: first.mode,
        runs: runs.len(),
        fields,
    })
}
