//! Simulation parameters, their validation and the configuration file.
//!
//! The configuration file is flat `key = value` TOML; scenario objects live in
//! a separate scenario file (see [`Scenario::parse`]). Unknown keys are
//! rejected. Command-line overrides are applied on top of the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::channel::{Scenario, ShadowingParams};
use crate::control::{DecisionParams, MessageSizes};
use crate::dataplane::FlushPolicy;
use crate::error::{Result, SimError};
use crate::phy::{BlerModel, PhyParams};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Dual connectivity with PDCP-level switching.
    Dc,
    /// Hard handover.
    Hh,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dc => "dc",
            Mode::Hh => "hh",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Mode::Dc),
            "hh" => Ok(Mode::Hh),
            other => Err(SimError::config("mode", format!("expected dc or hh, got {other:?}"))),
        }
    }
}

/// 10 MiB RLC AM buffer.
pub const DEFAULT_RLC_BUFFER: u64 = 10 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationParams {
    pub mode: Mode,
    pub outage_threshold_db: f64,
    pub hysteresis_db: f64,
    pub recovery_margin_db: f64,
    pub d_x2: SimTime,
    pub s1_mme_latency: SimTime,
    pub s1_u_latency: SimTime,
    pub backhaul_mtu: u32,
    pub b_rlc: u64,
    pub max_retx: u8,
    pub udp_size: u32,
    pub udp_interval: SimTime,
    pub ue_speed: f64,
    pub n_runs: u32,
    pub master_seed: u64,
    pub report_period: SimTime,
    pub channel_period: SimTime,
    pub epoch: SimTime,
    pub window: SimTime,
    /// `None` runs until the UE reaches the end of its path.
    pub duration: Option<SimTime>,
    pub scenario_path: Option<PathBuf>,
    pub scenario: Scenario,
    pub shadowing: ShadowingParams,
    pub eta: f64,
    pub sched_delay: SimTime,
    pub rach_window: SimTime,
    pub rach_processing: SimTime,
    pub bler: BlerModel,
    pub rrc_max_attempts: u32,
    pub flush_policy: FlushPolicy,
    pub message_sizes: MessageSizes,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            mode: Mode::Dc,
            outage_threshold_db: -5.0,
            hysteresis_db: 3.0,
            recovery_margin_db: 2.0,
            d_x2: SimTime::from_ms(1),
            s1_mme_latency: SimTime::from_ms(10),
            s1_u_latency: SimTime::from_ms(1),
            backhaul_mtu: 1500,
            b_rlc: DEFAULT_RLC_BUFFER,
            max_retx: 3,
            udp_size: 1024,
            udp_interval: SimTime::from_us(80),
            ue_speed: 2.0,
            n_runs: 10,
            master_seed: 1,
            report_period: SimTime::from_ms(5),
            channel_period: SimTime::from_ms(5),
            epoch: SimTime::from_ms(1),
            window: SimTime::from_ms(100),
            duration: None,
            scenario_path: None,
            scenario: Scenario::default(),
            shadowing: ShadowingParams::default(),
            eta: 0.65,
            sched_delay: SimTime::from_ms(1),
            rach_window: SimTime::from_ms(5),
            rach_processing: SimTime::from_ms(3),
            bler: BlerModel::Logistic,
            rrc_max_attempts: 5,
            flush_policy: FlushPolicy::Reroute,
            message_sizes: MessageSizes::default(),
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(SimError::config(key, reason))
            }
        };
        check(
            self.outage_threshold_db.is_finite(),
            "outage_threshold_db",
            "must be finite".into(),
        )?;
        check(
            self.hysteresis_db.is_finite() && self.hysteresis_db >= 0.0,
            "hysteresis_db",
            format!("must be >= 0, got {}", self.hysteresis_db),
        )?;
        check(
            self.recovery_margin_db.is_finite() && self.recovery_margin_db >= 0.0,
            "recovery_margin_db",
            format!("must be >= 0, got {}", self.recovery_margin_db),
        )?;
        check(self.b_rlc > 0, "rlc_buffer_bytes", "must be > 0".into())?;
        check(
            self.b_rlc > u64::from(self.udp_size),
            "rlc_buffer_bytes",
            format!("must exceed the packet size {}", self.udp_size),
        )?;
        check(self.udp_size > 0, "udp_packet_bytes", "must be > 0".into())?;
        check(self.udp_interval > SimTime::ZERO, "udp_interval_us", "must be > 0".into())?;
        check(
            self.ue_speed.is_finite() && self.ue_speed > 0.0,
            "ue_speed",
            format!("must be > 0, got {}", self.ue_speed),
        )?;
        check(self.n_runs >= 1, "runs", "must be >= 1".into())?;
        check(self.report_period > SimTime::ZERO, "report_period_ms", "must be > 0".into())?;
        check(self.channel_period > SimTime::ZERO, "channel_period_ms", "must be > 0".into())?;
        check(self.epoch > SimTime::ZERO, "epoch_us", "must be > 0".into())?;
        check(self.window > SimTime::ZERO, "window_ms", "must be > 0".into())?;
        check(
            self.eta.is_finite() && self.eta > 0.0 && self.eta <= 1.0,
            "eta",
            format!("must be in (0, 1], got {}", self.eta),
        )?;
        check(self.rrc_max_attempts >= 1, "rrc_max_attempts", "must be >= 1".into())?;
        check(self.backhaul_mtu > 0, "backhaul_mtu", "must be > 0".into())?;
        if let BlerModel::Fixed(p) = self.bler {
            check((0.0..=1.0).contains(&p), "fixed_bler", format!("must be in [0, 1], got {p}"))?;
        }
        check(
            self.shadowing.sigma_los_db >= 0.0 && self.shadowing.sigma_nlos_db >= 0.0,
            "shadowing_sigma",
            "must be >= 0".into(),
        )?;
        check(
            self.shadowing.decorrelation_m > 0.0,
            "shadowing_decorrelation_m",
            "must be > 0".into(),
        )?;
        if let Some(d) = self.duration {
            check(d > SimTime::ZERO, "duration_s", "must be > 0".into())?;
        }
        self.scenario.validate()
    }

    pub fn phy(&self) -> PhyParams {
        PhyParams {
            outage_threshold_db: self.outage_threshold_db,
            eta: self.eta,
            sched_delay: self.sched_delay,
            rach_window: self.rach_window,
            rach_processing: self.rach_processing,
            bler: self.bler,
        }
    }

    pub fn decision(&self) -> DecisionParams {
        DecisionParams {
            outage_threshold_db: self.outage_threshold_db,
            hysteresis_db: self.hysteresis_db,
            recovery_margin_db: self.recovery_margin_db,
            max_report_age: SimTime(2 * self.report_period.as_us()),
        }
    }

    /// Run length: explicit duration, or the time to traverse the UE path.
    pub fn horizon(&self) -> Result<SimTime> {
        match self.duration {
            Some(d) => Ok(d),
            None => Ok(self.scenario.path(self.ue_speed)?.duration()),
        }
    }

    /// Offered load in bit/s.
    pub fn offered_rate_bps(&self) -> f64 {
        f64::from(self.udp_size) * 8.0 / self.udp_interval.as_secs_f64()
    }

    /// Same configuration apart from mode and seed.
    pub fn same_config(&self, other: &SimulationParams) -> bool {
        let mut a = self.clone();
        a.mode = other.mode;
        a.master_seed = other.master_seed;
        a == *other
    }
}

/// Values given on the command line; each one overrides the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    pub x2_latency_ms: Option<f64>,
    pub s1_latency_ms: Option<f64>,
    pub ue_speed: Option<f64>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mode: Option<Mode>,
    outage_threshold_db: Option<f64>,
    hysteresis_db: Option<f64>,
    recovery_margin_db: Option<f64>,
    x2_latency_ms: Option<f64>,
    s1_mme_latency_ms: Option<f64>,
    s1_u_latency_ms: Option<f64>,
    backhaul_mtu: Option<u32>,
    rlc_buffer_bytes: Option<u64>,
    max_retx: Option<u8>,
    udp_packet_bytes: Option<u32>,
    udp_interval_us: Option<f64>,
    ue_speed: Option<f64>,
    runs: Option<u32>,
    seed: Option<u64>,
    report_period_ms: Option<f64>,
    channel_period_ms: Option<f64>,
    epoch_us: Option<f64>,
    window_ms: Option<f64>,
    duration_s: Option<f64>,
    scenario: Option<PathBuf>,
    shadowing_sigma_los_db: Option<f64>,
    shadowing_sigma_nlos_db: Option<f64>,
    shadowing_decorrelation_m: Option<f64>,
    eta: Option<f64>,
    sched_delay_us: Option<f64>,
    rach_window_ms: Option<f64>,
    rach_proc_ms: Option<f64>,
    fixed_bler: Option<f64>,
    rrc_max_attempts: Option<u32>,
    flush_policy: Option<FlushPolicyName>,
    message_sizes: Option<MessageSizeFile>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FlushPolicyName {
    Reroute,
    Drain,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageSizeFile {
    meas_report: Option<u32>,
    switch_cmd: Option<u32>,
    switch_ack: Option<u32>,
    ho_request: Option<u32>,
    ho_ack: Option<u32>,
    rrc_reconf: Option<u32>,
    rach_msg: Option<u32>,
    path_switch_req: Option<u32>,
    path_switch_ack: Option<u32>,
}

fn time_ms(key: &str, v: f64) -> Result<SimTime> {
    if !v.is_finite() || v < 0.0 {
        return Err(SimError::config(key, format!("must be a non-negative number, got {v}")));
    }
    Ok(SimTime::from_ms_f64(v))
}

fn time_us(key: &str, v: f64) -> Result<SimTime> {
    time_ms(key, v / 1e3)
}

/// Loads `path` (if any) on top of the defaults, then applies `overrides`,
/// resolves the scenario file and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<SimulationParams> {
    let (file, base_dir) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let file: ConfigFile = toml::from_str(&text).map_err(|e| SimError::Parse {
                path: p.to_path_buf(),
                message: e.to_string(),
            })?;
            (file, p.parent().map(Path::to_path_buf))
        }
        None => (ConfigFile::default(), None),
    };
    let mut params = SimulationParams::default();
    apply_file(&mut params, file, base_dir.as_deref())?;
    apply_overrides(&mut params, overrides)?;
    if let Some(sp) = params.scenario_path.clone() {
        params.scenario = Scenario::load(&sp)?;
    }
    params.validate()?;
    Ok(params)
}

/// Parses configuration text (same format as the file) on top of defaults.
pub fn parse_config(text: &str) -> Result<SimulationParams> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| SimError::Parse {
        path: "<config>".into(),
        message: e.to_string(),
    })?;
    let mut params = SimulationParams::default();
    apply_file(&mut params, file, None)?;
    if let Some(sp) = params.scenario_path.clone() {
        params.scenario = Scenario::load(&sp)?;
    }
    params.validate()?;
    Ok(params)
}

fn apply_file(p: &mut SimulationParams, f: ConfigFile, base_dir: Option<&Path>) -> Result<()> {
    if let Some(v) = f.mode {
        p.mode = v;
    }
    if let Some(v) = f.outage_threshold_db {
        p.outage_threshold_db = v;
    }
    if let Some(v) = f.hysteresis_db {
        p.hysteresis_db = v;
    }
    if let Some(v) = f.recovery_margin_db {
        p.recovery_margin_db = v;
    }
    if let Some(v) = f.x2_latency_ms {
        p.d_x2 = time_ms("x2_latency_ms", v)?;
    }
    if let Some(v) = f.s1_mme_latency_ms {
        p.s1_mme_latency = time_ms("s1_mme_latency_ms", v)?;
    }
    if let Some(v) = f.s1_u_latency_ms {
        p.s1_u_latency = time_ms("s1_u_latency_ms", v)?;
    }
    if let Some(v) = f.backhaul_mtu {
        p.backhaul_mtu = v;
    }
    if let Some(v) = f.rlc_buffer_bytes {
        p.b_rlc = v;
    }
    if let Some(v) = f.max_retx {
        p.max_retx = v;
    }
    if let Some(v) = f.udp_packet_bytes {
        p.udp_size = v;
    }
    if let Some(v) = f.udp_interval_us {
        p.udp_interval = time_us("udp_interval_us", v)?;
    }
    if let Some(v) = f.ue_speed {
        p.ue_speed = v;
    }
    if let Some(v) = f.runs {
        p.n_runs = v;
    }
    if let Some(v) = f.seed {
        p.master_seed = v;
    }
    if let Some(v) = f.report_period_ms {
        p.report_period = time_ms("report_period_ms", v)?;
    }
    if let Some(v) = f.channel_period_ms {
        p.channel_period = time_ms("channel_period_ms", v)?;
    }
    if let Some(v) = f.epoch_us {
        p.epoch = time_us("epoch_us", v)?;
    }
    if let Some(v) = f.window_ms {
        p.window = time_ms("window_ms", v)?;
    }
    if let Some(v) = f.duration_s {
        p.duration = Some(time_ms("duration_s", v * 1e3)?);
    }
    if let Some(v) = f.scenario {
        p.scenario_path = Some(match base_dir {
            Some(dir) if v.is_relative() => dir.join(v),
            _ => v,
        });
    }
    if let Some(v) = f.shadowing_sigma_los_db {
        p.shadowing.sigma_los_db = v;
    }
    if let Some(v) = f.shadowing_sigma_nlos_db {
        p.shadowing.sigma_nlos_db = v;
    }
    if let Some(v) = f.shadowing_decorrelation_m {
        p.shadowing.decorrelation_m = v;
    }
    if let Some(v) = f.eta {
        p.eta = v;
    }
    if let Some(v) = f.sched_delay_us {
        p.sched_delay = time_us("sched_delay_us", v)?;
    }
    if let Some(v) = f.rach_window_ms {
        p.rach_window = time_ms("rach_window_ms", v)?;
    }
    if let Some(v) = f.rach_proc_ms {
        p.rach_processing = time_ms("rach_proc_ms", v)?;
    }
    if let Some(v) = f.fixed_bler {
        p.bler = BlerModel::Fixed(v);
    }
    if let Some(v) = f.rrc_max_attempts {
        p.rrc_max_attempts = v;
    }
    if let Some(v) = f.flush_policy {
        p.flush_policy = match v {
            FlushPolicyName::Reroute => FlushPolicy::Reroute,
            FlushPolicyName::Drain => FlushPolicy::Drain,
        };
    }
    if let Some(m) = f.message_sizes {
        let s = &mut p.message_sizes;
        let fields = [
            (m.meas_report, &mut s.meas_report, "message_sizes.meas_report"),
            (m.switch_cmd, &mut s.switch_cmd, "message_sizes.switch_cmd"),
            (m.switch_ack, &mut s.switch_ack, "message_sizes.switch_ack"),
            (m.ho_request, &mut s.ho_request, "message_sizes.ho_request"),
            (m.ho_ack, &mut s.ho_ack, "message_sizes.ho_ack"),
            (m.rrc_reconf, &mut s.rrc_reconf, "message_sizes.rrc_reconf"),
            (m.rach_msg, &mut s.rach_msg, "message_sizes.rach_msg"),
            (m.path_switch_req, &mut s.path_switch_req, "message_sizes.path_switch_req"),
            (m.path_switch_ack, &mut s.path_switch_ack, "message_sizes.path_switch_ack"),
        ];
        for (value, slot, key) in fields {
            if let Some(v) = value {
                if v == 0 {
                    return Err(SimError::config(key, "must be > 0"));
                }
                *slot = v;
            }
        }
    }
    Ok(())
}

fn apply_overrides(p: &mut SimulationParams, o: &Overrides) -> Result<()> {
    if let Some(v) = o.mode {
        p.mode = v;
    }
    if let Some(v) = &o.scenario {
        p.scenario_path = Some(v.clone());
    }
    if let Some(v) = o.seed {
        p.master_seed = v;
    }
    if let Some(v) = o.runs {
        p.n_runs = v;
    }
    if let Some(v) = o.x2_latency_ms {
        p.d_x2 = time_ms("x2_latency_ms", v)?;
    }
    if let Some(v) = o.s1_latency_ms {
        p.s1_mme_latency = time_ms("s1_mme_latency_ms", v)?;
    }
    if let Some(v) = o.ue_speed {
        p.ue_speed = v;
    }
    if let Some(v) = o.duration_s {
        p.duration = Some(time_ms("duration_s", v * 1e3)?);
    }
    Ok(())
}

/// Grid of X2 latencies and UE speeds to sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub d_x2_values: Vec<SimTime>,
    pub speed_values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            d_x2_values: vec![SimTime::from_us(100), SimTime::from_ms(1), SimTime::from_ms(10)],
            speed_values: vec![2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x2_values.is_empty() {
            return Err(SimError::config("sweep-x2", "list must not be empty"));
        }
        if self.speed_values.is_empty() {
            return Err(SimError::config("sweep-speed", "list must not be empty"));
        }
        if let Some(s) = self.speed_values.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(SimError::config("sweep-speed", format!("speeds must be > 0, got {s}")));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.d_x2_values.len() * self.speed_values.len()
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| SimError::config(key, format!("not a number: {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let p = parse_config("").unwrap();
        assert_eq!(p, SimulationParams::default());
        assert_eq!(p.outage_threshold_db, -5.0);
        assert_eq!(p.d_x2, SimTime::from_ms(1));
        assert_eq!(p.b_rlc, 10 * 1024 * 1024);
        assert_eq!(p.s1_mme_latency, SimTime::from_ms(10));
        assert_eq!(p.udp_size, 1024);
        assert_eq!(p.udp_interval, SimTime::from_us(80));
        assert_eq!(p.ue_speed, 2.0);
        assert_eq!(p.n_runs, 10);
        assert!((p.offered_rate_bps() - 102.4e6).abs() < 1e-3);
        let lte = p.scenario.lte();
        assert_eq!((lte.carrier_hz, lte.bandwidth_hz), (2.1e9, 20e6));
        for id in p.scenario.mmwave_ids() {
            let e = p.scenario.enb(id).unwrap();
            assert_eq!((e.carrier_hz, e.bandwidth_hz), (28e9, 1e9));
        }
    }

    #[test]
    fn x2_override_converts_units() {
        let o = Overrides {
            x2_latency_ms: Some(10.0),
            ..Default::default()
        };
        let p = load_config(None, &o).unwrap();
        assert_eq!(p.d_x2, SimTime::from_us(10_000));
    }

    #[test]
    fn zero_buffer_is_rejected_with_key() {
        let err = parse_config("rlc_buffer_bytes = 0").unwrap_err();
        match err {
            SimError::Config { key, .. } => assert_eq!(key, "rlc_buffer_bytes"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(parse_config("x2_latncy_ms = 3"), Err(SimError::Parse { .. })));
        assert!(matches!(
            parse_config("[message_sizes]\nfoo = 3"),
            Err(SimError::Parse { .. })
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse_config("ue_speed = 0.0").is_err());
        assert!(parse_config("hysteresis_db = -1.0").is_err());
        assert!(parse_config("runs = 0").is_err());
        assert!(parse_config("x2_latency_ms = -1.0").is_err());
        assert!(parse_config("rlc_buffer_bytes = 1000").is_err());
        assert!(parse_config("[message_sizes]\nrrc_reconf = 0").is_err());
    }

    #[test]
    fn file_values_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "mode = \"hh\"\nue_speed = 4.0\nseed = 9\n[message_sizes]\nrrc_reconf = 200\n").unwrap();
        let o = Overrides {
            ue_speed: Some(8.0),
            ..Default::default()
        };
        let p = load_config(Some(&path), &o).unwrap();
        assert_eq!(p.mode, Mode::Hh);
        assert_eq!(p.ue_speed, 8.0);
        assert_eq!(p.master_seed, 9);
        assert_eq!(p.message_sizes.rrc_reconf, 200);
    }

    #[test]
    fn horizon_follows_path() {
        let p = SimulationParams::default();
        assert_eq!(p.horizon().unwrap(), SimTime::from_secs_f64(100.0));
        let p = SimulationParams {
            ue_speed: 16.0,
            ..SimulationParams::default()
        };
        assert_eq!(p.horizon().unwrap(), SimTime::from_secs_f64(12.5));
    }

    #[test]
    fn sweep_defaults() {
        let s = SweepSpec::default();
        assert_eq!(s.points(), 12);
        s.validate().unwrap();
        assert!(SweepSpec {
            speed_values: vec![],
            ..SweepSpec::default()
        }
        .validate()
        .is_err());
        assert_eq!(parse_list("sweep-x2", "0.1, 1,10").unwrap(), vec![0.1, 1.0, 10.0]);
        assert!(parse_list("sweep-x2", "1,x").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("DC".parse::<Mode>().unwrap(), Mode::Dc);
        assert_eq!("hh".parse::<Mode>().unwrap(), Mode::Hh);
        assert!("x".parse::<Mode>().is_err());
    }
}
