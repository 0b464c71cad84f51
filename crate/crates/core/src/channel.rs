//! Scenario geometry and the radio channel.
//!
//! The channel is a geometric LOS/NLOS pathloss with log-normal shadowing
//! that is exponentially correlated along the UE path. Every random value is
//! drawn from the `channel` stream, one standard normal per eNB per sample,
//! so the trace depends only on the scenario, the seed and the sampling
//! period.

use std::path::Path;

use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Result, SimError};
use crate::sim::{RngStream, SimTime};

pub type EnbId = u32;

/// Thermal noise power spectral density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangular obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Building {
    pub min_corner: Position,
    pub max_corner: Position,
}

impl Building {
    pub fn new(min_corner: Position, max_corner: Position) -> Result<Self> {
        if !(min_corner.is_finite() && max_corner.is_finite()) {
            return Err(SimError::Scenario("building corner is not finite".into()));
        }
        if !(min_corner.x < max_corner.x && min_corner.y < max_corner.y) {
            return Err(SimError::Scenario(format!(
                "building min corner ({}, {}) is not below max corner ({}, {})",
                min_corner.x, min_corner.y, max_corner.x, max_corner.y
            )));
        }
        Ok(Building {
            min_corner,
            max_corner,
        })
    }

    pub fn contains_strictly(&self, p: Position) -> bool {
        p.x > self.min_corner.x
            && p.x < self.max_corner.x
            && p.y > self.min_corner.y
            && p.y < self.max_corner.y
    }

    /// Whether segment `a`-`b` passes through the open interior.
    ///
    /// Liang-Barsky clipping against the closed rectangle gives the chord
    /// `[t0, t1]`. A chord of a convex set either lies in a boundary face or
    /// has its whole relative interior inside the open set, so testing the
    /// chord midpoint decides the open-set question exactly.
    pub fn blocks(&self, a: Position, b: Position) -> bool {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        let clips = [
            (-dx, a.x - self.min_corner.x),
            (dx, self.max_corner.x - a.x),
            (-dy, a.y - self.min_corner.y),
            (dy, self.max_corner.y - a.y),
        ];
        for (p, q) in clips {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        if t0 >= t1 {
            return false;
        }
        let tm = 0.5 * (t0 + t1);
        self.contains_strictly(Position::new(a.x + tm * dx, a.y + tm * dy))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnbKind {
    Lte,
    Mmwave,
}

impl EnbKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnbKind::Lte => "lte",
            EnbKind::Mmwave => "mmwave",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnbConfig {
    pub id: EnbId,
    pub kind: EnbKind,
    pub position: Position,
    pub tx_power_dbm: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub antenna_gain_db: f64,
}

impl EnbConfig {
    /// LTE defaults: 2.1 GHz downlink carrier, 20 MHz, 30 dBm, NF 9 dB.
    pub fn lte(id: EnbId, position: Position) -> Self {
        EnbConfig {
            id,
            kind: EnbKind::Lte,
            position,
            tx_power_dbm: 30.0,
            carrier_hz: 2.1e9,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            antenna_gain_db: 0.0,
        }
    }

    /// mmWave defaults: 28 GHz, 1 GHz, 30 dBm, NF 5 dB, 25 dB beamforming gain.
    pub fn mmwave(id: EnbId, position: Position) -> Self {
        EnbConfig {
            id,
            kind: EnbKind::Mmwave,
            position,
            tx_power_dbm: 30.0,
            carrier_hz: 28e9,
            bandwidth_hz: 1e9,
            noise_figure_db: 5.0,
            antenna_gain_db: 25.0,
        }
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        noise_floor_dbm(self.bandwidth_hz, self.noise_figure_db)
    }
}

/// Constant-velocity straight path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UePath {
    pub start: Position,
    pub end: Position,
    /// m/s
    pub speed: f64,
}

impl UePath {
    pub fn new(start: Position, end: Position, speed: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) {
            return Err(SimError::Scenario("UE path endpoint is not finite".into()));
        }
        if start == end {
            return Err(SimError::Scenario("UE path start equals end".into()));
        }
        if !(speed.is_finite() && speed > 0.0) {
            return Err(SimError::config("ue_speed", format!("must be > 0, got {speed}")));
        }
        Ok(UePath { start, end, speed })
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.length() / self.speed)
    }

    /// Position at `t`; the UE stays at `end` once it gets there.
    pub fn position_at(&self, t: SimTime) -> Position {
        let len = self.length();
        let frac = (self.speed * t.as_secs_f64() / len).min(1.0);
        Position::new(
            self.start.x + frac * (self.end.x - self.start.x),
            self.start.y + frac * (self.end.y - self.start.y),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub enbs: Vec<EnbConfig>,
    pub buildings: Vec<Building>,
    pub path_start: Position,
    pub path_end: Position,
}

impl Default for Scenario {
    /// Three-cell deployment: the LTE macro (id 1) sits above the middle of the
    /// UE path, mmWave eNB 2 to the left and mmWave eNB 3 to the right. Two
    /// buildings lie between the path and the cells. The UE moves from
    /// (100, -5) to (300, -5).
    fn default() -> Self {
        Scenario {
            enbs: vec![
                EnbConfig::lte(1, Position::new(200.0, 120.0)),
                EnbConfig::mmwave(2, Position::new(0.0, 40.0)),
                EnbConfig::mmwave(3, Position::new(400.0, 40.0)),
            ],
            buildings: vec![
                Building {
                    min_corner: Position::new(120.0, 5.0),
                    max_corner: Position::new(195.0, 20.0),
                },
                Building {
                    min_corner: Position::new(205.0, 5.0),
                    max_corner: Position::new(280.0, 20.0),
                },
            ],
            path_start: Position::new(100.0, -5.0),
            path_end: Position::new(300.0, -5.0),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let lte = self.enbs.iter().filter(|e| e.kind == EnbKind::Lte).count();
        if lte != 1 {
            return Err(SimError::Scenario(format!(
                "exactly one LTE eNB required, found {lte}"
            )));
        }
        if !self.enbs.iter().any(|e| e.kind == EnbKind::Mmwave) {
            return Err(SimError::Scenario("at least one mmWave eNB required".into()));
        }
        for (i, e) in self.enbs.iter().enumerate() {
            if self.enbs[..i].iter().any(|o| o.id == e.id) {
                return Err(SimError::Scenario(format!("duplicate eNB id {}", e.id)));
            }
            if !e.position.is_finite() {
                return Err(SimError::Scenario(format!("eNB {} position not finite", e.id)));
            }
            if !(e.bandwidth_hz > 0.0 && e.bandwidth_hz.is_finite()) {
                return Err(SimError::Scenario(format!("eNB {} bandwidth must be > 0", e.id)));
            }
            if !(e.carrier_hz > 0.0 && e.carrier_hz.is_finite()) {
                return Err(SimError::Scenario(format!("eNB {} carrier must be > 0", e.id)));
            }
        }
        if self.path_start == self.path_end {
            return Err(SimError::Scenario("UE path start equals end".into()));
        }
        for b in &self.buildings {
            Building::new(b.min_corner, b.max_corner)?;
            for e in &self.enbs {
                if b.contains_strictly(e.position) {
                    return Err(SimError::Scenario(format!("eNB {} lies inside a building", e.id)));
                }
            }
            if b.blocks(self.path_start, self.path_end)
                || b.contains_strictly(self.path_start)
                || b.contains_strictly(self.path_end)
            {
                return Err(SimError::Scenario("UE path crosses a building".into()));
            }
        }
        Ok(())
    }

    pub fn lte(&self) -> &EnbConfig {
        self.enbs
            .iter()
            .find(|e| e.kind == EnbKind::Lte)
            .expect("validated scenario has an LTE eNB")
    }

    pub fn enb(&self, id: EnbId) -> Option<&EnbConfig> {
        self.enbs.iter().find(|e| e.id == id)
    }

    pub fn mmwave_ids(&self) -> impl Iterator<Item = EnbId> + '_ {
        self.enbs
            .iter()
            .filter(|e| e.kind == EnbKind::Mmwave)
            .map(|e| e.id)
    }

    pub fn path(&self, speed: f64) -> Result<UePath> {
        UePath::new(self.path_start, self.path_end, speed)
    }

    /// True iff the segment `a`-`b` crosses no building interior.
    pub fn is_los(&self, a: Position, b: Position) -> bool {
        !self.buildings.iter().any(|bld| bld.blocks(a, b))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            SimError::Parse { message, .. } => SimError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses the scenario text format:
    ///
    /// ```toml
    /// [[enb]]
    /// id = 1
    /// kind = "lte"
    /// x = 200.0
    /// y = 120.0
    ///
    /// [[building]]
    /// min_x = 120.0
    /// min_y = 5.0
    /// max_x = 195.0
    /// max_y = 20.0
    ///
    /// [ue_path]
    /// start_x = 100.0
    /// start_y = -5.0
    /// end_x = 300.0
    /// end_y = -5.0
    /// ```
    ///
    /// Radio fields of `[[enb]]` blocks (`tx_power_dbm`, `carrier_hz`,
    /// `bandwidth_hz`, `noise_figure_db`, `antenna_gain_db`) default per kind.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| SimError::Parse {
            path: "<scenario>".into(),
            message: e.to_string(),
        })?;
        let enbs = file
            .enb
            .into_iter()
            .map(|e| {
                let pos = Position::new(e.x, e.y);
                let mut cfg = match e.kind {
                    EnbKind::Lte => EnbConfig::lte(e.id, pos),
                    EnbKind::Mmwave => EnbConfig::mmwave(e.id, pos),
                };
                if let Some(v) = e.tx_power_dbm {
                    cfg.tx_power_dbm = v;
                }
                if let Some(v) = e.carrier_hz {
                    cfg.carrier_hz = v;
                }
                if let Some(v) = e.bandwidth_hz {
                    cfg.bandwidth_hz = v;
                }
                if let Some(v) = e.noise_figure_db {
                    cfg.noise_figure_db = v;
                }
                if let Some(v) = e.antenna_gain_db {
                    cfg.antenna_gain_db = v;
                }
                cfg
            })
            .collect();
        let buildings = file
            .building
            .into_iter()
            .map(|b| Building::new(Position::new(b.min_x, b.min_y), Position::new(b.max_x, b.max_y)))
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario {
            enbs,
            buildings,
            path_start: Position::new(file.ue_path.start_x, file.ue_path.start_y),
            path_end: Position::new(file.ue_path.end_x, file.ue_path.end_y),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    enb: Vec<EnbBlock>,
    #[serde(default)]
    building: Vec<BuildingBlock>,
    ue_path: PathBlock,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnbBlock {
    id: EnbId,
    kind: EnbKind,
    x: f64,
    y: f64,
    tx_power_dbm: Option<f64>,
    carrier_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    noise_figure_db: Option<f64>,
    antenna_gain_db: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingBlock {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathBlock {
    start_x: f64,
    start_y: f64,
    end_x: f64,
    end_y: f64,
}

/// Pathloss in dB. Distances below 1 m are clamped to 1 m.
///
/// * mmWave LOS: `61.4 + 20 log10(d)`
/// * mmWave NLOS: `72.0 + 29.2 log10(d)`
/// * LTE (either state): `128.1 + 37.6 log10(d / 1000)`
pub fn pathloss_db(kind: EnbKind, los: bool, distance_m: f64) -> f64 {
    let d = distance_m.max(1.0);
    match (kind, los) {
        (EnbKind::Mmwave, true) => 61.4 + 20.0 * d.log10(),
        (EnbKind::Mmwave, false) => 72.0 + 29.2 * d.log10(),
        (EnbKind::Lte, _) => 128.1 + 37.6 * (d / 1000.0).log10(),
    }
}

/// `-174 dBm/Hz + 10 log10(B) + NF`
pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Link SNR for a given pathloss and shadowing loss.
pub fn link_snr_db(enb: &EnbConfig, pathloss_db: f64, shadow_db: f64) -> f64 {
    enb.tx_power_dbm + enb.antenna_gain_db - pathloss_db - shadow_db - enb.noise_floor_dbm()
}

/// SNR of `enb` at `ue`, with LOS state taken from the scenario geometry.
pub fn snr_db(scenario: &Scenario, enb: &EnbConfig, ue: Position, shadow_db: f64) -> f64 {
    let los = scenario.is_los(enb.position, ue);
    let pl = pathloss_db(enb.kind, los, enb.position.distance(ue));
    link_snr_db(enb, pl, shadow_db)
}

/// Shadowing parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowingParams {
    pub sigma_los_db: f64,
    pub sigma_nlos_db: f64,
    pub decorrelation_m: f64,
}

impl Default for ShadowingParams {
    fn default() -> Self {
        ShadowingParams {
            sigma_los_db: 4.0,
            sigma_nlos_db: 7.0,
            decorrelation_m: 10.0,
        }
    }
}

impl ShadowingParams {
    /// LTE links use the LOS deviation regardless of state.
    pub fn sigma(&self, kind: EnbKind, los: bool) -> f64 {
        match (kind, los) {
            (EnbKind::Mmwave, false) => self.sigma_nlos_db,
            _ => self.sigma_los_db,
        }
    }
}

/// Unit-variance Gauss-Markov process indexed by travelled distance:
/// `u_k = rho u_{k-1} + sqrt(1 - rho^2) z_k` with `rho = exp(-dd / d_corr)`.
/// The shadowing loss is `sigma * u_k`, so a change in LOS state rescales the
/// deviation without breaking the spatial correlation.
#[derive(Clone, Debug)]
pub struct Shadowing {
    decorrelation_m: f64,
    state: Option<(Position, f64)>,
}

impl Shadowing {
    pub fn new(decorrelation_m: f64) -> Self {
        Shadowing {
            decorrelation_m,
            state: None,
        }
    }

    /// Advances to `position` and returns the shadowing loss in dB.
    /// Exactly one normal is drawn per call.
    pub fn sample(&mut self, stream: &mut RngStream, position: Position, sigma_db: f64) -> f64 {
        let z: f64 = stream.sample(&StandardNormal);
        let u = match self.state {
            None => z,
            Some((last, u_prev)) => {
                let rho = (-last.distance(position) / self.decorrelation_m).exp();
                rho * u_prev + (1.0 - rho * rho).sqrt() * z
            }
        };
        self.state = Some((position, u));
        sigma_db * u
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrSample {
    pub time: SimTime,
    pub enb_id: EnbId,
    pub snr_db: f64,
}

/// Samples the channel of every eNB at the UE's current position.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    scenario: Scenario,
    path: UePath,
    shadowing: ShadowingParams,
    processes: Vec<Shadowing>,
    trace: Vec<SnrSample>,
    keep_trace: bool,
}

impl ChannelModel {
    pub fn new(scenario: Scenario, path: UePath, shadowing: ShadowingParams) -> Self {
        let processes = scenario
            .enbs
            .iter()
            .map(|_| Shadowing::new(shadowing.decorrelation_m))
            .collect();
        ChannelModel {
            scenario,
            path,
            shadowing,
            processes,
            trace: Vec::new(),
            keep_trace: true,
        }
    }

    pub fn without_trace(mut self) -> Self {
        self.keep_trace = false;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn path(&self) -> &UePath {
        &self.path
    }

    pub fn trace(&self) -> &[SnrSample] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<SnrSample> {
        std::mem::take(&mut self.trace)
    }

    /// One sample per eNB, in scenario order, at the UE position for `time`.
    pub fn sample_channel(&mut self, stream: &mut RngStream, time: SimTime) -> Vec<SnrSample> {
        let ue = self.path.position_at(time);
        let mut out = Vec::with_capacity(self.scenario.enbs.len());
        for (enb, proc_) in self.scenario.enbs.iter().zip(self.processes.iter_mut()) {
            let los = self.scenario.is_los(enb.position, ue);
            let sigma = self.shadowing.sigma(enb.kind, los);
            let shadow = proc_.sample(stream, ue, sigma);
            let pl = pathloss_db(enb.kind, los, enb.position.distance(ue));
            out.push(SnrSample {
                time,
                enb_id: enb.id,
                snr_db: link_snr_db(enb, pl, shadow),
            });
        }
        if self.keep_trace {
            self.trace.extend_from_slice(&out);
        }
        out
    }
}
