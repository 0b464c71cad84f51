//! Control plane: the LTE coordinator's view of the mmWave cells, the
//! mobility decision rule and signaling accounting.
//!
//! Message flows themselves (switch and handover procedures) are driven by
//! the event loop in [`crate::network`].

use std::collections::BTreeMap;

use crate::channel::EnbId;
use crate::config::Mode;
use crate::sim::SimTime;

/// Latest SNR the coordinator holds for one mmWave cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementEntry {
    pub enb_id: EnbId,
    pub snr_db: f64,
    /// Arrival time of the report at the coordinator.
    pub reported_at: SimTime,
}

/// Per-mmWave-cell measurements for the UE, at most one entry per cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoordinatorTable {
    entries: BTreeMap<EnbId, MeasurementEntry>,
}

impl CoordinatorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, entry: MeasurementEntry) {
        self.entries.insert(entry.enb_id, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EnbId) -> Option<&MeasurementEntry> {
        self.entries.get(&id)
    }

    /// Entries no older than `max_age` at `now`, in cell-id order.
    pub fn fresh(&self, now: SimTime, max_age: SimTime) -> impl Iterator<Item = &MeasurementEntry> {
        self.entries
            .values()
            .filter(move |e| now.saturating_sub(e.reported_at) <= max_age)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    MeasReport,
    SwitchCmd,
    SwitchAck,
    HoRequest,
    HoAck,
    RrcReconf,
    RachMsg,
    PathSwitchReq,
    PathSwitchAck,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::MeasReport => "MEAS_REPORT",
            MessageKind::SwitchCmd => "SWITCH_CMD",
            MessageKind::SwitchAck => "SWITCH_ACK",
            MessageKind::HoRequest => "HO_REQUEST",
            MessageKind::HoAck => "HO_ACK",
            MessageKind::RrcReconf => "RRC_RECONF",
            MessageKind::RachMsg => "RACH_MSG",
            MessageKind::PathSwitchReq => "PATH_SWITCH_REQ",
            MessageKind::PathSwitchAck => "PATH_SWITCH_ACK",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessagePath {
    AirLte,
    AirMmwave,
    X2,
    S1Mme,
}

impl MessagePath {
    pub const ALL: [MessagePath; 4] = [
        MessagePath::AirLte,
        MessagePath::AirMmwave,
        MessagePath::X2,
        MessagePath::S1Mme,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessagePath::AirLte => "AIR_LTE",
            MessagePath::AirMmwave => "AIR_MMWAVE",
            MessagePath::X2 => "X2",
            MessagePath::S1Mme => "S1_MME",
        }
    }

    pub fn is_air(self) -> bool {
        matches!(self, MessagePath::AirLte | MessagePath::AirMmwave)
    }
}

/// Byte size of each signaling message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MessageSizes {
    pub meas_report: u32,
    pub switch_cmd: u32,
    pub switch_ack: u32,
    pub ho_request: u32,
    pub ho_ack: u32,
    pub rrc_reconf: u32,
    pub rach_msg: u32,
    pub path_switch_req: u32,
    pub path_switch_ack: u32,
}

impl Default for MessageSizes {
    fn default() -> Self {
        MessageSizes {
            meas_report: 32,
            switch_cmd: 16,
            switch_ack: 16,
            ho_request: 64,
            ho_ack: 64,
            rrc_reconf: 128,
            rach_msg: 20,
            path_switch_req: 64,
            path_switch_ack: 64,
        }
    }
}

impl MessageSizes {
    pub fn size(&self, kind: MessageKind) -> u32 {
        match kind {
            MessageKind::MeasReport => self.meas_report,
            MessageKind::SwitchCmd => self.switch_cmd,
            MessageKind::SwitchAck => self.switch_ack,
            MessageKind::HoRequest => self.ho_request,
            MessageKind::HoAck => self.ho_ack,
            MessageKind::RrcReconf => self.rrc_reconf,
            MessageKind::RachMsg => self.rach_msg,
            MessageKind::PathSwitchReq => self.path_switch_req,
            MessageKind::PathSwitchAck => self.path_switch_ack,
        }
    }
}

/// Node identifier used in the message log: an eNB id, the UE or the MME.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Enb(EnbId),
    Ue,
    Mme,
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Enb(id) => write!(f, "enb{id}"),
            Node::Ue => f.write_str("ue"),
            Node::Mme => f.write_str("mme"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlMessage {
    pub time: SimTime,
    pub kind: MessageKind,
    pub path: MessagePath,
    pub size: u32,
    pub src: Node,
    pub dst: Node,
}

/// Per-path byte and message counters, plus an optional full log.
#[derive(Clone, Debug, Default)]
pub struct SignalingLedger {
    bytes: BTreeMap<MessagePath, u64>,
    counts: BTreeMap<MessageKind, u64>,
    log: Vec<ControlMessage>,
    keep_log: bool,
}

impl SignalingLedger {
    pub fn new(keep_log: bool) -> Self {
        SignalingLedger {
            keep_log,
            ..Default::default()
        }
    }

    pub fn account(&mut self, msg: ControlMessage) {
        *self.bytes.entry(msg.path).or_default() += u64::from(msg.size);
        *self.counts.entry(msg.kind).or_default() += 1;
        if self.keep_log {
            self.log.push(msg);
        }
    }

    pub fn bytes(&self, path: MessagePath) -> u64 {
        self.bytes.get(&path).copied().unwrap_or(0)
    }

    pub fn air_bytes(&self) -> u64 {
        self.bytes(MessagePath::AirLte) + self.bytes(MessagePath::AirMmwave)
    }

    pub fn count(&self, kind: MessageKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn log(&self) -> &[ControlMessage] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<ControlMessage> {
        std::mem::take(&mut self.log)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Steady,
    /// DC: a switch command is in flight.
    Switching,
    /// X2 preparation and RRC reconfiguration.
    HoPrep,
    /// Random access at the target.
    HoExec,
    /// MME path switch.
    HoPathSwitch,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Steady => "STEADY",
            Phase::Switching => "SWITCHING",
            Phase::HoPrep => "HO_PREP",
            Phase::HoExec => "HO_EXEC",
            Phase::HoPathSwitch => "HO_PATH_SWITCH",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MobilityState {
    pub mode: Mode,
    pub phase: Phase,
    /// Cell currently carrying the UE's data.
    pub serving_cell: EnbId,
    /// DC only: the mmWave cell the UE's mmWave stack is attached to.
    pub secondary: Option<EnbId>,
    pub data_blocked: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    None,
    SwitchToLte,
    SwitchToMmwave(EnbId),
    Handover(EnbId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionParams {
    pub outage_threshold_db: f64,
    pub hysteresis_db: f64,
    pub recovery_margin_db: f64,
    /// Entries older than this are ignored.
    pub max_report_age: SimTime,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            outage_threshold_db: -5.0,
            hysteresis_db: 3.0,
            recovery_margin_db: 2.0,
            max_report_age: SimTime::from_ms(10),
        }
    }
}

/// The coordinator's mobility rule.
///
/// * Serving mmWave cell in outage: move to the best other mmWave cell if it
///   clears `threshold + recovery_margin` and beats the serving SNR by more
///   than the hysteresis, otherwise fall back to LTE
///   (a DC switch, or an HH handover to the LTE cell).
/// * Serving mmWave cell usable: hand over to another mmWave cell only if it
///   beats the serving SNR by more than the hysteresis.
/// * Serving on LTE: go (back) to the best mmWave cell once it clears
///   `threshold + recovery_margin`. A DC UE prefers its attached secondary
///   cell unless another cell beats it by more than the hysteresis; moving to
///   the secondary is a switch, moving anywhere else a handover.
///
/// Only fresh entries count and nothing is decided outside the steady phase.
pub fn decide(
    table: &CoordinatorTable,
    now: SimTime,
    state: &MobilityState,
    lte_id: EnbId,
    params: &DecisionParams,
) -> Decision {
    if state.phase != Phase::Steady {
        return Decision::None;
    }
    let fresh: Vec<&MeasurementEntry> = table.fresh(now, params.max_report_age).collect();
    if fresh.is_empty() {
        return Decision::None;
    }
    let thr = params.outage_threshold_db;
    let recover = thr + params.recovery_margin_db;
    let best_excluding = |skip: Option<EnbId>| {
        fresh
            .iter()
            .filter(|e| Some(e.enb_id) != skip)
            .copied()
            .fold(None::<&MeasurementEntry>, |acc, e| match acc {
                Some(a) if a.snr_db >= e.snr_db => Some(a),
                _ => Some(e),
            })
    };

    if state.serving_cell != lte_id {
        let serving = state.serving_cell;
        let Some(cur) = fresh.iter().find(|e| e.enb_id == serving) else {
            return Decision::None;
        };
        let other = best_excluding(Some(serving));
        if cur.snr_db < thr {
            return match other {
                Some(o) if o.snr_db >= recover && o.snr_db > cur.snr_db + params.hysteresis_db => {
                    Decision::Handover(o.enb_id)
                }
                _ => match state.mode {
                    Mode::Dc => Decision::SwitchToLte,
                    Mode::Hh => Decision::Handover(lte_id),
                },
            };
        }
        return match other {
            Some(o) if o.snr_db > cur.snr_db + params.hysteresis_db => Decision::Handover(o.enb_id),
            _ => Decision::None,
        };
    }

    let Some(best) = best_excluding(None) else {
        return Decision::None;
    };
    match state.mode {
        Mode::Hh => {
            if best.snr_db >= recover {
                Decision::Handover(best.enb_id)
            } else {
                Decision::None
            }
        }
        Mode::Dc => {
            let sec = state
                .secondary
                .and_then(|s| fresh.iter().find(|e| e.enb_id == s).copied());
            if let Some(s) = sec {
                let other = best_excluding(Some(s.enb_id));
                let better_other = other.filter(|o| o.snr_db > s.snr_db + params.hysteresis_db);
                match better_other {
                    Some(o) if o.snr_db >= recover => return Decision::Handover(o.enb_id),
                    _ if s.snr_db >= recover => return Decision::SwitchToMmwave(s.enb_id),
                    _ => {}
                }
            }
            if best.snr_db >= recover {
                if Some(best.enb_id) == state.secondary {
                    Decision::SwitchToMmwave(best.enb_id)
                } else {
                    Decision::Handover(best.enb_id)
                }
            } else {
                Decision::None
            }
        }
    }
}
