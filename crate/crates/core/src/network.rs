//! One simulated run: the UE moving through the scenario, the user plane, the
//! LTE coordinator and the DC / HH mobility procedures, driven by a single
//! event loop.
//!
//! Packet arrivals from the core and X2 arrivals are not individual events:
//! before every event the run catches up on all arrivals due by then, in time
//! order. Air transmissions happen in 1 ms scheduling epochs.

use crate::channel::{ChannelModel, EnbId, EnbKind, SnrSample};
use crate::config::{Mode, SimulationParams};
use crate::control::{
    decide, ControlMessage, CoordinatorTable, Decision, DecisionParams, MeasurementEntry, MessageKind,
    MessagePath, MobilityState, Node, Phase, SignalingLedger,
};
use crate::dataplane::{
    BackhaulKind, BackhaulLink, DataPlane, DrainOutcome, DropReason, Leg, PdcpPacket, PdcpRoute,
};
use crate::error::Result;
use crate::metrics::{
    finalize_run, AssociationSegment, CbrProfile, MetricsCollector, RunMetrics, RunTotals,
};
use crate::phy::{self, LinkState, PhyParams};
use crate::sim::{Engine, Event, EventTag, RngStreams, SimTime};

/// Per-run switches that are not part of the experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Record one line per processed event.
    pub trace_events: bool,
    pub keep_channel_trace: bool,
    pub keep_messages: bool,
    pub keep_packets: bool,
    /// Let the coordinator act on measurement reports. Disabled for
    /// controlled experiments driven by [`Simulation::force_handover`].
    pub auto_mobility: bool,
    /// Pin the random-access opportunity draw to this value in `[0, 1)`.
    pub rach_draw: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            trace_events: false,
            keep_channel_trace: true,
            keep_messages: true,
            keep_packets: false,
            auto_mobility: true,
            rach_draw: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcedureKind {
    Switch,
    Handover,
    /// Re-attachment to LTE after a radio link failure.
    Recovery,
}

impl ProcedureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcedureKind::Switch => "switch",
            ProcedureKind::Handover => "handover",
            ProcedureKind::Recovery => "recovery",
        }
    }
}

/// One mobility procedure from decision to control completion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcedureRecord {
    pub kind: ProcedureKind,
    pub start: SimTime,
    /// `None` when the procedure was aborted.
    pub completed: Option<SimTime>,
    pub source: EnbId,
    pub target: EnbId,
    pub rlf: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketOutcome {
    Delivered(SimTime),
    Dropped(DropReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketRecord {
    pub sn: u64,
    pub created: SimTime,
    pub outcome: PacketOutcome,
    pub leg: Leg,
    pub retx_count: u8,
}

/// Counters for the run-time invariants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InvariantReport {
    /// Deliveries out of order among packets that stayed on their first leg.
    pub fifo_violations: u64,
    pub max_bytes_queued: u64,
    pub rlc_capacity: u64,
    /// S1-MME messages sent in a DC run.
    pub dc_s1_messages: u64,
    /// Epochs where data was blocked outside the random-access phase.
    pub blocked_outside_exec: u64,
    /// Deliveries faster than the minimum path latency.
    pub latency_floor_violations: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub channel_trace: Vec<SnrSample>,
    pub messages: Vec<ControlMessage>,
    pub packets: Vec<PacketRecord>,
    pub event_trace: Option<String>,
    pub procedures: Vec<ProcedureRecord>,
    /// Intervals during which the UE could not receive data.
    pub blocked: Vec<(SimTime, SimTime)>,
    pub invariants: InvariantReport,
    /// Signaling bytes per path.
    pub signaling: Vec<(MessagePath, u64)>,
    pub channel_draws: u64,
    pub traffic_draws: u64,
    pub events_processed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Action {
    Epoch,
    Sample,
    Report,
    ReportArrival { enb: EnbId, snr_db: f64 },
    Forced { target: EnbId },
    SwitchCmd { id: u64 },
    SwitchCmdRx { id: u64 },
    SwitchAck { id: u64 },
    SwitchAckRx { id: u64 },
    HoRequestRx { id: u64 },
    HoAckRx { id: u64 },
    RrcReconf { id: u64 },
    RrcReconfRx { id: u64 },
    Rach { id: u64 },
    RachDone { id: u64 },
    PathSwitchReqRx { id: u64 },
    PathSwitchAckRx { id: u64 },
}

impl EventTag for Action {
    fn tag(&self) -> &'static str {
        match self {
            Action::Epoch => "epoch",
            Action::Sample => "channel_sample",
            Action::Report => "meas_report_tx",
            Action::ReportArrival { .. } => "meas_report_rx",
            Action::Forced { .. } => "forced_handover",
            Action::SwitchCmd { .. } => "switch_cmd_tx",
            Action::SwitchCmdRx { .. } => "switch_cmd_rx",
            Action::SwitchAck { .. } => "switch_ack_tx",
            Action::SwitchAckRx { .. } => "switch_ack_rx",
            Action::HoRequestRx { .. } => "ho_request_rx",
            Action::HoAckRx { .. } => "ho_ack_rx",
            Action::RrcReconf { .. } => "rrc_reconf_tx",
            Action::RrcReconfRx { .. } => "rrc_reconf_rx",
            Action::Rach { .. } => "rach_start",
            Action::RachDone { .. } => "rach_done",
            Action::PathSwitchReqRx { .. } => "path_switch_req_rx",
            Action::PathSwitchAckRx { .. } => "path_switch_ack_rx",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ProcState {
    Switch(PdcpRoute),
    DcHandover,
    HhHandover,
    Recovery,
}

#[derive(Clone, Copy, Debug)]
struct Procedure {
    id: u64,
    state: ProcState,
    start: SimTime,
    source: EnbId,
    target: EnbId,
    attempts: u32,
}

/// Stable 64-bit fingerprint of a configuration, ignoring the seed.
pub fn config_id(params: &SimulationParams) -> u64 {
    let mut p = params.clone();
    p.master_seed = 0;
    p.mode = Mode::Dc;
    format!("{p:?}")
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
}

struct World {
    params: SimulationParams,
    phy: PhyParams,
    decision: DecisionParams,
    options: RunOptions,
    mode: Mode,
    horizon: SimTime,
    run_index: u32,
    seed: u64,

    lte_id: EnbId,
    cell_ids: Vec<EnbId>,
    kinds: Vec<EnbKind>,
    bandwidths: Vec<f64>,
    links: Vec<LinkState>,
    channel: ChannelModel,
    streams: RngStreams,
    prev_outage: Option<bool>,
    outage_events: u64,

    dp: DataPlane,
    profile: CbrProfile,
    next_sn: u64,
    total_packets: u64,
    /// Core-network anchor for packets created from the given time on.
    anchor_history: Vec<(SimTime, EnbId)>,
    anchor_cursor: usize,

    route: PdcpRoute,
    state: MobilityState,
    /// HH: the cell the UE is attached to.
    attached: Option<EnbId>,
    /// HH: the cell that should hold the UE's data.
    home: EnbId,
    table: CoordinatorTable,
    ledger: SignalingLedger,
    proc_: Option<Procedure>,
    next_proc_id: u64,
    pending: Option<Decision>,

    collector: MetricsCollector,
    drain_out: DrainOutcome,
    association: Vec<(SimTime, EnbId)>,
    procedures: Vec<ProcedureRecord>,
    blocked: Vec<(SimTime, SimTime)>,
    blocked_since: Option<SimTime>,
    handovers: u64,
    switches: u64,
    rlf: u64,
    fifo_last: [Option<u64>; 2],
    invariants: InvariantReport,
    packets: Vec<PacketRecord>,
}

/// A configured run, ready to execute.
pub struct Simulation {
    engine: Engine<Action>,
    world: World,
}

impl Simulation {
    /// Prepares run `run_index` of `params` with the given per-run seed.
    pub fn new(params: &SimulationParams, seed: u64, run_index: u32, options: RunOptions) -> Result<Self> {
        params.validate()?;
        let horizon = params.horizon()?;
        let scenario = params.scenario.clone();
        let path = scenario.path(params.ue_speed)?;
        let mut channel = ChannelModel::new(scenario.clone(), path, params.shadowing);
        if !options.keep_channel_trace {
            channel = channel.without_trace();
        }
        let lte_id = scenario.lte().id;
        let cell_ids: Vec<EnbId> = scenario.enbs.iter().map(|e| e.id).collect();
        let kinds: Vec<EnbKind> = scenario.enbs.iter().map(|e| e.kind).collect();
        let bandwidths: Vec<f64> = scenario.enbs.iter().map(|e| e.bandwidth_hz).collect();
        let cells: Vec<(EnbId, EnbKind)> = cell_ids.iter().copied().zip(kinds.iter().copied()).collect();
        let mut x2 = BackhaulLink::new(BackhaulKind::X2, params.d_x2);
        x2.mtu = params.backhaul_mtu;
        let mut dp = DataPlane::new(&cells, params.b_rlc, params.max_retx, x2);
        dp.keep_drop_log(options.keep_packets);
        let profile = CbrProfile::new(params.udp_size, params.udp_interval);
        let phy = params.phy();
        let mut engine = Engine::new();
        if options.trace_events {
            engine = engine.with_trace();
        }

        let mut world = World {
            params: params.clone(),
            phy,
            decision: params.decision(),
            mode: params.mode,
            horizon,
            run_index,
            seed,
            lte_id,
            links: cell_ids.iter().map(|&id| LinkState::dead(id)).collect(),
            cell_ids,
            kinds,
            bandwidths,
            channel,
            streams: RngStreams::new(seed),
            prev_outage: None,
            outage_events: 0,
            dp,
            profile,
            next_sn: 0,
            total_packets: profile.count(horizon),
            anchor_history: Vec::new(),
            anchor_cursor: 0,
            route: PdcpRoute::lte(),
            state: MobilityState {
                mode: params.mode,
                phase: Phase::Steady,
                serving_cell: lte_id,
                secondary: None,
                data_blocked: false,
            },
            attached: None,
            home: lte_id,
            table: CoordinatorTable::new(),
            ledger: SignalingLedger::new(options.keep_messages),
            proc_: None,
            next_proc_id: 0,
            pending: None,
            collector: MetricsCollector::new(params.window, horizon),
            drain_out: DrainOutcome::default(),
            association: Vec::new(),
            procedures: Vec::new(),
            blocked: Vec::new(),
            blocked_since: None,
            handovers: 0,
            switches: 0,
            rlf: 0,
            fifo_last: [None; 2],
            invariants: InvariantReport {
                rlc_capacity: params.b_rlc,
                ..Default::default()
            },
            packets: Vec::new(),
            options,
        };
        world.sample_channel(SimTime::ZERO);
        world.initial_attach();

        engine.schedule(SimTime::ZERO, Action::Epoch)?;
        engine.schedule(SimTime::ZERO, Action::Report)?;
        if params.channel_period < horizon {
            engine.schedule(params.channel_period, Action::Sample)?;
        }
        Ok(Simulation { engine, world })
    }

    /// Queues a handover (HH) or a move of the data path (DC) to `target` at
    /// time `at`. Ignored if a procedure is running at that time.
    pub fn force_handover(&mut self, at: SimTime, target: EnbId) -> Result<()> {
        self.engine.schedule(at, Action::Forced { target })?;
        Ok(())
    }

    pub fn horizon(&self) -> SimTime {
        self.world.horizon
    }

    pub fn run(mut self) -> Result<RunOutput> {
        let horizon = self.world.horizon;
        let Simulation { engine, world } = &mut self;
        engine.run_until(horizon, |eng, ev| world.handle(eng, ev));
        let processed = engine.processed();
        let trace = engine.take_trace();
        self.world.finish(processed, trace)
    }
}

impl World {
    fn idx(&self, id: EnbId) -> usize {
        self.cell_ids.iter().position(|&c| c == id).expect("known cell")
    }

    fn kind(&self, id: EnbId) -> EnbKind {
        self.kinds[self.idx(id)]
    }

    fn link(&self, id: EnbId) -> LinkState {
        self.links[self.idx(id)]
    }

    fn now_anchor(&self) -> EnbId {
        self.anchor_history.last().map(|&(_, c)| c).unwrap_or(self.lte_id)
    }

    fn data_home(&self) -> EnbId {
        match self.mode {
            Mode::Dc => self.route.cell(self.lte_id),
            Mode::Hh => self.home,
        }
    }

    fn best_mmwave(&self) -> Option<(EnbId, f64)> {
        self.cell_ids
            .iter()
            .zip(&self.kinds)
            .zip(&self.links)
            .filter(|((_, k), _)| **k == EnbKind::Mmwave)
            .map(|((&id, _), l)| (id, l.snr_db))
            .fold(None, |acc, (id, snr)| match acc {
                Some((_, s)) if s >= snr => acc,
                _ => Some((id, snr)),
            })
    }

    fn initial_attach(&mut self) {
        let recover = self.params.outage_threshold_db + self.params.recovery_margin_db;
        let best = self.best_mmwave();
        let start_cell = match best {
            Some((id, snr)) if snr >= recover => id,
            _ => self.lte_id,
        };
        match self.mode {
            Mode::Dc => {
                self.state.secondary = best
                    .filter(|&(_, snr)| !self.phy.in_outage(snr))
                    .map(|(id, _)| id);
                if start_cell != self.lte_id {
                    self.route = PdcpRoute::mmwave(start_cell);
                }
                self.anchor_history.push((SimTime::ZERO, self.lte_id));
            }
            Mode::Hh => {
                self.attached = Some(start_cell);
                self.home = start_cell;
                self.anchor_history.push((SimTime::ZERO, start_cell));
            }
        }
        self.state.serving_cell = start_cell;
        self.association.push((SimTime::ZERO, start_cell));
    }

    fn note_association(&mut self, now: SimTime, cell: EnbId) {
        if self.association.last().is_some_and(|&(_, c)| c == cell) {
            return;
        }
        if self.association.last().is_some_and(|&(t, _)| t == now) {
            self.association.pop();
            if self.association.last().is_some_and(|&(_, c)| c == cell) {
                return;
            }
        }
        self.association.push((now, cell));
    }

    fn set_blocked(&mut self, now: SimTime, blocked: bool) {
        if blocked == self.state.data_blocked {
            return;
        }
        self.state.data_blocked = blocked;
        if blocked {
            self.blocked_since = Some(now);
        } else if let Some(s) = self.blocked_since.take() {
            self.blocked.push((s, now));
        }
    }

    fn handle(&mut self, eng: &mut Engine<Action>, ev: Event<Action>) {
        let now = ev.fire_at;
        self.advance_to(now);
        match ev.action {
            Action::Epoch => self.on_epoch(eng, now),
            Action::Sample => {
                self.sample_channel(now);
                let next = now + self.params.channel_period;
                if next < self.horizon {
                    eng.schedule_in(self.params.channel_period, Action::Sample);
                }
            }
            Action::Report => self.on_report(eng, now),
            Action::ReportArrival { enb, snr_db } => {
                self.table.update(MeasurementEntry {
                    enb_id: enb,
                    snr_db,
                    reported_at: now,
                });
                if self.options.auto_mobility {
                    let d = decide(&self.table, now, &self.state, self.lte_id, &self.decision);
                    self.execute(eng, now, d);
                }
            }
            Action::Forced { target } => self.on_forced(eng, now, target),
            Action::SwitchCmd { id } => {
                if self.is_current(id) {
                    self.try_switch_cmd(eng, now);
                }
            }
            Action::SwitchCmdRx { id } => {
                if self.is_current(id) {
                    self.on_switch_cmd_rx(eng, now);
                }
            }
            Action::SwitchAck { id } => {
                if self.is_current(id) {
                    self.try_switch_ack(eng, now);
                }
            }
            Action::SwitchAckRx { id } => {
                if self.is_current(id) {
                    self.finish_procedure(now, true);
                    if let Some(d) = self.pending.take() {
                        self.execute(eng, now, d);
                    }
                }
            }
            Action::HoRequestRx { id } => {
                if let Some(p) = self.current(id) {
                    self.send_backhaul(now, MessageKind::HoAck, Node::Enb(p.target), Node::Enb(p.source));
                    eng.schedule_in(self.params.d_x2, Action::HoAckRx { id });
                }
            }
            Action::HoAckRx { id } => {
                if let Some(p) = self.proc_.as_mut().filter(|p| p.id == id) {
                    p.attempts = 0;
                    self.try_rrc(eng, now);
                }
            }
            Action::RrcReconf { id } => {
                if self.is_current(id) {
                    self.try_rrc(eng, now);
                }
            }
            Action::RrcReconfRx { id } => {
                if self.is_current(id) {
                    self.on_rrc_rx(eng, now);
                }
            }
            Action::Rach { id } => {
                if self.is_current(id) {
                    self.start_rach(eng, now);
                }
            }
            Action::RachDone { id } => {
                if self.is_current(id) {
                    self.on_rach_done(eng, now);
                }
            }
            Action::PathSwitchReqRx { id } => {
                if let Some(p) = self.current(id) {
                    self.anchor_history.push((now, p.target));
                    self.send_backhaul(now, MessageKind::PathSwitchAck, Node::Mme, Node::Enb(p.target));
                    eng.schedule_in(self.params.s1_mme_latency, Action::PathSwitchAckRx { id });
                }
            }
            Action::PathSwitchAckRx { id } => {
                if self.is_current(id) {
                    self.finish_procedure(now, true);
                }
            }
        }
    }

    fn current(&self, id: u64) -> Option<Procedure> {
        self.proc_.filter(|p| p.id == id)
    }

    fn is_current(&self, id: u64) -> bool {
        self.current(id).is_some()
    }

    // ---- user plane ----

    fn anchor_for(&mut self, created: SimTime) -> EnbId {
        while self.anchor_cursor + 1 < self.anchor_history.len()
            && self.anchor_history[self.anchor_cursor + 1].0 <= created
        {
            self.anchor_cursor += 1;
        }
        self.anchor_history[self.anchor_cursor].1
    }

    /// Processes every core and X2 arrival due at or before `now`.
    fn advance_to(&mut self, now: SimTime) {
        loop {
            let pkt_at = (self.next_sn < self.total_packets)
                .then(|| self.profile.created(self.next_sn) + self.params.s1_u_latency)
                .filter(|&t| t <= now);
            let x2_at = self.dp.next_inbound().filter(|&(t, _)| t <= now);
            match (pkt_at, x2_at) {
                (None, None) => break,
                (Some(tp), Some((tx, cell))) if tx <= tp => self.x2_arrival(cell),
                (None, Some((_, cell))) => self.x2_arrival(cell),
                (Some(tp), _) => {
                    let sn = self.next_sn;
                    self.next_sn += 1;
                    let packet = PdcpPacket::new(sn, self.params.udp_size, self.profile.created(sn));
                    self.core_arrival(tp, packet);
                }
            }
        }
    }

    fn core_arrival(&mut self, t: SimTime, packet: PdcpPacket) {
        let anchor = self.anchor_for(packet.created);
        match self.mode {
            Mode::Dc => self.dp.pdcp_ingress(t, packet, &self.route, self.lte_id),
            Mode::Hh => self.arrive(t, anchor, packet),
        }
    }

    fn x2_arrival(&mut self, cell: EnbId) {
        if let Some((t, packet)) = self.dp.pop_inbound(cell) {
            self.arrive(t, cell, packet);
        }
    }

    /// A packet reached `cell`: queue it there if that is where the UE's data
    /// belongs, otherwise send it on over X2.
    fn arrive(&mut self, t: SimTime, cell: EnbId, mut packet: PdcpPacket) {
        let home = self.data_home();
        if cell == home {
            self.dp.enqueue(cell, packet);
        } else {
            packet.rerouted = true;
            self.dp.x2_send(t, home, packet);
        }
    }

    fn on_epoch(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        self.invariants.max_bytes_queued = self.invariants.max_bytes_queued.max(self.dp.max_bytes_queued());
        if self.state.data_blocked && self.state.phase != Phase::HoExec {
            self.invariants.blocked_outside_exec += 1;
        }
        let receiving: [Option<EnbId>; 2] = match self.mode {
            Mode::Dc => [Some(self.lte_id), self.state.secondary],
            Mode::Hh => [self.attached.filter(|_| !self.state.data_blocked), None],
        };
        for cell in receiving.into_iter().flatten() {
            let link = self.link(cell);
            self.drain_out.clear();
            let epoch = self.params.epoch;
            self.dp.cell_mut(cell).rlc.drain(
                &link,
                now,
                epoch,
                &self.phy,
                &mut self.streams.phy,
                &mut self.drain_out,
            );
            self.dp.counters.retransmitted_bursts += u64::from(self.drain_out.failed_bursts);
            let delivered = std::mem::take(&mut self.drain_out.delivered);
            for p in &delivered {
                self.deliver(p);
            }
            self.drain_out.delivered = delivered;
            let dropped = std::mem::take(&mut self.drain_out.dropped);
            for p in &dropped {
                if self.options.keep_packets {
                    self.packets.push(PacketRecord {
                        sn: p.sn,
                        created: p.created,
                        outcome: PacketOutcome::Dropped(DropReason::Retx),
                        leg: p.leg,
                        retx_count: p.retx_count,
                    });
                }
                self.dp.record_drop(*p, DropReason::Retx);
            }
            self.drain_out.dropped = dropped;
        }
        let next = now + self.params.epoch;
        if next < self.horizon {
            eng.schedule_in(self.params.epoch, Action::Epoch);
        }
    }

    fn deliver(&mut self, p: &PdcpPacket) {
        let at = p.delivered.expect("drained packets carry a delivery time");
        if !self.collector.record_delivery(p.sn, p.size, p.created, at) {
            return;
        }
        if !p.rerouted {
            let slot = &mut self.fifo_last[usize::from(p.leg == Leg::Mmwave)];
            if slot.is_some_and(|last| p.sn < last) {
                self.invariants.fifo_violations += 1;
            }
            *slot = Some(p.sn);
        }
        let mut floor = self.params.s1_u_latency + self.params.sched_delay;
        if self.mode == Mode::Dc && p.leg == Leg::Mmwave {
            floor = floor + self.params.d_x2;
        }
        if at - p.created < floor {
            self.invariants.latency_floor_violations += 1;
        }
        if self.options.keep_packets {
            self.packets.push(PacketRecord {
                sn: p.sn,
                created: p.created,
                outcome: PacketOutcome::Delivered(at),
                leg: p.leg,
                retx_count: p.retx_count,
            });
        }
    }

    // ---- channel and reporting ----

    fn sample_channel(&mut self, now: SimTime) {
        let samples = self.channel.sample_channel(&mut self.streams.channel, now);
        for (i, s) in samples.iter().enumerate() {
            self.links[i] = self.phy.link_state(s.enb_id, s.snr_db, self.bandwidths[i]);
        }
        if let Some((_, snr)) = self.best_mmwave() {
            let outage = self.phy.in_outage(snr);
            if outage && self.prev_outage == Some(false) {
                self.outage_events += 1;
            }
            self.prev_outage = Some(outage);
        }
    }

    fn on_report(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        for i in 0..self.cell_ids.len() {
            if self.kinds[i] != EnbKind::Mmwave {
                continue;
            }
            let enb = self.cell_ids[i];
            let snr_db = self.links[i].snr_db;
            self.send_backhaul(now, MessageKind::MeasReport, Node::Enb(enb), Node::Enb(self.lte_id));
            eng.schedule_in(self.params.d_x2, Action::ReportArrival { enb, snr_db });
        }
        let next = now + self.params.report_period;
        if next < self.horizon {
            eng.schedule_in(self.params.report_period, Action::Report);
        }
    }

    // ---- signaling ----

    fn send_backhaul(&mut self, now: SimTime, kind: MessageKind, src: Node, dst: Node) {
        let path = match kind {
            MessageKind::PathSwitchReq | MessageKind::PathSwitchAck => MessagePath::S1Mme,
            _ => MessagePath::X2,
        };
        if path == MessagePath::S1Mme && self.mode == Mode::Dc {
            self.invariants.dc_s1_messages += 1;
        }
        self.ledger.account(ControlMessage {
            time: now,
            kind,
            path,
            size: self.params.message_sizes.size(kind),
            src,
            dst,
        });
    }

    /// Sends one RRC-level message over the air link of `cell`. Returns the
    /// reception time, or `None` if the transmission was lost.
    fn air_send(&mut self, now: SimTime, kind: MessageKind, cell: EnbId, uplink: bool) -> Option<SimTime> {
        let size = self.params.message_sizes.size(kind);
        let path = match self.kind(cell) {
            EnbKind::Lte => MessagePath::AirLte,
            EnbKind::Mmwave => MessagePath::AirMmwave,
        };
        let (src, dst) = if uplink {
            (Node::Ue, Node::Enb(cell))
        } else {
            (Node::Enb(cell), Node::Ue)
        };
        self.ledger.account(ControlMessage {
            time: now,
            kind,
            path,
            size,
            src,
            dst,
        });
        let link = self.link(cell);
        match phy::transmit(&self.phy, u64::from(size), now, link, &mut self.streams.control) {
            Ok(tx) if tx.success => Some(tx.completion),
            _ => None,
        }
    }

    // ---- mobility ----

    fn begin(&mut self, now: SimTime, state: ProcState, source: EnbId, target: EnbId) -> u64 {
        let id = self.next_proc_id;
        self.next_proc_id += 1;
        self.proc_ = Some(Procedure {
            id,
            state,
            start: now,
            source,
            target,
            attempts: 0,
        });
        id
    }

    fn finish_procedure(&mut self, now: SimTime, completed: bool) {
        let Some(p) = self.proc_.take() else {
            return;
        };
        let kind = match p.state {
            ProcState::Switch(_) => ProcedureKind::Switch,
            ProcState::DcHandover | ProcState::HhHandover => ProcedureKind::Handover,
            ProcState::Recovery => ProcedureKind::Recovery,
        };
        if completed {
            match kind {
                ProcedureKind::Handover => self.handovers += 1,
                ProcedureKind::Switch => {}
                ProcedureKind::Recovery => {}
            }
        }
        self.procedures.push(ProcedureRecord {
            kind,
            start: p.start,
            completed: completed.then_some(now),
            source: p.source,
            target: p.target,
            rlf: false,
        });
        self.state.phase = Phase::Steady;
    }

    fn execute(&mut self, eng: &mut Engine<Action>, now: SimTime, decision: Decision) {
        if self.state.phase != Phase::Steady {
            return;
        }
        match (self.mode, decision) {
            (_, Decision::None) => {}
            (Mode::Dc, Decision::SwitchToLte) => self.start_switch(eng, now, PdcpRoute::lte()),
            (Mode::Dc, Decision::SwitchToMmwave(id)) => {
                if self.state.secondary == Some(id) {
                    self.start_switch(eng, now, PdcpRoute::mmwave(id));
                }
            }
            (Mode::Dc, Decision::Handover(id)) => {
                if id == self.lte_id {
                    self.start_switch(eng, now, PdcpRoute::lte());
                } else if self.route.active_leg == Leg::Mmwave {
                    // Data moves to LTE first, then the secondary cell changes.
                    self.pending = Some(Decision::Handover(id));
                    self.start_switch(eng, now, PdcpRoute::lte());
                } else {
                    self.start_handover(eng, now, id);
                }
            }
            (Mode::Hh, Decision::Handover(id)) => {
                if self.attached != Some(id) {
                    self.start_handover(eng, now, id);
                }
            }
            (Mode::Hh, _) => {}
        }
    }

    fn on_forced(&mut self, eng: &mut Engine<Action>, now: SimTime, target: EnbId) {
        if self.state.phase != Phase::Steady || !self.cell_ids.contains(&target) {
            return;
        }
        let d = match self.mode {
            Mode::Dc if target == self.lte_id => Decision::SwitchToLte,
            Mode::Dc if self.state.secondary == Some(target) => Decision::SwitchToMmwave(target),
            _ => Decision::Handover(target),
        };
        self.execute(eng, now, d);
    }

    fn start_switch(&mut self, eng: &mut Engine<Action>, now: SimTime, to: PdcpRoute) {
        if to == self.route {
            if let Some(d) = self.pending.take() {
                self.execute(eng, now, d);
            }
            return;
        }
        let source = self.route.cell(self.lte_id);
        self.begin(now, ProcState::Switch(to), source, to.cell(self.lte_id));
        self.state.phase = Phase::Switching;
        self.try_switch_cmd(eng, now);
    }

    fn retry_or_abort(&mut self, eng: &mut Engine<Action>, action: Action) -> bool {
        let max = self.params.rrc_max_attempts;
        let p = self.proc_.as_mut().expect("procedure running");
        if p.attempts >= max {
            return false;
        }
        eng.schedule_in(self.params.epoch, action);
        true
    }

    fn try_switch_cmd(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.as_mut().expect("procedure running");
        p.attempts += 1;
        let id = p.id;
        match self.air_send(now, MessageKind::SwitchCmd, self.lte_id, false) {
            Some(rx) => {
                eng.schedule_in(rx - now, Action::SwitchCmdRx { id });
            }
            None => {
                if !self.retry_or_abort(eng, Action::SwitchCmd { id }) {
                    self.pending = None;
                    self.finish_procedure(now, false);
                }
            }
        }
    }

    fn on_switch_cmd_rx(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.expect("procedure running");
        let ProcState::Switch(to) = p.state else {
            return;
        };
        let old_cell = self.route.cell(self.lte_id);
        let old_in_outage = self.link(old_cell).in_outage();
        let policy = self.params.flush_policy;
        if self
            .dp
            .switch_route(now, &mut self.route, to, policy, old_in_outage, self.lte_id)
        {
            self.switches += 1;
        }
        let cell = self.route.cell(self.lte_id);
        self.state.serving_cell = cell;
        self.note_association(now, cell);
        if let Some(p) = self.proc_.as_mut() {
            p.attempts = 0;
        }
        self.try_switch_ack(eng, now);
    }

    fn try_switch_ack(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.as_mut().expect("procedure running");
        p.attempts += 1;
        let id = p.id;
        match self.air_send(now, MessageKind::SwitchAck, self.lte_id, true) {
            Some(rx) => {
                eng.schedule_in(rx - now, Action::SwitchAckRx { id });
            }
            None => {
                if !self.retry_or_abort(eng, Action::SwitchAck { id }) {
                    // The route already changed at the UE; only the
                    // acknowledgement is missing.
                    self.finish_procedure(now, true);
                    if let Some(d) = self.pending.take() {
                        self.execute(eng, now, d);
                    }
                }
            }
        }
    }

    fn start_handover(&mut self, eng: &mut Engine<Action>, now: SimTime, target: EnbId) {
        let (state, source) = match self.mode {
            Mode::Dc => (ProcState::DcHandover, self.state.secondary.unwrap_or(self.lte_id)),
            Mode::Hh => (ProcState::HhHandover, self.attached.unwrap_or(self.lte_id)),
        };
        let id = self.begin(now, state, source, target);
        self.state.phase = Phase::HoPrep;
        self.send_backhaul(now, MessageKind::HoRequest, Node::Enb(source), Node::Enb(target));
        eng.schedule_in(self.params.d_x2, Action::HoRequestRx { id });
    }

    fn try_rrc(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.as_mut().expect("procedure running");
        p.attempts += 1;
        let id = p.id;
        // DC reconfigures over the always-attached LTE link; HH over the
        // source cell.
        let cell = match p.state {
            ProcState::DcHandover => self.lte_id,
            _ => p.source,
        };
        match self.air_send(now, MessageKind::RrcReconf, cell, false) {
            Some(rx) => {
                eng.schedule_in(rx - now, Action::RrcReconfRx { id });
            }
            None => {
                if !self.retry_or_abort(eng, Action::RrcReconf { id }) {
                    self.radio_link_failure(eng, now);
                }
            }
        }
    }

    fn on_rrc_rx(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.expect("procedure running");
        match p.state {
            ProcState::DcHandover => {
                self.state.secondary = None;
            }
            _ => {
                self.attached = None;
                self.home = p.target;
                self.dp.hh_forwarding(now, p.source, p.target);
                self.note_association(now, p.target);
                self.set_blocked(now, true);
            }
        }
        self.state.phase = Phase::HoExec;
        if let Some(p) = self.proc_.as_mut() {
            p.attempts = 0;
        }
        self.start_rach(eng, now);
    }

    fn start_rach(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.expect("procedure running");
        let (id, target) = (p.id, p.target);
        let is_recovery = p.state == ProcState::Recovery;
        self.air_send_rach(now, target);
        let link = self.link(target);
        let result = match self.options.rach_draw {
            Some(u) if !self.phy.in_outage(link.snr_db) => Ok(phy::rach_delay(&self.phy, u)),
            Some(_) => Err(crate::error::SimError::AccessFailure(target)),
            None => phy::random_access(&self.phy, &link, &mut self.streams.control),
        };
        match result {
            Ok(delay) => {
                eng.schedule_in(delay, Action::RachDone { id });
            }
            Err(_) if is_recovery => {
                // Keep trying to regain LTE; nothing else can carry data.
                eng.schedule_in(self.phy.rach_window, Action::Rach { id });
            }
            Err(_) => self.radio_link_failure(eng, now),
        }
    }

    fn air_send_rach(&mut self, now: SimTime, target: EnbId) {
        let path = match self.kind(target) {
            EnbKind::Lte => MessagePath::AirLte,
            EnbKind::Mmwave => MessagePath::AirMmwave,
        };
        self.ledger.account(ControlMessage {
            time: now,
            kind: MessageKind::RachMsg,
            path,
            size: self.params.message_sizes.rach_msg,
            src: Node::Ue,
            dst: Node::Enb(target),
        });
    }

    fn on_rach_done(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let p = self.proc_.expect("procedure running");
        match p.state {
            ProcState::DcHandover => {
                self.state.secondary = Some(p.target);
                self.finish_procedure(now, true);
                self.start_switch(eng, now, PdcpRoute::mmwave(p.target));
            }
            ProcState::HhHandover | ProcState::Recovery => {
                self.attached = Some(p.target);
                self.state.serving_cell = p.target;
                self.set_blocked(now, false);
                if self.now_anchor() == p.target {
                    self.finish_procedure(now, true);
                } else {
                    self.state.phase = Phase::HoPathSwitch;
                    self.send_backhaul(now, MessageKind::PathSwitchReq, Node::Enb(p.target), Node::Mme);
                    eng.schedule_in(self.params.s1_mme_latency, Action::PathSwitchReqRx { id: p.id });
                }
            }
            ProcState::Switch(_) => {}
        }
    }

    /// The running handover failed on the air interface.
    fn radio_link_failure(&mut self, eng: &mut Engine<Action>, now: SimTime) {
        let Some(p) = self.proc_.take() else {
            return;
        };
        self.rlf += 1;
        self.procedures.push(ProcedureRecord {
            kind: ProcedureKind::Handover,
            start: p.start,
            completed: None,
            source: p.source,
            target: p.target,
            rlf: true,
        });
        match self.mode {
            Mode::Dc => {
                // Data never left LTE; the UE just loses its mmWave attachment.
                self.state.secondary = None;
                self.state.phase = Phase::Steady;
            }
            Mode::Hh => {
                let lte = self.lte_id;
                self.attached = None;
                self.home = lte;
                for i in 0..self.cell_ids.len() {
                    let c = self.cell_ids[i];
                    if c != lte {
                        self.dp.forward_queue(now, c, lte);
                    }
                }
                self.note_association(now, lte);
                self.state.phase = Phase::HoExec;
                self.set_blocked(now, true);
                self.begin(now, ProcState::Recovery, p.source, lte);
                self.start_rach(eng, now);
            }
        }
    }

    // ---- end of run ----

    fn finish(mut self, events_processed: u64, event_trace: Option<String>) -> Result<RunOutput> {
        let horizon = self.horizon;
        self.advance_to(horizon);
        if let Some(s) = self.blocked_since.take() {
            self.blocked.push((s, horizon));
        }
        if self.options.keep_packets {
            for (p, reason) in self.dp.take_drop_log() {
                if reason == DropReason::Overflow {
                    self.packets.push(PacketRecord {
                        sn: p.sn,
                        created: p.created,
                        outcome: PacketOutcome::Dropped(reason),
                        leg: p.leg,
                        retx_count: p.retx_count,
                    });
                }
            }
            self.packets.sort_by_key(|r| r.sn);
        }
        let not_arrived = self.total_packets - self.next_sn;
        let in_flight = self.dp.in_flight() + not_arrived + self.collector.late_deliveries();

        let mut association = Vec::with_capacity(self.association.len());
        for (i, &(start, cell)) in self.association.iter().enumerate() {
            let end = self.association.get(i + 1).map_or(horizon, |&(t, _)| t);
            if end > start {
                association.push(AssociationSegment { start, end, cell });
            }
        }
        let data_blocked = self
            .blocked
            .iter()
            .fold(SimTime::ZERO, |acc, &(s, e)| acc + (e - s));

        let totals = RunTotals {
            mode: Some(self.mode),
            run_index: self.run_index,
            seed: self.seed,
            config_id: config_id(&self.params),
            generated: self.total_packets,
            dropped_overflow: self.dp.counters.dropped_overflow,
            dropped_retx: self.dp.counters.dropped_retx,
            in_flight,
            forwarded_x2: self.dp.counters.forwarded_x2,
            retransmitted_bursts: self.dp.counters.retransmitted_bursts,
            association,
            air_bytes: self.ledger.air_bytes(),
            x2_bytes: self.ledger.bytes(MessagePath::X2),
            s1_bytes: self.ledger.bytes(MessagePath::S1Mme),
            handovers: self.handovers,
            switches: self.switches,
            rlf: self.rlf,
            outage_events: self.outage_events,
            data_blocked,
        };
        let metrics = finalize_run(self.collector, totals)?;
        Ok(RunOutput {
            metrics,
            channel_trace: self.channel.take_trace(),
            messages: self.ledger.take_log(),
            packets: self.packets,
            event_trace,
            procedures: self.procedures,
            blocked: self.blocked,
            invariants: self.invariants,
            signaling: MessagePath::ALL.iter().map(|&p| (p, self.ledger.bytes(p))).collect(),
            channel_draws: self.streams.channel.draws(),
            traffic_draws: self.streams.traffic.draws(),
            events_processed,
        })
    }
}

/// Convenience: builds and runs one simulation.
pub fn run_once(params: &SimulationParams, seed: u64, run_index: u32, options: RunOptions) -> Result<RunOutput> {
    Simulation::new(params, seed, run_index, options)?.run()
}
