//! User plane: PDCP packets, per-cell RLC AM queues, X2 forwarding and the
//! PDCP route of a dual-connected UE.
//!
//! Packets are handled at PDCP granularity: RLC neither segments nor
//! concatenates, and every queue is tail-drop bounded by its byte capacity.

use std::collections::VecDeque;

use crate::channel::{EnbId, EnbKind};
use crate::phy::{self, LinkState, PhyParams};
use crate::sim::{RngStream, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Leg {
    Lte,
    Mmwave,
}

impl Leg {
    pub fn as_str(self) -> &'static str {
        match self {
            Leg::Lte => "LTE",
            Leg::Mmwave => "MMWAVE",
        }
    }
}

impl From<EnbKind> for Leg {
    fn from(kind: EnbKind) -> Self {
        match kind {
            EnbKind::Lte => Leg::Lte,
            EnbKind::Mmwave => Leg::Mmwave,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PdcpPacket {
    pub sn: u64,
    pub size: u32,
    pub created: SimTime,
    pub delivered: Option<SimTime>,
    pub leg: Leg,
    pub retx_count: u8,
    /// Set once the packet has been moved off the queue it was first
    /// assigned to (DC re-route or HH forwarding).
    pub rerouted: bool,
}

impl PdcpPacket {
    pub fn new(sn: u64, size: u32, created: SimTime) -> Self {
        PdcpPacket {
            sn,
            size,
            created,
            delivered: None,
            leg: Leg::Lte,
            retx_count: 0,
            rerouted: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    Overflow,
    Retx,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Overflow => "DROP_OVERFLOW",
            DropReason::Retx => "DROP_RETX",
        }
    }
}

/// Packets handed back by one call to [`RlcAmQueue::drain`].
#[derive(Debug, Default)]
pub struct DrainOutcome {
    /// Successfully received packets with their delivery instants.
    pub delivered: Vec<PdcpPacket>,
    /// Packets that exhausted their retransmissions.
    pub dropped: Vec<PdcpPacket>,
    pub bursts: u32,
    pub failed_bursts: u32,
}

impl DrainOutcome {
    pub fn clear(&mut self) {
        self.delivered.clear();
        self.dropped.clear();
        self.bursts = 0;
        self.failed_bursts = 0;
    }
}

/// RLC acknowledged-mode transmit buffer for one UE at one cell.
#[derive(Clone, Debug)]
pub struct RlcAmQueue {
    pending: VecDeque<PdcpPacket>,
    bytes_queued: u64,
    capacity: u64,
    max_retx: u8,
    /// Byte allowance carried between epochs when the head packet did not fit.
    credit: f64,
}

impl RlcAmQueue {
    pub fn new(capacity: u64, max_retx: u8) -> Self {
        RlcAmQueue {
            pending: VecDeque::new(),
            bytes_queued: 0,
            capacity,
            max_retx,
            credit: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn bytes_queued(&self) -> u64 {
        self.bytes_queued
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &PdcpPacket> {
        self.pending.iter()
    }

    /// Tail-drop admission. Returns the packet back if it does not fit.
    pub fn enqueue(&mut self, packet: PdcpPacket) -> Result<(), PdcpPacket> {
        let size = u64::from(packet.size);
        if self.bytes_queued + size > self.capacity {
            return Err(packet);
        }
        self.bytes_queued += size;
        self.pending.push_back(packet);
        Ok(())
    }

    /// Empties the queue, preserving order.
    pub fn take_all(&mut self) -> Vec<PdcpPacket> {
        self.bytes_queued = 0;
        self.credit = 0.0;
        self.pending.drain(..).collect()
    }

    /// Runs one scheduling epoch starting at `epoch_start`: dequeues up to
    /// `rate * epoch_len` bits (plus any allowance left over from the previous
    /// epoch when the head packet did not fit), transmits them as one burst
    /// and draws its success once from `stream`. A failed burst goes back to
    /// the head of the queue in order with `retx_count + 1`, and packets past
    /// `max_retx` are dropped. Nothing is drained while the link is in
    /// outage.
    pub fn drain(
        &mut self,
        link: &LinkState,
        epoch_start: SimTime,
        epoch_len: SimTime,
        params: &PhyParams,
        stream: &mut RngStream,
        out: &mut DrainOutcome,
    ) {
        if link.in_outage() || self.pending.is_empty() {
            self.credit = 0.0;
            return;
        }
        self.credit += link.rate_bps * epoch_len.as_secs_f64() / 8.0;
        let mut burst: Vec<PdcpPacket> = Vec::new();
        let mut burst_bytes = 0u64;
        while let Some(head) = self.pending.front() {
            let size = u64::from(head.size);
            if size as f64 > self.credit {
                break;
            }
            self.credit -= size as f64;
            burst_bytes += size;
            self.bytes_queued -= size;
            burst.push(self.pending.pop_front().expect("front exists"));
        }
        if self.pending.is_empty() {
            self.credit = 0.0;
        }
        if burst.is_empty() {
            return;
        }
        let tx = phy::transmit(params, burst_bytes, epoch_start, *link, stream)
            .expect("link checked not in outage");
        out.bursts += 1;
        if tx.success {
            let mut cum = 0u64;
            for mut p in burst {
                cum += u64::from(p.size);
                p.delivered = Some(
                    epoch_start + params.sched_delay + phy::serialization_time(cum, link.rate_bps),
                );
                out.delivered.push(p);
            }
        } else {
            out.failed_bursts += 1;
            for mut p in burst.into_iter().rev() {
                p.retx_count = p.retx_count.saturating_add(1);
                if p.retx_count > self.max_retx {
                    out.dropped.push(p);
                } else {
                    self.bytes_queued += u64::from(p.size);
                    self.pending.push_front(p);
                }
            }
            out.dropped.reverse();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackhaulKind {
    X2,
    S1Mme,
    S1U,
}

/// Point-to-point wired link between network nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackhaulLink {
    pub kind: BackhaulKind,
    pub latency: SimTime,
    /// `None` models an uncongested link: only propagation latency applies.
    pub rate_bps: Option<f64>,
    pub mtu: u32,
}

impl BackhaulLink {
    pub fn new(kind: BackhaulKind, latency: SimTime) -> Self {
        BackhaulLink {
            kind,
            latency,
            rate_bps: None,
            mtu: 1500,
        }
    }

    pub fn fragments(&self, bytes: u64) -> u64 {
        bytes.div_ceil(u64::from(self.mtu)).max(1)
    }

    /// One-way delay for a unit of `bytes`.
    pub fn delay(&self, bytes: u64) -> SimTime {
        match self.rate_bps {
            Some(rate) if rate > 0.0 => self.latency + phy::serialization_time(bytes, rate),
            _ => self.latency,
        }
    }
}

/// In-transit packets towards one cell, ordered by arrival time.
#[derive(Clone, Debug, Default)]
pub struct Inbound {
    queue: VecDeque<(SimTime, PdcpPacket)>,
}

impl Inbound {
    /// Stable insertion: equal arrival times keep their send order.
    pub fn push(&mut self, arrival: SimTime, packet: PdcpPacket) {
        let idx = self.queue.partition_point(|(t, _)| *t <= arrival);
        self.queue.insert(idx, (arrival, packet));
    }

    pub fn next_arrival(&self) -> Option<SimTime> {
        self.queue.front().map(|(t, _)| *t)
    }

    pub fn pop(&mut self) -> Option<(SimTime, PdcpPacket)> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Which air link the PDCP anchor sends new packets over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PdcpRoute {
    pub active_leg: Leg,
    pub mmwave_target: Option<EnbId>,
}

impl PdcpRoute {
    pub fn lte() -> Self {
        PdcpRoute {
            active_leg: Leg::Lte,
            mmwave_target: None,
        }
    }

    pub fn mmwave(target: EnbId) -> Self {
        PdcpRoute {
            active_leg: Leg::Mmwave,
            mmwave_target: Some(target),
        }
    }

    /// The cell whose RLC receives newly routed packets.
    pub fn cell(&self, lte_id: EnbId) -> EnbId {
        match (self.active_leg, self.mmwave_target) {
            (Leg::Mmwave, Some(id)) => id,
            _ => lte_id,
        }
    }
}

/// What happens to packets already queued on the old leg when the route
/// changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlushPolicy {
    /// Move them over X2 to the new leg.
    #[default]
    Reroute,
    /// Leave them to drain on the old leg, unless it is in outage.
    Drain,
}

/// Per-cell user-plane state of the single simulated UE.
#[derive(Clone, Debug)]
pub struct CellPlane {
    pub enb_id: EnbId,
    pub kind: EnbKind,
    pub rlc: RlcAmQueue,
    pub inbound: Inbound,
}

/// Loss and forwarding counters, in packets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LossCounters {
    pub dropped_overflow: u64,
    pub dropped_retx: u64,
    pub forwarded_x2: u64,
    pub retransmitted_bursts: u64,
}

/// All per-UE queues at every cell plus the X2 links between them.
#[derive(Clone, Debug)]
pub struct DataPlane {
    cells: Vec<CellPlane>,
    x2: BackhaulLink,
    pub counters: LossCounters,
    dropped: Vec<(PdcpPacket, DropReason)>,
    keep_drops: bool,
}

impl DataPlane {
    pub fn new(cells: &[(EnbId, EnbKind)], rlc_capacity: u64, max_retx: u8, x2: BackhaulLink) -> Self {
        DataPlane {
            cells: cells
                .iter()
                .map(|&(enb_id, kind)| CellPlane {
                    enb_id,
                    kind,
                    rlc: RlcAmQueue::new(rlc_capacity, max_retx),
                    inbound: Inbound::default(),
                })
                .collect(),
            x2,
            counters: LossCounters::default(),
            dropped: Vec::new(),
            keep_drops: false,
        }
    }

    pub fn keep_drop_log(&mut self, keep: bool) {
        self.keep_drops = keep;
    }

    pub fn take_drop_log(&mut self) -> Vec<(PdcpPacket, DropReason)> {
        std::mem::take(&mut self.dropped)
    }

    pub fn x2(&self) -> &BackhaulLink {
        &self.x2
    }

    pub fn cells(&self) -> &[CellPlane] {
        &self.cells
    }

    pub fn cell(&self, id: EnbId) -> &CellPlane {
        self.cells.iter().find(|c| c.enb_id == id).expect("known cell")
    }

    pub fn cell_mut(&mut self, id: EnbId) -> &mut CellPlane {
        self.cells.iter_mut().find(|c| c.enb_id == id).expect("known cell")
    }

    pub fn record_drop(&mut self, packet: PdcpPacket, reason: DropReason) {
        match reason {
            DropReason::Overflow => self.counters.dropped_overflow += 1,
            DropReason::Retx => self.counters.dropped_retx += 1,
        }
        if self.keep_drops {
            self.dropped.push((packet, reason));
        }
    }

    /// Admits `packet` into the RLC of `cell`, tail-dropping on overflow.
    pub fn enqueue(&mut self, cell: EnbId, mut packet: PdcpPacket) -> bool {
        let c = self.cell_mut(cell);
        packet.leg = Leg::from(c.kind);
        match c.rlc.enqueue(packet) {
            Ok(()) => true,
            Err(p) => {
                self.record_drop(p, DropReason::Overflow);
                false
            }
        }
    }

    /// Sends `packet` over X2 from wherever it is now to `dest`.
    pub fn x2_send(&mut self, now: SimTime, dest: EnbId, packet: PdcpPacket) {
        let arrival = now + self.x2.delay(u64::from(packet.size));
        self.counters.forwarded_x2 += 1;
        self.cell_mut(dest).inbound.push(arrival, packet);
    }

    /// PDCP routing at the anchor: local RLC for the LTE leg, X2 towards the
    /// remote RLC for the mmWave leg.
    pub fn pdcp_ingress(&mut self, now: SimTime, packet: PdcpPacket, route: &PdcpRoute, lte_id: EnbId) {
        match (route.active_leg, route.mmwave_target) {
            (Leg::Mmwave, Some(target)) => self.x2_send(now, target, packet),
            _ => {
                self.enqueue(lte_id, packet);
            }
        }
    }

    /// Moves every packet queued at `from` to `to` over X2, order preserved.
    /// Returns how many packets were moved.
    pub fn forward_queue(&mut self, now: SimTime, from: EnbId, to: EnbId) -> usize {
        if from == to {
            return 0;
        }
        let packets = self.cell_mut(from).rlc.take_all();
        let n = packets.len();
        for mut p in packets {
            p.rerouted = true;
            self.x2_send(now, to, p);
        }
        n
    }

    /// Data-plane side of a DC route switch. A switch to the already active
    /// leg is a no-op and returns `false`.
    pub fn switch_route(
        &mut self,
        now: SimTime,
        route: &mut PdcpRoute,
        new_route: PdcpRoute,
        policy: FlushPolicy,
        old_leg_in_outage: bool,
        lte_id: EnbId,
    ) -> bool {
        if *route == new_route {
            return false;
        }
        let old_cell = route.cell(lte_id);
        *route = new_route;
        let new_cell = route.cell(lte_id);
        let reroute = match policy {
            FlushPolicy::Reroute => true,
            FlushPolicy::Drain => old_leg_in_outage,
        };
        if reroute {
            self.forward_queue(now, old_cell, new_cell);
        }
        true
    }

    /// Hard-handover forwarding: everything queued at `source` crosses X2 to
    /// `target` and waits there until the UE attaches.
    pub fn hh_forwarding(&mut self, now: SimTime, source: EnbId, target: EnbId) -> usize {
        self.forward_queue(now, source, target)
    }

    /// Earliest pending X2 arrival over all cells.
    pub fn next_inbound(&self) -> Option<(SimTime, EnbId)> {
        self.cells
            .iter()
            .filter_map(|c| c.inbound.next_arrival().map(|t| (t, c.enb_id)))
            .min_by_key(|&(t, id)| (t, id))
    }

    pub fn pop_inbound(&mut self, cell: EnbId) -> Option<(SimTime, PdcpPacket)> {
        self.cell_mut(cell).inbound.pop()
    }

    /// Packets currently held anywhere in the RAN (queues plus X2 flight).
    pub fn in_flight(&self) -> u64 {
        self.cells
            .iter()
            .map(|c| (c.rlc.len() + c.inbound.len()) as u64)
            .sum()
    }

    pub fn max_bytes_queued(&self) -> u64 {
        self.cells.iter().map(|c| c.rlc.bytes_queued()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::BlerModel;
    use crate::sim::StreamName;

    fn link(rate: f64, bler: f64) -> LinkState {
        LinkState {
            enb_id: 2,
            snr_db: 10.0,
            rate_bps: rate,
            bler,
        }
    }

    fn plane() -> DataPlane {
        DataPlane::new(
            &[(1, EnbKind::Lte), (2, EnbKind::Mmwave), (3, EnbKind::Mmwave)],
            10_000_000,
            3,
            BackhaulLink::new(BackhaulKind::X2, SimTime::from_ms(1)),
        )
    }

    #[test]
    fn mmwave_route_arrives_after_x2_latency() {
        let mut dp = plane();
        let route = PdcpRoute::mmwave(2);
        dp.pdcp_ingress(SimTime(500), PdcpPacket::new(0, 1024, SimTime(0)), &route, 1);
        assert_eq!(dp.next_inbound(), Some((SimTime(1500), 2)));
        assert!(dp.cell(2).rlc.is_empty());
    }

    #[test]
    fn lte_route_enqueues_immediately() {
        let mut dp = plane();
        dp.pdcp_ingress(SimTime(500), PdcpPacket::new(0, 1024, SimTime(0)), &PdcpRoute::lte(), 1);
        assert_eq!(dp.cell(1).rlc.len(), 1);
        assert_eq!(dp.next_inbound(), None);
    }

    #[test]
    fn full_queue_tail_drops() {
        let mut q = RlcAmQueue::new(10 * 1024, 3);
        for sn in 0..10 {
            q.enqueue(PdcpPacket::new(sn, 1024, SimTime(0))).unwrap();
        }
        assert_eq!(q.bytes_queued(), q.capacity());
        assert!(q.enqueue(PdcpPacket::new(10, 1024, SimTime(0))).is_err());
        assert_eq!(q.len(), 10);
    }

    #[test]
    fn single_epoch_budget() {
        let params = PhyParams::default();
        let mut stream = RngStream::new(1, StreamName::Phy);
        let mut q = RlcAmQueue::new(u64::MAX, 3);
        for sn in 0..200 {
            q.enqueue(PdcpPacket::new(sn, 1024, SimTime(0))).unwrap();
        }
        let mut out = DrainOutcome::default();
        q.drain(&link(650e6, 0.0), SimTime(0), SimTime::from_ms(1), &params, &mut stream, &mut out);
        let bytes: u64 = out.delivered.iter().map(|p| u64::from(p.size)).sum();
        assert!(bytes <= 81_250);
        assert_eq!(out.delivered.len(), 79);
    }

    #[test]
    fn lossless_single_packet_delivered_in_one_epoch() {
        let params = PhyParams::default();
        let mut stream = RngStream::new(1, StreamName::Phy);
        let mut q = RlcAmQueue::new(u64::MAX, 3);
        q.enqueue(PdcpPacket::new(0, 1024, SimTime(0))).unwrap();
        let mut out = DrainOutcome::default();
        q.drain(&link(650e6, 0.0), SimTime(0), SimTime::from_ms(1), &params, &mut stream, &mut out);
        assert_eq!(out.delivered.len(), 1);
        assert_eq!(out.delivered[0].delivered, Some(SimTime(1013)));
        assert!(q.is_empty());
    }

    #[test]
    fn fourth_failure_drops_packet() {
        let params = PhyParams {
            bler: BlerModel::Fixed(1.0),
            ..PhyParams::default()
        };
        let mut stream = RngStream::new(1, StreamName::Phy);
        let mut q = RlcAmQueue::new(u64::MAX, 3);
        q.enqueue(PdcpPacket::new(0, 1024, SimTime(0))).unwrap();
        let l = link(650e6, 1.0);
        let mut out = DrainOutcome::default();
        for epoch in 0..3 {
            q.drain(&l, SimTime::from_ms(epoch), SimTime::from_ms(1), &params, &mut stream, &mut out);
            assert!(out.dropped.is_empty());
            assert_eq!(q.iter().next().unwrap().retx_count as u64, epoch + 1);
        }
        q.drain(&l, SimTime::from_ms(3), SimTime::from_ms(1), &params, &mut stream, &mut out);
        assert_eq!(out.dropped.len(), 1);
        assert!(q.is_empty());
        assert_eq!(q.bytes_queued(), 0);
    }

    #[test]
    fn outage_holds_queue() {
        let params = PhyParams::default();
        let mut stream = RngStream::new(1, StreamName::Phy);
        let mut q = RlcAmQueue::new(u64::MAX, 3);
        q.enqueue(PdcpPacket::new(0, 1024, SimTime(0))).unwrap();
        let mut out = DrainOutcome::default();
        q.drain(&LinkState::dead(2), SimTime(0), SimTime::from_ms(1), &params, &mut stream, &mut out);
        assert!(out.delivered.is_empty());
        assert_eq!(q.len(), 1);
        assert_eq!(stream.draws(), 0);
    }

    #[test]
    fn reroute_moves_whole_queue_in_order() {
        let mut dp = plane();
        let mut route = PdcpRoute::mmwave(2);
        for sn in 0..100 {
            dp.enqueue(2, PdcpPacket::new(sn, 1024, SimTime(0)));
        }
        let switched = dp.switch_route(SimTime(10_000), &mut route, PdcpRoute::lte(), FlushPolicy::Reroute, false, 1);
        assert!(switched);
        assert!(dp.cell(2).rlc.is_empty());
        let mut sns = Vec::new();
        while let Some((t, p)) = dp.pop_inbound(1) {
            assert_eq!(t, SimTime(11_000));
            assert!(p.rerouted);
            sns.push(p.sn);
        }
        assert_eq!(sns, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn switch_to_active_leg_is_noop() {
        let mut dp = plane();
        let mut route = PdcpRoute::lte();
        dp.enqueue(1, PdcpPacket::new(0, 1024, SimTime(0)));
        assert!(!dp.switch_route(SimTime(0), &mut route, PdcpRoute::lte(), FlushPolicy::Reroute, false, 1));
        assert_eq!(dp.cell(1).rlc.len(), 1);
    }

    #[test]
    fn drain_policy_keeps_queue_unless_outage() {
        let mut dp = plane();
        let mut route = PdcpRoute::mmwave(2);
        dp.enqueue(2, PdcpPacket::new(0, 1024, SimTime(0)));
        dp.switch_route(SimTime(0), &mut route, PdcpRoute::lte(), FlushPolicy::Drain, false, 1);
        assert_eq!(dp.cell(2).rlc.len(), 1);

        let mut route = PdcpRoute::mmwave(3);
        dp.enqueue(3, PdcpPacket::new(1, 1024, SimTime(0)));
        dp.switch_route(SimTime(0), &mut route, PdcpRoute::lte(), FlushPolicy::Drain, true, 1);
        assert!(dp.cell(3).rlc.is_empty());
        assert_eq!(dp.cell(1).inbound.len(), 1);
    }

    #[test]
    fn forwarding_with_nothing_queued_creates_no_flight() {
        let mut dp = plane();
        assert_eq!(dp.hh_forwarding(SimTime(0), 2, 3), 0);
        assert_eq!(dp.next_inbound(), None);
        assert_eq!(dp.counters.forwarded_x2, 0);
    }

    #[test]
    fn inbound_insertion_is_stable() {
        let mut inb = Inbound::default();
        inb.push(SimTime(5), PdcpPacket::new(0, 1, SimTime(0)));
        inb.push(SimTime(3), PdcpPacket::new(1, 1, SimTime(0)));
        inb.push(SimTime(5), PdcpPacket::new(2, 1, SimTime(0)));
        let order: Vec<u64> = std::iter::from_fn(|| inb.pop().map(|(_, p)| p.sn)).collect();
        assert_eq!(order, vec![1, 0, 2]);
    }

    #[test]
    fn mtu_fragments() {
        let l = BackhaulLink::new(BackhaulKind::S1Mme, SimTime::from_ms(10));
        assert_eq!(l.fragments(64), 1);
        assert_eq!(l.fragments(1500), 1);
        assert_eq!(l.fragments(1501), 2);
        assert_eq!(l.delay(1024), SimTime::from_ms(10));
        let slow = BackhaulLink {
            rate_bps: Some(8e6),
            ..l
        };
        assert_eq!(slow.delay(1000), SimTime(11_000));
    }
}
