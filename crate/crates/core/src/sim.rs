//! Discrete-event engine: simulated clock, `(fire_at, seq)` ordered queue and
//! named deterministic random streams.
//!
//! A run is single threaded. Ties at the same instant fire in insertion order,
//! so a replay with the same inputs visits events in exactly the same order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::{self, Write as _};
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::SimError;

/// Simulated time in integer microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_us(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond; negative or NaN input maps to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_finite() && secs > 0.0 {
            SimTime((secs * 1e6).round() as u64)
        } else {
            SimTime(0)
        }
    }

    pub fn from_ms_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn as_us(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Short static label identifying the handler an event is dispatched to.
pub trait EventTag {
    fn tag(&self) -> &'static str;
}

/// A scheduled event.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub action: A,
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    // Reversed so that `BinaryHeap` pops the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// The event loop. Owns the clock and the pending queue; world state lives with
/// the caller and is reached through the handler closure passed to
/// [`Engine::run_until`].
pub struct Engine<A> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<A>>,
    processed: u64,
    trace: Option<String>,
}

impl<A> Default for Engine<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Engine<A> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            processed: 0,
            trace: None,
        }
    }

    /// Records one `time_us,seq,handler_tag` line per processed event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(String::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<String> {
        self.trace.take()
    }

    /// Queues `action` at absolute time `fire_at` and returns its sequence
    /// number. Scheduling before the current clock is a logic error.
    pub fn schedule(&mut self, fire_at: SimTime, action: A) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                now: self.now,
                requested: fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            fire_at,
            seq,
            action,
        });
        Ok(seq)
    }

    /// Queues `action` `delay` after the current clock.
    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> u64 {
        let at = self.now + delay;
        // Cannot fail: at >= now.
        self.schedule(at, action).expect("relative schedule is never in the past")
    }

    fn pop_due(&mut self, end: SimTime) -> Option<Event<A>> {
        if self.queue.peek().is_some_and(|e| e.fire_at <= end) {
            self.queue.pop()
        } else {
            None
        }
    }
}

impl<A: EventTag> Engine<A> {
    /// Processes every event with `fire_at <= end` in `(fire_at, seq)` order,
    /// including events the handler schedules along the way, then advances
    /// the clock to `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Engine<A>, Event<A>),
    {
        while let Some(event) = self.pop_due(end) {
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.processed += 1;
            if let Some(trace) = self.trace.as_mut() {
                let _ = writeln!(trace, "{},{},{}", event.fire_at.0, event.seq, event.action.tag());
            }
            handler(self, event);
        }
        if end > self.now {
            self.now = end;
        }
    }
}

/// The independent random streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamName {
    Channel,
    Phy,
    Control,
    Traffic,
}

impl StreamName {
    pub const ALL: [StreamName; 4] = [
        StreamName::Channel,
        StreamName::Phy,
        StreamName::Control,
        StreamName::Traffic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamName::Channel => "channel",
            StreamName::Phy => "phy",
            StreamName::Control => "control",
            StreamName::Traffic => "traffic",
        }
    }

    fn stream_id(self) -> u64 {
        // FNV-1a of the name: stable across builds and platforms.
        self.as_str()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
            })
    }
}

/// One named stream. ChaCha is counter based: the seed selects the key and the
/// stream name selects the nonce, so every stream is an independent sequence
/// that depends only on `(master_seed, name)` and the number of draws taken.
#[derive(Clone, Debug)]
pub struct RngStream {
    name: StreamName,
    rng: ChaCha12Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, name: StreamName) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(name.stream_id());
        RngStream { name, rng, draws: 0 }
    }

    pub fn name(&self) -> StreamName {
        self.name
    }

    /// Number of values drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform in `[0, 1)`.
    pub fn draw_uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    /// Samples from any `rand` distribution, counting one draw.
    pub fn sample<T, D: rand::distr::Distribution<T>>(&mut self, dist: &D) -> T {
        self.draws += 1;
        dist.sample(&mut self.rng)
    }
}

/// All four streams for one run.
#[derive(Clone, Debug)]
pub struct RngStreams {
    pub channel: RngStream,
    pub phy: RngStream,
    pub control: RngStream,
    pub traffic: RngStream,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams {
            channel: RngStream::new(master_seed, StreamName::Channel),
            phy: RngStream::new(master_seed, StreamName::Phy),
            control: RngStream::new(master_seed, StreamName::Control),
            traffic: RngStream::new(master_seed, StreamName::Traffic),
        }
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-run seed derived from the master seed and the run index:
/// `mix64(master_seed + 0x9e3779b97f4a7c15 * (index + 1))`. The same pair
/// always yields the same seed on every platform, and DC and HH runs with the
/// same index share it.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    mix64(master_seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(run_index + 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(&'static str);

    impl EventTag for Tag {
        fn tag(&self) -> &'static str {
            self.0
        }
    }

    #[test]
    fn earlier_time_fires_first() {
        let mut engine = Engine::new();
        engine.schedule(SimTime(5), Tag("five")).unwrap();
        engine.schedule(SimTime(3), Tag("three")).unwrap();
        let mut fired = Vec::new();
        engine.run_until(SimTime(10), |_, ev| fired.push(ev.action.0));
        assert_eq!(fired, vec!["three", "five"]);
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut engine = Engine::new();
        for _ in 0..4 {
            engine.schedule(SimTime(1), Tag("filler")).unwrap();
        }
        let a = engine.schedule(SimTime(7), Tag("a")).unwrap();
        let b = engine.schedule(SimTime(7), Tag("b")).unwrap();
        assert_eq!((a, b), (4, 5));
        let mut fired = Vec::new();
        engine.run_until(SimTime(7), |_, ev| {
            if ev.fire_at == SimTime(7) {
                fired.push(ev.seq)
            }
        });
        assert_eq!(fired, vec![4, 5]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut engine: Engine<Tag> = Engine::new();
        engine.run_until(SimTime(10), |_, _| {});
        let err = engine.schedule(SimTime(2), Tag("late")).unwrap_err();
        assert!(matches!(err, SimError::ScheduleInPast { .. }));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut engine: Engine<Tag> = Engine::new();
        let mut count = 0;
        engine.run_until(SimTime(100), |_, _| count += 1);
        assert_eq!(engine.now(), SimTime(100));
        assert_eq!(count, 0);
    }

    #[test]
    fn end_boundary_is_inclusive() {
        let mut engine = Engine::new();
        for t in 1..=3 {
            engine.schedule(SimTime(t), Tag("e")).unwrap();
        }
        let mut count = 0;
        engine.run_until(SimTime(2), |_, _| count += 1);
        assert_eq!(count, 2);
        assert_eq!(engine.pending(), 1);
    }

    #[test]
    fn handler_can_schedule_follow_ups() {
        let mut engine = Engine::new();
        engine.schedule(SimTime(1), Tag("first")).unwrap();
        let mut fired = Vec::new();
        engine.run_until(SimTime(5), |eng, ev| {
            fired.push((ev.fire_at, ev.action.0));
            if ev.action.0 == "first" {
                eng.schedule(ev.fire_at + SimTime(1), Tag("second")).unwrap();
            }
        });
        assert_eq!(fired, vec![(SimTime(1), "first"), (SimTime(2), "second")]);
    }

    #[test]
    fn trace_lists_every_event() {
        let mut engine = Engine::new().with_trace();
        engine.schedule(SimTime(4), Tag("x")).unwrap();
        engine.schedule(SimTime(4), Tag("y")).unwrap();
        engine.run_until(SimTime(4), |_, _| {});
        assert_eq!(engine.trace().unwrap(), "4,0,x\n4,1,y\n");
    }

    #[test]
    fn same_seed_same_stream_is_reproducible() {
        let mut a = RngStream::new(42, StreamName::Channel);
        let mut b = RngStream::new(42, StreamName::Channel);
        for _ in 0..1000 {
            assert_eq!(a.draw_uniform().to_bits(), b.draw_uniform().to_bits());
        }
        assert_eq!(a.draws(), 1000);
    }

    #[test]
    fn uniform_draws_stay_in_unit_interval() {
        let mut s = RngStream::new(7, StreamName::Phy);
        for _ in 0..10_000 {
            let u = s.draw_uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn run_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| run_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(run_seed(42, 3), run_seed(42, 3));
        assert_ne!(run_seed(42, 3), run_seed(43, 3));
    }
}
