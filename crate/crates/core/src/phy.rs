//! Abstract air interface: SNR to rate and block error probability,
//! transmission timing and non-contention random access.

use crate::channel::EnbId;
use crate::error::{Result, SimError};
use crate::sim::{RngStream, SimTime};

/// Error model applied to every air transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlerModel {
    /// `1 / (1 + exp(1.5 (snr + 2)))`, forced to 1 below the outage threshold.
    Logistic,
    /// Constant probability, for controlled experiments. Outage still forces 1.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhyParams {
    pub outage_threshold_db: f64,
    /// Spectral efficiency factor applied to the Shannon bound.
    pub eta: f64,
    pub sched_delay: SimTime,
    pub rach_window: SimTime,
    pub rach_processing: SimTime,
    pub bler: BlerModel,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            outage_threshold_db: -5.0,
            eta: 0.65,
            sched_delay: SimTime::from_ms(1),
            rach_window: SimTime::from_ms(5),
            rach_processing: SimTime::from_ms(3),
            bler: BlerModel::Logistic,
        }
    }
}

impl PhyParams {
    pub fn in_outage(&self, snr_db: f64) -> bool {
        snr_db < self.outage_threshold_db
    }

    pub fn rate(&self, snr_db: f64, bandwidth_hz: f64) -> f64 {
        rate_from_snr(snr_db, bandwidth_hz, self.eta, self.outage_threshold_db)
    }

    pub fn bler(&self, snr_db: f64) -> f64 {
        match self.bler {
            BlerModel::Logistic => bler_from_snr(snr_db, self.outage_threshold_db),
            BlerModel::Fixed(p) => {
                if self.in_outage(snr_db) {
                    1.0
                } else {
                    p.clamp(0.0, 1.0)
                }
            }
        }
    }

    pub fn link_state(&self, enb_id: EnbId, snr_db: f64, bandwidth_hz: f64) -> LinkState {
        LinkState {
            enb_id,
            snr_db,
            rate_bps: self.rate(snr_db, bandwidth_hz),
            bler: self.bler(snr_db),
        }
    }
}

/// `eta * B * log2(1 + snr_linear)` in bit/s, or 0 below the outage threshold.
pub fn rate_from_snr(snr_db: f64, bandwidth_hz: f64, eta: f64, outage_threshold_db: f64) -> f64 {
    if snr_db < outage_threshold_db {
        return 0.0;
    }
    eta * bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

/// Logistic block error curve centred at -2 dB.
pub fn bler_from_snr(snr_db: f64, outage_threshold_db: f64) -> f64 {
    if snr_db < outage_threshold_db {
        return 1.0;
    }
    1.0 / (1.0 + (1.5 * (snr_db + 2.0)).exp())
}

/// Instantaneous state of one air link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState {
    pub enb_id: EnbId,
    pub snr_db: f64,
    pub rate_bps: f64,
    pub bler: f64,
}

impl LinkState {
    pub fn in_outage(&self) -> bool {
        self.rate_bps <= 0.0
    }

    /// A link with no signal at all.
    pub fn dead(enb_id: EnbId) -> Self {
        LinkState {
            enb_id,
            snr_db: f64::NEG_INFINITY,
            rate_bps: 0.0,
            bler: 1.0,
        }
    }
}

/// Serialization time of `bytes` at `rate_bps`, rounded up to whole
/// microseconds.
pub fn serialization_time(bytes: u64, rate_bps: f64) -> SimTime {
    SimTime((bytes as f64 * 8.0 / rate_bps * 1e6).ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AirTransmission {
    pub payload_bytes: u64,
    pub start: SimTime,
    pub link: LinkState,
    pub completion: SimTime,
    pub success: bool,
}

/// One transmission burst: completes after serialization plus the scheduling
/// delay, and succeeds with probability `1 - bler` (one draw from `stream`).
pub fn transmit(
    params: &PhyParams,
    payload_bytes: u64,
    start: SimTime,
    link: LinkState,
    stream: &mut RngStream,
) -> Result<AirTransmission> {
    if link.in_outage() {
        return Err(SimError::LinkInOutage);
    }
    let completion = start + serialization_time(payload_bytes, link.rate_bps) + params.sched_delay;
    let success = stream.draw_uniform() >= link.bler;
    Ok(AirTransmission {
        payload_bytes,
        start,
        link,
        completion,
        success,
    })
}

/// Non-contention random access towards `target`: wait for the next RACH
/// opportunity (uniform over the window) and then the processing time.
pub fn random_access(params: &PhyParams, target: &LinkState, stream: &mut RngStream) -> Result<SimTime> {
    if params.in_outage(target.snr_db) {
        return Err(SimError::AccessFailure(target.enb_id));
    }
    let u = stream.draw_uniform();
    Ok(rach_delay(params, u))
}

/// RACH delay for a given uniform draw `u` in `[0, 1)`.
pub fn rach_delay(params: &PhyParams, u: f64) -> SimTime {
    let wait = (u * params.rach_window.as_us() as f64).floor() as u64;
    SimTime(wait) + params.rach_processing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StreamName;

    #[test]
    fn rate_examples() {
        assert!((rate_from_snr(0.0, 1e9, 0.65, -5.0) - 650e6).abs() < 1e-3);
        assert!((rate_from_snr(0.0, 20e6, 0.65, -5.0) - 13e6).abs() < 1e-6);
        assert_eq!(rate_from_snr(-6.0, 1e9, 0.65, -5.0), 0.0);
        assert!(rate_from_snr(-5.0, 1e9, 0.65, -5.0) > 0.0);
    }

    #[test]
    fn bler_examples() {
        assert!((bler_from_snr(-2.0, -5.0) - 0.5).abs() < 1e-15);
        assert!(bler_from_snr(20.0, -5.0) < 1e-14);
        assert_eq!(bler_from_snr(-10.0, -5.0), 1.0);
    }

    #[test]
    fn transmit_timing() {
        let params = PhyParams::default();
        let link = LinkState {
            enb_id: 2,
            snr_db: 0.0,
            rate_bps: 650e6,
            bler: 0.0,
        };
        let mut stream = RngStream::new(1, StreamName::Phy);
        let tx = transmit(&params, 1024, SimTime(0), link, &mut stream).unwrap();
        assert_eq!(tx.completion, SimTime(1013));
        assert!(tx.success);
    }

    #[test]
    fn transmit_rejects_outage() {
        let params = PhyParams::default();
        let mut stream = RngStream::new(1, StreamName::Phy);
        let err = transmit(&params, 10, SimTime(0), LinkState::dead(2), &mut stream).unwrap_err();
        assert!(matches!(err, SimError::LinkInOutage));
    }

    #[test]
    fn zero_bler_always_succeeds() {
        let params = PhyParams::default();
        let link = LinkState {
            enb_id: 2,
            snr_db: 30.0,
            rate_bps: 1e9,
            bler: 0.0,
        };
        let mut stream = RngStream::new(5, StreamName::Phy);
        for _ in 0..10_000 {
            assert!(transmit(&params, 100, SimTime(0), link, &mut stream).unwrap().success);
        }
    }

    #[test]
    fn rach_bounds() {
        let params = PhyParams::default();
        assert_eq!(rach_delay(&params, 0.0), SimTime::from_ms(3));
        let max = rach_delay(&params, 1.0 - f64::EPSILON);
        assert!(max < SimTime::from_ms(8));
        assert!(max >= SimTime::from_us(7_999));
    }

    #[test]
    fn rach_fails_on_outage_target() {
        let params = PhyParams::default();
        let target = params.link_state(3, -7.0, 1e9);
        let mut stream = RngStream::new(1, StreamName::Control);
        assert!(matches!(
            random_access(&params, &target, &mut stream),
            Err(SimError::AccessFailure(3))
        ));
    }

    #[test]
    fn fixed_bler_respects_outage() {
        let params = PhyParams {
            bler: BlerModel::Fixed(0.0),
            ..PhyParams::default()
        };
        assert_eq!(params.bler(-4.0), 0.0);
        assert_eq!(params.bler(-6.0), 1.0);
    }
}
