//! Under-frequency relays for contracted demand response blocks.

use crate::fleet::{BlockId, SdrBlock, SdrTrip};
use crate::scalar::Scalar;

/// Timing tolerance when comparing elapsed pickup time against a setting.
const PICKUP_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Relay<T> {
    id: BlockId,
    amount_mw: T,
    trip_frequency: T,
    pickup_delay: T,
    armed: bool,
    below_since: Option<T>,
    tripped_at: Option<T>,
}

/// Relay state for every SDR block of a snapshot.
///
/// A block trips once the frequency has stayed below its setting for the
/// pickup delay. Tripping is latched for the rest of the run.
#[derive(Debug, Clone)]
pub struct SdrRelays<T> {
    relays: Vec<Relay<T>>,
    tripped_mw: T,
}

impl<T: Scalar> SdrRelays<T> {
    pub fn new(blocks: &[SdrBlock<T>]) -> Self {
        SdrRelays {
            relays: blocks
                .iter()
                .map(|b| Relay {
                    id: b.id.clone(),
                    amount_mw: b.amount_mw,
                    trip_frequency: b.trip_frequency,
                    pickup_delay: b.pickup_delay,
                    armed: b.armed,
                    below_since: None,
                    tripped_at: None,
                })
                .collect(),
            tripped_mw: T::zero(),
        }
    }

    /// Feeds one frequency sample at time `t` and returns the total tripped
    /// MW from this sample onward.
    pub fn step(&mut self, frequency: T, t: T) -> T {
        let eps = T::lit(PICKUP_EPS);
        for r in self.relays.iter_mut().filter(|r| r.armed && r.tripped_at.is_none()) {
            if frequency < r.trip_frequency {
                let since = *r.below_since.get_or_insert(t);
                if t - since + eps >= r.pickup_delay {
                    r.tripped_at = Some(t);
                    self.tripped_mw = self.tripped_mw + r.amount_mw;
                }
            } else {
                r.below_since = None;
            }
        }
        self.tripped_mw
    }

    /// Continuous-time variant of [`step`](Self::step) for an integrator.
    ///
    /// The frequency is taken as linear between `(t0, f0)` and `(t1, f1)`;
    /// threshold crossings are interpolated inside the interval. Returns
    /// `(trip time, MW)` for every block that trips in `(t0, t1]`.
    pub fn observe_interval(&mut self, t0: T, f0: T, t1: T, f1: T) -> Vec<(T, T)> {
        let eps = T::lit(PICKUP_EPS);
        let mut tripped = Vec::new();
        for r in self.relays.iter_mut().filter(|r| r.armed && r.tripped_at.is_none()) {
            if f1 < r.trip_frequency {
                let since = *r.below_since.get_or_insert_with(|| {
                    if f0 < r.trip_frequency || f0 == f1 {
                        t0
                    } else {
                        t0 + (t1 - t0) * (f0 - r.trip_frequency) / (f0 - f1)
                    }
                });
                let at = since + r.pickup_delay;
                if at <= t1 + eps {
                    let at = at.min(t1).max(t0);
                    r.tripped_at = Some(at);
                    self.tripped_mw = self.tripped_mw + r.amount_mw;
                    tripped.push((at, r.amount_mw));
                }
            } else {
                r.below_since = None;
            }
        }
        tripped
    }

    pub fn tripped_mw(&self) -> T {
        self.tripped_mw
    }

    /// Tripped blocks in trip order.
    pub fn trips(&self) -> Vec<SdrTrip<T>> {
        let mut trips: Vec<_> = self
            .relays
            .iter()
            .filter_map(|r| {
                r.tripped_at.map(|time| SdrTrip {
                    block: r.id.clone(),
                    time,
                    amount_mw: r.amount_mw,
                })
            })
            .collect();
        trips.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap_or(std::cmp::Ordering::Equal));
        trips
    }
}

/// Runs the relays over a sampled frequency trace and returns the tripped-MW
/// trace together with the trips.
pub fn sdr_step<T: Scalar>(
    blocks: &[SdrBlock<T>],
    samples: &[(T, T)],
) -> (Vec<T>, Vec<SdrTrip<T>>) {
    let mut relays = SdrRelays::new(blocks);
    let totals = samples.iter().map(|&(t, f)| relays.step(f, t)).collect();
    (totals, relays.trips())
}
