//! Time quantities shared by the macro and micro levels.

use core::fmt;

/// Upper end of a tick interval. `Infinite` is an explicit marker, never a
/// large sentinel number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bound {
    Finite(u64),
    Infinite,
}

impl Bound {
    pub fn finite(self) -> Option<u64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Bound::Infinite)
    }

    /// Saturating addition; anything plus infinity is infinity.
    pub fn saturating_add(self, rhs: u64) -> Bound {
        match self {
            Bound::Finite(v) => Bound::Finite(v.saturating_add(rhs)),
            Bound::Infinite => Bound::Infinite,
        }
    }

    pub fn contains(self, value: u64) -> bool {
        match self {
            Bound::Finite(v) => value <= v,
            Bound::Infinite => true,
        }
    }
}

impl From<u64> for Bound {
    fn from(v: u64) -> Self {
        Bound::Finite(v)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

/// A closed interval of natural numbers `[min, max]`, `max` possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub min: u64,
    pub max: Bound,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        min: 0,
        max: Bound::Infinite,
    };

    pub fn new(min: u64, max: impl Into<Bound>) -> Self {
        Interval {
            min,
            max: max.into(),
        }
    }

    pub fn exactly(v: u64) -> Self {
        Interval::new(v, v)
    }

    pub fn at_least(min: u64) -> Self {
        Interval {
            min,
            max: Bound::Infinite,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.max.contains(self.min)
    }

    pub fn contains(&self, v: u64) -> bool {
        v >= self.min && self.max.contains(v)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.min, self.max)
    }
}

/// Unit of a micro relation offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MicroUnit {
    Samples,
    Micros,
    Millis,
    Seconds,
}

impl MicroUnit {
    fn per_second(self) -> u64 {
        match self {
            MicroUnit::Samples => 0,
            MicroUnit::Micros => 1_000_000,
            MicroUnit::Millis => 1_000,
            MicroUnit::Seconds => 1,
        }
    }

    /// Converts `offset` in this unit to whole samples, rounding to nearest
    /// (ties away from zero). Integer arithmetic only.
    pub fn to_samples(self, offset: u64, sample_rate: u32) -> u64 {
        if self == MicroUnit::Samples {
            return offset;
        }
        let den = self.per_second() as u128;
        let num = offset as u128 * sample_rate as u128;
        ((2 * num + den) / (2 * den)) as u64
    }

    /// True when the conversion to samples needs no rounding.
    pub fn converts_exactly(self, offset: u64, sample_rate: u32) -> bool {
        if self == MicroUnit::Samples {
            return true;
        }
        (offset as u128 * sample_rate as u128).is_multiple_of(self.per_second() as u128)
    }

    /// Offset expressed in whole microseconds, rounded to nearest. Samples
    /// are converted at `sample_rate`.
    pub fn to_micros(self, offset: u64, sample_rate: u32) -> u64 {
        match self {
            MicroUnit::Samples => {
                let num = offset as u128 * 1_000_000;
                let den = sample_rate.max(1) as u128;
                ((2 * num + den) / (2 * den)) as u64
            }
            MicroUnit::Micros => offset,
            MicroUnit::Millis => offset.saturating_mul(1_000),
            MicroUnit::Seconds => offset.saturating_mul(1_000_000),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MicroUnit::Samples => "samples",
            MicroUnit::Micros => "us",
            MicroUnit::Millis => "ms",
            MicroUnit::Seconds => "s",
        }
    }
}

impl fmt::Display for MicroUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples covered by one tick, when that is a whole number.
pub fn samples_per_tick(tick_ms: u32, sample_rate: u32) -> Option<u64> {
    let num = tick_ms as u64 * sample_rate as u64;
    if tick_ms == 0 || sample_rate == 0 || !num.is_multiple_of(1000) {
        None
    } else {
        Some(num / 1000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_millisecond_is_22_samples_at_44k1() {
        assert_eq!(MicroUnit::Micros.to_samples(500, 44_100), 22);
        assert!(!MicroUnit::Micros.converts_exactly(500, 44_100));
    }

    #[test]
    fn samples_pass_through() {
        assert_eq!(MicroUnit::Samples.to_samples(100, 44_100), 100);
        assert!(MicroUnit::Samples.converts_exactly(100, 44_100));
    }

    #[test]
    fn seconds_and_millis_convert_exactly() {
        assert_eq!(MicroUnit::Seconds.to_samples(2, 48_000), 96_000);
        assert_eq!(MicroUnit::Millis.to_samples(20, 44_100), 882);
        assert!(MicroUnit::Millis.converts_exactly(20, 44_100));
    }

    #[test]
    fn tick_of_20ms_at_44k1() {
        assert_eq!(samples_per_tick(20, 44_100), Some(882));
        assert_eq!(samples_per_tick(1, 44_100), None);
        assert_eq!(samples_per_tick(0, 44_100), None);
    }

    #[test]
    fn bound_ordering_and_saturation() {
        assert!(Bound::Finite(u64::MAX) < Bound::Infinite);
        assert_eq!(Bound::Finite(u64::MAX).saturating_add(1), Bound::Finite(u64::MAX));
        assert_eq!(Bound::Infinite.saturating_add(5), Bound::Infinite);
    }

    #[test]
    fn empty_interval() {
        assert!(Interval::new(10, 5).is_empty());
        assert!(!Interval::new(5, 5).is_empty());
        assert!(!Interval::at_least(7).is_empty());
    }
}
