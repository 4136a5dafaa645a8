//! Plucked-string synthesis: a noise burst fed into an averaged, attenuated
//! feedback delay line.

use alloc::vec;
use alloc::vec::Vec;

/// 64-bit linear congruential generator (Knuth's MMIX constants).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.0
    }

    /// Uniform in `[-1, 1)`, from the 24 high bits.
    pub fn next_bipolar(&mut self) -> f32 {
        let bits = (self.next_u64() >> 40) as u32;
        bits as f32 / (1u32 << 23) as f32 - 1.0
    }
}

/// FNV-1a over the bytes of `s`.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Combines a render seed with a per-object hash (splitmix64 finalizer).
pub fn mix_seed(global: u64, object: u64) -> u64 {
    let mut z = global ^ object.rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Delay-line length for `freq_hz` at `sample_rate`, rounded to nearest.
pub fn delay_length(sample_rate: u32, freq_hz: f64) -> usize {
    let d = f64::from(sample_rate) / freq_hz + 0.5;
    if d.is_finite() && d >= 0.0 {
        d as usize
    } else {
        0
    }
}

#[derive(Clone, Debug)]
pub struct KarplusState {
    delay: usize,
    seed: u64,
    /// Last `delay + 1` outputs; `pos` is the slot of the oldest.
    history: Vec<f32>,
    pos: usize,
    noise: Lcg,
    burst_left: usize,
}

impl KarplusState {
    pub fn new(delay: usize, seed: u64) -> Self {
        assert!(delay >= 2, "delay line shorter than 2 samples");
        KarplusState {
            delay,
            seed,
            history: vec![0.0; delay + 1],
            pos: 0,
            noise: Lcg::new(seed),
            burst_left: 0,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Clears the line and arms a fresh noise burst of `delay` samples.
    /// The first burst sample is a full-scale 1.0 so the onset lands on
    /// the excitation sample itself.
    pub fn pluck(&mut self) {
        self.clear();
        self.noise = Lcg::new(self.seed);
        self.burst_left = self.delay;
    }

    pub fn clear(&mut self) {
        self.history.iter_mut().for_each(|s| *s = 0.0);
        self.pos = 0;
        self.burst_left = 0;
    }

    /// Next excitation sample: the burst while it lasts, then silence.
    pub fn excitation(&mut self) -> f32 {
        if self.burst_left == 0 {
            return 0.0;
        }
        let first = self.burst_left == self.delay;
        self.burst_left -= 1;
        let n = self.noise.next_bipolar();
        if first {
            1.0
        } else {
            n
        }
    }
}

/// One sample of `y[t] = x[t] + a * (y[t-D] + y[t-D-1]) / 2`.
pub fn karplus_step(state: &mut KarplusState, excitation: f32, attenuation: f32) -> f32 {
    let len = state.history.len();
    // Oldest slot holds y[t-D-1], the next one y[t-D].
    let older = state.history[state.pos];
    let old = state.history[(state.pos + 1) % len];
    let y = excitation + attenuation * (old + older) * 0.5;
    state.history[state.pos] = y;
    state.pos = (state.pos + 1) % len;
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pluck_and_run(delay: usize, seed: u64, a: f32, n: usize) -> Vec<f32> {
        let mut s = KarplusState::new(delay, seed);
        s.pluck();
        (0..n)
            .map(|_| {
                let x = s.excitation();
                karplus_step(&mut s, x, a)
            })
            .collect()
    }

    #[test]
    fn delay_length_rounds() {
        assert_eq!(delay_length(44_100, 441.0), 100);
        assert_eq!(delay_length(44_100, 551.25), 80);
        assert_eq!(delay_length(44_100, 440.0), 100);
        assert_eq!(delay_length(48_000, 24_000.0), 2);
    }

    #[test]
    fn burst_then_recurrence() {
        let y = pluck_and_run(4, 7, 0.5, 12);
        assert_eq!(y[0], 1.0);
        assert!(y[..4].iter().all(|v| (-1.0..=1.0).contains(v)));
        // y[4] = 0.5 * (y[0] + y[-1]) with y[-1] = 0.
        assert_eq!(y[4], 0.25);
        for t in 5..12 {
            assert_eq!(y[t], 0.5 * (y[t - 4] + y[t - 5]) * 0.5);
        }
    }

    #[test]
    fn envelope_decays_by_attenuation_per_period() {
        let (d, a) = (50usize, 0.99f32);
        let y = pluck_and_run(d, 3, a, 40 * d);
        for t in d + 1..y.len() {
            let bound = a * y[t - d].abs().max(y[t - d - 1].abs());
            assert!(y[t].abs() <= bound * (1.0 + 1e-6), "t={t}");
        }
        let peaks: Vec<f32> = y
            .chunks(d)
            .map(|c| c.iter().fold(0.0f32, |m, v| m.max(v.abs())))
            .collect();
        for k in 2..peaks.len() {
            assert!(peaks[k] <= a * peaks[k - 1].max(peaks[k - 2]) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn same_seed_same_output() {
        assert_eq!(pluck_and_run(80, 11, 0.999, 5000), pluck_and_run(80, 11, 0.999, 5000));
        assert_ne!(pluck_and_run(80, 11, 0.999, 50), pluck_and_run(80, 12, 0.999, 50));
    }

    #[test]
    fn noise_is_bipolar_unit_range() {
        let mut g = Lcg::new(1);
        let v: Vec<f32> = (0..10_000).map(|_| g.next_bipolar()).collect();
        assert!(v.iter().all(|x| (-1.0..1.0).contains(x)));
        assert!(v.iter().any(|x| *x < -0.9) && v.iter().any(|x| *x > 0.9));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
