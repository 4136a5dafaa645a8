//! Synthetic CPU load: worker threads alternating busy and idle phases.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

/// Length of one busy/idle cycle.
pub const DUTY_PERIOD: Duration = Duration::from_millis(10);

fn clock(id: libc::clockid_t) -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(id, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime failed");
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

/// CPU time consumed by the whole process.
pub fn process_cpu_time() -> Duration {
    clock(libc::CLOCK_PROCESS_CPUTIME_ID)
}

/// CPU time consumed by the calling thread.
pub fn thread_cpu_time() -> Duration {
    clock(libc::CLOCK_THREAD_CPUTIME_ID)
}

/// Number of workers matching the CPUs available to this process.
pub fn default_workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Running load workers. Dropping the handle stops them.
pub struct LoadHandle {
    fraction: f64,
    stop: Arc<AtomicBool>,
    cpu_nanos: Vec<Arc<AtomicU64>>,
    workers: Vec<JoinHandle<()>>,
    started: Instant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadStats {
    pub target: f64,
    /// Worker CPU time over worker wall time, in [0, 1].
    pub measured: f64,
    pub elapsed: Duration,
    /// Time taken by the workers to exit after the stop request.
    pub stop_latency: Duration,
}

/// Starts `workers` threads, each busy for `fraction` of every
/// [`DUTY_PERIOD`] and sleeping for the rest.
pub fn generate_load(fraction: f64, workers: usize) -> LoadHandle {
    let fraction = fraction.clamp(0.0, 1.0);
    let stop = Arc::new(AtomicBool::new(false));
    let mut cpu_nanos = Vec::with_capacity(workers);
    let handles = (0..workers)
        .map(|i| {
            let stop = Arc::clone(&stop);
            let cpu = Arc::new(AtomicU64::new(0));
            cpu_nanos.push(Arc::clone(&cpu));
            thread::Builder::new()
                .name(format!("load-{i}"))
                .spawn(move || worker(fraction, &stop, &cpu))
                .expect("spawn load worker")
        })
        .collect();
    LoadHandle {
        fraction,
        stop,
        cpu_nanos,
        workers: handles,
        started: Instant::now(),
    }
}

fn worker(fraction: f64, stop: &AtomicBool, cpu: &AtomicU64) {
    let busy = DUTY_PERIOD.mul_f64(fraction);
    let base = thread_cpu_time();
    let mut spin: u64 = 0;
    while !stop.load(Ordering::Relaxed) {
        let cycle = Instant::now();
        while cycle.elapsed() < busy {
            spin = std::hint::black_box(spin.wrapping_mul(6364136223846793005).wrapping_add(1));
        }
        if let Some(rest) = DUTY_PERIOD.checked_sub(cycle.elapsed()) {
            thread::sleep(rest);
        }
        cpu.store((thread_cpu_time() - base).as_nanos() as u64, Ordering::Relaxed);
    }
}

impl LoadHandle {
    pub fn target(&self) -> f64 {
        self.fraction
    }

    pub fn workers(&self) -> usize {
        self.workers.len()
    }

    /// Load achieved so far, from the workers' CPU clocks.
    pub fn measured(&self) -> f64 {
        if self.workers.is_empty() {
            return 0.0;
        }
        let wall = self.started.elapsed().as_secs_f64() * self.workers.len() as f64;
        let cpu: u64 = self.cpu_nanos.iter().map(|c| c.load(Ordering::Relaxed)).sum();
        (cpu as f64 / 1e9 / wall).min(1.0)
    }

    /// Stops and joins the workers.
    pub fn stop(mut self) -> LoadStats {
        self.shutdown()
    }

    fn shutdown(&mut self) -> LoadStats {
        let measured = self.measured();
        let elapsed = self.started.elapsed();
        let asked = Instant::now();
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        LoadStats {
            target: self.fraction,
            measured,
            elapsed,
            stop_latency: asked.elapsed(),
        }
    }
}

impl Drop for LoadHandle {
    fn drop(&mut self) {
        if !self.workers.is_empty() {
            self.shutdown();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_load_is_idle() {
        let h = generate_load(0.0, 2);
        thread::sleep(Duration::from_millis(200));
        let stats = h.stop();
        assert!(stats.measured < 0.05, "{stats:?}");
    }

    #[test]
    fn stop_is_prompt() {
        let h = generate_load(0.85, 2);
        thread::sleep(Duration::from_millis(100));
        let stats = h.stop();
        assert!(stats.stop_latency < Duration::from_millis(100), "{stats:?}");
    }

    #[test]
    fn cpu_clocks_advance() {
        let a = thread_cpu_time();
        let t = Instant::now();
        while t.elapsed() < Duration::from_millis(20) {
            std::hint::black_box(0u64);
        }
        assert!(thread_cpu_time() > a);
        assert!(process_cpu_time() >= thread_cpu_time());
    }
}
