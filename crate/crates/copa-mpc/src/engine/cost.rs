//! Accelerator cost model.
//!
//! The pipeline streams one element per `cycles_per_element` clocks after a
//! fixed DMA startup delay, so a batched job occupies an instance for
//! `dma_startup_us + count * cycles_per_element / clock_mhz` microseconds.
//! The same arithmetic gives the per-link communication rate a single
//! instance can sustain: 128 payload bits per multiply per directed link,
//! 192 with per-term verification tags.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelCostModel {
    pub clock_mhz: f64,
    pub cycles_per_element: f64,
    pub dma_startup_us: f64,
}

impl Default for AccelCostModel {
    fn default() -> Self {
        AccelCostModel {
            clock_mhz: 275.0,
            cycles_per_element: 2.0,
            dma_startup_us: 1.0,
        }
    }
}

impl AccelCostModel {
    pub fn validate(&self) -> crate::Result<()> {
        if self.clock_mhz <= 0.0 || self.cycles_per_element <= 0.0 || self.dma_startup_us <= 0.0 {
            return Err(crate::Error::Config(
                "cost model parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Modeled time one batched job occupies an accelerator instance, in µs.
    pub fn job_time_us(&self, count: u32) -> f64 {
        self.dma_startup_us + count as f64 * self.cycles_per_element / self.clock_mhz
    }

    /// Steady-state element rate of the pipeline, elements per second.
    pub fn elements_per_second(&self) -> f64 {
        self.clock_mhz * 1e6 / self.cycles_per_element
    }
}

/// Payload rate one accelerator offers onto each directed link, in Gb/s:
/// 128 bits per multiply (192 in malicious per-term mode) times the
/// pipeline element rate.
pub fn per_link_rate(model: &AccelCostModel, malicious: bool) -> f64 {
    let bits_per_element = if malicious { 192.0 } else { 128.0 };
    bits_per_element * model.elements_per_second() / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_time_example() {
        let m = AccelCostModel::default();
        // 1 + 1024*2/275 us
        assert!((m.job_time_us(1024) - 8.447).abs() < 1e-3);
    }

    #[test]
    fn per_link_rate_defaults() {
        let m = AccelCostModel::default();
        let base = per_link_rate(&m, false);
        let mal = per_link_rate(&m, true);
        assert!((base - 17.6).abs() < 1e-9);
        assert!((mal - 26.4).abs() < 1e-9);
    }

    #[test]
    fn per_link_rate_slow_clock() {
        let m = AccelCostModel {
            clock_mhz: 250.0,
            ..Default::default()
        };
        assert!((per_link_rate(&m, false) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn ops_rate_rises_to_plateau() {
        let m = AccelCostModel::default();
        let rate = |n: u32| n as f64 / m.job_time_us(n) * 1e6;
        let mut prev = 0.0;
        for n in [1u32, 16, 256, 4096, 65536, 1 << 20] {
            let r = rate(n);
            assert!(r > prev);
            prev = r;
        }
        assert!(prev < m.elements_per_second());
        assert!(prev > 0.95 * m.elements_per_second());
    }
}
