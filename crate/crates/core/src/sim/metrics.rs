//! Per-slot metrics and their aggregation over a run.

use serde::{Deserialize, Serialize};

use crate::backpressure::SlotSummary;
use crate::packet::Delivery;
use crate::traffic::ArrivalBatch;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: u64,
    pub arrivals: u64,
    pub shadow_arrivals: u64,
    pub deliveries: u64,
    pub real_queue_total: u64,
    pub shadow_queue_total: u64,
    pub schedule_size: u32,
    pub transmissions: u64,
}

impl SlotMetrics {
    pub fn new(
        batch: &ArrivalBatch,
        deliveries: &[Delivery],
        summary: SlotSummary,
        real_queue_total: u64,
        shadow_queue_total: u64,
    ) -> Self {
        Self {
            slot: batch.slot,
            arrivals: batch.real_total(),
            shadow_arrivals: batch.shadow_total(),
            deliveries: deliveries.len() as u64,
            real_queue_total,
            shadow_queue_total,
            schedule_size: summary.schedule_size,
            transmissions: summary.transmissions,
        }
    }
}

/// Accumulates metrics over one run. Delay statistics cover packets born
/// after warmup; queue statistics cover the whole run by quarter.
#[derive(Clone, Debug)]
pub struct Collector {
    slots: u64,
    warmup: u64,
    pub arrivals: u64,
    pub shadow_arrivals: u64,
    pub total_arrivals: u64,
    pub total_shadow_arrivals: u64,
    pub delivered: u64,
    pub window_deliveries: u64,
    pub window_transmissions: u64,
    delay_sum: u64,
    delay_hist: Vec<u64>,
    quarter_sum: [f64; 4],
    quarter_len: [u64; 4],
    half_queue: f64,
    half_shadow: f64,
    half_len: u64,
}

impl Collector {
    pub fn new(slots: u64, warmup: u64) -> Self {
        Self {
            slots,
            warmup,
            arrivals: 0,
            shadow_arrivals: 0,
            total_arrivals: 0,
            total_shadow_arrivals: 0,
            delivered: 0,
            window_deliveries: 0,
            window_transmissions: 0,
            delay_sum: 0,
            delay_hist: Vec::new(),
            quarter_sum: [0.0; 4],
            quarter_len: [0; 4],
            half_queue: 0.0,
            half_shadow: 0.0,
            half_len: 0,
        }
    }

    pub fn record(&mut self, m: &SlotMetrics, deliveries: &[Delivery]) {
        let t = m.slot;
        self.total_arrivals += m.arrivals;
        self.total_shadow_arrivals += m.shadow_arrivals;
        if t >= self.warmup {
            self.arrivals += m.arrivals;
            self.shadow_arrivals += m.shadow_arrivals;
            self.window_deliveries += m.deliveries;
            self.window_transmissions += m.transmissions;
        }
        for d in deliveries {
            if d.packet.birth >= self.warmup {
                let delay = d.delay();
                self.delivered += 1;
                self.delay_sum += delay;
                let i = delay as usize;
                if i >= self.delay_hist.len() {
                    self.delay_hist.resize(i + 1, 0);
                }
                self.delay_hist[i] += 1;
            }
        }
        let q = ((t * 4) / self.slots).min(3) as usize;
        self.quarter_sum[q] += m.real_queue_total as f64;
        self.quarter_len[q] += 1;
        if t >= self.slots / 2 {
            self.half_queue += m.real_queue_total as f64;
            self.half_shadow += m.shadow_queue_total as f64;
            self.half_len += 1;
        }
    }

    pub fn window_slots(&self) -> u64 {
        self.slots - self.warmup
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum as f64 / self.delivered as f64)
    }

    /// Smallest delay d with at least `q` of the samples at or below d.
    pub fn delay_quantile(&self, q: f64) -> Option<u64> {
        if self.delivered == 0 {
            return None;
        }
        let target = (q * self.delivered as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (d, &c) in self.delay_hist.iter().enumerate() {
            acc += c;
            if acc >= target {
                return Some(d as u64);
            }
        }
        Some(self.delay_hist.len() as u64 - 1)
    }

    pub fn max_delay(&self) -> Option<u64> {
        (self.delivered > 0).then(|| self.delay_hist.len() as u64 - 1)
    }

    pub fn quarter_means(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for q in 0..4 {
            if self.quarter_len[q] > 0 {
                out[q] = self.quarter_sum[q] / self.quarter_len[q] as f64;
            }
        }
        out
    }

    pub fn mean_queue_last_half(&self) -> f64 {
        if self.half_len == 0 {
            0.0
        } else {
            self.half_queue / self.half_len as f64
        }
    }

    pub fn mean_shadow_last_half(&self) -> f64 {
        if self.half_len == 0 {
            0.0
        } else {
            self.half_shadow / self.half_len as f64
        }
    }
}
