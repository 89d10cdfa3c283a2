//! Empirical stability oracle from measured link rates.

use serde::{Deserialize, Serialize};

use crate::router::RateCounters;

/// (ρ, ρ̂) for one link: measured real arrival rate over measured service
/// rate, and the prediction from the shadow rate σ̄ / ((1 + ε) μ̄).
pub fn intensity(arrival_rate: f64, sigma_rate: f64, service_rate: f64, epsilon: f64) -> (f64, f64) {
    (
        arrival_rate / service_rate,
        sigma_rate / ((1.0 + epsilon) * service_rate),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkIntensity {
    pub link: usize,
    pub from: usize,
    pub to: usize,
    pub arrival_rate: f64,
    pub sigma_rate: f64,
    /// Capacity times the fraction of slots the link transmitted.
    pub service_rate: f64,
    /// None when the link never transmitted.
    pub rho: Option<f64>,
    pub rho_hat: Option<f64>,
    /// Packets arrived but the link never transmitted.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub tolerance: f64,
    pub epsilon: f64,
    pub max_rho: f64,
    pub max_rho_hat: f64,
    /// Σ |η − σ̄/(1+ε)| / Σ max(σ̄, 0.01) over every (queue, destination).
    pub identity_error: f64,
    pub degenerate_links: usize,
    pub stable: bool,
    pub links: Vec<LinkIntensity>,
}

/// Relative gap between real per-(queue, destination) arrival rates and
/// the shadow transfer rates scaled down by 1 + ε.
pub fn identity_error(c: &RateCounters, epsilon: f64) -> f64 {
    if c.slots == 0 {
        return 0.0;
    }
    let t = c.slots as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (&a, &s) in c.arc_arrivals.iter().zip(&c.arc_sigma) {
        if a == 0 && s == 0 {
            continue;
        }
        let eta = a as f64 / t;
        let sigma = s as f64 / t;
        num += (eta - sigma / (1.0 + epsilon)).abs();
        den += sigma.max(0.01);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Stable iff every link with traffic has ρ < 1 − tolerance and none is
/// degenerate.
pub fn stability_oracle(
    c: &RateCounters,
    endpoints: &[(usize, usize)],
    epsilon: f64,
    tolerance: f64,
) -> StabilityReport {
    let t = c.slots.max(1) as f64;
    let num_links = c.link_active.len();
    let mut sigma = vec![0u64; num_links];
    for (i, &s) in c.arc_sigma.iter().enumerate() {
        sigma[c.arc_link[i / c.num_nodes]] += s;
    }
    let links: Vec<LinkIntensity> = (0..num_links)
        .map(|l| {
            let arrival_rate = c.link_arrivals[l] as f64 / t;
            let sigma_rate = sigma[l] as f64 / t;
            let service_rate = f64::from(c.link_capacity[l]) * c.link_active[l] as f64 / t;
            let (rho, rho_hat) = if service_rate > 0.0 {
                let (r, h) = intensity(arrival_rate, sigma_rate, service_rate, epsilon);
                (Some(r), Some(h))
            } else {
                (None, None)
            };
            LinkIntensity {
                link: l,
                from: endpoints[l].0,
                to: endpoints[l].1,
                arrival_rate,
                sigma_rate,
                service_rate,
                rho,
                rho_hat,
                degenerate: service_rate == 0.0 && c.link_arrivals[l] > 0,
            }
        })
        .collect();
    let max_rho = links.iter().filter_map(|l| l.rho).fold(0.0, f64::max);
    let max_rho_hat = links.iter().filter_map(|l| l.rho_hat).fold(0.0, f64::max);
    let degenerate_links = links.iter().filter(|l| l.degenerate).count();
    StabilityReport {
        tolerance,
        epsilon,
        max_rho,
        max_rho_hat,
        identity_error: identity_error(c, epsilon),
        degenerate_links,
        stable: degenerate_links == 0 && max_rho < 1.0 - tolerance,
        links,
    }
}

/// Queue growth between the second and last quarter of a run: the last
/// quarter's mean is at least twice the second's and at least a packet more.
pub fn queue_growth(second_quarter: f64, last_quarter: f64) -> bool {
    last_quarter >= 2.0 * second_quarter && last_quarter - second_quarter >= 1.0
}
