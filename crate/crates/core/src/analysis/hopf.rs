//! Strict positivity of `u` next to the boundary.

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::energy::NodalField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    pub ring_nodes: usize,
    /// Smallest `u` on the first interior ring, relative to `max u`.
    pub min_relative: f64,
    pub worst_node: usize,
    pub verdict: Verdict,
}

/// `u > 0` at every interior node adjacent to a boundary node.
pub fn hopf_check(u: &NodalField) -> HopfReport {
    let ring = u.mesh().first_ring();
    let umax = u.max();
    let (worst_node, min_value) = ring
        .iter()
        .map(|&i| (i, u.values()[i]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((usize::MAX, f64::NAN));
    let min_relative = min_value / umax;
    HopfReport {
        ring_nodes: ring.len(),
        min_relative,
        worst_node,
        verdict: Verdict::from_bool(!ring.is_empty() && min_relative > 0.0),
    }
}
