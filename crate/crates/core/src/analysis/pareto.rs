//! Energy/accuracy dominance and the efficient frontier.

use serde::{Deserialize, Serialize};

/// A model's position in the trade-off plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Joules per image.
    pub energy: f64,
    /// Accuracy in percent.
    pub accuracy: f64,
}

impl TradeoffPoint {
    pub fn new(energy: f64, accuracy: f64) -> Self {
        TradeoffPoint { energy, accuracy }
    }
}

/// `p` dominates `q`: no more energy, no less accuracy, and strictly better
/// in at least one.
pub fn dominates(p: &TradeoffPoint, q: &TradeoffPoint) -> bool {
    p.energy <= q.energy && p.accuracy >= q.accuracy && (p.energy < q.energy || p.accuracy > q.accuracy)
}

/// Indices of the non-dominated points, ordered by energy ascending (then
/// accuracy descending, then index). Coordinates must be finite.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.energy.total_cmp(&q.energy).then(q.accuracy.total_cmp(&p.accuracy)).then(a.cmp(&b))
    });

    let mut front = Vec::new();
    // best accuracy among strictly cheaper points
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let energy = points[order[i]].energy;
        let group_max = points[order[i]].accuracy;
        let mut j = i;
        while j < order.len() && points[order[j]].energy == energy {
            let acc = points[order[j]].accuracy;
            if acc > best_cheaper && acc >= group_max {
                front.push(order[j]);
            }
            j += 1;
        }
        best_cheaper = best_cheaper.max(group_max);
        i = j;
    }
    front
}
