//! Cumulative yearly convex hulls in (log10 energy, accuracy) space.

use serde::{Deserialize, Serialize};

use super::pareto::TradeoffPoint;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the convex hull vertices of `xy`, counter-clockwise from the
/// lowest-x (then lowest-y) point. Collinear and duplicate points are not
/// vertices.
pub fn convex_hull(xy: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xy.len()).collect();
    order.sort_by(|&a, &b| xy[a].0.total_cmp(&xy[b].0).then(xy[a].1.total_cmp(&xy[b].1)));
    order.dedup_by(|a, b| xy[*a] == xy[*b]);
    if order.len() < 3 {
        return order;
    }

    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in [order.clone(), order.iter().rev().copied().collect()] {
        let base = hull.len();
        for &i in &pass {
            while hull.len() >= base + 2 && cross(xy[hull[hull.len() - 2]], xy[hull[hull.len() - 1]], xy[i]) <= 0.0 {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // all collinear: the two extremes
        return vec![order[0], order[order.len() - 1]];
    }
    hull
}

/// Hull in the plotting space used for yearly progress: log10 energy on x.
pub fn tradeoff_hull(points: &[TradeoffPoint]) -> Vec<usize> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.energy.log10(), p.accuracy)).collect();
    convex_hull(&xy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearPoint {
    pub point: TradeoffPoint,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearHull {
    pub year: i32,
    /// Number of models published up to and including `year`.
    pub members: usize,
    /// Hull vertices as indices into the input slice.
    pub vertices: Vec<usize>,
}

/// For every distinct year, the hull of all models published up to it.
pub fn yearly_hulls(entries: &[YearPoint]) -> Vec<YearHull> {
    let mut years: Vec<i32> = entries.iter().map(|e| e.year).collect();
    years.sort_unstable();
    years.dedup();
    years
        .into_iter()
        .map(|year| {
            let members: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].year <= year).collect();
            let pts: Vec<TradeoffPoint> = members.iter().map(|&i| entries[i].point).collect();
            let vertices = tradeoff_hull(&pts).into_iter().map(|k| members[k]).collect();
            YearHull { year, members: members.len(), vertices }
        })
        .collect()
}
