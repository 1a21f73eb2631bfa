//! Reference implementations used as oracles. Each one is written from the
//! textbook definition and deliberately shares no code with the library.

#![allow(dead_code)]

use enerprof::analysis::TradeoffPoint;
use enerprof::EnergyMetrics;

/// Pearson via the single-pass sums formula.
pub fn pearson_direct(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank of each value counted directly: 1 + (number smaller) + half the
/// number of other equal values.
pub fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let smaller = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_direct(xs: &[f64], ys: &[f64]) -> f64 {
    pearson_direct(&brute_ranks(xs), &brute_ranks(ys))
}

/// Indices of points no other point dominates, by pairwise scan.
pub fn pareto_scan(points: &[TradeoffPoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().any(|q| {
                let p = &points[i];
                q.energy <= p.energy && q.accuracy >= p.accuracy && (q.energy < p.energy || q.accuracy > p.accuracy)
            })
        })
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn within(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Hull vertices by exhaustive edge test: `i -> j` is a counter-clockwise
/// hull edge when every other point lies strictly to its left or on the
/// closed segment. Returns distinct vertex coordinates, sorted.
pub fn hull_exhaustive(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut vertices = Vec::new();
    for &a in &pts {
        for &b in &pts {
            if a == b {
                continue;
            }
            let edge = pts.iter().filter(|&&p| p != a && p != b).all(|&p| {
                let c = cross(a, b, p);
                c > 0.0 || (c == 0.0 && within(a, b, p))
            });
            if edge {
                vertices.push(a);
                vertices.push(b);
            }
        }
    }
    vertices.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    vertices.dedup();
    vertices
}

/// Lowest energy per image, smaller batch on ties, by full scan.
pub fn best_exhaustive(metrics: &[EnergyMetrics]) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for m in metrics {
        let better = match best {
            None => true,
            Some((b, e)) => m.energy_per_image < e || (m.energy_per_image == e && m.batch_size < b),
        };
        if better {
            best = Some((m.batch_size, m.energy_per_image));
        }
    }
    best
}

/// Number of batches after which a run with constant per-batch latency
/// stops: the first count above `min_reps` whose elapsed time is also above
/// `min_runtime_ns`, found by stepping.
pub fn stopping_count(latency_ns: u64, min_reps: u64, min_runtime_ns: u64) -> u64 {
    let mut n = 0;
    loop {
        n += 1;
        if n > min_reps && n * latency_ns > min_runtime_ns {
            return n;
        }
    }
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
