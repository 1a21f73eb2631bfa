//! Nested-logarithmic trend of the efficient frontier,
//! `A(E) = c1 * ln(ln E + c2) + c3`, fitted by least squares.

use serde::{Deserialize, Serialize};

use super::pareto::TradeoffPoint;
use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierFit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Root-mean-square residual in accuracy percent.
    pub residual_norm: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl FrontierFit {
    /// Accuracy predicted at `energy` joules; NaN outside the log domain.
    pub fn eval(&self, energy: f64) -> f64 {
        self.c1 * (energy.ln() + self.c2).ln() + self.c3
    }
}

struct Problem {
    log_e: Vec<f64>,
    acc: Vec<f64>,
    log_e_min: f64,
}

impl Problem {
    /// `c2 = exp(u) - min ln E` keeps `ln E + c2 > 0` on the whole domain.
    fn c2(&self, u: f64) -> f64 {
        u.exp() - self.log_e_min
    }

    fn log_z(&self, u: f64) -> Vec<f64> {
        let c2 = self.c2(u);
        self.log_e.iter().map(|l| (l + c2).ln()).collect()
    }

    fn cost(&self, p: [f64; 3]) -> f64 {
        self.log_z(p[1]).iter().zip(&self.acc).map(|(lz, a)| (p[0] * lz + p[2] - a).powi(2)).sum()
    }

    /// c1 and c3 by linear least squares for a fixed `u`.
    fn linear_init(&self, u: f64) -> Option<[f64; 3]> {
        let lz = self.log_z(u);
        let (c1, c3) = super::stats::linear_fit(&lz, &self.acc).ok()?;
        Some([c1, u, c3])
    }

    fn levenberg_marquardt(&self, mut p: [f64; 3]) -> ([f64; 3], f64, usize) {
        let mut cost = self.cost(p);
        let mut lambda = 1e-3;
        let mut iters = 0;
        while iters < 500 {
            iters += 1;
            let c2 = self.c2(p[1]);
            let eu = p[1].exp();
            let mut jtj = [[0.0f64; 3]; 3];
            let mut jtr = [0.0f64; 3];
            for (l, a) in self.log_e.iter().zip(&self.acc) {
                let z = l + c2;
                let lz = z.ln();
                let r = p[0] * lz + p[2] - a;
                let j = [lz, p[0] * eu / z, 1.0];
                for row in 0..3 {
                    jtr[row] += j[row] * r;
                    for col in 0..3 {
                        jtj[row][col] += j[row] * j[col];
                    }
                }
            }
            let mut improved = false;
            while lambda < 1e12 {
                let mut m = jtj;
                for (d, row) in m.iter_mut().enumerate() {
                    row[d] += lambda * jtj[d][d].max(1e-12);
                }
                let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                    lambda *= 4.0;
                    continue;
                };
                let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
                let trial_cost = self.cost(trial);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let small = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-14 * v.abs().max(1.0));
                    let converged = small || cost - trial_cost <= 1e-16 * cost.max(1e-300);
                    p = trial;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = !converged;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (p, cost, iters)
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &c| m[a][col].abs().total_cmp(&m[c][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (dst, src) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Multipliers on `ln E_min + c2` for the multi-start initializations.
const START_SCALES: [f64; 5] = [1.0, 0.1, 0.3, 3.0, 10.0];

/// Fit the nested-log curve to frontier points (energies in joules).
///
/// Starts from `c2 = 1 - min ln E + 0.1` plus four jittered variants, with
/// c1 and c3 from a linear solve; keeps the best converged fit.
pub fn fit_frontier(points: &[TradeoffPoint]) -> Result<FrontierFit> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!(
            "frontier fit needs at least {MIN_FIT_POINTS} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.energy.is_finite() && p.energy > 0.0 && p.accuracy.is_finite())) {
        return Err(Error::InvalidInput("frontier fit needs positive finite energies".into()));
    }
    let log_e: Vec<f64> = points.iter().map(|p| p.energy.ln()).collect();
    let log_e_min = log_e.iter().copied().fold(f64::INFINITY, f64::min);
    let problem = Problem { log_e, acc: points.iter().map(|p| p.accuracy).collect(), log_e_min };

    let base_u = 1.1f64.ln();
    let mut best: Option<([f64; 3], f64)> = None;
    let mut diagnostics = Vec::new();
    for scale in START_SCALES {
        let u0 = base_u + scale.ln();
        let Some(init) = problem.linear_init(u0) else {
            diagnostics.push(format!("start x{scale}: singular linear init"));
            continue;
        };
        let (p, cost, iters) = problem.levenberg_marquardt(init);
        if !cost.is_finite() || p.iter().any(|v| !v.is_finite()) {
            diagnostics.push(format!("start x{scale}: diverged after {iters} iterations"));
            continue;
        }
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((p, cost));
        }
    }
    let Some((p, cost)) = best else {
        return Err(Error::FitFailed(diagnostics.join("; ")));
    };
    let e_min = points.iter().map(|p| p.energy).fold(f64::INFINITY, f64::min);
    let e_max = points.iter().map(|p| p.energy).fold(0.0, f64::max);
    Ok(FrontierFit {
        c1: p[0],
        c2: problem.c2(p[1]),
        c3: p[2],
        residual_norm: (cost / points.len() as f64).sqrt(),
        e_min,
        e_max,
    })
}

/// Energy at which the fitted curve reaches `target_accuracy`:
/// `E = exp(exp((target - c3) / c1) - c2)`.
pub fn extrapolate_energy(fit: &FrontierFit, target_accuracy: f64) -> Result<f64> {
    if !(fit.c1.is_finite() && fit.c1 != 0.0 && fit.c2.is_finite() && fit.c3.is_finite()) {
        return Err(Error::InvalidInput("fit coefficients not invertible".into()));
    }
    let log_e = ((target_accuracy - fit.c3) / fit.c1).exp() - fit.c2;
    let energy = log_e.exp();
    if energy.is_infinite() {
        return Err(Error::InvalidInput(format!("energy for {target_accuracy}% overflows (ln E = {log_e:e})")));
    }
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::InvalidInput(format!("{target_accuracy}% lies below the representable range of the fit")));
    }
    Ok(energy)
}
