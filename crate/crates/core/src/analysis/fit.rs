use serde::Serialize;

use super::{AnalysisError, ScalePoint};

/// Parameters of `f(x) = γ / (1 + exp(-β (log2 x - α))) + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub residual_sse: f64,
    pub iterations: usize,
}

impl ScalingFit {
    pub fn predict(&self, node_count: f64) -> f64 {
        sigmoid([self.alpha, self.beta, self.gamma, self.delta], node_count.log2())
    }
}

fn sigmoid(p: [f64; 4], log_x: f64) -> f64 {
    let [alpha, beta, gamma, delta] = p;
    gamma / (1.0 + (-beta * (log_x - alpha)).exp()) + delta
}

fn sse(p: [f64; 4], data: &[(f64, f64)]) -> f64 {
    let total: f64 = data.iter().map(|&(lx, q)| (sigmoid(p, lx) - q).powi(2)).sum();
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100_000;
const MAX_RESTARTS: usize = 8;

/// Least-squares fit over `(node_count, quality)` pairs.
///
/// Starts from δ = min quality, γ = range, α = midpoint of the log-scales and
/// β = 1, then runs Nelder–Mead until the simplex shrinks below
/// [`SIMPLEX_TOLERANCE`] or [`MAX_ITERATIONS`] iterations pass, restarting
/// from the best vertex while restarts still improve the residual.
pub fn fit_pairs(pairs: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    if pairs.iter().any(|&(x, q)| !x.is_finite() || !q.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if let Some(&(x, _)) = pairs.iter().find(|&&(x, _)| x < 1.0) {
        return Err(AnalysisError::InvalidScale(x));
    }
    let mut scales: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    if scales.len() < 4 {
        return Err(AnalysisError::InsufficientData { distinct_scales: scales.len() });
    }

    let data: Vec<(f64, f64)> = pairs.iter().map(|&(x, q)| (x.log2(), q)).collect();
    let lo = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    let mid = (scales[0].log2() + scales[scales.len() - 1].log2()) / 2.0;
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        // Flat data: any β fits, the plateau sits at δ.
        let p = [mid, 1.0, 0.0, lo];
        return Ok(ScalingFit { alpha: mid, beta: 1.0, gamma: 0.0, delta: lo, residual_sse: sse(p, &data), iterations: 0 });
    }

    let range = hi - lo;
    let mut best = [mid, 1.0, range, lo];
    let mut best_value = sse(best, &data);
    let mut steps = [1.0, 0.5, 0.5 * range, 0.5 * range];
    let mut iterations = 0;
    for _ in 0..MAX_RESTARTS {
        let (p, value, used) = nelder_mead(|p| sse(p, &data), best, steps, MAX_ITERATIONS - iterations);
        iterations += used;
        let improved = value < best_value - 1e-15 * best_value.max(1e-300);
        if value <= best_value {
            best = p;
            best_value = value;
        }
        if !improved || iterations >= MAX_ITERATIONS {
            break;
        }
        steps = [0.1, 0.1, 0.1 * range, 0.1 * range];
    }

    let [alpha, beta, gamma, delta] = best;
    Ok(ScalingFit { alpha, beta, gamma, delta, residual_sse: best_value, iterations })
}

pub fn fit_scaling_curve(points: &[ScalePoint]) -> Result<ScalingFit, AnalysisError> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.node_count as f64, p.quality)).collect();
    fit_pairs(&pairs)
}

/// Plain Nelder–Mead on four parameters; returns the best vertex, its value
/// and the number of iterations used.
fn nelder_mead(f: impl Fn([f64; 4]) -> f64, start: [f64; 4], steps: [f64; 4], max_iter: usize) -> ([f64; 4], f64, usize) {
    const N: usize = 4;
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(start)));
    for i in 0..N {
        let mut v = start;
        v[i] += steps[i];
        simplex.push((v, f(v)));
    }

    let mut iter = 0;
    while iter < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < SIMPLEX_TOLERANCE {
            break;
        }
        iter += 1;

        let mut centroid = [0.0; N];
        for (v, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += v[i] / N as f64;
            }
        }
        let worst = simplex[N];
        let along = |t: f64| -> [f64; N] { std::array::from_fn(|i| centroid[i] + t * (worst.0[i] - centroid[i])) };

        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = f(expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst.1 {
                let c = along(-0.5);
                (c, f(c))
            } else {
                let c = along(0.5);
                (c, f(c))
            };
            if fc < worst.1.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for (v, fv) in simplex.iter_mut().skip(1) {
                    *v = std::array::from_fn(|i| best[i] + 0.5 * (v[i] - best[i]));
                    *fv = f(*v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, iter)
}

/// Chance that a token of Zipf rank `rank` (probability `1/rank`) shows up
/// at least once in `sample_count` independent draws.
pub fn tail_probability(rank: u64, sample_count: u64) -> Result<f64, AnalysisError> {
    if rank == 0 {
        return Err(AnalysisError::ZeroRank);
    }
    if sample_count == 0 {
        return Ok(0.0);
    }
    if rank == 1 {
        return Ok(1.0);
    }
    let log_miss = (-1.0 / rank as f64).ln_1p();
    Ok((-(sample_count as f64 * log_miss).exp_m1()).clamp(0.0, 1.0))
}
