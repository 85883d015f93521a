//! The disorder-averaged self-consistency map M* and direct measurement
//! of its near-fixed-point contraction.

use crate::circle::magnetization;
use crate::error::{Error, Result};
use crate::mean_field::{minimizers, MFParams};
use crate::rng::stream;
use crate::vec2::{Vec2, E2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// M*(h) = (M(beta(h + eps e2)) + M(beta(h - eps e2))) / 2.
pub fn m_star(h: Vec2, params: &MFParams) -> Vec2 {
    let up = magnetization((h + E2 * params.eps) * params.beta);
    let down = magnetization((h - E2 * params.eps) * params.beta);
    (up + down) * 0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub radius: f64,
    pub factor: f64,
    pub samples: usize,
    pub params: MFParams,
}

/// Measured local Lipschitz factor of M* on the ball of `radius` around
/// the minimizer average: sampled sup of the difference ratio, polished
/// by a coordinate search from the best sample.
pub fn contraction_factor(
    params: &MFParams,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    let (min_a, _) = minimizers(params, 1e-12)?;
    let center = min_a.pair.m_bar();
    let fixed = m_star(center, params);
    let ratio = |offset: Vec2| -> f64 {
        let n = offset.norm();
        if n == 0.0 {
            return 0.0;
        }
        (m_star(center + offset, params) - fixed).norm() / n
    };

    let mut rng = stream(seed, "contraction", 0);
    let mut best_offset = Vec2::ZERO;
    let mut best = 0.0;
    for _ in 0..n_samples {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
        let offset = Vec2::from_angle(angle) * r;
        let v = ratio(offset);
        if v > best {
            best = v;
            best_offset = offset;
        }
    }

    // coordinate-search polish around the best sample
    let mut step = radius * 0.25;
    while step > radius * 1e-6 {
        let mut improved = false;
        for dir in [
            Vec2::new(step, 0.0),
            Vec2::new(-step, 0.0),
            Vec2::new(0.0, step),
            Vec2::new(0.0, -step),
        ] {
            let cand = best_offset + dir;
            if cand.norm() > radius || cand.norm() == 0.0 {
                continue;
            }
            let v = ratio(cand);
            if v > best {
                best = v;
                best_offset = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    Ok(ContractionReport { radius, factor: best, samples: n_samples, params: *params })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardOutcome {
    pub fixed_points: Vec<Vec2>,
    pub unconverged: Vec<Vec2>,
}

/// Iterates M* from each seed; deduplicates the converged limits.
pub fn picard_fixed_points(
    params: &MFParams,
    seeds: &[Vec2],
    tol: f64,
) -> PicardOutcome {
    let mut fixed_points: Vec<Vec2> = Vec::new();
    let mut unconverged = Vec::new();
    'seeds: for &start in seeds {
        let mut h = start;
        let mut converged = false;
        for _ in 0..50_000 {
            let next = m_star(h, params);
            if (next - h).norm() <= tol {
                h = next;
                converged = true;
                break;
            }
            h = next;
        }
        if !converged {
            unconverged.push(start);
            continue;
        }
        for fp in &fixed_points {
            if (*fp - h).norm() < 100.0 * tol.max(1e-12) {
                continue 'seeds;
            }
        }
        fixed_points.push(h);
    }
    PicardOutcome { fixed_points, unconverged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::E1;
    use rand::Rng;

    #[test]
    fn axis_symmetry() {
        let params = MFParams::new(10.0, 0.2);
        let mut rng = stream(5, "axis", 0);
        for _ in 0..20 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            assert!(m_star(E1 * x, &params).y.abs() < 1e-12);
        }
    }

    #[test]
    fn minimizer_average_is_fixed_point() {
        let params = MFParams::new(10.0, 0.1);
        let (a, _) = minimizers(&params, 1e-12).unwrap();
        let m_bar = a.pair.m_bar();
        assert!((m_star(m_bar, &params) - m_bar).norm() <= 1e-9);
    }

    #[test]
    fn zero_field_degenerates_to_plain_map() {
        let params = MFParams::new(10.0, 0.0);
        let h = Vec2::new(0.3, -0.4);
        let d = m_star(h, &params) - magnetization(h * params.beta);
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn reflection_equivariance() {
        let params = MFParams::new(10.0, 0.15);
        let mut rng = stream(6, "equivar", 0);
        for _ in 0..20 {
            let h = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let d = m_star(h.reflect_y(), &params) - m_star(h, &params).reflect_y();
            assert!(d.norm() < 1e-14);
        }
    }

    #[test]
    fn contraction_below_one() {
        let params = MFParams::new(10.0, 0.2);
        let report = contraction_factor(&params, 0.02, 200, 3).unwrap();
        assert!(report.factor < 1.0, "factor = {}", report.factor);
        assert!(report.factor > 0.5);
    }

    #[test]
    fn contraction_gap_shrinks_with_eps() {
        let mut prev_gap = f64::INFINITY;
        for &eps in &[0.2, 0.1, 0.05] {
            let params = MFParams::new(10.0, eps);
            let report = contraction_factor(&params, 0.02, 200, 3).unwrap();
            let gap = 1.0 - report.factor;
            assert!(gap > 0.0 && gap < prev_gap, "eps={eps} gap={gap}");
            prev_gap = gap;
        }
    }

    #[test]
    fn picard_converges_near_minimizer() {
        let params = MFParams::new(10.0, 0.1);
        let (a, b) = minimizers(&params, 1e-12).unwrap();
        let m_bar = a.pair.m_bar();
        let seeds = [m_bar * 0.9, -m_bar, Vec2::new(0.0, 0.5)];
        let out = picard_fixed_points(&params, &seeds, 1e-10);
        assert!(out.unconverged.is_empty());
        assert_eq!(out.fixed_points.len(), 3);
        assert!((out.fixed_points[0] - m_bar).norm() < 1e-8);
        assert!((out.fixed_points[1] - b.pair.m_bar()).norm() < 1e-8);
        // e2 axis is invariant; the third limit is the field-aligned average
        assert!(out.fixed_points[2].x.abs() < 1e-12);
        assert!(out.fixed_points[2].y > 0.5);
    }
}
