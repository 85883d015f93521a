//! Mean-field free energy phi(m+, m-) of the random transverse-field XY
//! model: minimizers, stationary points, the eps^2/2 barrier, the reduced
//! polar functional, stability sampling, and the biased-field extension.

use crate::circle::{bessel_ratio, entropy, inverse_magnetization, magnetization, DOMAIN_MARGIN};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::vec2::{pair_distance, Vec2, E2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Global physical parameters: inverse temperature, field strength, bias.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MFParams {
    pub beta: f64,
    pub eps: f64,
    pub p: f64,
}

impl MFParams {
    pub fn new(beta: f64, eps: f64) -> Self {
        MFParams { beta, eps, p: 0.5 }
    }

    pub fn with_bias(beta: f64, eps: f64, p: f64) -> Self {
        MFParams { beta, eps, p }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::Config(format!("eps must be in [0, 1), got {}", self.eps)));
        }
        if !(0.0 < self.p && self.p < 1.0) {
            return Err(Error::Config(format!("p must be in (0, 1), got {}", self.p)));
        }
        Ok(())
    }
}

/// Ordered pair of component magnetizations (over the +1 and -1 field sites).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMagnetization {
    pub m_plus: Vec2,
    pub m_minus: Vec2,
}

impl PairMagnetization {
    pub fn new(m_plus: Vec2, m_minus: Vec2) -> Self {
        PairMagnetization { m_plus, m_minus }
    }

    /// Unbiased average (m+ + m-)/2.
    pub fn m_bar(&self) -> Vec2 {
        (self.m_plus + self.m_minus) * 0.5
    }

    /// Disorder-weighted average p m+ + (1-p) m-.
    pub fn m_bar_biased(&self, p: f64) -> Vec2 {
        self.m_plus * p + self.m_minus * (1.0 - p)
    }

    /// The Y-axis reflection applied to both components.
    pub fn reflect_y(&self) -> Self {
        PairMagnetization::new(self.m_plus.reflect_y(), self.m_minus.reflect_y())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        pair_distance((self.m_plus, self.m_minus), (other.m_plus, other.m_minus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionKind {
    Minimizer,
    Saddle,
    Trivial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MFSolution {
    pub pair: PairMagnetization,
    pub rho: f64,
    pub theta: f64,
    pub phi_value: f64,
    pub kind: SolutionKind,
}

/// phi(m+, m-) = -|m_bar|^2/2 - (eps/2) e2.(m+ - m-) - (S(m+) + S(m-))/(2 beta).
pub fn phi(pair: &PairMagnetization, params: &MFParams) -> Result<f64> {
    let m_bar = pair.m_bar();
    Ok(-0.5 * m_bar.norm_sq()
        - 0.5 * params.eps * E2.dot(pair.m_plus - pair.m_minus)
        - (entropy(pair.m_plus)? + entropy(pair.m_minus)?) / (2.0 * params.beta))
}

/// Analytic gradient of phi with respect to (m+, m-).
pub fn phi_gradient(pair: &PairMagnetization, params: &MFParams) -> Result<(Vec2, Vec2)> {
    let m_bar = pair.m_bar();
    let h_plus = inverse_magnetization(pair.m_plus, 1e-13)?;
    let h_minus = inverse_magnetization(pair.m_minus, 1e-13)?;
    let g_plus = m_bar * -0.5 - E2 * (0.5 * params.eps) + h_plus * (0.5 / params.beta);
    let g_minus = m_bar * -0.5 + E2 * (0.5 * params.eps) + h_minus * (0.5 / params.beta);
    Ok((g_plus, g_minus))
}

/// Maximal solution of rho = R(beta rho); zero at and below beta_c = 2.
pub fn rho_beta(beta: f64, tol: f64) -> f64 {
    if beta <= 2.0 {
        return 0.0;
    }
    let f = |rho: f64| rho - bessel_ratio(beta * rho).expect("nonnegative tilt");
    // f < 0 just above zero (slope 1 - beta/2 < 0), f > 0 at 1.
    let mut lo = f64::NAN;
    for i in 1..=60 {
        let rho = i as f64 / 64.0;
        if f(rho) < 0.0 {
            lo = rho;
            break;
        }
    }
    if lo.is_nan() {
        // beta barely above 2: root below 1/64
        lo = 1e-9;
        if f(lo) >= 0.0 {
            return 0.0;
        }
    }
    let mut hi = 1.0 - 1e-15;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The two minimizers of phi, related by the Y-axis reflection:
/// m_pm = rho (cos(theta) e1 +- sin(theta) e2) with sin(theta) = eps/rho.
pub fn minimizers(params: &MFParams, tol: f64) -> Result<(MFSolution, MFSolution)> {
    let rho = rho_beta(params.beta, tol);
    if rho <= params.eps {
        return Err(Error::Infeasible { eps: params.eps, rho });
    }
    let sin_t = params.eps / rho;
    let theta = sin_t.asin();
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let pair = PairMagnetization::new(
        Vec2::new(rho * cos_t, rho * sin_t),
        Vec2::new(rho * cos_t, -rho * sin_t),
    );
    let value = phi(&pair, params)?;
    let first = MFSolution { pair, rho, theta, phi_value: value, kind: SolutionKind::Minimizer };
    let reflected = pair.reflect_y();
    let second = MFSolution {
        pair: reflected,
        rho,
        theta,
        phi_value: phi(&reflected, params)?,
        kind: SolutionKind::Minimizer,
    };
    Ok((first, second))
}

/// Fixed point of y_bar -> (R(beta(y_bar + eps)) + R(beta |y_bar - eps|) sgn)/2
/// on the e2 axis, started from `seed`. Stationary points of phi restricted
/// to the invariant axis.
fn axis_fixed_point(params: &MFParams, seed: f64, tol: f64) -> Result<f64> {
    let mut y = seed;
    for _ in 0..10_000 {
        let up = bessel_ratio(params.beta * (y + params.eps))?;
        let dn = y - params.eps;
        let down = bessel_ratio(params.beta * dn.abs())? * dn.signum();
        let next = 0.5 * (up + down);
        if (next - y).abs() <= tol {
            return Ok(next);
        }
        y = next;
    }
    Err(Error::NoConvergence { iters: 10_000, residual: f64::NAN })
}

/// Pair of component magnetizations generated by an axis average y_bar.
fn axis_pair(params: &MFParams, y_bar: f64) -> Result<PairMagnetization> {
    let m_plus = magnetization(E2 * (params.beta * (y_bar + params.eps)));
    let m_minus = magnetization(E2 * (params.beta * (y_bar - params.eps)));
    Ok(PairMagnetization::new(m_plus, m_minus))
}

/// All stationary points of phi resolved by the implementation: the two
/// minimizers, the zero-average point, and the two field-aligned saddles
/// on the e2 axis (near +- rho_beta e2). Every returned point satisfies
/// the analytic stationarity equations to `tol`.
pub fn stationary_points(params: &MFParams, tol: f64) -> Result<Vec<MFSolution>> {
    let (min_a, min_b) = minimizers(params, tol)?;
    let rho = min_a.rho;
    let mut out = vec![min_a, min_b];

    // zero-average point: m_bar = 0, pair = +-R(beta eps) e2
    let trivial_pair = axis_pair(params, 0.0)?;
    out.push(MFSolution {
        pair: trivial_pair,
        rho: 0.0,
        theta: 0.0,
        phi_value: phi(&trivial_pair, params)?,
        kind: SolutionKind::Trivial,
    });

    // field-aligned saddles
    let y = axis_fixed_point(params, rho, tol)?;
    for sign in [1.0, -1.0] {
        let pair = axis_pair(params, sign * y)?;
        out.push(MFSolution {
            pair,
            rho: y,
            theta: sign * std::f64::consts::FRAC_PI_2,
            phi_value: phi(&pair, params)?,
            kind: SolutionKind::Saddle,
        });
    }
    Ok(out)
}

/// Free-energy barrier phi(rho_beta (e2, e2)) - phi(minimizer) = eps^2 / 2.
pub fn barrier(params: &MFParams) -> Result<f64> {
    let (min_a, _) = minimizers(params, 1e-12)?;
    let rho = min_a.rho;
    let aligned = PairMagnetization::new(E2 * rho, E2 * rho);
    Ok(phi(&aligned, params)? - min_a.phi_value)
}

/// Reduced functional chi(rho, theta) = phi on pairs (m, R_X m).
pub fn reduced_chi(rho: f64, theta: f64, params: &MFParams) -> Result<f64> {
    if rho >= 1.0 - DOMAIN_MARGIN {
        return Err(Error::OutOfDomain(rho));
    }
    let s = entropy(Vec2::new(rho, 0.0))?;
    let sin_t = theta.sin();
    Ok(-0.5 * rho * rho - s / params.beta + 0.5 * rho * rho * sin_t * sin_t
        - params.eps * rho * sin_t)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub xi: f64,
    pub samples: usize,
    pub min_ratio: f64,
    pub min_gap: f64,
    pub params: MFParams,
}

/// Samples pairs outside the xi-neighborhoods of both minimizers and
/// measures the worst ratio (phi - phi_min) / min(dist+, dist-, eps^2).
pub fn stability_scan(
    params: &MFParams,
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let (min_a, min_b) = minimizers(params, 1e-12)?;
    let phi_min = min_a.phi_value;
    let mut min_ratio = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut accepted = 0usize;
    let mut rng = stream(seed, "stability", 0);
    while accepted < n_samples {
        let sample = PairMagnetization::new(random_disk(&mut rng), random_disk(&mut rng));
        let d_plus = sample.distance(&min_a.pair);
        let d_minus = sample.distance(&min_b.pair);
        if d_plus <= xi || d_minus <= xi {
            continue;
        }
        accepted += 1;
        let gap = phi(&sample, params)? - phi_min;
        let denom = d_plus.min(d_minus).min(params.eps * params.eps);
        min_gap = min_gap.min(gap);
        min_ratio = min_ratio.min(gap / denom);
    }
    Ok(StabilityReport { xi, samples: n_samples, min_ratio, min_gap, params: *params })
}

pub fn random_disk<R: Rng>(rng: &mut R) -> Vec2 {
    loop {
        let v = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() < 1.0 - 1e-9 {
            return v;
        }
    }
}

/// Projected gradient descent on phi with backtracking line search.
/// Iterates stay strictly inside the unit disk.
/// Gaussian elimination with partial pivoting for the 4x4 Newton system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for col in (0..4).rev() {
        let mut s = b[col];
        for k in col + 1..4 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Newton iteration on grad phi = 0 with a finite-difference Jacobian.
fn newton_polish(
    start: PairMagnetization,
    params: &MFParams,
    tol: f64,
) -> Result<PairMagnetization> {
    let pack = |p: &PairMagnetization| [p.m_plus.x, p.m_plus.y, p.m_minus.x, p.m_minus.y];
    let unpack = |v: [f64; 4]| {
        PairMagnetization::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
    };
    let grad = |v: [f64; 4]| -> Result<[f64; 4]> {
        let (gp, gm) = phi_gradient(&unpack(v), params)?;
        Ok([gp.x, gp.y, gm.x, gm.y])
    };
    let mut x = pack(&start);
    for _ in 0..30 {
        let g = grad(x)?;
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.5 * tol {
            return Ok(unpack(x));
        }
        let h = 1e-6;
        let mut jac = [[0.0; 4]; 4];
        for j in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm) = (grad(xp)?, grad(xm)?);
            for i in 0..4 {
                jac[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let step = solve4(jac, g).ok_or(Error::NoConvergence {
            iters: 30,
            residual: f64::NAN,
        })?;
        for i in 0..4 {
            x[i] -= step[i];
        }
    }
    let g = grad(x)?;
    let res = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res <= tol {
        Ok(unpack(x))
    } else {
        Err(Error::NoConvergence { iters: 30, residual: res })
    }
}

pub fn descend_phi(
    start: PairMagnetization,
    params: &MFParams,
    tol: f64,
    max_iters: usize,
) -> Result<PairMagnetization> {
    let clamp = |v: Vec2| {
        let n = v.norm();
        let cap = 1.0 - 1e-9;
        if n > cap {
            v * (cap / n)
        } else {
            v
        }
    };
    let mut cur = PairMagnetization::new(clamp(start.m_plus), clamp(start.m_minus));
    let mut value = phi(&cur, params)?;
    for iter in 0..max_iters {
        let (gp, gm) = phi_gradient(&cur, params)?;
        let gnorm = gp.norm().max(gm.norm());
        if gnorm <= tol {
            return Ok(cur);
        }
        // raw gradient steps crawl in the valley direction, whose curvature
        // is O(eps^2); once the gradient is small, periodically try a Newton
        // polish, accepting it only if it lands strictly downhill (Newton on
        // grad phi = 0 is equally attracted to saddles)
        // the soft mode is a rigid rotation of both components (exactly
        // neutral at eps = 0); a direct line search over that angle moves
        // along the valley far faster than gradient steps do
        if iter % 10 == 0 {
            let rot = |v: Vec2, d: f64| {
                Vec2::new(v.x * d.cos() - v.y * d.sin(), v.x * d.sin() + v.y * d.cos())
            };
            let mut best = (value, cur);
            for &mag in &[0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4] {
                for &sgn in &[1.0, -1.0] {
                    let d = sgn * mag;
                    let cand = PairMagnetization::new(
                        rot(cur.m_plus, d),
                        rot(cur.m_minus, d),
                    );
                    if let Ok(v) = phi(&cand, params) {
                        if v < best.0 {
                            best = (v, cand);
                        }
                    }
                }
            }
            if best.0 < value {
                value = best.0;
                cur = best.1;
                continue;
            }
        }
        if gnorm <= 1e-3 && iter % 25 == 0 {
            if let Ok(polished) = newton_polish(cur, params, tol) {
                let (pp, pm) = phi_gradient(&polished, params)?;
                let pvalue = phi(&polished, params)?;
                if pp.norm().max(pm.norm()) <= tol && pvalue <= value + 1e-12 {
                    return Ok(polished);
                }
            }
        }
        let mut step = 1.0;
        loop {
            let cand = PairMagnetization::new(
                clamp(cur.m_plus - gp * step),
                clamp(cur.m_minus - gm * step),
            );
            let cand_value = phi(&cand, params)?;
            if cand_value < value - 0.25 * step * gnorm * gnorm {
                cur = cand;
                value = cand_value;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                // line search exhausted; at worst hand back the stall point
                if let Ok(polished) = newton_polish(cur, params, tol) {
                    let pvalue = phi(&polished, params)?;
                    if pvalue <= value + 1e-12 {
                        return Ok(polished);
                    }
                }
                return Ok(cur);
            }
        }
    }
    Ok(cur)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasedFixedPoint {
    pub pair: PairMagnetization,
    pub m_bar: Vec2,
    pub residual: f64,
    pub iterations: usize,
    /// |p m+.e1 - q m-.e1| at the fixed point (paper relation, measured).
    pub e1_balance_residual: f64,
    /// |p m+.e2 - q m-.e2 - eps| at the fixed point (paper relation, measured).
    pub e2_field_residual: f64,
}

/// Fixed point of m_bar -> p M(beta(m_bar + eps e2)) + q M(beta(m_bar - eps e2)),
/// seeded near rho_beta e1.
pub fn biased_fixed_point(params: &MFParams, tol: f64) -> Result<BiasedFixedPoint> {
    params.validate()?;
    let (p, q) = (params.p, 1.0 - params.p);
    let rho = rho_beta(params.beta, 1e-12);
    let mut m_bar = Vec2::new(rho, 0.0);
    let mut residual = f64::INFINITY;
    let max_iters = 20_000;
    for it in 0..max_iters {
        let m_plus = magnetization((m_bar + E2 * params.eps) * params.beta);
        let m_minus = magnetization((m_bar - E2 * params.eps) * params.beta);
        let next = m_plus * p + m_minus * q;
        residual = (next - m_bar).norm();
        m_bar = next;
        if residual <= tol {
            let pair = PairMagnetization::new(m_plus, m_minus);
            return Ok(BiasedFixedPoint {
                pair,
                m_bar,
                residual,
                iterations: it + 1,
                e1_balance_residual: (p * m_plus.x - q * m_minus.x).abs(),
                e2_field_residual: (p * m_plus.y - q * m_minus.y - params.eps).abs(),
            });
        }
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}
