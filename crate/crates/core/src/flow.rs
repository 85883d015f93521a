//! Nonlocal relaxation flow on strip profiles with a frozen boundary
//! collar, the free-energy functional it descends, stationary solving, and
//! the interior decay measurement.
//!
//! Geometry is quasi-1-D: profiles vary across the strip (one cell index)
//! and are constant along it, so the cross-strip kernel is the 1-D marginal
//! of the 2-D Kac kernel.

use crate::circle::{entropy, magnetization};
use crate::error::{Error, Result};
use crate::kernel::KacKernel;
use crate::mean_field::{minimizers, MFParams, PairMagnetization};
use crate::vec2::{Vec2, E2};
use serde::Serialize;
use std::fmt::Write as _;

/// Per-cell (m+, m-) values on the strip interior plus a frozen collar of
/// boundary block averages on both sides.
///
/// Collar vectors are stored outward: `collar_left[0]` is the cell adjacent
/// to interior cell 0, `collar_right[0]` adjacent to the last interior cell.
#[derive(Debug, Clone)]
pub struct ProfileGrid {
    pub interior: Vec<PairMagnetization>,
    pub collar_left: Vec<Vec2>,
    pub collar_right: Vec<Vec2>,
}

impl ProfileGrid {
    /// Constant interior with a constant collar of the given width.
    pub fn uniform(n: usize, collar: usize, pair: PairMagnetization, boundary: Vec2) -> Self {
        ProfileGrid {
            interior: vec![pair; n],
            collar_left: vec![boundary; collar],
            collar_right: vec![boundary; collar],
        }
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// Block average m_bar at signed cell index (interior: 0..n; collar:
    /// negative or >= n). Out-of-collar indices are an error upstream;
    /// here they return None.
    fn m_bar_at(&self, i: i64) -> Option<Vec2> {
        let n = self.interior.len() as i64;
        if i < 0 {
            self.collar_left.get((-i - 1) as usize).copied()
        } else if i >= n {
            self.collar_right.get((i - n) as usize).copied()
        } else {
            Some(self.interior[i as usize].m_bar())
        }
    }

    pub fn reflect_y(&self) -> Self {
        ProfileGrid {
            interior: self.interior.iter().map(|p| p.reflect_y()).collect(),
            collar_left: self.collar_left.iter().map(|v| v.reflect_y()).collect(),
            collar_right: self.collar_right.iter().map(|v| v.reflect_y()).collect(),
        }
    }

    fn check_collar(&self, kernel: &KacKernel) -> Result<()> {
        let need = kernel.half_width();
        let have = self.collar_left.len().min(self.collar_right.len());
        if have < need {
            return Err(Error::MissingCollar { need, have });
        }
        Ok(())
    }

    fn check_norms(&self) -> Result<()> {
        for p in &self.interior {
            let n = p.m_plus.norm().max(p.m_minus.norm());
            if n >= 1.0 {
                return Err(Error::OutOfDomain(n));
            }
        }
        Ok(())
    }

    /// CSV rows: cell index, m+x, m+y, m-x, m-y.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,mpx,mpy,mmx,mmy\n");
        for (i, p) in self.interior.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{}",
                p.m_plus.x, p.m_plus.y, p.m_minus.x, p.m_minus.y
            );
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowDiagnostics {
    pub free_energy_trace: Vec<f64>,
    pub stationarity_residual: f64,
    pub wall_steps: usize,
}

/// (J_L * m_bar) on the interior, reading the collar where the stencil
/// spills over the edge.
pub fn convolve(kernel: &KacKernel, grid: &ProfileGrid) -> Result<Vec<Vec2>> {
    grid.check_collar(kernel)?;
    let k = kernel.half_width() as i64;
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.len() as i64 {
        let mut acc = Vec2::ZERO;
        for j in -k..=k {
            let w = kernel.weight_1d(j);
            let v = grid
                .m_bar_at(i + j)
                .ok_or(Error::MissingCollar { need: k as usize, have: 0 })?;
            acc = acc + v * w;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Like convolve but splits the stencil into interior and collar parts,
/// which the energy needs separately.
fn convolve_split(kernel: &KacKernel, grid: &ProfileGrid) -> Result<Vec<(Vec2, Vec2)>> {
    grid.check_collar(kernel)?;
    let n = grid.len() as i64;
    let k = kernel.half_width() as i64;
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..n {
        let mut inner = Vec2::ZERO;
        let mut outer = Vec2::ZERO;
        for j in -k..=k {
            let w = kernel.weight_1d(j);
            let p = i + j;
            let v = grid
                .m_bar_at(p)
                .ok_or(Error::MissingCollar { need: k as usize, have: 0 })?;
            if (0..n).contains(&p) {
                inner = inner + v * w;
            } else {
                outer = outer + v * w;
            }
        }
        out.push((inner, outer));
    }
    Ok(out)
}

/// F_{J_L, D, eps}(m+, m- | m_bar_0), in cell-measure units.
///
/// The interior-interior term carries the usual 1/2; the coupling to the
/// frozen collar enters with full weight, which is exactly what makes F a
/// Lyapunov function for the relaxation flow (its gradient in m+/- is then
/// proportional to the flow's stationarity defect).
pub fn free_energy(grid: &ProfileGrid, kernel: &KacKernel, params: &MFParams) -> Result<f64> {
    grid.check_norms()?;
    let split = convolve_split(kernel, grid)?;
    let mut f = 0.0;
    for (p, &(inner, outer)) in grid.interior.iter().zip(&split) {
        let mb = p.m_bar();
        f += -0.5 * mb.dot(inner) - mb.dot(outer);
        f += -0.5 * params.eps * E2.dot(p.m_plus - p.m_minus);
        f += -(entropy(p.m_plus)? + entropy(p.m_minus)?) / (2.0 * params.beta);
    }
    Ok(f)
}

/// U^(L): the energy part of F (no entropy term).
pub fn continuum_energy(grid: &ProfileGrid, kernel: &KacKernel, params: &MFParams) -> Result<f64> {
    grid.check_norms()?;
    let split = convolve_split(kernel, grid)?;
    let mut u = 0.0;
    for (p, &(inner, outer)) in grid.interior.iter().zip(&split) {
        let mb = p.m_bar();
        u += -0.5 * mb.dot(inner) - mb.dot(outer);
        u += -0.5 * params.eps * E2.dot(p.m_plus - p.m_minus);
    }
    Ok(u)
}

/// One explicit relaxation step m± <- m± + dt (M(beta(J*m_bar ± eps e2)) - m±),
/// Jacobi-style (all reads from the previous state), collar frozen.
pub fn flow_step(
    grid: &ProfileGrid,
    kernel: &KacKernel,
    params: &MFParams,
    dt: f64,
) -> Result<ProfileGrid> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::BadTimeStep(dt));
    }
    let conv = convolve(kernel, grid)?;
    let mut out = grid.clone();
    for (p, &c) in out.interior.iter_mut().zip(&conv) {
        let tp = magnetization((c + E2 * params.eps) * params.beta);
        let tm = magnetization((c - E2 * params.eps) * params.beta);
        *p = PairMagnetization::new(
            p.m_plus + (tp - p.m_plus) * dt,
            p.m_minus + (tm - p.m_minus) * dt,
        );
    }
    Ok(out)
}

/// Sup over cells of the stationarity defect ||m± - M(beta(J*m_bar ± eps e2))||.
pub fn residual(grid: &ProfileGrid, kernel: &KacKernel, params: &MFParams) -> Result<f64> {
    let conv = convolve(kernel, grid)?;
    let mut r = 0.0_f64;
    for (p, &c) in grid.interior.iter().zip(&conv) {
        let tp = magnetization((c + E2 * params.eps) * params.beta);
        let tm = magnetization((c - E2 * params.eps) * params.beta);
        r = r.max((p.m_plus - tp).norm()).max((p.m_minus - tm).norm());
    }
    Ok(r)
}

/// Check membership in the preserved set E: block averages within xi of the
/// minimizer average, both components strictly inside the unit disk, both
/// with positive e1 component. Returns the violation, if any.
fn e_violation(grid: &ProfileGrid, target_bar: Vec2, xi: f64) -> Option<String> {
    for (i, p) in grid.interior.iter().enumerate() {
        let d = (p.m_bar() - target_bar).norm_inf();
        if d >= xi {
            return Some(format!("cell {i}: ||m_bar - target||_inf = {d} >= xi = {xi}"));
        }
        if p.m_plus.norm() >= 1.0 || p.m_minus.norm() >= 1.0 {
            return Some(format!("cell {i}: component norm reached 1"));
        }
        if p.m_plus.x <= 0.0 || p.m_minus.x <= 0.0 {
            return Some(format!("cell {i}: e1 component not positive"));
        }
    }
    None
}

/// Iterate flow_step until the stationarity residual drops below tol,
/// checking E-membership and recording the free-energy trace.
#[allow(clippy::too_many_arguments)]
pub fn evolve_to_stationary(
    grid: &ProfileGrid,
    kernel: &KacKernel,
    params: &MFParams,
    xi: f64,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<(ProfileGrid, FlowDiagnostics)> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::BadTimeStep(dt));
    }
    let (min_a, _) = minimizers(params, 1e-12)?;
    let target_bar = min_a.pair.m_bar();
    let mut cur = grid.clone();
    let mut trace = Vec::new();
    for step in 0..max_steps {
        if let Some(reason) = e_violation(&cur, target_bar, xi) {
            return Err(Error::PreservedSetViolated { step, reason });
        }
        trace.push(free_energy(&cur, kernel, params)?);
        let r = residual(&cur, kernel, params)?;
        if r <= tol {
            return Ok((
                cur,
                FlowDiagnostics {
                    free_energy_trace: trace,
                    stationarity_residual: r,
                    wall_steps: step,
                },
            ));
        }
        cur = flow_step(&cur, kernel, params, dt)?;
    }
    Err(Error::NoConvergence {
        iters: max_steps,
        residual: residual(&cur, kernel, params)?,
    })
}

/// Per-band interior decay of a stationary profile: for each band of width
/// L (in cells: range/cell) from the nearer boundary, the sup over its cells
/// of ||m_bar - m_bar_minimizer||_2.
pub fn decay_profile(
    stationary: &ProfileGrid,
    kernel: &KacKernel,
    params: &MFParams,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let r = residual(stationary, kernel, params)?;
    if r > tol {
        return Err(Error::NotStationary(r));
    }
    let (min_a, _) = minimizers(params, 1e-12)?;
    let target_bar = min_a.pair.m_bar();
    let band_cells = kernel.range / kernel.cell;
    let n = stationary.len();
    let mut sups: Vec<f64> = Vec::new();
    for (i, p) in stationary.interior.iter().enumerate() {
        let dist = (i + 1).min(n - i) as f64; // cells to the nearer collar
        let band = (dist / band_cells).floor() as usize;
        if sups.len() <= band {
            sups.resize(band + 1, 0.0);
        }
        let dev = (p.m_bar() - target_bar).norm();
        if dev > sups[band] {
            sups[band] = dev;
        }
    }
    Ok(sups
        .into_iter()
        .enumerate()
        .map(|(b, s)| (b as f64 * kernel.range, s))
        .collect())
}
