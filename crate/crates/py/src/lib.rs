//! Python bindings for the rfio core library: circle calculus, mean-field
//! minimizers, the fixed-point contraction probe, profile flow on a strip,
//! disorder/block statistics, a heat-bath Monte Carlo driver, and the
//! tilted entropy estimator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rfio_core::disorder::{self, Scales};
use rfio_core::entropy_est;
use rfio_core::error::Error;
use rfio_core::flow;
use rfio_core::kernel::KacKernel;
use rfio_core::lattice;
use rfio_core::mean_field::{self, MFParams};
use rfio_core::self_consistency;
use rfio_core::vec2::Vec2;

fn err(e: Error) -> PyErr {
    // configuration/geometry problems -> ValueError, numerical failures
    // -> RuntimeError, mirroring the CLI's exit-code split
    match rfio_core::harness::exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn v(t: (f64, f64)) -> Vec2 {
    Vec2::new(t.0, t.1)
}

fn t(v: Vec2) -> (f64, f64) {
    (v.x, v.y)
}

/// log of the angular moment generating function G(h) = log I0(|h|).
#[pyfunction]
fn log_mgf(h: (f64, f64)) -> f64 {
    rfio_core::circle::log_mgf(v(h))
}

/// I1(x)/I0(x).
#[pyfunction]
fn bessel_ratio(x: f64) -> PyResult<f64> {
    rfio_core::circle::bessel_ratio(x).map_err(err)
}

/// Mean spin under the tilt h: grad G(h).
#[pyfunction]
fn magnetization(h: (f64, f64)) -> PyResult<(f64, f64)> {
    Ok(t(rfio_core::circle::magnetization(v(h))))
}

/// Tilt strength h with bessel_ratio(h) = rho.
#[pyfunction]
#[pyo3(signature = (rho, tol = 1e-12))]
fn inverse_tilt(rho: f64, tol: f64) -> PyResult<f64> {
    rfio_core::circle::inverse_tilt(rho, tol).map_err(err)
}

/// Legendre-transform entropy S(m).
#[pyfunction]
fn entropy(m: (f64, f64)) -> PyResult<f64> {
    rfio_core::circle::entropy(v(m)).map_err(err)
}

/// Spontaneous magnetization: largest root of rho = bessel_ratio(beta rho).
#[pyfunction]
#[pyo3(signature = (beta, tol = 1e-12))]
fn rho_beta(beta: f64, tol: f64) -> f64 {
    mean_field::rho_beta(beta, tol)
}

/// Mean-field minimizer of phi at (beta, eps): returns a dict with the
/// pair (m_plus, m_minus), rho, sin_theta and the phi value.
#[pyfunction]
#[pyo3(signature = (beta, eps, tol = 1e-12))]
fn minimizer(py: Python<'_>, beta: f64, eps: f64, tol: f64) -> PyResult<Py<PyDict>> {
    let (a, _) = mean_field::minimizers(&MFParams::new(beta, eps), tol).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("m_plus", t(a.pair.m_plus))?;
    d.set_item("m_minus", t(a.pair.m_minus))?;
    d.set_item("rho", a.rho)?;
    d.set_item("sin_theta", a.pair.m_plus.y / a.rho)?;
    d.set_item("phi", a.phi_value)?;
    Ok(d.into())
}

/// Free-energy barrier between the aligned pair and the minimizer
/// (equals eps^2 / 2).
#[pyfunction]
fn barrier(beta: f64, eps: f64) -> PyResult<f64> {
    mean_field::barrier(&MFParams::new(beta, eps)).map_err(err)
}

/// Measured local Lipschitz factor of the fixed-point map M* on a ball
/// around the minimizer average.
#[pyfunction]
#[pyo3(signature = (beta, eps, radius = 0.02, samples = 4000, seed = 0))]
fn contraction_factor(
    beta: f64,
    eps: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> PyResult<f64> {
    self_consistency::contraction_factor(&MFParams::new(beta, eps), radius, samples, seed)
        .map(|r| r.factor)
        .map_err(err)
}

/// Relax a strip profile with tilted boundary data to stationarity.
/// Returns a dict with the stationarity residual, step count, the free
/// energy trace, and the per-band sup deviations of the stationary profile.
#[pyfunction]
#[pyo3(signature = (beta, eps, cells, range, xi, dt = 0.5, tol = 1e-8, max_steps = 200_000))]
#[allow(clippy::too_many_arguments)]
fn flow_strip(
    py: Python<'_>,
    beta: f64,
    eps: f64,
    cells: usize,
    range: f64,
    xi: f64,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> PyResult<Py<PyDict>> {
    let params = MFParams::new(beta, eps);
    let kernel = KacKernel::new(range, 1.0).map_err(err)?;
    let (min_a, _) = mean_field::minimizers(&params, 1e-12).map_err(err)?;
    let bar = min_a.pair.m_bar();
    let d = 0.5 * xi / bar.norm();
    let boundary = Vec2::new(
        bar.x * d.cos() - bar.y * d.sin(),
        bar.x * d.sin() + bar.y * d.cos(),
    );
    let grid = flow::ProfileGrid::uniform(cells, kernel.half_width(), min_a.pair, boundary);
    let (fin, diag) =
        flow::evolve_to_stationary(&grid, &kernel, &params, xi, dt, tol, max_steps)
            .map_err(err)?;
    let bands = flow::decay_profile(&fin, &kernel, &params, tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("residual", diag.stationarity_residual)?;
    out.set_item("steps", diag.wall_steps)?;
    out.set_item("free_energy_trace", diag.free_energy_trace)?;
    out.set_item("bands", bands)?;
    Ok(out.into())
}

/// Empirical mean dirty fraction |D|/|Lambda| over independent disorder
/// trials at one scale hierarchy.
#[pyfunction]
#[pyo3(signature = (ell_small, ell_big, domain, range, trials, kappa = 0.2, lambda = 0.25, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn dirty_fraction(
    ell_small: usize,
    ell_big: usize,
    domain: usize,
    range: f64,
    trials: usize,
    kappa: f64,
    lambda: f64,
    seed: u64,
) -> PyResult<f64> {
    let p = range.powf(-2.0 * (1.0 - lambda) / 3.0);
    let scales = Scales::explicit(ell_small, ell_big, domain, kappa, p, range, lambda)
        .map_err(err)?;
    let rows = disorder::dirty_fraction_stats(&[scales], trials, seed).map_err(err)?;
    Ok(rows[0].mean)
}

/// Empirical binomial tail probabilities against the 2 exp(-A^2/4) bound.
/// Returns a list of (size, a, empirical, bound, exact) tuples.
#[pyfunction]
#[pyo3(signature = (sizes, a_values, trials, seed = 0))]
fn hoeffding_check(
    sizes: Vec<usize>,
    a_values: Vec<f64>,
    trials: usize,
    seed: u64,
) -> Vec<(usize, f64, f64, f64, f64)> {
    disorder::hoeffding_check(&sizes, &a_values, trials, seed)
        .into_iter()
        .map(|r| (r.size, r.a, r.empirical, r.bound, r.exact))
        .collect()
}

/// Heat-bath Monte Carlo run with block observables; returns a dict of
/// bulk statistics (see the mc-run experiment of the CLI).
#[pyfunction]
#[pyo3(signature = (beta, eps, n, range, ell_small, ell_big, xi, sweeps, burn_in, thinning = 10, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn mc_run(
    py: Python<'_>,
    beta: f64,
    eps: f64,
    n: usize,
    range: f64,
    ell_small: usize,
    ell_big: usize,
    xi: f64,
    sweeps: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let params = MFParams::new(beta, eps);
    let kernel = KacKernel::new(range, 1.0).map_err(err)?;
    let scales = Scales::explicit(ell_small, ell_big, n, 0.2, 0.3, range, 0.25).map_err(err)?;
    let (min_a, _) = mean_field::minimizers(&params, 1e-12).map_err(err)?;
    let field = disorder::sample_disorder(n, 0.5, seed);
    let clean = disorder::xi_and_dirty(&field, &scales).map_err(err)?;
    let lat = lattice::SpinLattice::random(
        n,
        kernel.half_width(),
        lattice::BoundaryCondition::Horizontal(min_a.pair.m_bar()),
        seed,
    )
    .map_err(err)?;
    let out = lattice::run_chain(
        lat,
        &field,
        &kernel,
        &params,
        &lattice::ChainSettings { sweeps, burn_in, thinning, seed },
    )
    .map_err(err)?;
    let report =
        lattice::measure_order(&out.samples, &field, &scales, &min_a.pair, xi, Some(&clean))
            .map_err(err)?;
    let bulk: Vec<_> = report.rows.iter().filter(|r| !r.flagged).collect();
    let bn = bulk.len().max(1) as f64;
    let d = PyDict::new(py);
    d.set_item("samples", out.samples.len())?;
    d.set_item("bulk_m_e1", bulk.iter().map(|r| r.m.x).sum::<f64>() / bn)?;
    d.set_item("bulk_m_e2", bulk.iter().map(|r| r.m.y).sum::<f64>() / bn)?;
    d.set_item("frac_pm_ok", report.frac_pm_ok)?;
    d.set_item("frac_bar_ok", report.frac_bar_ok)?;
    d.set_item("mean_contour_count", report.mean_contour_count)?;
    d.set_item("mean_contour_volume", report.mean_contour_volume)?;
    Ok(d.into())
}

/// Finite-volume entropy estimate via tilted sampling. Returns a dict
/// with the estimate, its bootstrap stderr, the infinite-volume reference
/// and the deviation bound.
#[pyfunction]
#[pyo3(signature = (rho, delta, n_spins, samples, seed = 0))]
fn finite_volume_entropy(
    py: Python<'_>,
    rho: f64,
    delta: f64,
    n_spins: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let est = entropy_est::finite_volume_entropy(rho, delta, n_spins, samples, seed)
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("estimate", est.estimate)?;
    d.set_item("stderr", est.stderr)?;
    d.set_item("reference_s", est.reference_s)?;
    d.set_item("bound", est.bound)?;
    d.set_item("accepted", est.accepted)?;
    Ok(d.into())
}

#[pymodule]
fn rfio_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(log_mgf, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(magnetization, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_tilt, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(rho_beta, m)?)?;
    m.add_function(wrap_pyfunction!(minimizer, m)?)?;
    m.add_function(wrap_pyfunction!(barrier, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_factor, m)?)?;
    m.add_function(wrap_pyfunction!(flow_strip, m)?)?;
    m.add_function(wrap_pyfunction!(dirty_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_check, m)?)?;
    m.add_function(wrap_pyfunction!(mc_run, m)?)?;
    m.add_function(wrap_pyfunction!(finite_volume_entropy, m)?)?;
    Ok(())
}
