//! Radially symmetric solution of the weighted p-capacity problem on an annulus.
//!
//! On `r0 < |x| < r1` in `n` dimensions the problem
//! `-div(exp(-|x|^2/2) |grad u|^(p-2) grad u) = 0`, `u(r0) = 0`, `u(r1) = 1`
//! reduces to `(exp(-r^2/2) r^(n-1) |phi'|^(p-2) phi')' = 0`, so the flux is
//! constant and `phi' ~ (exp(r^2/2) r^(1-n))^(1/(p-1))`. Profiles can also be
//! built with any other exponent; only `1/(p-1)` makes the flux constant.

use super::quadrature::gauss_kronrod;
use super::OracleError;

#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub r0: f64,
    pub r1: f64,
    pub n_dim: usize,
    pub p: f64,
    pub exponent: f64,
    /// `(r, phi(r))` on a uniform grid from `r0` to `r1`.
    pub samples: Vec<(f64, f64)>,
}

impl RadialSolution {
    pub fn spacing(&self) -> f64 {
        (self.r1 - self.r0) / (self.samples.len() - 1) as f64
    }
}

/// Profile with the exponent `1/(p-1)` that solves the radial equation.
pub fn radial_annulus_solution(
    r0: f64,
    r1: f64,
    n_dim: usize,
    p: f64,
    num_samples: usize,
) -> Result<RadialSolution, OracleError> {
    radial_profile_with_exponent(r0, r1, n_dim, p, 1.0 / (p - 1.0), num_samples)
}

/// `(exp(t^2/2) t^(1-n))^exponent`
pub fn radial_integrand(t: f64, n_dim: usize, exponent: f64) -> f64 {
    (exponent * (0.5 * t * t + (1.0 - n_dim as f64) * t.ln())).exp()
}

/// `phi(r) = int_r0^r g^a / int_r0^r1 g^a` tabulated on `num_samples` points.
pub fn radial_profile_with_exponent(
    r0: f64,
    r1: f64,
    n_dim: usize,
    p: f64,
    exponent: f64,
    num_samples: usize,
) -> Result<RadialSolution, OracleError> {
    if !(r0 > 0.0 && r1 > r0 && r1.is_finite()) {
        return Err(OracleError::InvalidInput(format!("need 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
    }
    if !(p > 1.0) {
        return Err(OracleError::InvalidInput(format!("p must satisfy p > 1, got {p}")));
    }
    if n_dim < 2 {
        return Err(OracleError::InvalidInput(format!("n_dim must be at least 2, got {n_dim}")));
    }
    if num_samples < 3 {
        return Err(OracleError::InvalidInput("need at least 3 samples".into()));
    }
    let dr = (r1 - r0) / (num_samples - 1) as f64;
    let radius = |i: usize| if i + 1 == num_samples { r1 } else { r0 + i as f64 * dr };
    let g = |t: f64| radial_integrand(t, n_dim, exponent);

    let mut cumulative = Vec::with_capacity(num_samples);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for i in 0..num_samples - 1 {
        acc += gauss_kronrod(g, radius(i), radius(i + 1), 0.0, 1e-15)?;
        cumulative.push(acc);
    }
    let total = acc;
    let samples = cumulative
        .iter()
        .enumerate()
        .map(|(i, &c)| (radius(i), if i + 1 == num_samples { 1.0 } else { c / total }))
        .collect();
    Ok(RadialSolution {
        r0,
        r1,
        n_dim,
        p,
        exponent,
        samples,
    })
}

/// Max over interior samples of the discrete radial divergence
/// `(F_{i+1/2} - F_{i-1/2}) / dr`, `F = exp(-r^2/2) r^(n-1) |phi'|^(p-2) phi'`,
/// relative to the mean flux magnitude.
pub fn radial_residual_check(sol: &RadialSolution) -> f64 {
    let s = &sol.samples;
    let dim = sol.n_dim as f64;
    let flux: Vec<f64> = s
        .windows(2)
        .map(|w| {
            let (ra, pa) = w[0];
            let (rb, pb) = w[1];
            let rm = 0.5 * (ra + rb);
            let d = (pb - pa) / (rb - ra);
            (-0.5 * rm * rm).exp() * rm.powf(dim - 1.0) * d.abs().powf(sol.p - 2.0) * d
        })
        .collect();
    let mean = flux.iter().map(|f| f.abs()).sum::<f64>() / flux.len() as f64;
    let dr = sol.spacing();
    flux.windows(2)
        .map(|w| ((w[1] - w[0]) / dr).abs())
        .fold(0.0, f64::max)
        / mean
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialResidualRow {
    pub samples: usize,
    pub spacing: f64,
    pub residual: f64,
}

/// Residuals on successively finer tabulations.
pub fn radial_refinement_study(
    r0: f64,
    r1: f64,
    n_dim: usize,
    p: f64,
    exponent: f64,
    sample_counts: &[usize],
) -> Result<Vec<RadialResidualRow>, OracleError> {
    sample_counts
        .iter()
        .map(|&n| {
            let sol = radial_profile_with_exponent(r0, r1, n_dim, p, exponent, n)?;
            Ok(RadialResidualRow {
                samples: n,
                spacing: sol.spacing(),
                residual: radial_residual_check(&sol),
            })
        })
        .collect()
}

/// Least-squares slope of `log residual` against `log spacing`.
pub fn observed_order(rows: &[RadialResidualRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.spacing.ln(), r.residual.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
