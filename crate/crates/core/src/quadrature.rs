//! Adaptive 1-D quadrature for densities known up to a constant.
//!
//! Every integral in this crate is one-dimensional with (at worst) Gaussian
//! tails, so a single rule is used throughout: adaptive Simpson with Richardson
//! correction, applied in standardized coordinates `u = (z - peak) / width`
//! over `±WINDOW_HALF_WIDTH` local widths, where the width comes from the
//! curvature at the located peak and the window is widened while its edges
//! still carry mass. The
//! integrand is shifted by its maximum in log-space so tiny densities (prior
//! variances down to 1e-200 occur in the heat problem) never underflow.

use crate::error::{Error, Result};

/// Absolute tolerance of the adaptive rule on the peak-normalized integrand.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Half width of the integration window, in local widths.
pub const WINDOW_HALF_WIDTH: f64 = 12.0;

const MAX_DEPTH: u32 = 40;
const INITIAL_PANELS: usize = 16;
const LOCATE_POINTS: usize = 97;
const LOCATE_HALF_WIDTH: f64 = 16.0;
/// Log-density drop (relative to the maximum) required at the window edges.
const EDGE_LOG_DROP: f64 = 36.0;
const MAX_WINDOW_EXTENSIONS: usize = 4;
const MAX_RECENTER: usize = 8;
const GOLDEN_ITERATIONS: usize = 80;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::numeric(None, format!("invalid quadrature interval [{a}, {b}]")));
    }
    let panel = (b - a) / INITIAL_PANELS as f64;
    let tol = abs_tol / INITIAL_PANELS as f64;
    let mut total = 0.0;
    let mut lo = a;
    let mut f_lo = f(lo);
    for i in 0..INITIAL_PANELS {
        let hi = if i + 1 == INITIAL_PANELS { b } else { a + panel * (i + 1) as f64 };
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        let f_hi = f(hi);
        let whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
        total += simpson_step(&mut f, lo, hi, f_lo, f_mid, f_hi, whole, tol, MAX_DEPTH)?;
        lo = hi;
        f_lo = f_hi;
    }
    if !total.is_finite() {
        return Err(Error::numeric(None, "quadrature produced a non-finite value"));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::numeric(None, format!("non-finite integrand near {m:e}")));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::numeric(
            None,
            format!("adaptive quadrature did not converge on [{a:e}, {b:e}] (residual {delta:e})"),
        ));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// A log-density on the real line prepared for repeated integration.
///
/// Construction locates the mode on a coarse grid around the reference
/// center, fixes the log-shift and window, and integrates the normalizer once.
pub struct LogDensityQuadrature<F> {
    log_density: F,
    center: f64,
    scale: f64,
    half_width: f64,
    shift: f64,
    /// Integral of `exp(log_density - shift)` in standardized coordinates.
    mass: f64,
    tol: f64,
}

impl<F> LogDensityQuadrature<F>
where
    F: Fn(f64) -> f64,
{
    /// `reference_center` and `reference_scale` are the moments of a Gaussian
    /// approximation; the window is placed around the located mode.
    pub fn new(log_density: F, reference_center: f64, reference_scale: f64) -> Result<Self> {
        Self::with_tolerance(log_density, reference_center, reference_scale, DEFAULT_ABS_TOL)
    }

    pub fn with_tolerance(
        log_density: F,
        reference_center: f64,
        reference_scale: f64,
        tol: f64,
    ) -> Result<Self> {
        if !(reference_scale > 0.0 && reference_scale.is_finite() && reference_center.is_finite()) {
            return Err(Error::numeric(
                None,
                format!("invalid reference moments (center {reference_center:e}, scale {reference_scale:e})"),
            ));
        }
        let (center, peak, scale) = locate_mode(&log_density, reference_center, reference_scale)?;
        let mut half_width = WINDOW_HALF_WIDTH;
        let mut extensions = 0;
        loop {
            let lo = log_density(center - half_width * scale);
            let hi = log_density(center + half_width * scale);
            let negligible = |v: f64| v.is_nan() || v < peak - EDGE_LOG_DROP || v == f64::NEG_INFINITY;
            if negligible(lo) && negligible(hi) {
                break;
            }
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::numeric(None, "log-density is NaN at the window edge"));
            }
            extensions += 1;
            if extensions > MAX_WINDOW_EXTENSIONS {
                return Err(Error::numeric(
                    None,
                    format!(
                        "density is not normalizable within ±{half_width} reference widths \
                         (edge log-density {:.3e}, {:.3e} vs peak {:.3e})",
                        lo, hi, peak
                    ),
                ));
            }
            half_width *= 2.0;
        }
        let mut quad = Self {
            log_density,
            center,
            scale,
            half_width,
            shift: peak,
            mass: 1.0,
            tol,
        };
        let mass = quad.integrate_standardized(|_| 1.0, tol)?;
        if !(mass > 0.0) {
            return Err(Error::numeric(None, "density has zero mass on the integration window"));
        }
        quad.mass = mass;
        Ok(quad)
    }

    fn integrate_standardized<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> Result<f64> {
        let weight = |u: f64| {
            let z = self.center + self.scale * u;
            let lw = (self.log_density)(z) - self.shift;
            if lw == f64::NEG_INFINITY {
                0.0
            } else {
                g(u) * lw.exp()
            }
        };
        adaptive_simpson(weight, -self.half_width, self.half_width, tol)
    }

    /// `log ∫ exp(log_density(z)) dz`.
    pub fn log_normalizer(&self) -> f64 {
        self.shift + self.mass.ln() + self.scale.ln()
    }

    /// Expectation of `g` under the normalized density. The tolerance is
    /// scaled by the magnitude of `g` around the peak.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let magnitude = [-1.0, 0.0, 1.0]
            .iter()
            .map(|u| g(self.center + self.scale * u).abs())
            .fold(0.0, f64::max);
        let tol = if magnitude > 0.0 && magnitude.is_finite() { self.tol * magnitude } else { self.tol };
        Ok(self.integrate_standardized(|u| g(self.center + self.scale * u), tol)? / self.mass)
    }

    /// Mean and variance, computed in standardized coordinates.
    pub fn mean_and_variance(&self) -> Result<(f64, f64)> {
        let mu = self.integrate_standardized(|u| u, self.tol)? / self.mass;
        let var = self.integrate_standardized(|u| (u - mu) * (u - mu), self.tol)? / self.mass;
        Ok((self.center + self.scale * mu, self.scale * self.scale * var))
    }

    /// Normalized log-density at `z`.
    pub fn log_pdf(&self, z: f64) -> f64 {
        (self.log_density)(z) - self.log_normalizer()
    }

    pub fn window(&self) -> (f64, f64) {
        (
            self.center - self.half_width * self.scale,
            self.center + self.half_width * self.scale,
        )
    }

    /// Tabulated CDF on a uniform grid over the window (cumulative Simpson).
    pub fn cdf_table(&self, intervals: usize) -> CdfTable {
        let n = intervals.max(2) & !1;
        let (lo, hi) = self.window();
        let dz = (hi - lo) / n as f64;
        let w: Vec<f64> = (0..=n)
            .map(|i| {
                let lw = (self.log_density)(lo + dz * i as f64) - self.shift;
                if lw.is_finite() { lw.exp() } else { 0.0 }
            })
            .collect();
        let mut cum = vec![0.0; n + 1];
        // pairs of intervals by Simpson, odd nodes by the trapezoid/Simpson midpoint split
        for i in (0..n).step_by(2) {
            let s = dz / 3.0 * (w[i] + 4.0 * w[i + 1] + w[i + 2]);
            let half = dz / 12.0 * (5.0 * w[i] + 8.0 * w[i + 1] - w[i + 2]);
            cum[i + 1] = cum[i] + half;
            cum[i + 2] = cum[i] + s;
        }
        let total = cum[n];
        for c in &mut cum {
            *c /= total;
        }
        CdfTable { lo, dz, cum }
    }
}

/// Piecewise-linear CDF on a uniform grid.
#[derive(Debug, Clone)]
pub struct CdfTable {
    lo: f64,
    dz: f64,
    cum: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, z: f64) -> f64 {
        let t = (z - self.lo) / self.dz;
        if t <= 0.0 {
            return 0.0;
        }
        let last = self.cum.len() - 1;
        if t >= last as f64 {
            return 1.0;
        }
        let i = t.floor() as usize;
        let frac = t - i as f64;
        self.cum[i] + frac * (self.cum[i + 1] - self.cum[i])
    }
}

/// Peak location, peak value and a local width `(-∂²log f)^{-1/2}`.
///
/// A coarse grid (re-centred while the best point sits on its edge) brackets
/// the peak, golden-section search refines it, and a second difference gives
/// the width used to scale the integration window.
fn locate_mode<F: Fn(f64) -> f64>(log_density: &F, center: f64, scale: f64) -> Result<(f64, f64, f64)> {
    let step = 2.0 * LOCATE_HALF_WIDTH / (LOCATE_POINTS - 1) as f64;
    let mut c = center;
    let mut best = (c, log_density(c));
    for _ in 0..MAX_RECENTER {
        let mut best_index = LOCATE_POINTS / 2;
        for i in 0..LOCATE_POINTS {
            let z = c + scale * (-LOCATE_HALF_WIDTH + step * i as f64);
            let v = log_density(z);
            if v.is_nan() {
                return Err(Error::numeric(None, format!("log-density is NaN at {z:e}")));
            }
            if v > best.1 || best.1.is_nan() {
                best = (z, v);
                best_index = i;
            }
        }
        if !best.1.is_finite() {
            return Err(Error::numeric(
                None,
                format!("log-density has no finite maximum near {center:e} (peak {:e})", best.1),
            ));
        }
        if best_index != 0 && best_index != LOCATE_POINTS - 1 {
            break;
        }
        c = best.0;
    }

    // golden-section refinement inside the bracketing grid cells
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best.0 - step * scale, best.0 + step * scale);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (log_density(x1), log_density(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = log_density(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = log_density(x2);
        }
    }
    for (z, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (z, v);
        }
    }

    let mut width = scale;
    for _ in 0..3 {
        let d = 0.1 * width;
        let curv = (log_density(best.0 + d) - 2.0 * best.1 + log_density(best.0 - d)) / (d * d);
        if !(curv < 0.0 && curv.is_finite()) {
            break;
        }
        let w = (-curv).sqrt().recip();
        let done = (w / width - 1.0).abs() < 0.05;
        width = w;
        if done {
            break;
        }
    }
    let width = width.clamp(scale * 1e-6, scale * 1e6);
    Ok((best.0, best.1, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_integrates_polynomials_and_gaussians() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
        let g = adaptive_simpson(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 1e-12).unwrap();
        assert!((g - (2.0 * PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(adaptive_simpson(|x| x, 1.0, 0.0, 1e-10).is_err());
        assert!(adaptive_simpson(|_| f64::NAN, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn gaussian_moments_and_normalizer() {
        let (m, v) = (3.0, 1e-6);
        let q = LogDensityQuadrature::new(|z| -(z - m) * (z - m) / (2.0 * v), 2.9, 2e-3).unwrap();
        let (mean, var) = q.mean_and_variance().unwrap();
        assert!((mean - m).abs() < 1e-12);
        assert!((var / v - 1.0).abs() < 1e-8);
        let expected = 0.5 * (2.0 * PI * v).ln();
        assert!((q.log_normalizer() - expected).abs() < 1e-9);
    }

    #[test]
    fn tiny_scales_do_not_underflow() {
        let v: f64 = 1e-190;
        let q = LogDensityQuadrature::new(|z| -z * z / (2.0 * v) - 1e3, 0.0, v.sqrt()).unwrap();
        let (_, var) = q.mean_and_variance().unwrap();
        assert!((var / v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unnormalizable_density_is_reported() {
        let err = LogDensityQuadrature::new(|z: f64| z.powi(4) / 4.0 - z * z, 0.0, 1.0)
            .err()
            .expect("must fail");
        assert!(err.to_string().contains("normaliz"), "{err}");
    }

    #[test]
    fn cdf_table_matches_erf_reference() {
        let q = LogDensityQuadrature::new(|z| -0.5 * z * z, 0.0, 1.0).unwrap();
        let cdf = q.cdf_table(4000);
        // Phi(1) = 0.841344746068543
        assert!((cdf.eval(1.0) - 0.841_344_746_068_543).abs() < 1e-6);
        assert!((cdf.eval(0.0) - 0.5).abs() < 1e-9);
        assert_eq!(cdf.eval(-100.0), 0.0);
        assert_eq!(cdf.eval(100.0), 1.0);
    }
}
