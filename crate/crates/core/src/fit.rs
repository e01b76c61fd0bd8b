//! Small nonlinear and geometric least-squares fits.

use statrs::function::erf::erf;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma parameter uncertainties from the covariance diagonal.
    pub errors: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
}

/// Solve `a x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. `a` is row-major `n x n`.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    Some(x)
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = solve(a.to_vec(), e)?;
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    Some(inv)
}

/// Weighted Levenberg-Marquardt fit of `model(params, x)` to `(xs, ys)`.
///
/// `weights` are inverse variances. The Jacobian is taken by central
/// differences.
pub fn levenberg_marquardt<F>(
    model: F,
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    p0: &[f64],
) -> Result<FitResult>
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = p0.len();
    if xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(Error::Fit("mismatched data lengths".into()));
    }
    if xs.len() <= n {
        return Err(Error::Fit(format!(
            "{} points cannot constrain {n} parameters",
            xs.len()
        )));
    }
    let chi2 = |p: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (y - model(p, x)).powi(2))
            .sum()
    };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| {
                let h = 1e-6 * p[k].abs().max(1e-6);
                let mut hi = p.to_vec();
                let mut lo = p.to_vec();
                hi[k] += h;
                lo[k] -= h;
                xs.iter()
                    .map(|&x| (model(&hi, x) - model(&lo, x)) / (2.0 * h))
                    .collect()
            })
            .collect()
    };
    let normal = |p: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let j = jacobian(p);
        let mut a = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..xs.len() {
            let r = ys[i] - model(p, xs[i]);
            for r1 in 0..n {
                g[r1] += weights[i] * j[r1][i] * r;
                for c in 0..n {
                    a[r1 * n + c] += weights[i] * j[r1][i] * j[c][i];
                }
            }
        }
        (a, g)
    };

    let mut p = p0.to_vec();
    let mut current = chi2(&p);
    if !current.is_finite() {
        return Err(Error::Fit(
            "non-finite residuals at the starting point".into(),
        ));
    }
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (a, g) = normal(&p);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = a.clone();
            for k in 0..n {
                damped[k * n + k] += lambda * a[k * n + k].max(1e-12);
            }
            let Some(step) = solve(damped, g.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let c = chi2(&trial);
            if c.is_finite() && c <= current {
                let rel = (current - c) / current.max(1e-300);
                p = trial;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    lambda = 1e12;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || lambda >= 1e12 {
            break;
        }
    }
    let (a, _) = normal(&p);
    let cov = invert(&a, n).ok_or_else(|| Error::Fit("singular curvature matrix".into()))?;
    let dof = xs.len() - n;
    // Scale by reduced chi-square so errors reflect the actual scatter.
    let scale = (current / dof as f64).max(1e-300);
    let errors = (0..n)
        .map(|k| (cov[k * n + k] * scale).abs().sqrt())
        .collect();
    Ok(FitResult {
        params: p,
        errors,
        chi2: current,
        dof,
    })
}

/// Fitted Gaussian peak `amplitude * exp(-(x - mean)^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: f64,
    pub sigma: f64,
    pub mean_err: f64,
    pub sigma_err: f64,
}

pub fn gaussian(p: &[f64], x: f64) -> f64 {
    p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()
}

/// Fit a Gaussian to histogram bin centers and counts with Poisson weights.
pub fn fit_gaussian(centers: &[f64], counts: &[f64]) -> Result<GaussianFit> {
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Fit("empty histogram".into()));
    }
    let mean = centers.iter().zip(counts).map(|(x, c)| x * c).sum::<f64>() / total;
    let var = centers
        .iter()
        .zip(counts)
        .map(|(x, c)| c * (x - mean).powi(2))
        .sum::<f64>()
        / total;
    let peak = counts.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1.0)).collect();
    let p0 = [peak, mean, var.sqrt().max(1e-300)];
    let r = levenberg_marquardt(gaussian, centers, counts, &weights, &p0)?;
    Ok(GaussianFit {
        amplitude: r.params[0],
        mean: r.params[1],
        sigma: r.params[2].abs(),
        mean_err: r.errors[1],
        sigma_err: r.errors[2],
    })
}

/// Fitted smoothed step `base + step * Phi((x - edge) / width) * exp(slope * (x - edge))`.
///
/// A step in an exponentially varying intensity, blurred by a Gaussian of
/// width `width`, has exactly this shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFit {
    pub base: f64,
    pub step: f64,
    pub edge: f64,
    pub width: f64,
    pub slope: f64,
}

pub fn edge_profile(p: &[f64], x: f64) -> f64 {
    let z = (x - p[2]) / (p[3] * std::f64::consts::SQRT_2);
    p[0] + p[1] * 0.5 * (1.0 + erf(z)) * (p[4] * (x - p[2])).exp()
}

/// Fit an error-function edge; `weights` are inverse variances.
pub fn fit_edge(
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    edge_guess: f64,
    width_guess: f64,
) -> Result<EdgeFit> {
    let k = xs.len() / 4;
    if k == 0 {
        return Err(Error::Fit("too few profile points".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let lo = mean(&ys[..k]);
    let hi = mean(&ys[ys.len() - k..]);
    let p0 = [lo, hi - lo, edge_guess, width_guess, 0.0];
    let r = levenberg_marquardt(edge_profile, xs, ys, weights, &p0)?;
    let p = &r.params;
    Ok(EdgeFit {
        base: p[0],
        step: p[1],
        edge: p[2],
        width: p[3].abs(),
        slope: p[4],
    })
}

/// Orthogonal-distance line fit; returns the rms perpendicular residual.
pub fn line_fit_rms(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Fit("line fit needs at least three points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    // Smallest eigenvalue of the scatter matrix is the residual sum of squares.
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let smallest = tr / 2.0 - ((tr / 2.0).powi(2) - det).max(0.0).sqrt();
    Ok((smallest.max(0.0) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: (f64, f64),
    pub radius: f64,
    pub rms: f64,
}

/// Algebraic (Kasa) circle fit with geometric rms residual.
pub fn circle_fit(points: &[(f64, f64)]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::Fit("circle fit needs at least three points".into()));
    }
    // Minimize sum (x^2 + y^2 + D x + E y + F)^2.
    let mut a = vec![0.0; 9];
    let mut b = vec![0.0; 3];
    for &(x, y) in points {
        let row = [x, y, 1.0];
        let z = -(x * x + y * y);
        for i in 0..3 {
            b[i] += row[i] * z;
            for j in 0..3 {
                a[i * 3 + j] += row[i] * row[j];
            }
        }
    }
    let s = solve(a, b).ok_or_else(|| Error::Fit("collinear points admit no circle".into()))?;
    let center = (-s[0] / 2.0, -s[1] / 2.0);
    let r2 = center.0.powi(2) + center.1.powi(2) - s[2];
    if !(r2 > 0.0) {
        return Err(Error::Fit("degenerate circle".into()));
    }
    let radius = r2.sqrt();
    let n = points.len() as f64;
    let rms = (points
        .iter()
        .map(|&(x, y)| ((x - center.0).hypot(y - center.1) - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit {
        center,
        radius,
        rms,
    })
}
