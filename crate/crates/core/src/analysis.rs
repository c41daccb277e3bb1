//! Fidelity scaling `F(N, T) = exp[−κ(T)N − c(T)]` and the runtime needed to
//! reach a target fidelity at a given size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::csv_err;
use crate::error::{domain, CdError, CdResult};

/// Relative tolerance on the predicted `T_p`.
pub const TP_RTOL: f64 = 1e-6;

/// Fitted slopes below `−KAPPA_FLAG` are flagged.
pub const KAPPA_FLAG: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    #[serde(rename = "T")]
    pub t: f64,
    pub kappa: f64,
    pub c: f64,
    /// max `|fit − data|` in `−ln F`
    pub residual: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub n_samples: usize,
    pub flags: Vec<String>,
}

/// Ordinary least squares of `−ln F` against `N`: slope `κ`, intercept `c`.
pub fn fit_scaling(samples: &[(usize, f64)], t: f64) -> CdResult<ScalingFit> {
    if samples.len() < 3 {
        return domain(format!("scaling fit needs at least 3 samples, got {}", samples.len()));
    }
    if let Some(&(n, f)) = samples.iter().find(|(_, f)| !(*f > 0.0 && *f <= 1.0)) {
        return domain(format!("fidelity {f} at N={n} is outside (0, 1]"));
    }
    let m = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, f)| -f.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return domain("scaling fit needs at least two distinct sizes");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let kappa = sxy / sxx;
    let c = ym - kappa * xm;
    let residual = xs.iter().zip(&ys).fold(0.0_f64, |r, (x, y)| r.max((kappa * x + c - y).abs()));
    let mut flags = Vec::new();
    if kappa < -KAPPA_FLAG {
        flags.push("negative-kappa".to_string());
    }
    let ns = samples.iter().map(|&(n, _)| n);
    Ok(ScalingFit {
        t,
        kappa,
        c,
        residual,
        n_min: ns.clone().min().unwrap_or(0),
        n_max: ns.max().unwrap_or(0),
        n_samples: samples.len(),
        flags,
    })
}

/// `exp(−κN − c)`.
pub fn synthesize(kappa: f64, c: f64, n: usize) -> f64 { (-kappa * n as f64 - c).exp() }

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpPrediction {
    pub t_p: f64,
    pub n: usize,
    pub f_target: f64,
    /// `g(T) = κ(T)N + c(T)` failed to decrease somewhere on the grid
    pub non_monotone: bool,
    /// a grid value `g ≤ 0` forced linear interpolation on its segments
    pub nonpositive_g: bool,
}

/// Smallest `T` with `g(T) = −ln F_target`, where `g(T) = κ(T)N + c(T)` is
/// interpolated piecewise linearly in `(ln T, ln g)`.
///
/// Segments touching a grid value `g ≤ 0` are interpolated linearly in
/// `(ln T, g)` instead and flagged.
pub fn predict_tp(fits: &[ScalingFit], n: usize, f_target: f64) -> CdResult<TpPrediction> {
    if fits.len() < 2 {
        return domain(format!("prediction needs at least 2 fitted times, got {}", fits.len()));
    }
    if !(f_target > 0.0 && f_target < 1.0) {
        return domain(format!("target fidelity {f_target} is outside (0, 1)"));
    }
    if fits.iter().any(|f| !(f.t > 0.0)) || fits.windows(2).any(|w| w[1].t <= w[0].t) {
        return domain("fits must have positive, strictly increasing T");
    }
    let y = -f_target.ln();
    let g: Vec<f64> = fits.iter().map(|f| f.kappa * n as f64 + f.c).collect();
    let non_monotone = g.windows(2).any(|w| w[1] > w[0]);
    let nonpositive_g = g.iter().any(|&v| v <= 0.0);
    let i = (0..g.len() - 1)
        .find(|&i| (g[i] - y) * (g[i + 1] - y) <= 0.0 && g[i] != g[i + 1] || g[i] == y)
        .ok_or_else(|| {
            CdError::OutOfRange(format!(
                "−ln F_target = {y:.6e} not bracketed by g on T ∈ [{}, {}] (g from {:.6e} to {:.6e})",
                fits[0].t,
                fits[fits.len() - 1].t,
                g[0],
                g[g.len() - 1]
            ))
        })?;
    if g[i] == y {
        return Ok(TpPrediction { t_p: fits[i].t, n, f_target, non_monotone, nonpositive_g });
    }
    let (x0, x1) = (fits[i].t.ln(), fits[i + 1].t.ln());
    let log_g = g[i] > 0.0 && g[i + 1] > 0.0;
    let seg = |x: f64| {
        let u = (x - x0) / (x1 - x0);
        if log_g {
            ((1.0 - u) * g[i].ln() + u * g[i + 1].ln()).exp()
        } else {
            (1.0 - u) * g[i] + u * g[i + 1]
        }
    };
    // bisection in ln T; the sign of g − y flips across the segment
    let (mut lo, mut hi) = (x0, x1);
    let lo_above = g[i] > y;
    while hi.exp() - lo.exp() > TP_RTOL * lo.exp() {
        let mid = 0.5 * (lo + hi);
        if (seg(mid) > y) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(TpPrediction { t_p: (0.5 * (lo + hi)).exp(), n, f_target, non_monotone, nonpositive_g })
}

/// `T,kappa,c,residual,n_min,n_max,n_samples,flags` rows; flags joined by `;`.
pub fn write_fits_csv<W: Write>(out: W, fits: &[ScalingFit]) -> CdResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "kappa", "c", "residual", "n_min", "n_max", "n_samples", "flags"]).map_err(csv_err)?;
    for f in fits {
        w.write_record([
            format!("{:.17e}", f.t),
            format!("{:.17e}", f.kappa),
            format!("{:.17e}", f.c),
            format!("{:.17e}", f.residual),
            f.n_min.to_string(),
            f.n_max.to_string(),
            f.n_samples.to_string(),
            f.flags.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
