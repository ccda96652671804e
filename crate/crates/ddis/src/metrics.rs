//! Evaluation metrics: relative l2 error, radial power spectra, and the
//! geometric-mean spectral error.
//!
//! Power spectra are computed on a periodic extension: Dirichlet fields are
//! zero-extended by one boundary row and column, which is the periodic grid
//! their sine representation lives on. The normalization P_mn = |F_mn|^2 / N^2
//! makes total power equal the sum of squared field values (Parseval). Radial
//! bins are linear in |k| from 1 to the per-axis Nyquist radius N/2 and hold
//! annulus means, so a white-noise field is flat across bins.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{DdisError, Result};
use crate::grid::{Boundary, Field};

/// |pred - truth|_2 / |truth|_2.
pub fn rel_l2(pred: &Field, truth: &Field) -> Result<f64> {
    if pred.grid() != truth.grid() {
        return Err(DdisError::GridMismatch(
            "rel_l2 requires matching grids".into(),
        ));
    }
    let denom: f64 = truth.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(DdisError::UndefinedMetric(
            "relative error against an identically zero truth".into(),
        ));
    }
    let num: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Full 2D power array P_mn = |F_mn|^2 normalized so the array sums to the
/// field's total squared mass.
///
/// Dirichlet fields are extended to the periodic grid their sine basis lives
/// on: the odd reflection of period 2(R+1) in each direction, with zeros on
/// the boundary lines. A pure sine mode then occupies exactly its four signed
/// frequencies instead of leaking across the spectrum.
pub fn power_spectrum_2d(f: &Field) -> Array2<f64> {
    let r = f.grid().resolution();
    let n = match f.grid().boundary() {
        Boundary::Dirichlet => 2 * (r + 1),
        Boundary::Periodic => r,
    };
    let mut data: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n * n];
    let mut copies = 1.0;
    match f.grid().boundary() {
        Boundary::Dirichlet => {
            copies = 4.0;
            for ((j, i), v) in f.values().indexed_iter() {
                let (jp, ip) = (j + 1, i + 1);
                let (jm, im) = (n - jp, n - ip);
                data[jp * n + ip] = Complex::new(*v, 0.0);
                data[jp * n + im] = Complex::new(-*v, 0.0);
                data[jm * n + ip] = Complex::new(-*v, 0.0);
                data[jm * n + im] = Complex::new(*v, 0.0);
            }
        }
        Boundary::Periodic => {
            for ((j, i), v) in f.values().indexed_iter() {
                data[j * n + i] = Complex::new(*v, 0.0);
            }
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    // Rows, then columns.
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = data[j * n + i];
        }
        fft.process(&mut col);
        for j in 0..n {
            data[j * n + i] = col[j];
        }
    }
    let norm = (n * n) as f64 * copies;
    Array2::from_shape_fn((n, n), |(j, i)| data[j * n + i].norm_sqr() / norm)
}

fn signed_frequency(index: usize, n: usize) -> f64 {
    if index <= n / 2 {
        index as f64
    } else {
        index as f64 - n as f64
    }
}

/// Annulus-mean power per radial bin; bin edges linear in |k| from 1 to the
/// Nyquist radius. Returns (k_center, P) pairs.
pub fn radial_power_spectrum(f: &Field, n_bins: usize) -> Result<Vec<(f64, f64)>> {
    if n_bins == 0 {
        return Err(DdisError::InvalidArgument("n_bins must be >= 1".into()));
    }
    let p = power_spectrum_2d(f);
    let n = p.nrows();
    let nyquist = (n / 2) as f64;
    if nyquist <= 1.0 {
        return Err(DdisError::InvalidArgument(format!(
            "grid too small for radial binning (Nyquist radius {nyquist})"
        )));
    }
    let width = (nyquist - 1.0) / n_bins as f64;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    // The odd extension of a Dirichlet field is structurally zero on the
    // frequency axes and the Nyquist lines; only |kx|, |ky| in 1..=R carry
    // sine-mode power, so annulus means run over that support.
    let sine_support = f.grid().boundary() == Boundary::Dirichlet;
    let r_max = f.grid().resolution() as f64;
    for ((j, i), v) in p.indexed_iter() {
        let kx = signed_frequency(i, n);
        let ky = signed_frequency(j, n);
        if sine_support
            && (kx.abs() < 0.5 || ky.abs() < 0.5 || kx.abs() > r_max || ky.abs() > r_max)
        {
            continue;
        }
        let radius = (kx * kx + ky * ky).sqrt();
        if radius < 1.0 || radius > nyquist {
            continue;
        }
        let bin = (((radius - 1.0) / width) as usize).min(n_bins - 1);
        sums[bin] += v;
        counts[bin] += 1;
    }
    Ok((0..n_bins)
        .map(|b| {
            let k_center = 1.0 + (b as f64 + 0.5) * width;
            let mean = if counts[b] > 0 {
                sums[b] / counts[b] as f64
            } else {
                0.0
            };
            (k_center, mean)
        })
        .collect())
}

/// One radial bin of a spectral comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBin {
    pub k_center: f64,
    pub p_pred: f64,
    pub p_true: f64,
    pub rel_err: f64,
}

/// Binned spectra of prediction and truth with the geometric-mean error
/// E_s = exp(mean log rel_err) over bins carrying truth power.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralErrorReport {
    pub bins: Vec<SpectralBin>,
    /// Bins dropped because the truth spectrum vanishes there.
    pub excluded_bins: usize,
    pub e_s: f64,
}

impl SpectralErrorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,P_pred,P_true,rel_err\n");
        for b in &self.bins {
            s.push_str(&format!(
                "{},{},{},{}\n",
                b.k_center, b.p_pred, b.p_true, b.rel_err
            ));
        }
        s
    }
}

const LOG_FLOOR: f64 = 1e-12;

/// Per-bin relative spectral errors and their geometric mean.
pub fn spectral_error(pred: &Field, truth: &Field, n_bins: usize) -> Result<SpectralErrorReport> {
    if pred.grid() != truth.grid() {
        return Err(DdisError::GridMismatch(
            "spectral_error requires matching grids".into(),
        ));
    }
    let sp = radial_power_spectrum(pred, n_bins)?;
    let st = radial_power_spectrum(truth, n_bins)?;
    let mut bins = Vec::new();
    let mut excluded = 0usize;
    let mut log_sum = 0.0;
    for ((k, pp), (_, pt)) in sp.into_iter().zip(st) {
        if pt == 0.0 {
            excluded += 1;
            continue;
        }
        let rel = (pp - pt).abs() / pt;
        log_sum += rel.max(LOG_FLOOR).ln();
        bins.push(SpectralBin {
            k_center: k,
            p_pred: pp,
            p_true: pt,
            rel_err: rel,
        });
    }
    if bins.is_empty() {
        return Err(DdisError::UndefinedMetric(
            "truth spectrum carries no power in any bin".into(),
        ));
    }
    let e_s = (log_sum / bins.len() as f64).exp();
    Ok(SpectralErrorReport {
        bins,
        excluded_bins: excluded,
        e_s,
    })
}
