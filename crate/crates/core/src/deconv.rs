//! l1-regularized deconvolution of the envelope image,
//! `argmin_x ||y - h * x||^2 + lambda ||x||_1`, solved with monotone FISTA.

use ndarray::{Array2, ArrayView2};

use crate::envelope::{log_compress, BModeImage};
use crate::error::{Error, Result};
use crate::par;

/// Point spread function, `[axial][lateral]`, odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    pub kernel: Array2<f64>,
}

impl Psf {
    pub fn new(kernel: Array2<f64>) -> Result<Self> {
        let (a, l) = kernel.dim();
        if a % 2 == 0 || l % 2 == 0 {
            return Err(Error::InvalidInput(format!("psf dims {a}x{l} must be odd")));
        }
        if kernel.iter().any(|v| !v.is_finite()) || kernel.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("psf must be finite and nonzero".into()));
        }
        Ok(Psf { kernel })
    }

    pub fn delta() -> Self {
        Psf {
            kernel: Array2::from_elem((1, 1), 1.0),
        }
    }

    /// Upper bound `2 (sum |h|)^2` on the Lipschitz constant of the data-term gradient.
    pub fn lipschitz(&self) -> f64 {
        2.0 * self.kernel.iter().map(|v| v.abs()).sum::<f64>().powi(2)
    }
}

fn correlate(x: ArrayView2<f64>, h: ArrayView2<f64>, flip: bool) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let (ka, kl) = h.dim();
    let (ca, cl) = ((ka / 2) as isize, (kl / 2) as isize);
    let mut out = Array2::<f64>::zeros((rows, cols));
    let buf = out.as_slice_mut().expect("standard layout");
    par::for_each_chunk_mut(buf, cols, |i, row| {
        for a in 0..ka {
            let da = a as isize - ca;
            let src_i = if flip { i as isize - da } else { i as isize + da };
            if src_i < 0 || src_i >= rows as isize {
                continue;
            }
            let src = x.row(src_i as usize);
            for b in 0..kl {
                let w = h[[a, b]];
                if w == 0.0 {
                    continue;
                }
                let db = b as isize - cl;
                let shift = if flip { -db } else { db };
                let lo = (-shift).max(0) as usize;
                let hi = (cols as isize - shift).min(cols as isize).max(0) as usize;
                for j in lo..hi {
                    row[j] += w * src[(j as isize + shift) as usize];
                }
            }
        }
    });
    out
}

/// Same-size correlation-style 2-D convolution with zero padding:
/// `out[i][j] = sum_ab h[a][b] x[i + a - ca][j + b - cb]`.
pub fn convolve2d(x: ArrayView2<f64>, h: &Psf) -> Array2<f64> {
    correlate(x, h.kernel.view(), false)
}

/// Adjoint of [`convolve2d`].
pub fn convolve2d_adjoint(r: ArrayView2<f64>, h: &Psf) -> Array2<f64> {
    correlate(r, h.kernel.view(), true)
}

/// Central `support` window of the mean-removed image autocorrelation,
/// normalized to a unit peak. A flat image yields a flat all-ones kernel.
pub fn estimate_psf(img: ArrayView2<f64>, support: (usize, usize)) -> Result<Psf> {
    let (rows, cols) = img.dim();
    let (ka, kl) = support;
    if ka % 2 == 0 || kl % 2 == 0 || ka == 0 || kl == 0 {
        return Err(Error::InvalidInput(format!("support {ka}x{kl} must be odd")));
    }
    if ka >= rows || kl >= cols {
        return Err(Error::SupportTooLarge {
            support,
            image: (rows, cols),
        });
    }
    let mean = img.mean().unwrap_or(0.0);
    let x = img.mapv(|v| v - mean);
    let (ha, hl) = ((ka / 2) as isize, (kl / 2) as isize);
    let mut k = Array2::<f64>::zeros(support);
    for u in -ha..=ha {
        for v in -hl..=hl {
            let mut acc = 0.0;
            for i in 0..rows as isize {
                let ii = i + u;
                if ii < 0 || ii >= rows as isize {
                    continue;
                }
                for j in 0..cols as isize {
                    let jj = j + v;
                    if jj < 0 || jj >= cols as isize {
                        continue;
                    }
                    acc += x[[i as usize, j as usize]] * x[[ii as usize, jj as usize]];
                }
            }
            k[[(u + ha) as usize, (v + hl) as usize]] = acc;
        }
    }
    let peak = k[[ha as usize, hl as usize]];
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if !(peak > 1e-12 * energy.max(f64::MIN_POSITIVE)) || !(energy > 0.0) {
        return Ok(Psf {
            kernel: Array2::ones(support),
        });
    }
    k.mapv_inplace(|v| v / peak);
    Ok(Psf { kernel: k })
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    v.signum() * (v.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvParams {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for DeconvParams {
    fn default() -> Self {
        DeconvParams {
            lambda: 0.02,
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeconvProblem {
    pub y: Array2<f64>,
    pub h: Psf,
    pub params: DeconvParams,
}

impl DeconvProblem {
    pub fn objective(&self, x: ArrayView2<f64>) -> f64 {
        let r = &self.y - &convolve2d(x, &self.h);
        r.iter().map(|v| v * v).sum::<f64>()
            + self.params.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// One proximal-gradient step from `x` with step `1 / L`.
    pub fn prox_step(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let lip = self.h.lipschitz();
        let resid = &self.y - &convolve2d(x, &self.h);
        let grad = convolve2d_adjoint(resid.view(), &self.h) * -2.0;
        let thresh = self.params.lambda / lip;
        let mut out = &x - &(grad / lip);
        out.mapv_inplace(|v| soft_threshold(v, thresh));
        out
    }
}

#[derive(Debug, Clone)]
pub struct DeconvResult {
    pub x: Array2<f64>,
    pub objective_trace: Vec<f64>,
}

/// Monotone FISTA: the accelerated candidate is accepted only when it does
/// not increase the objective, so the trace never goes up.
pub fn fista_deconvolve(p: &DeconvProblem) -> Result<DeconvResult> {
    if p.y.iter().any(|v| !v.is_finite()) || p.h.kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite deconvolution input".into()));
    }
    if !(p.params.lambda >= 0.0) || p.params.max_iters == 0 {
        return Err(Error::InvalidInput("lambda must be >= 0 and max_iters >= 1".into()));
    }
    let mut x = Array2::<f64>::zeros(p.y.dim());
    let mut y = x.clone();
    let mut f_x = p.objective(x.view());
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    for _ in 0..p.params.max_iters {
        let z = p.prox_step(y.view());
        let f_z = p.objective(z.view());
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let change = (f_z - f_x).abs();
        let scale = f_x.abs().max(f64::MIN_POSITIVE);
        let x_prev = x;
        if f_z <= f_x {
            x = z.clone();
            f_x = f_z;
        } else {
            x = x_prev.clone();
        }
        y = &x + &((&z - &x) * (t / t_next)) + &((&x - &x_prev) * ((t - 1.0) / t_next));
        t = t_next;
        trace.push(f_x);
        if change <= p.params.tol * scale {
            break;
        }
    }
    Ok(DeconvResult {
        x,
        objective_trace: trace,
    })
}

/// Deconvolution target: FISTA on the unit-max envelope, then `20 log10 |x|`.
pub fn deconv_target(envelope: ArrayView2<f64>, psf: &Psf, params: &DeconvParams) -> Result<BModeImage> {
    if envelope.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("envelope must be nonnegative".into()));
    }
    let max = envelope.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Ok(log_compress(envelope));
    }
    let problem = DeconvProblem {
        y: envelope.mapv(|v| v / max),
        h: psf.clone(),
        params: *params,
    };
    let res = fista_deconvolve(&problem)?;
    Ok(log_compress(res.x.mapv(f64::abs).view()))
}

/// Crops a `support` window of `img` centered at `(row, col)`, zero outside.
pub fn crop_centered(img: ArrayView2<f64>, row: usize, col: usize, support: (usize, usize)) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let (ha, hl) = ((support.0 / 2) as isize, (support.1 / 2) as isize);
    Array2::from_shape_fn(support, |(a, b)| {
        let i = row as isize + a as isize - ha;
        let j = col as isize + b as isize - hl;
        if i < 0 || j < 0 || i >= rows as isize || j >= cols as isize {
            0.0
        } else {
            img[[i as usize, j as usize]]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::s;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(r: &mut rng::Rng64, shape: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_fn(shape, |_| r.gen::<f64>() * 2.0 - 1.0)
    }

    fn naive_conv(x: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
        let (rows, cols) = x.dim();
        let (ka, kl) = h.dim();
        let mut out = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                for a in 0..ka {
                    for b in 0..kl {
                        let ii = i as isize + a as isize - (ka / 2) as isize;
                        let jj = j as isize + b as isize - (kl / 2) as isize;
                        if ii >= 0 && jj >= 0 && (ii as usize) < rows && (jj as usize) < cols {
                            out[[i, j]] += h[[a, b]] * x[[ii as usize, jj as usize]];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn delta_and_scaled_delta() {
        let mut r = rng::seeded(1);
        let x = random(&mut r, (6, 5));
        assert_eq!(convolve2d(x.view(), &Psf::delta()), x);
        let two = Psf::new(Array2::from_elem((1, 1), 2.0)).unwrap();
        assert_eq!(convolve2d(x.view(), &two), &x * 2.0);
    }

    #[test]
    fn matches_naive_convolution() {
        let mut r = rng::seeded(2);
        let x = random(&mut r, (8, 8));
        let h = Psf::new(random(&mut r, (3, 3))).unwrap();
        let got = convolve2d(x.view(), &h);
        let want = naive_conv(&x, &h.kernel);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let h2 = Psf::new(random(&mut r, (5, 3))).unwrap();
        let got = convolve2d(x.view(), &h2);
        let want = naive_conv(&x, &h2.kernel);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut r = rng::seeded(3);
        let x = random(&mut r, (9, 7));
        let y = random(&mut r, (9, 7));
        let h = Psf::new(random(&mut r, (5, 3))).unwrap();
        let lhs: f64 = (convolve2d(x.view(), &h) * &y).sum();
        let rhs: f64 = (convolve2d_adjoint(y.view(), &h) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn convolution_is_linear() {
        let mut r = rng::seeded(4);
        let a = random(&mut r, (7, 7));
        let b = random(&mut r, (7, 7));
        let h = Psf::new(random(&mut r, (3, 5))).unwrap();
        let lhs = convolve2d((&a * 1.5 + &b * -0.25).view(), &h);
        let rhs = convolve2d(a.view(), &h) * 1.5 + convolve2d(b.view(), &h) * -0.25;
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert!((soft_threshold(0.99, 0.01) - 0.98).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.005, 0.01), 0.0);
        assert_eq!(soft_threshold(-0.3, 0.0), -0.3);
        assert_eq!(soft_threshold(0.7, 0.0), 0.7);
    }

    #[test]
    fn delta_psf_closed_form() {
        let y = Array2::from_shape_vec((1, 3), vec![1.0, 0.01, -0.5]).unwrap();
        let p = DeconvProblem {
            y,
            h: Psf::delta(),
            params: DeconvParams::default(),
        };
        let res = fista_deconvolve(&p).unwrap();
        for (got, want) in res.x.iter().zip([0.99, 0.0, -0.49]) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_lambda_identity_and_zero_data() {
        let mut r = rng::seeded(6);
        let y = random(&mut r, (5, 5));
        let p = DeconvProblem {
            y: y.clone(),
            h: Psf::delta(),
            params: DeconvParams {
                lambda: 0.0,
                ..Default::default()
            },
        };
        let res = fista_deconvolve(&p).unwrap();
        for (a, b) in res.x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let z = DeconvProblem {
            y: Array2::zeros((4, 4)),
            h: Psf::new(random(&mut r, (3, 3))).unwrap(),
            params: DeconvParams::default(),
        };
        let res = fista_deconvolve(&z).unwrap();
        assert_eq!(res.objective_trace.len(), 1);
        assert!(res.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nan_input_rejected() {
        let mut y = Array2::zeros((3, 3));
        y[[1, 1]] = f64::NAN;
        let p = DeconvProblem {
            y,
            h: Psf::delta(),
            params: DeconvParams::default(),
        };
        assert!(matches!(fista_deconvolve(&p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn trace_monotone_and_fixed_point() {
        let mut r = rng::seeded(8);
        let truth = Array2::from_shape_fn((24, 16), |_| if r.gen::<f64>() < 0.05 { 1.0 } else { 0.0 });
        let h = Psf::new(Array2::from_shape_fn((5, 3), |(a, b)| {
            (-((a as f64 - 2.0).powi(2) / 2.0 + (b as f64 - 1.0).powi(2))).exp()
        }))
        .unwrap();
        let mut y = convolve2d(truth.view(), &h);
        y.mapv_inplace(|v| v + 0.01 * r.sample::<f64, _>(StandardNormal));
        let p = DeconvProblem {
            y,
            h,
            params: DeconvParams {
                max_iters: 3000,
                tol: 0.0,
                ..Default::default()
            },
        };
        let res = fista_deconvolve(&p).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let step = |x: &Array2<f64>| {
            let next = p.prox_step(x.view());
            let moved = (&next - x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (next, moved)
        };
        let mut x = res.x;
        let mut residual = f64::INFINITY;
        for _ in 0..200_000 {
            let (next, moved) = step(&x);
            x = next;
            residual = moved;
            if residual < 1e-9 {
                break;
            }
        }
        assert!(residual < 1e-9, "residual {residual}");
        let (_, moved) = step(&x);
        assert!(moved < 1e-8, "moved {moved}");
    }

    #[test]
    fn psf_validation() {
        assert!(Psf::new(Array2::ones((2, 3))).is_err());
        assert!(Psf::new(Array2::zeros((3, 3))).is_err());
    }

    #[test]
    fn estimate_from_isolated_kernel() {
        let kernel = Array2::from_shape_fn((5, 5), |(a, b)| {
            (-((a as f64 - 2.0).powi(2) / 1.5 + (b as f64 - 2.0).powi(2) / 0.8)).exp()
        });
        let mut img = Array2::zeros((40, 40));
        img.slice_mut(s![18..23, 18..23]).assign(&kernel);
        let est = estimate_psf(img.view(), (5, 5)).unwrap();
        // autocorrelation of the true kernel
        let mut auto = Array2::zeros((5, 5));
        for u in -2isize..=2 {
            for v in -2isize..=2 {
                let mut acc = 0.0;
                for a in 0..5isize {
                    for b in 0..5isize {
                        let (aa, bb) = (a + u, b + v);
                        if (0..5).contains(&aa) && (0..5).contains(&bb) {
                            acc += kernel[[a as usize, b as usize]] * kernel[[aa as usize, bb as usize]];
                        }
                    }
                }
                auto[[(u + 2) as usize, (v + 2) as usize]] = acc;
            }
        }
        let corr = pearson(&est.kernel, &auto);
        assert!(corr > 0.95, "{corr}");
        assert_eq!(est.kernel[[2, 2]], 1.0);
    }

    fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let ma = a.mean().unwrap();
        let mb = b.mean().unwrap();
        let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn estimate_from_white_noise() {
        let mut r = rng::seeded(10);
        let img = Array2::from_shape_fn((64, 64), |_| r.sample::<f64, _>(StandardNormal));
        let est = estimate_psf(img.view(), (3, 3)).unwrap();
        assert!((est.kernel[[1, 1]] - 1.0).abs() < 1e-12);
        for ((a, b), &v) in est.kernel.indexed_iter() {
            if (a, b) != (1, 1) {
                assert!(v.abs() < 0.2, "{v}");
            }
        }
    }

    #[test]
    fn estimate_degenerate_and_errors() {
        let flat = estimate_psf(Array2::from_elem((10, 10), 3.0).view(), (3, 5)).unwrap();
        assert!(flat.kernel.iter().all(|&v| v == 1.0));
        assert!(matches!(
            estimate_psf(Array2::ones((4, 4)).view(), (5, 3)),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn zero_envelope_target_and_determinism() {
        let t = deconv_target(Array2::zeros((6, 4)).view(), &Psf::delta(), &DeconvParams::default()).unwrap();
        assert!(t.db.iter().all(|&v| v == 0.0));
        let mut r = rng::seeded(12);
        let env = Array2::from_shape_fn((16, 8), |_| r.gen::<f64>());
        let h = Psf::new(Array2::from_elem((3, 3), 0.2)).unwrap();
        let a = deconv_target(env.view(), &h, &DeconvParams::default()).unwrap();
        let b = deconv_target(env.view(), &h, &DeconvParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
