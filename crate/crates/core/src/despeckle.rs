//! Non-local low-rank despeckling in the dB domain: guidance map, block
//! matching, weighted nuclear-norm shrinkage of patch groups, and
//! hit-count normalized aggregation.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::envelope::BModeImage;
use crate::par;
use crate::svd::jacobi_svd;

const SHRINK_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DespeckleParams {
    pub patch: usize,
    pub stride: usize,
    pub search_radius: usize,
    pub group_size: usize,
    /// Shrinkage constant; `None` derives it from the noise estimate.
    pub wnnm_c: Option<f64>,
    /// dB-domain noise std; `None` uses the robust Laplacian estimate.
    pub noise_sigma: Option<f64>,
    pub iterations: usize,
    pub guide_window: usize,
}

impl Default for DespeckleParams {
    fn default() -> Self {
        DespeckleParams {
            patch: 8,
            stride: 4,
            search_radius: 16,
            group_size: 24,
            wnnm_c: None,
            noise_sigma: None,
            iterations: 2,
            guide_window: 7,
        }
    }
}

impl DespeckleParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.patch == 0
            || self.patch > 2 * self.search_radius
            || self.group_size < 2
            || self.stride == 0
            || self.guide_window % 2 == 0
        {
            return Err(crate::Error::InvalidInput(format!("invalid despeckle params {self:?}")));
        }
        Ok(())
    }

    /// `2.8 * sqrt(2) * sigma^2 * sqrt(group_size)`.
    pub fn shrink_constant(&self, sigma: f64) -> f64 {
        self.wnnm_c
            .unwrap_or(2.8 * 2f64.sqrt() * sigma * sigma * (self.group_size as f64).sqrt())
    }
}

/// Box-filtered image with replicated borders.
pub fn guidance_map(img: ArrayView2<f64>, window: usize) -> Array2<f64> {
    assert!(window % 2 == 1, "window must be odd");
    let (rows, cols) = img.dim();
    let h = (window / 2) as isize;
    let clampr = |i: isize| i.clamp(0, rows as isize - 1) as usize;
    let clampc = |j: isize| j.clamp(0, cols as isize - 1) as usize;
    // separable: rows then columns
    let mut tmp = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for d in -h..=h {
                acc += img[[i, clampc(j as isize + d)]];
            }
            tmp[[i, j]] = acc / window as f64;
        }
    }
    let mut out = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for d in -h..=h {
                acc += tmp[[clampr(i as isize + d), j]];
            }
            out[[i, j]] = acc / window as f64;
        }
    }
    out
}

fn patch_distance(g: ArrayView2<f64>, a: (usize, usize), b: (usize, usize), p: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..p {
        let ra = g.row(a.0 + r);
        let rb = g.row(b.0 + r);
        for c in 0..p {
            let d = ra[a.1 + c] - rb[b.1 + c];
            acc += d * d;
        }
    }
    acc / (p * p) as f64
}

/// Top-left coordinates of the `group_size` patches in the search window
/// closest to the anchor patch, anchor first, ties broken row-major.
pub fn match_patches(guide: ArrayView2<f64>, anchor: (usize, usize), p: &DespeckleParams) -> Vec<(usize, usize)> {
    let (rows, cols) = guide.dim();
    let ps = p.patch;
    assert!(anchor.0 + ps <= rows && anchor.1 + ps <= cols, "anchor patch outside image");
    let r0 = anchor.0.saturating_sub(p.search_radius);
    let r1 = (anchor.0 + p.search_radius).min(rows - ps);
    let c0 = anchor.1.saturating_sub(p.search_radius);
    let c1 = (anchor.1 + p.search_radius).min(cols - ps);
    let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
    for r in r0..=r1 {
        for c in c0..=c1 {
            if (r, c) == anchor {
                continue;
            }
            cands.push((patch_distance(guide, anchor, (r, c), ps), r, c));
        }
    }
    // stable sort keeps row-major order among equal distances
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    std::iter::once(anchor)
        .chain(cands.into_iter().map(|(_, r, c)| (r, c)))
        .take(p.group_size)
        .collect()
}

/// Weighted nuclear-norm shrinkage of a `[patch^2][group]` matrix: remove the
/// mean patch, shrink `s_i <- max(s_i - c / (s_i + eps), 0)`, restore the mean.
pub fn wnnm_shrink(group: ArrayView2<f64>, c: f64) -> Array2<f64> {
    let mean: Array1<f64> = group.mean_axis(Axis(1)).expect("nonempty group");
    let centered = &group - &mean.view().insert_axis(Axis(1));
    let svd = jacobi_svd(centered.view());
    let shrunk = svd.s.mapv(|s| (s - c / (s + SHRINK_EPS)).max(0.0));
    svd.reconstruct_with(&shrunk) + &mean.insert_axis(Axis(1))
}

/// Robust noise estimate: MAD of the 5-point Laplacian over interior pixels
/// divided by 0.6745.
pub fn estimate_noise_sigma(img: ArrayView2<f64>) -> f64 {
    let (rows, cols) = img.dim();
    if rows < 3 || cols < 3 {
        return 0.0;
    }
    let mut lap = Vec::with_capacity((rows - 2) * (cols - 2));
    for i in 1..rows - 1 {
        for j in 1..cols - 1 {
            lap.push(
                img[[i - 1, j]] + img[[i + 1, j]] + img[[i, j - 1]] + img[[i, j + 1]] - 4.0 * img[[i, j]],
            );
        }
    }
    let med = median(&mut lap.clone());
    let mut dev: Vec<f64> = lap.iter().map(|v| (v - med).abs()).collect();
    median(&mut dev) / 0.6745
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn anchor_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut pos: Vec<usize> = (0..=last).step_by(stride).collect();
    if *pos.last().unwrap() != last {
        pos.push(last);
    }
    pos
}

/// Despeckled copy of a dB image.
pub fn despeckle_target(img: &BModeImage, p: &DespeckleParams) -> crate::Result<BModeImage> {
    p.validate()?;
    let (rows, cols) = img.db.dim();
    if rows < p.patch || cols < p.patch {
        return Err(crate::Error::InvalidInput(format!(
            "image {rows}x{cols} smaller than patch {}",
            p.patch
        )));
    }
    let sigma = p.noise_sigma.unwrap_or_else(|| estimate_noise_sigma(img.db.view()));
    let c = p.shrink_constant(sigma);
    let anchors: Vec<(usize, usize)> = anchor_positions(rows, p.patch, p.stride)
        .into_iter()
        .flat_map(|r| anchor_positions(cols, p.patch, p.stride).into_iter().map(move |c| (r, c)))
        .collect();
    let ps = p.patch;
    let mut estimate = img.db.clone();
    for _ in 0..p.iterations {
        let guide = guidance_map(estimate.view(), p.guide_window);
        let est = &estimate;
        let groups: Vec<(Vec<(usize, usize)>, Array2<f64>)> = par::map_range(anchors.len(), |k| {
            let coords = match_patches(guide.view(), anchors[k], p);
            let mut group = Array2::<f64>::zeros((ps * ps, coords.len()));
            for (g, &(r, cc)) in coords.iter().enumerate() {
                for i in 0..ps {
                    for j in 0..ps {
                        group[[i * ps + j, g]] = est[[r + i, cc + j]];
                    }
                }
            }
            let shrunk = wnnm_shrink(group.view(), c);
            (coords, shrunk)
        });
        let mut acc = Array2::<f64>::zeros((rows, cols));
        let mut hits = Array2::<f64>::zeros((rows, cols));
        for (coords, shrunk) in &groups {
            for (g, &(r, cc)) in coords.iter().enumerate() {
                for i in 0..ps {
                    for j in 0..ps {
                        acc[[r + i, cc + j]] += shrunk[[i * ps + j, g]];
                        hits[[r + i, cc + j]] += 1.0;
                    }
                }
            }
        }
        ndarray::Zip::from(&mut estimate)
            .and(&acc)
            .and(&hits)
            .for_each(|e, &a, &h| {
                if h > 0.0 {
                    *e = a / h;
                }
            });
    }
    Ok(BModeImage {
        db: estimate,
        reference_max: img.reference_max,
    })
}
