//! Time-of-flight correction, active-aperture extraction, delay-and-sum and
//! network input-slab assembly (X -> Y -> Z -> Z_n).

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::geometry::{ArrayGeometry, RfCube};
use crate::par;

/// Time-delay corrected channel data Y, `[line][depth][element]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedCube {
    pub data: Array3<f64>,
    pub geom: ArrayGeometry,
}

/// Active-aperture channel data Z, `[line][depth][aperture element]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureCube {
    pub data: Array3<f64>,
    pub offsets: Vec<usize>,
}

impl ApertureCube {
    pub fn lines(&self) -> usize {
        self.data.dim().0
    }

    pub fn depth(&self) -> usize {
        self.data.dim().1
    }

    pub fn aperture(&self) -> usize {
        self.data.dim().2
    }
}

/// Network input Z_n, `[aperture element][line][depth context]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSlab {
    pub data: Array3<f64>,
}

/// Dynamic receive focusing: each element trace is resampled at the two-way
/// delay `(z + sqrt(z^2 + dx^2)) / c` with linear interpolation. Samples whose
/// delay lands past the end of the record are zero.
pub fn delay_correct(cube: &RfCube) -> DelayedCube {
    let g = &cube.geom;
    let (lines, depth, elements) = cube.data.dim();
    let fs = g.sampling_freq;
    let c = g.sound_speed;
    let slabs: Vec<Array2<f64>> = par::map_range(lines, |l| {
        let xl = g.line_x(l);
        let src = cube.data.index_axis(Axis(0), l);
        let mut out = Array2::<f64>::zeros((depth, elements));
        for e in 0..elements {
            let dx = g.element_x(e) - xl;
            for n in 0..depth {
                let z = g.depth(n);
                let t = (z + (z * z + dx * dx).sqrt()) / c;
                out[[n, e]] = interp(src, t * fs, e);
            }
        }
        out
    });
    let mut data = Array3::<f64>::zeros((lines, depth, elements));
    for (l, slab) in slabs.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), l).assign(&slab);
    }
    DelayedCube {
        data,
        geom: g.clone(),
    }
}

fn interp(trace: ArrayView2<f64>, idx: f64, e: usize) -> f64 {
    let last = trace.dim().0 - 1;
    if !(idx >= 0.0) || idx > last as f64 {
        return 0.0;
    }
    let i0 = idx.floor() as usize;
    let frac = idx - i0 as f64;
    if i0 >= last || frac == 0.0 {
        return trace[[i0, e]];
    }
    trace[[i0, e]] * (1.0 - frac) + trace[[i0 + 1, e]] * frac
}

/// Gathers the `aperture_size` active elements of every line starting at
/// the line's offset d_l.
pub fn extract_aperture(cube: &DelayedCube) -> ApertureCube {
    let g = &cube.geom;
    let (lines, depth, _) = cube.data.dim();
    let j = g.aperture_size;
    let offsets: Vec<usize> = (0..lines).map(|l| g.aperture_offset(l)).collect();
    let mut data = Array3::<f64>::zeros((lines, depth, j));
    for (l, &d) in offsets.iter().enumerate() {
        data.index_axis_mut(Axis(0), l)
            .assign(&cube.data.slice(s![l, .., d..d + j]));
    }
    ApertureCube { data, offsets }
}

/// Delay-and-sum: mean over the active aperture, returned as `[line][depth]`.
pub fn das(cube: &ApertureCube) -> Array2<f64> {
    let j = cube.aperture() as f64;
    cube.data.map_axis(Axis(2), |ch| ch.iter().sum::<f64>() / j)
}

/// Stacks `context` depth planes centered on `n`, replicating the boundary
/// plane outside `[0, N)`.
pub fn make_input_slab(cube: &ApertureCube, n: usize, context: usize) -> InputSlab {
    assert!(context % 2 == 1, "depth context must be odd");
    assert!(n < cube.depth(), "depth index out of range");
    let (lines, depth, j) = cube.data.dim();
    let half = (context / 2) as isize;
    let mut data = Array3::<f64>::zeros((j, lines, context));
    for k in 0..context {
        let plane = (n as isize + k as isize - half).clamp(0, depth as isize - 1) as usize;
        for l in 0..lines {
            for i in 0..j {
                data[[i, l, k]] = cube.data[[l, plane, i]];
            }
        }
    }
    InputSlab { data }
}

/// Runs X -> Y -> Z in one go.
pub fn beamform_cube(cube: &RfCube) -> ApertureCube {
    extract_aperture(&delay_correct(cube))
}
