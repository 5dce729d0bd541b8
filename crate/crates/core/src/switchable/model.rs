//! The switchable beamformer `G(Z_n; w_c)` and its AdaIN code generator `F(c)`.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView3, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{
    adain::channel_stats, adain_backward, adain_forward, leaky_relu, leaky_relu_backward, relu, relu_backward,
    Activation, AdainCache, Conv2d, Dense, Padding, Scalar, LEAKY_SLOPE,
};
use crate::neural::conv::ConvCache;
use crate::rng;

/// Output style, selected by its scalar code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Style {
    Das,
    Despeckle,
    Deconvolution,
    DeconvDespeckle,
}

impl Style {
    pub const ALL: [Style; 4] = [Style::Das, Style::Despeckle, Style::Deconvolution, Style::DeconvDespeckle];

    pub fn code(self) -> f64 {
        match self {
            Style::Das => -1.0,
            Style::Despeckle => -0.5,
            Style::Deconvolution => 0.5,
            Style::DeconvDespeckle => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in file tensor names and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Style::Das => "das",
            Style::Despeckle => "despeckle",
            Style::Deconvolution => "deconv",
            Style::DeconvDespeckle => "deconv_despeckle",
        }
    }

    pub fn from_key(s: &str) -> Option<Style> {
        match s {
            "das" => Some(Style::Das),
            "despeckle" => Some(Style::Despeckle),
            "deconv" => Some(Style::Deconvolution),
            "deconv-despeckle" | "deconv_despeckle" => Some(Style::DeconvDespeckle),
            _ => None,
        }
    }
}

/// Per-channel target statistics for the bottleneck AdaIN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaInCode<T> {
    pub mean: Array1<T>,
    pub variance: Array1<T>,
}

impl<T: Scalar> AdaInCode<T> {
    pub fn std(&self) -> Array1<T> {
        self.variance.mapv(|v| v.max(T::zero()).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two convolutions, each followed by ReLU.
    Blue,
    /// One convolution followed by LeakyReLU.
    Yellow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub kind: BlockKind,
    pub convs: Vec<Conv2d<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    /// Active receive channels J (input feature channels).
    pub in_channels: usize,
    pub width: usize,
    pub bottleneck: usize,
    /// Depth planes per input slab; the output layer kernel spans all of them.
    pub depth_context: usize,
    pub generator_hidden: [usize; 2],
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            in_channels: 16,
            width: 16,
            bottleneck: 32,
            depth_context: 7,
            generator_hidden: [16, 64],
        }
    }
}

const ENCODER: [BlockKind; 4] = [BlockKind::Blue, BlockKind::Blue, BlockKind::Yellow, BlockKind::Yellow];
const DECODER: [BlockKind; 5] = [
    BlockKind::Yellow,
    BlockKind::Yellow,
    BlockKind::Blue,
    BlockKind::Blue,
    BlockKind::Yellow,
];

/// Fully-connected `c -> hidden -> hidden -> (mean, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeGenerator<T> {
    pub hidden: Vec<Dense<T>>,
    pub mean_head: Dense<T>,
    pub var_head: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct GeneratorTrace<T> {
    inputs: Vec<Array1<T>>,
    last: Array1<T>,
}

impl<T: Scalar> CodeGenerator<T> {
    pub fn forward(&self, c: T) -> Result<(AdaInCode<T>, GeneratorTrace<T>)> {
        let mut x = Array1::from_elem(1, c);
        let mut inputs = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            inputs.push(x.clone());
            x = layer.forward(x.view())?;
        }
        let mean = self.mean_head.forward(x.view())?;
        let variance = self.var_head.forward(x.view())?;
        Ok((AdaInCode { mean, variance }, GeneratorTrace { inputs, last: x }))
    }

    pub fn code(&self, c: T) -> Result<AdaInCode<T>> {
        Ok(self.forward(c)?.0)
    }

    fn backward(
        &self,
        trace: &GeneratorTrace<T>,
        dmean: ArrayView1<T>,
        dvar: ArrayView1<T>,
        grads: &mut Vec<Vec<T>>,
    ) -> Result<()> {
        let gm = self.mean_head.backward(trace.last.view(), dmean)?;
        let gv = self.var_head.backward(trace.last.view(), dvar)?;
        let mut dx = gm.dx + &gv.dx;
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        for (layer, x) in self.hidden.iter().zip(&trace.inputs).rev() {
            let g = layer.backward(x.view(), dx.view())?;
            dx = g.dx.clone();
            hidden_grads.push(g);
        }
        for g in hidden_grads.into_iter().rev() {
            grads.push(g.dw.into_raw_vec_and_offset().0);
            grads.push(g.db.to_vec());
        }
        grads.push(gm.dw.into_raw_vec_and_offset().0);
        grads.push(gm.db.to_vec());
        grads.push(gv.dw.into_raw_vec_and_offset().0);
        grads.push(gv.db.to_vec());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchableModel<T> {
    pub arch: ArchConfig,
    pub encoder: Vec<ConvBlock<T>>,
    pub decoder: Vec<ConvBlock<T>>,
    /// `1 x depth_context` valid convolution producing one value per scan line.
    pub head: Conv2d<T>,
    pub generator: CodeGenerator<T>,
    /// Fixed affine map from the head output to dB: `db = scale * raw + shift`.
    pub output_scale: T,
    pub output_shift: T,
    /// Precomputed codes for the four styles, in [`Style::ALL`] order.
    pub codes: Option<Vec<AdaInCode<T>>>,
}

fn glorot<T: Scalar>(r: &mut rng::Rng64, fan_in: usize, fan_out: usize) -> T {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    T::from_f64_lossy(r.gen_range(-s..s))
}

fn conv_init<T: Scalar>(r: &mut rng::Rng64, cin: usize, cout: usize, kh: usize, kw: usize, padding: Padding) -> Conv2d<T> {
    let (fi, fo) = (cin * kh * kw, cout * kh * kw);
    Conv2d {
        weight: Array4::from_shape_fn((cout, cin, kh, kw), |_| glorot(r, fi, fo)),
        bias: Array1::zeros(cout),
        padding,
    }
}

fn dense_init<T: Scalar>(r: &mut rng::Rng64, inp: usize, out: usize, act: Activation, bias: f64) -> Dense<T> {
    Dense {
        weight: Array2::from_shape_fn((out, inp), |_| glorot(r, inp, out)),
        bias: Array1::from_elem(out, T::from_f64_lossy(bias)),
        activation: act,
    }
}

fn block_init<T: Scalar>(r: &mut rng::Rng64, kind: BlockKind, cin: usize, cout: usize) -> ConvBlock<T> {
    let convs = match kind {
        BlockKind::Blue => vec![
            conv_init(r, cin, cout, 3, 3, Padding::Same),
            conv_init(r, cout, cout, 3, 3, Padding::Same),
        ],
        BlockKind::Yellow => vec![conv_init(r, cin, cout, 3, 3, Padding::Same)],
    };
    ConvBlock { kind, convs }
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    caches: Vec<ConvCache<T>>,
    pre: Vec<Array3<T>>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    encoder: Vec<BlockTrace<T>>,
    adain: AdainCache<T>,
    code: AdaInCode<T>,
    generator: Option<GeneratorTrace<T>>,
    decoder: Vec<BlockTrace<T>>,
    head: ConvCache<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// One dB value per scan line.
    pub line: Array1<T>,
    /// Bottleneck channels whose std fell below the AdaIN floor.
    pub degenerate_channels: usize,
}

impl<T: Scalar> SwitchableModel<T> {
    /// Glorot-uniform convolution and dense weights, zero biases except the
    /// variance head, whose bias starts at 1 so every channel begins active.
    pub fn new(arch: ArchConfig, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let (w, p) = (arch.width, arch.bottleneck);
        let enc_io = [(arch.in_channels, w), (w, w), (w, w), (w, p)];
        let encoder = ENCODER
            .iter()
            .zip(enc_io)
            .map(|(&k, (i, o))| block_init(&mut r, k, i, o))
            .collect();
        let dec_io = [(p, w), (w, w), (w, w), (w, w), (w, w)];
        let decoder = DECODER
            .iter()
            .zip(dec_io)
            .map(|(&k, (i, o))| block_init(&mut r, k, i, o))
            .collect();
        let head = conv_init(&mut r, w, 1, 1, arch.depth_context, Padding::Valid);
        let [h1, h2] = arch.generator_hidden;
        let generator = CodeGenerator {
            hidden: vec![
                dense_init(&mut r, 1, h1, Activation::Relu, 0.0),
                dense_init(&mut r, h1, h2, Activation::Relu, 0.0),
            ],
            mean_head: dense_init(&mut r, h2, p, Activation::Linear, 0.0),
            var_head: dense_init(&mut r, h2, p, Activation::Relu, 1.0),
        };
        SwitchableModel {
            arch,
            encoder,
            decoder,
            head,
            generator,
            output_scale: T::one(),
            output_shift: T::zero(),
            codes: None,
        }
    }

    pub fn block_count(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    /// Evaluates `F` at the four style codes and stores the results.
    pub fn refresh_codes(&mut self) -> Result<()> {
        let codes = Style::ALL
            .iter()
            .map(|s| self.generator.code(T::from_f64_lossy(s.code())))
            .collect::<Result<Vec<_>>>()?;
        self.codes = Some(codes);
        Ok(())
    }

    /// Stored code for `style` if present, otherwise `F(c)`.
    pub fn code_for(&self, style: Style) -> Result<AdaInCode<T>> {
        match &self.codes {
            Some(codes) => Ok(codes[style.index()].clone()),
            None => self.generator.code(T::from_f64_lossy(style.code())),
        }
    }

    fn check_input(&self, x: ArrayView3<T>) -> Result<()> {
        let (c, _, d) = x.dim();
        if c != self.arch.in_channels || d != self.arch.depth_context {
            return Err(Error::ShapeMismatch(format!(
                "slab {:?} for model expecting {} channels and depth {}",
                x.dim(),
                self.arch.in_channels,
                self.arch.depth_context
            )));
        }
        Ok(())
    }

    fn run_blocks(blocks: &[ConvBlock<T>], mut x: Array3<T>) -> Result<(Array3<T>, Vec<BlockTrace<T>>)> {
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        let mut traces = Vec::with_capacity(blocks.len());
        for block in blocks {
            let mut caches = Vec::new();
            let mut pre = Vec::new();
            for conv in &block.convs {
                let (y, cache) = conv.forward(x.view())?;
                x = match block.kind {
                    BlockKind::Blue => relu(y.view()),
                    BlockKind::Yellow => leaky_relu(y.view(), slope),
                };
                caches.push(cache);
                pre.push(y);
            }
            traces.push(BlockTrace { caches, pre });
        }
        Ok((x, traces))
    }

    fn back_blocks(blocks: &[ConvBlock<T>], traces: &[BlockTrace<T>], mut g: Array3<T>) -> (Array3<T>, Vec<Vec<T>>) {
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        // (dw, db) per conv, collected back to front
        let mut rev: Vec<(Vec<T>, Vec<T>)> = Vec::new();
        for (block, trace) in blocks.iter().zip(traces).rev() {
            for (k, conv) in block.convs.iter().enumerate().rev() {
                let gpre = match block.kind {
                    BlockKind::Blue => relu_backward(trace.pre[k].view(), g.view()),
                    BlockKind::Yellow => leaky_relu_backward(trace.pre[k].view(), g.view(), slope),
                };
                let cg = conv.backward(&trace.caches[k], gpre.view());
                g = cg.dx;
                rev.push((cg.dw.into_raw_vec_and_offset().0, cg.db.to_vec()));
            }
        }
        let grads = rev.into_iter().rev().flat_map(|(dw, db)| [dw, db]).collect();
        (g, grads)
    }

    fn forward_inner(&self, x: ArrayView3<T>, code: Option<&AdaInCode<T>>) -> Result<(Array3<T>, Vec<BlockTrace<T>>, Option<AdainCache<T>>, Vec<BlockTrace<T>>)> {
        self.check_input(x)?;
        let (z, enc) = Self::run_blocks(&self.encoder, x.to_owned())?;
        let (z, cache) = match code {
            Some(code) => {
                let (y, cache) = adain_forward(z.view(), code.mean.view(), code.std().view())?;
                (y, Some(cache))
            }
            None => (z, None),
        };
        let (y, dec) = Self::run_blocks(&self.decoder, z)?;
        Ok((y, enc, cache, dec))
    }

    fn head_output(&self, y: ArrayView3<T>) -> Result<(Array1<T>, ConvCache<T>)> {
        let (out, cache) = self.head.forward(y)?;
        let line = out
            .index_axis(Axis(0), 0)
            .index_axis(Axis(1), 0)
            .mapv(|v| v * self.output_scale + self.output_shift);
        Ok((line, cache))
    }

    /// Forward pass with an explicit AdaIN code.
    pub fn forward_with_code(&self, slab: ArrayView3<T>, code: &AdaInCode<T>) -> Result<ForwardOutput<T>> {
        let (y, _, cache, _) = self.forward_inner(slab, Some(code))?;
        let (line, _) = self.head_output(y.view())?;
        Ok(ForwardOutput {
            line,
            degenerate_channels: cache.map(|c| c.degenerate_channels()).unwrap_or(0),
        })
    }

    /// Forward pass that skips the AdaIN layer entirely.
    pub fn forward_without_adain(&self, slab: ArrayView3<T>) -> Result<Array1<T>> {
        let (y, _, _, _) = self.forward_inner(slab, None)?;
        Ok(self.head_output(y.view())?.0)
    }

    /// `G(Z_n; F(c))` for a style.
    pub fn forward(&self, slab: ArrayView3<T>, style: Style) -> Result<ForwardOutput<T>> {
        let code = self.generator.code(T::from_f64_lossy(style.code()))?;
        self.forward_with_code(slab, &code)
    }

    /// Bottleneck feature statistics for `slab` (before AdaIN).
    pub fn bottleneck_stats(&self, slab: ArrayView3<T>) -> Result<AdaInCode<T>> {
        self.check_input(slab)?;
        let (z, _) = Self::run_blocks(&self.encoder, slab.to_owned())?;
        let (m, s) = channel_stats(z.view());
        Ok(AdaInCode {
            mean: m,
            variance: s.mapv(|v| v * v),
        })
    }

    /// Forward pass that keeps everything needed for [`Self::backward`].
    pub fn forward_train(&self, slab: ArrayView3<T>, c: T) -> Result<(Array1<T>, ForwardTrace<T>)> {
        let (code, gtrace) = self.generator.forward(c)?;
        let (y, encoder, cache, decoder) = self.forward_inner(slab, Some(&code))?;
        let (line, head) = self.head_output(y.view())?;
        Ok((
            line,
            ForwardTrace {
                encoder,
                adain: cache.expect("adain applied"),
                code,
                generator: Some(gtrace),
                decoder,
                head,
            },
        ))
    }

    /// Gradients of a scalar loss with respect to every trainable tensor, in
    /// [`Self::params`] order, given `d loss / d line`.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_line: ArrayView1<T>) -> Result<Vec<Vec<T>>> {
        let l = grad_line.len();
        let mut g_head = Array3::<T>::zeros((1, l, 1));
        for i in 0..l {
            g_head[[0, i, 0]] = grad_line[i] * self.output_scale;
        }
        let hg = self.head.backward(&trace.head, g_head.view());
        let (g, dec_grads) = Self::back_blocks(&self.decoder, &trace.decoder, hg.dx);
        let std = trace.code.std();
        let (g, dmean, dstd) = adain_backward(&trace.adain, std.view(), g.view());
        // d var = d std / (2 std), zero where the std is zero
        let dvar = ndarray::Zip::from(&dstd).and(&std).map_collect(|&ds, &s| {
            if s > T::zero() {
                ds / (s + s)
            } else {
                T::zero()
            }
        });
        let (_, enc_grads) = Self::back_blocks(&self.encoder, &trace.encoder, g);
        let mut grads = enc_grads;
        grads.extend(dec_grads);
        grads.push(hg.dw.into_raw_vec_and_offset().0);
        grads.push(hg.db.to_vec());
        let gtrace = trace.generator.as_ref().expect("generator trace");
        self.generator.backward(gtrace, dmean.view(), dvar.view(), &mut grads)?;
        Ok(grads)
    }

    /// Trainable tensors in a fixed order: encoder, decoder, head, generator.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for block in self.encoder.iter().chain(&self.decoder) {
            for conv in &block.convs {
                out.push(conv.weight.as_slice().expect("contiguous"));
                out.push(conv.bias.as_slice().expect("contiguous"));
            }
        }
        out.push(self.head.weight.as_slice().expect("contiguous"));
        out.push(self.head.bias.as_slice().expect("contiguous"));
        let g = &self.generator;
        for d in g.hidden.iter().chain([&g.mean_head, &g.var_head]) {
            out.push(d.weight.as_slice().expect("contiguous"));
            out.push(d.bias.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for block in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            for conv in &mut block.convs {
                out.push(conv.weight.as_slice_mut().expect("contiguous"));
                out.push(conv.bias.as_slice_mut().expect("contiguous"));
            }
        }
        out.push(self.head.weight.as_slice_mut().expect("contiguous"));
        out.push(self.head.bias.as_slice_mut().expect("contiguous"));
        let g = &mut self.generator;
        for d in g.hidden.iter_mut() {
            out.push(d.weight.as_slice_mut().expect("contiguous"));
            out.push(d.bias.as_slice_mut().expect("contiguous"));
        }
        out.push(g.mean_head.weight.as_slice_mut().expect("contiguous"));
        out.push(g.mean_head.bias.as_slice_mut().expect("contiguous"));
        out.push(g.var_head.weight.as_slice_mut().expect("contiguous"));
        out.push(g.var_head.bias.as_slice_mut().expect("contiguous"));
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> SwitchableModel<U> {
        let c = |v: T| U::from_f64_lossy(v.to_f64_lossy());
        let conv = |k: &Conv2d<T>| Conv2d {
            weight: k.weight.mapv(c),
            bias: k.bias.mapv(c),
            padding: k.padding,
        };
        let block = |b: &ConvBlock<T>| ConvBlock {
            kind: b.kind,
            convs: b.convs.iter().map(conv).collect(),
        };
        let dense = |d: &Dense<T>| Dense {
            weight: d.weight.mapv(c),
            bias: d.bias.mapv(c),
            activation: d.activation,
        };
        SwitchableModel {
            arch: self.arch,
            encoder: self.encoder.iter().map(block).collect(),
            decoder: self.decoder.iter().map(block).collect(),
            head: conv(&self.head),
            generator: CodeGenerator {
                hidden: self.generator.hidden.iter().map(dense).collect(),
                mean_head: dense(&self.generator.mean_head),
                var_head: dense(&self.generator.var_head),
            },
            output_scale: c(self.output_scale),
            output_shift: c(self.output_shift),
            codes: self.codes.as_ref().map(|cs| {
                cs.iter()
                    .map(|k| AdaInCode {
                        mean: k.mean.mapv(c),
                        variance: k.variance.mapv(c),
                    })
                    .collect()
            }),
        }
    }
}
