//! SWBF weight files: named f32 tensors plus the four precomputed style
//! codes, closed by a CRC32 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Array4};

use super::model::{AdaInCode, ArchConfig, BlockKind, CodeGenerator, ConvBlock, Style, SwitchableModel};
use crate::error::{Error, Result};
use crate::neural::{Activation, Conv2d, Dense, Padding, Scalar};

pub const MAGIC: &[u8; 4] = b"SWBF";
pub const VERSION: u32 = 1;

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, dims: &[usize], data: impl Iterator<Item = f32>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn named_tensors<T: Scalar>(model: &SwitchableModel<T>) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
    let f = |v: &T| v.to_f64_lossy() as f32;
    let mut out = Vec::new();
    let mut conv = |prefix: String, c: &Conv2d<T>| {
        out.push((format!("{prefix}.w"), c.weight.shape().to_vec(), c.weight.iter().map(f).collect()));
        out.push((format!("{prefix}.b"), c.bias.shape().to_vec(), c.bias.iter().map(f).collect()));
    };
    for (side, blocks) in [("enc", &model.encoder), ("dec", &model.decoder)] {
        for (i, b) in blocks.iter().enumerate() {
            for (k, c) in b.convs.iter().enumerate() {
                conv(format!("{side}{i}.conv{k}"), c);
            }
        }
    }
    conv("head".to_string(), &model.head);
    let g = &model.generator;
    let layers = g
        .hidden
        .iter()
        .enumerate()
        .map(|(i, d)| (format!("gen.l{i}"), d))
        .chain([("gen.mean".to_string(), &g.mean_head), ("gen.var".to_string(), &g.var_head)]);
    for (name, d) in layers {
        out.push((format!("{name}.w"), d.weight.shape().to_vec(), d.weight.iter().map(f).collect()));
        out.push((format!("{name}.b"), d.bias.shape().to_vec(), d.bias.iter().map(f).collect()));
    }
    out.push(("out.scale".into(), vec![1], vec![f(&model.output_scale)]));
    out.push(("out.shift".into(), vec![1], vec![f(&model.output_shift)]));
    for s in Style::ALL {
        let code = model.code_for(s)?;
        let p = code.mean.len();
        out.push((format!("code.{}.mean", s.key()), vec![p], code.mean.iter().map(f).collect()));
        out.push((format!("code.{}.var", s.key()), vec![p], code.variance.iter().map(f).collect()));
    }
    Ok(out)
}

/// Serializes a model; codes are evaluated through the generator when the
/// model has none stored.
pub fn write_weights<T: Scalar>(model: &SwitchableModel<T>) -> Result<Vec<u8>> {
    let tensors = named_tensors(model)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in &tensors {
        put_tensor(&mut out, name, dims, data.iter().copied());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn save_weights<T: Scalar>(model: &SwitchableModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_weights(model)?)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("truncated weight file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn parse_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    if bytes.len() < 16 {
        return Err(corrupt("truncated weight file"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic, not an SWBF weight file"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("weight file checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported weight file version {version}")));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| corrupt("tensor size overflow"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("tensor size overflow"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if out.insert(name.clone(), Tensor { dims, data }).is_some() {
            return Err(corrupt(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after tensors"));
    }
    Ok(out)
}

struct Tensors(BTreeMap<String, Tensor>);

impl Tensors {
    fn take(&mut self, name: &str, rank: usize) -> Result<Tensor> {
        let t = self.0.remove(name).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if t.dims.len() != rank {
            return Err(corrupt(format!("tensor {name} has rank {}, expected {rank}", t.dims.len())));
        }
        Ok(t)
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Array1<f32>> {
        let t = self.take(name, 1)?;
        if t.dims[0] != len {
            return Err(corrupt(format!("tensor {name} has length {}, expected {len}", t.dims[0])));
        }
        Ok(Array1::from(t.data))
    }

    fn conv(&mut self, prefix: &str, padding: Padding) -> Result<Conv2d<f32>> {
        let w = self.take(&format!("{prefix}.w"), 4)?;
        let shape = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
        let weight = Array4::from_shape_vec(shape, w.data).map_err(|e| corrupt(e.to_string()))?;
        let bias = self.vector(&format!("{prefix}.b"), shape.0)?;
        Ok(Conv2d { weight, bias, padding })
    }

    fn dense(&mut self, prefix: &str, activation: Activation) -> Result<Dense<f32>> {
        let w = self.take(&format!("{prefix}.w"), 2)?;
        let shape = (w.dims[0], w.dims[1]);
        let weight = Array2::from_shape_vec(shape, w.data).map_err(|e| corrupt(e.to_string()))?;
        let bias = self.vector(&format!("{prefix}.b"), shape.0)?;
        Ok(Dense { weight, bias, activation })
    }

    fn blocks(&mut self, side: &str) -> Result<Vec<ConvBlock<f32>>> {
        let mut blocks = Vec::new();
        while self.0.contains_key(&format!("{side}{}.conv0.w", blocks.len())) {
            let i = blocks.len();
            let mut convs = Vec::new();
            while self.0.contains_key(&format!("{side}{i}.conv{}.w", convs.len())) {
                convs.push(self.conv(&format!("{side}{i}.conv{}", convs.len()), Padding::Same)?);
            }
            let kind = match convs.len() {
                1 => BlockKind::Yellow,
                2 => BlockKind::Blue,
                n => return Err(corrupt(format!("block {side}{i} has {n} convolutions"))),
            };
            blocks.push(ConvBlock { kind, convs });
        }
        Ok(blocks)
    }
}

/// Parses an SWBF byte buffer.
pub fn read_weights(bytes: &[u8]) -> Result<SwitchableModel<f32>> {
    let mut t = Tensors(parse_tensors(bytes)?);
    let encoder = t.blocks("enc")?;
    let decoder = t.blocks("dec")?;
    let head = t.conv("head", Padding::Valid)?;
    let mut hidden = Vec::new();
    while t.0.contains_key(&format!("gen.l{}.w", hidden.len())) {
        hidden.push(t.dense(&format!("gen.l{}", hidden.len()), Activation::Relu)?);
    }
    let mean_head = t.dense("gen.mean", Activation::Linear)?;
    let var_head = t.dense("gen.var", Activation::Relu)?;
    let output_scale = t.vector("out.scale", 1)?[0];
    let output_shift = t.vector("out.shift", 1)?[0];
    let p = mean_head.weight.dim().0;
    let mut codes = Vec::new();
    for s in Style::ALL {
        codes.push(AdaInCode {
            mean: t.vector(&format!("code.{}.mean", s.key()), p)?,
            variance: t.vector(&format!("code.{}.var", s.key()), p)?,
        });
    }
    if let Some(name) = t.0.keys().next() {
        return Err(corrupt(format!("unexpected tensor {name}")));
    }
    if encoder.is_empty() || decoder.is_empty() || hidden.len() != 2 {
        return Err(corrupt("incomplete network layout"));
    }
    let (_, hw, kh, dc) = head.weight.dim();
    if kh != 1 {
        return Err(corrupt("output layer must have a 1 x D kernel"));
    }
    let arch = ArchConfig {
        in_channels: encoder[0].convs[0].weight.dim().1,
        width: hw,
        bottleneck: p,
        depth_context: dc,
        generator_hidden: [hidden[0].weight.dim().0, hidden[1].weight.dim().0],
    };
    let model = SwitchableModel {
        arch,
        encoder,
        decoder,
        head,
        generator: CodeGenerator {
            hidden,
            mean_head,
            var_head,
        },
        output_scale,
        output_shift,
        codes: Some(codes),
    };
    check_chain(&model)?;
    Ok(model)
}

/// Channel counts must line up from layer to layer.
fn check_chain(m: &SwitchableModel<f32>) -> Result<()> {
    let mut ch = m.arch.in_channels;
    for (i, c) in m.encoder.iter().chain(&m.decoder).flat_map(|b| &b.convs).enumerate() {
        let (co, ci, kh, kw) = c.weight.dim();
        if ci != ch || kh != 3 || kw != 3 {
            return Err(corrupt(format!("convolution {i} has shape {:?}", c.weight.dim())));
        }
        ch = co;
        if i + 1 == m.encoder.iter().map(|b| b.convs.len()).sum::<usize>() && ch != m.arch.bottleneck {
            return Err(corrupt("encoder output does not match code length"));
        }
    }
    if m.head.weight.dim().1 != ch || m.head.weight.dim().0 != 1 {
        return Err(corrupt("output layer channel mismatch"));
    }
    let g = &m.generator;
    let chain = [g.hidden[0].weight.dim(), g.hidden[1].weight.dim(), g.mean_head.weight.dim(), g.var_head.weight.dim()];
    if chain[0].1 != 1 || chain[1].1 != chain[0].0 || chain[2].1 != chain[1].0 || chain[3] != chain[2] {
        return Err(corrupt("code generator shape mismatch"));
    }
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<SwitchableModel<f32>> {
    read_weights(&std::fs::read(path)?)
}
