//! Versioned binary checkpoint container.
//!
//! Layout (little-endian):
//! magic `SRSE`, u32 version, config block (u32 depth/width/upscale/
//! reduction/input_channels, u8 se_enabled, u8 precision tag, f64 leaky_slope),
//! u64 iteration, u8 has_optimizer, u32 tensor count, then per tensor:
//! u32 name length, name bytes, u8 precision tag, 4 u64 extents, raw scalars.
//! When optimizer state is present it is followed by the Adam hyperparameters
//! (f64 lr/beta1/beta2/delta, u64 step) and the first/second moment tensors in
//! parameter order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{build_srsenet, SrSeNet, SrSeNetConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::{Precision, Scalar, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"SRSE";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct CheckpointInfo {
    pub config: SrSeNetConfig,
    pub precision: Precision,
    pub iteration: u64,
    pub has_optimizer: bool,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        self.u32(name.len() as u32);
        self.buf.extend_from_slice(name.as_bytes());
        self.u8(T::PRECISION.tag());
        for e in t.shape() {
            self.u64(e as u64);
        }
        for &v in t.data() {
            v.write_le(&mut self.buf);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor<T: Scalar>(&mut self) -> Result<(String, Tensor<T>)> {
        let name_len = self.u32()? as usize;
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| Error::format(self.path, "tensor name is not valid UTF-8"))?;
        let tag = self.u8()?;
        let precision = Precision::from_tag(tag)
            .ok_or_else(|| Error::format(self.path, format!("unknown precision tag {tag}")))?;
        if precision != T::PRECISION {
            return Err(Error::format(
                self.path,
                format!(
                    "tensor `{name}` stored as {precision}, requested {}",
                    T::PRECISION
                ),
            ));
        }
        let mut shape: Shape = [0; 4];
        for e in &mut shape {
            *e = self.u64()? as usize;
        }
        let count: usize = shape.iter().product();
        let raw = self.take(count * T::BYTES)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok((name, Tensor::from_vec(shape, data)?))
    }
}

fn write_header<T: Scalar>(
    w: &mut Writer,
    config: &SrSeNetConfig,
    iteration: u64,
    has_optimizer: bool,
) {
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(config.depth as u32);
    w.u32(config.width as u32);
    w.u32(config.upscale as u32);
    w.u32(config.reduction as u32);
    w.u32(config.input_channels as u32);
    w.u8(config.se_enabled as u8);
    w.u8(T::PRECISION.tag());
    w.f64(config.leaky_slope);
    w.u64(iteration);
    w.u8(has_optimizer as u8);
}

fn read_header(r: &mut Reader) -> Result<CheckpointInfo> {
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(r.path, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(
            r.path,
            format!("checkpoint version {version}, this build reads version {VERSION}"),
        ));
    }
    let depth = r.u32()? as usize;
    let width = r.u32()? as usize;
    let upscale = r.u32()? as usize;
    let reduction = r.u32()? as usize;
    let input_channels = r.u32()? as usize;
    let se_enabled = r.u8()? != 0;
    let tag = r.u8()?;
    let precision = Precision::from_tag(tag)
        .ok_or_else(|| Error::format(r.path, format!("unknown precision tag {tag}")))?;
    let leaky_slope = r.f64()?;
    let iteration = r.u64()?;
    let has_optimizer = r.u8()? != 0;
    Ok(CheckpointInfo {
        config: SrSeNetConfig {
            depth,
            width,
            upscale,
            se_enabled,
            input_channels,
            reduction,
            leaky_slope,
        },
        precision,
        iteration,
        has_optimizer,
    })
}

pub fn save_checkpoint<T: Scalar>(
    net: &SrSeNet<T>,
    optimizer: Option<&AdamState<T>>,
    iteration: u64,
    path: &Path,
) -> Result<()> {
    let mut w = Writer::new();
    write_header::<T>(&mut w, &net.config, iteration, optimizer.is_some());
    let entries = net.param_entries();
    w.u32(entries.len() as u32);
    for (name, tensor) in &entries {
        w.tensor(name, tensor);
    }
    if let Some(state) = optimizer {
        w.f64(state.config.learning_rate);
        w.f64(state.config.beta1);
        w.f64(state.config.beta2);
        w.f64(state.config.delta);
        w.u64(state.t);
        for ((name, _), m) in entries.iter().zip(&state.m) {
            w.tensor(&format!("adam.m.{name}"), m);
        }
        for ((name, _), v) in entries.iter().zip(&state.v) {
            w.tensor(&format!("adam.v.{name}"), v);
        }
    }
    fs::write(path, &w.buf).map_err(|e| Error::io(path, e))
}

/// Header-only read, used to pick the precision before a full typed load.
pub fn peek_checkpoint(path: &Path) -> Result<CheckpointInfo> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0, path };
    read_header(&mut r)
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(SrSeNet<T>, Option<AdamState<T>>, u64)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0, path };
    let info = read_header(&mut r)?;
    if info.precision != T::PRECISION {
        return Err(Error::format(
            path,
            format!("checkpoint precision {}, requested {}", info.precision, T::PRECISION),
        ));
    }
    let mut net = build_srsenet::<T>(&info.config, 0)?;
    let count = r.u32()? as usize;
    let expected = net.param_entries().len();
    if count != expected {
        return Err(Error::format(
            path,
            format!("checkpoint has {count} tensors, config implies {expected}"),
        ));
    }
    let names: Vec<String> = net.param_entries().iter().map(|(n, _)| n.clone()).collect();
    {
        let mut targets = net.param_tensors_mut();
        for (name, target) in names.iter().zip(targets.iter_mut()) {
            let (got_name, tensor) = r.tensor::<T>()?;
            if &got_name != name {
                return Err(Error::format(
                    path,
                    format!("unexpected tensor `{got_name}`, expected `{name}`"),
                ));
            }
            if tensor.shape() != target.shape() {
                return Err(Error::format(
                    path,
                    format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        tensor.shape(),
                        target.shape()
                    ),
                ));
            }
            **target = tensor;
        }
    }
    let optimizer = if info.has_optimizer {
        let config = AdamConfig {
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            delta: r.f64()?,
        };
        let t = r.u64()?;
        let mut read_moments = |prefix: &str| -> Result<Vec<Tensor<T>>> {
            let mut out = Vec::with_capacity(names.len());
            for name in &names {
                let (got_name, tensor) = r.tensor::<T>()?;
                let expect = format!("{prefix}.{name}");
                if got_name != expect {
                    return Err(Error::format(
                        path,
                        format!("unexpected tensor `{got_name}`, expected `{expect}`"),
                    ));
                }
                out.push(tensor);
            }
            Ok(out)
        };
        let m = read_moments("adam.m")?;
        let v = read_moments("adam.v")?;
        Some(AdamState { m, v, t, config })
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint payload"));
    }
    Ok((net, optimizer, info.iteration))
}
