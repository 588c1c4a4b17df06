//! Training loop: seeded shuffling over a packed patch dataset, Charbonnier
//! loss, Adam updates, periodic PSNR evaluation and checkpointing.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::Tape;
use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::imaging::{bicubic_resize, DatasetPack, Image, PatchPair};
use crate::metrics::{psnr, EvalProtocol};
use crate::model::SrSeNet;
use crate::optim::{AdamConfig, AdamState, CharbonnierLoss};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub charbonnier_epsilon: f64,
    /// Halve the learning rate every this many iterations.
    pub lr_decay_interval: Option<u64>,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
    /// Evaluate / checkpoint every this many iterations (and at the end).
    pub eval_interval: u64,
    /// Cap on the number of pairs used for the periodic PSNR probe.
    pub eval_pairs: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub curve_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100_000,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::default(),
            charbonnier_epsilon: 1e-3,
            lr_decay_interval: None,
            clip_norm: None,
            eval_interval: 1000,
            eval_pairs: 32,
            checkpoint_path: None,
            curve_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CurveRow {
    pub iteration: u64,
    pub loss: f64,
    pub psnr_db: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Per-iteration training loss, one entry per step taken.
    pub losses: Vec<f64>,
    pub curve: Vec<CurveRow>,
}

/// Interleaved 8-bit image to a planar `(1, C, H, W)` tensor in [0,1].
pub fn image_to_nchw<T: Scalar>(img: &Image) -> Tensor<T> {
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut data = vec![T::zero(); c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[ch * h * w + y * w + x] =
                    T::from_f64(img.data[(y * w + x) * c + ch] as f64 / 255.0);
            }
        }
    }
    Tensor::from_vec([1, c, h, w], data).unwrap()
}

/// Planar `(1, C, H, W)` tensor in [0,1] back to an interleaved 8-bit image.
pub fn nchw_to_image<T: Scalar>(t: &Tensor<T>, colorspace: crate::imaging::ColorSpace) -> Result<Image> {
    let [n, c, h, w] = t.shape();
    if n != 1 {
        return Err(Error::invalid("nchw_to_image", "batch extent must be 1"));
    }
    let mut data = vec![0u8; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v = t.data()[ch * h * w + y * w + x].to_f64();
                data[(y * w + x) * c + ch] = crate::imaging::quantize(v * 255.0);
            }
        }
    }
    Image::new(w, h, c, colorspace, data)
}

struct Sample<T> {
    lr: Tensor<T>,
    hr: Tensor<T>,
    base: Tensor<T>,
    hr_img: Image,
}

fn prepare_samples<T: Scalar>(pack: &DatasetPack) -> Result<Vec<Sample<T>>> {
    pack.pairs
        .iter()
        .map(|pair: &PatchPair| {
            let base_img = bicubic_resize(&pair.lr, pair.hr.width, pair.hr.height)?;
            Ok(Sample {
                lr: image_to_nchw(&pair.lr),
                hr: image_to_nchw(&pair.hr),
                base: image_to_nchw(&base_img),
                hr_img: pair.hr.clone(),
            })
        })
        .collect()
}

fn stack<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let [_, c, h, w] = parts[0].shape();
    let mut data = Vec::with_capacity(parts.len() * c * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec([parts.len(), c, h, w], data).unwrap()
}

fn eval_psnr<T: Scalar>(net: &SrSeNet<T>, samples: &[Sample<T>], cap: usize, scale: usize) -> Result<f64> {
    let protocol = EvalProtocol::y_shave(scale);
    let n = samples.len().min(cap).max(1).min(samples.len());
    let mut sum = 0.0;
    for s in samples.iter().take(n) {
        let sr = net.infer(&s.lr, &s.base)?;
        let sr_img = nchw_to_image(&sr, s.hr_img.colorspace)?;
        sum += psnr(&sr_img, &s.hr_img, &protocol)?;
    }
    Ok(sum / n as f64)
}

/// Trains `net` in place on `pack`. Deterministic for a fixed config and seed.
pub fn train_loop<T: Scalar>(
    net: &mut SrSeNet<T>,
    pack: &DatasetPack,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if pack.scale != net.config.upscale {
        return Err(Error::DataMismatch(format!(
            "dataset packed at scale {}, model upscales by {}",
            pack.scale, net.config.upscale
        )));
    }
    if pack.channels != net.config.input_channels {
        return Err(Error::DataMismatch(format!(
            "dataset has {} channels, model expects {}",
            pack.channels, net.config.input_channels
        )));
    }
    if pack.pairs.is_empty() && cfg.iterations > 0 {
        return Err(Error::DataMismatch("dataset pack holds no pairs".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("train", "batch size must be >= 1"));
    }

    let samples = prepare_samples::<T>(pack)?;
    let names: Vec<String> = net.param_entries().iter().map(|(n, _)| n.clone()).collect();
    let shapes: Vec<[usize; 4]> = net.param_entries().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = AdamState::<T>::new(&shapes, cfg.adam);
    let loss_fn = CharbonnierLoss::new(cfg.charbonnier_epsilon)?;
    let base_lr = cfg.adam.learning_rate;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();

    let mut losses = Vec::with_capacity(cfg.iterations as usize);
    let mut curve = Vec::new();

    for iter in 1..=cfg.iterations {
        let mut batch_idx = Vec::with_capacity(cfg.batch_size);
        while batch_idx.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let lr_batch = stack(&batch_idx.iter().map(|&i| &samples[i].lr).collect::<Vec<_>>());
        let hr_batch = stack(&batch_idx.iter().map(|&i| &samples[i].hr).collect::<Vec<_>>());
        let base_batch = stack(&batch_idx.iter().map(|&i| &samples[i].base).collect::<Vec<_>>());

        let tape = Tape::new();
        let bound = net.bind(&tape);
        let lrv = tape.leaf(lr_batch, false);
        let basev = tape.leaf(base_batch, false);
        let fwd = net.forward_on_tape(&tape, &bound, lrv, basev)?;
        let loss = loss_fn.on_tape(&tape, fwd.sr, &hr_batch)?;
        let loss_value = tape.value(loss).item()?.to_f64();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter });
        }
        let grads = tape.backward(loss)?;
        let mut grad_tensors: Vec<Tensor<T>> = bound
            .param_vars()
            .iter()
            .zip(&shapes)
            .map(|(&v, &s)| grads.get_or_zeros(v, s))
            .collect();
        drop(tape);

        if let Some(max_norm) = cfg.clip_norm {
            let mut sq = 0.0f64;
            for g in &grad_tensors {
                for &v in g.data() {
                    let v = v.to_f64();
                    sq += v * v;
                }
            }
            let norm = sq.sqrt();
            if norm > max_norm {
                let s = T::from_f64(max_norm / norm);
                for g in &mut grad_tensors {
                    for v in g.data_mut() {
                        *v = *v * s;
                    }
                }
            }
        }

        if let Some(interval) = cfg.lr_decay_interval {
            adam.config.learning_rate = base_lr * 0.5f64.powi((iter / interval) as i32);
        }
        adam.step(&mut net.param_tensors_mut(), &grad_tensors, &names)?;
        losses.push(loss_value);

        if iter % cfg.eval_interval == 0 || iter == cfg.iterations {
            let psnr_db = eval_psnr(net, &samples, cfg.eval_pairs, pack.scale)?;
            curve.push(CurveRow { iteration: iter, loss: loss_value, psnr_db });
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(net, Some(&adam), iter, path)?;
            }
        }
    }

    if cfg.iterations == 0 {
        if let Some(path) = &cfg.checkpoint_path {
            save_checkpoint(net, Some(&adam), 0, path)?;
        }
    }

    if let Some(path) = &cfg.curve_path {
        let mut out = Vec::new();
        writeln!(out, "iteration,loss,psnr_db").unwrap();
        for row in &curve {
            writeln!(out, "{},{:.8},{:.4}", row.iteration, row.loss, row.psnr_db).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))?;
    }

    Ok(TrainReport { losses, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{extract_pairs, ColorSpace};
    use crate::model::{build_srsenet, SrSeNetConfig};

    fn toy_pack(scale: usize, patch: usize) -> DatasetPack {
        let w = 64;
        let data: Vec<u8> = (0..w * w)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (((x * 13 + y * 7) % 200) + 20) as u8
            })
            .collect();
        let img = Image::new(w, w, 1, ColorSpace::Luma, data).unwrap();
        let pairs = extract_pairs(&img, scale, patch, patch).unwrap();
        DatasetPack { scale, patch, channels: 1, pairs }
    }

    fn tiny_config(scale: usize) -> SrSeNetConfig {
        SrSeNetConfig {
            depth: 1,
            width: 4,
            upscale: scale,
            se_enabled: true,
            input_channels: 1,
            reduction: 2,
            leaky_slope: 0.2,
        }
    }

    #[test]
    fn nchw_round_trip() {
        let img = Image::new(3, 2, 1, ColorSpace::Luma, vec![0, 10, 20, 30, 250, 255]).unwrap();
        let t = image_to_nchw::<f64>(&img);
        assert_eq!(t.shape(), [1, 1, 2, 3]);
        let back = nchw_to_image(&t, ColorSpace::Luma).unwrap();
        assert_eq!(back.data, img.data);
    }

    #[test]
    fn scale_mismatch_is_rejected() {
        let pack = toy_pack(2, 16);
        let mut net = build_srsenet::<f32>(&tiny_config(4), 0).unwrap();
        let err = train_loop(&mut net, &pack, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DataMismatch(_)));
    }

    #[test]
    fn loss_drops_on_a_toy_pattern() {
        let pack = toy_pack(2, 16);
        let mut net = build_srsenet::<f32>(&tiny_config(2), 1).unwrap();
        let cfg = TrainConfig {
            iterations: 60,
            batch_size: 4,
            eval_interval: 30,
            adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let report = train_loop(&mut net, &pack, &cfg).unwrap();
        let head: f64 = report.losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = report.losses[50..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "loss did not drop: {head} -> {tail}");
        assert_eq!(report.curve.len(), 2);
        assert_eq!(report.curve[0].iteration, 30);
        assert_eq!(report.curve[1].iteration, 60);
    }

    #[test]
    fn training_is_deterministic() {
        let pack = toy_pack(2, 16);
        let cfg = TrainConfig {
            iterations: 10,
            batch_size: 2,
            eval_interval: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = build_srsenet::<f32>(&tiny_config(2), 9).unwrap();
            train_loop(&mut net, &pack, &cfg).map(|r| {
                (r.losses, net.head.weight.data().to_vec())
            })
        };
        let (la, wa) = run().unwrap();
        let (lb, wb) = run().unwrap();
        assert_eq!(la, lb);
        assert_eq!(wa, wb);
    }

    #[test]
    fn lr_decay_halves_on_schedule() {
        let pack = toy_pack(2, 16);
        let mut net = build_srsenet::<f32>(&tiny_config(2), 2).unwrap();
        let cfg = TrainConfig {
            iterations: 4,
            batch_size: 1,
            eval_interval: 4,
            lr_decay_interval: Some(2),
            ..TrainConfig::default()
        };
        // indirectly: just check it runs and loss history has 4 entries
        let report = train_loop(&mut net, &pack, &cfg).unwrap();
        assert_eq!(report.losses.len(), 4);
    }

    #[test]
    fn zero_iterations_writes_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.srse");
        let pack = toy_pack(2, 16);
        let mut net = build_srsenet::<f32>(&tiny_config(2), 3).unwrap();
        let before = net.head.weight.data().to_vec();
        let cfg = TrainConfig {
            iterations: 0,
            checkpoint_path: Some(path.clone()),
            ..TrainConfig::default()
        };
        let report = train_loop(&mut net, &pack, &cfg).unwrap();
        assert!(report.losses.is_empty());
        let (loaded, opt, iter) = crate::checkpoint::load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(iter, 0);
        assert!(opt.is_some());
        assert_eq!(loaded.head.weight.data(), &before[..]);
    }

    #[test]
    fn curve_csv_matches_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let pack = toy_pack(2, 16);
        let mut net = build_srsenet::<f32>(&tiny_config(2), 4).unwrap();
        let cfg = TrainConfig {
            iterations: 6,
            batch_size: 2,
            eval_interval: 3,
            curve_path: Some(path.clone()),
            ..TrainConfig::default()
        };
        let report = train_loop(&mut net, &pack, &cfg).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,loss,psnr_db");
        assert_eq!(lines.len(), 1 + report.curve.len());
        assert!(lines[1].starts_with("3,"));
        assert!(lines[2].starts_with("6,"));
    }
}
