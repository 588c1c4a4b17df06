//! `srse`: dataset preparation, training, inference, benchmark evaluation and
//! gradient checking for the SrSENet super-resolution toolkit.
//!
//! Exit codes: 0 success, 2 usage error, 3 data mismatch, 4 numeric failure,
//! 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use srsenet::checkpoint::{load_checkpoint, peek_checkpoint};
use srsenet::error::{Error, Result};
use srsenet::imaging::{
    self, bicubic_resize, extract_pairs, load_png, modcrop, pack_dataset, read_dataset,
    ColorSpace, Image, PatchPair,
};
use srsenet::metrics::{evaluate_benchmark, write_report_csv, ChannelMode, EvalProtocol, SrSource};
use srsenet::model::{build_srsenet, SrSeNet, SrSeNetConfig};
use srsenet::optim::AdamConfig;
use srsenet::tensor::{Precision, Scalar};
use srsenet::train::{image_to_nchw, nchw_to_image, train_loop, TrainConfig};

#[derive(Parser)]
#[command(name = "srse", version, about = "SrSENet single-image super-resolution toolkit")]
struct Cli {
    /// Plain-text key=value defaults, merged under explicit flags (flags win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker thread count, accepted for run-log compatibility. This build
    /// computes on a single thread regardless.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bicubic-downscale a directory of HR PNGs (after modcrop).
    Degrade(DegradeArgs),
    /// Cut HR/LR patch pairs from a directory of HR PNGs into one pack file.
    Pack(PackArgs),
    /// Train a model on a packed dataset.
    Train(TrainArgs),
    /// Super-resolve one PNG with a trained checkpoint.
    Sr(SrArgs),
    /// PSNR/SSIM benchmark of an SR directory (or the bicubic baseline).
    Eval(EvalArgs),
    /// Compare every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct DegradeArgs {
    /// Directory of HR PNGs.
    #[arg(long, value_name = "DIR")]
    hr: PathBuf,
    /// Output directory for LR PNGs (matching stems).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_parser = ["2", "4", "8"])]
    scale: String,
    /// Overwrite existing files in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct PackArgs {
    /// Directory of HR PNGs.
    #[arg(long, value_name = "DIR")]
    hr: PathBuf,
    #[arg(long, value_parser = ["2", "4", "8"])]
    scale: String,
    /// HR patch extent.
    #[arg(long, default_value_t = 96)]
    patch: usize,
    /// Grid stride between patches (defaults to the patch extent).
    #[arg(long)]
    stride: Option<usize>,
    /// 1 packs the BT.601 luma plane, 3 packs RGB.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(usize))]
    channels: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset pack file.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Expected upscale rate; must match the pack header.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    iters: u64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Train the ablated variant without SE attention.
    #[arg(long)]
    no_se: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    /// Training-curve CSV (iteration,loss,psnr_db).
    #[arg(long, value_name = "FILE")]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    reduction: usize,
    #[arg(long, default_value_t = 0.2)]
    slope: f64,
    #[arg(long, default_value = "single", value_parser = ["single", "double"])]
    precision: String,
    #[arg(long, default_value_t = 1000)]
    eval_interval: u64,
    /// Cap on pairs used for the periodic PSNR probe.
    #[arg(long, default_value_t = 32)]
    eval_pairs: usize,
    /// Halve the learning rate every N iterations.
    #[arg(long, value_name = "N")]
    lr_decay: Option<u64>,
    /// Global gradient-norm clip.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Charbonnier epsilon.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
}

#[derive(Args)]
struct SrArgs {
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    #[arg(long = "in", value_name = "PNG")]
    input: PathBuf,
    #[arg(long, value_name = "PNG")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of SR PNGs with stems matching the HR set.
    #[arg(long, value_name = "DIR", conflicts_with = "bicubic")]
    sr: Option<PathBuf>,
    /// Evaluate the bicubic degrade-upscale baseline instead of SR files.
    #[arg(long)]
    bicubic: bool,
    /// Directory of ground-truth HR PNGs.
    #[arg(long, value_name = "DIR")]
    hr: PathBuf,
    #[arg(long, value_parser = ["2", "4", "8"])]
    scale: String,
    /// Border exclusion; defaults to the scale.
    #[arg(long)]
    shave: Option<usize>,
    #[arg(long, default_value = "y", value_parser = ["y", "rgb"])]
    channel: String,
    /// Also write the per-image report as CSV.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The suite always checks in double precision; `single` is rejected.
    #[arg(long, default_value = "double", value_parser = ["double"])]
    precision: String,
    /// Test hook: corrupt the named op's analytic gradient so the harness
    /// itself can be validated.
    #[arg(long, hide = true, value_name = "OP")]
    inject_error: Option<String>,
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::DataMismatch(_) => 3,
                Error::NonFinite { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteLoss { .. }
                | Error::GradientCheckFailed { .. } => 4,
                _ => 1,
            })
        }
    }
}

/// `key=value` lines, `#` comments and blank lines.
fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::format(path, format!("line {}: expected key=value", lineno + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// True when the user typed the flag; config-file values never override these.
fn from_cli(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::DataMismatch(format!("config key `{key}`: bad value `{value}`")))
}

fn unknown_key(key: &str) -> Error {
    Error::DataMismatch(format!("config file: unknown key `{key}` for this subcommand"))
}

fn run(mut cli: Cli, matches: &ArgMatches) -> Result<()> {
    let entries = match &cli.config {
        Some(path) => parse_config_file(path)?,
        None => Vec::new(),
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match &mut cli.cmd {
        Cmd::Degrade(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "hr" if !from_cli(sub, "hr") => a.hr = PathBuf::from(v),
                    "out" if !from_cli(sub, "out") => a.out = PathBuf::from(v),
                    "scale" if !from_cli(sub, "scale") => a.scale = check_scale(k, v)?,
                    "force" if !from_cli(sub, "force") => a.force = parse_as(k, v)?,
                    "hr" | "out" | "scale" | "force" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_degrade(a)
        }
        Cmd::Pack(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "hr" if !from_cli(sub, "hr") => a.hr = PathBuf::from(v),
                    "out" if !from_cli(sub, "out") => a.out = PathBuf::from(v),
                    "scale" if !from_cli(sub, "scale") => a.scale = check_scale(k, v)?,
                    "patch" if !from_cli(sub, "patch") => a.patch = parse_as(k, v)?,
                    "stride" if !from_cli(sub, "stride") => a.stride = Some(parse_as(k, v)?),
                    "channels" if !from_cli(sub, "channels") => a.channels = parse_as(k, v)?,
                    "hr" | "out" | "scale" | "patch" | "stride" | "channels" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_pack(a)
        }
        Cmd::Train(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "data" if !from_cli(sub, "data") => a.data = PathBuf::from(v),
                    "scale" if !from_cli(sub, "scale") => a.scale = Some(parse_as(k, v)?),
                    "iters" if !from_cli(sub, "iters") => a.iters = parse_as(k, v)?,
                    "batch" if !from_cli(sub, "batch") => a.batch = parse_as(k, v)?,
                    "lr" if !from_cli(sub, "lr") => a.lr = parse_as(k, v)?,
                    "no-se" if !from_cli(sub, "no_se") => a.no_se = parse_as(k, v)?,
                    "seed" if !from_cli(sub, "seed") => a.seed = parse_as(k, v)?,
                    "ckpt" if !from_cli(sub, "ckpt") => a.ckpt = Some(PathBuf::from(v)),
                    "curve" if !from_cli(sub, "curve") => a.curve = Some(PathBuf::from(v)),
                    "depth" if !from_cli(sub, "depth") => a.depth = parse_as(k, v)?,
                    "width" if !from_cli(sub, "width") => a.width = parse_as(k, v)?,
                    "reduction" if !from_cli(sub, "reduction") => a.reduction = parse_as(k, v)?,
                    "slope" if !from_cli(sub, "slope") => a.slope = parse_as(k, v)?,
                    "precision" if !from_cli(sub, "precision") => {
                        a.precision = check_choice(k, v, &["single", "double"])?
                    }
                    "eval-interval" if !from_cli(sub, "eval_interval") => {
                        a.eval_interval = parse_as(k, v)?
                    }
                    "eval-pairs" if !from_cli(sub, "eval_pairs") => a.eval_pairs = parse_as(k, v)?,
                    "lr-decay" if !from_cli(sub, "lr_decay") => a.lr_decay = Some(parse_as(k, v)?),
                    "clip-norm" if !from_cli(sub, "clip_norm") => {
                        a.clip_norm = Some(parse_as(k, v)?)
                    }
                    "epsilon" if !from_cli(sub, "epsilon") => a.epsilon = parse_as(k, v)?,
                    "data" | "scale" | "iters" | "batch" | "lr" | "no-se" | "seed" | "ckpt"
                    | "curve" | "depth" | "width" | "reduction" | "slope" | "precision"
                    | "eval-interval" | "eval-pairs" | "lr-decay" | "clip-norm" | "epsilon" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_train(a)
        }
        Cmd::Sr(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "ckpt" if !from_cli(sub, "ckpt") => a.ckpt = PathBuf::from(v),
                    "in" if !from_cli(sub, "input") => a.input = PathBuf::from(v),
                    "out" if !from_cli(sub, "out") => a.out = PathBuf::from(v),
                    "ckpt" | "in" | "out" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_sr(a)
        }
        Cmd::Eval(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "sr" if !from_cli(sub, "sr") => a.sr = Some(PathBuf::from(v)),
                    "bicubic" if !from_cli(sub, "bicubic") => a.bicubic = parse_as(k, v)?,
                    "hr" if !from_cli(sub, "hr") => a.hr = PathBuf::from(v),
                    "scale" if !from_cli(sub, "scale") => a.scale = check_scale(k, v)?,
                    "shave" if !from_cli(sub, "shave") => a.shave = Some(parse_as(k, v)?),
                    "channel" if !from_cli(sub, "channel") => {
                        a.channel = check_choice(k, v, &["y", "rgb"])?
                    }
                    "out" if !from_cli(sub, "out") => a.out = Some(PathBuf::from(v)),
                    "sr" | "bicubic" | "hr" | "scale" | "shave" | "channel" | "out" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_eval(a)
        }
        Cmd::Gradcheck(a) => {
            for (k, v) in &entries {
                match k.as_str() {
                    "seed" if !from_cli(sub, "seed") => a.seed = parse_as(k, v)?,
                    "precision" if !from_cli(sub, "precision") => {
                        a.precision = check_choice(k, v, &["double"])?
                    }
                    "seed" | "precision" => {}
                    _ => return Err(unknown_key(k)),
                }
            }
            cmd_gradcheck(a)
        }
    }
}

fn check_scale(key: &str, value: &str) -> Result<String> {
    check_choice(key, value, &["2", "4", "8"])
}

fn check_choice(key: &str, value: &str, allowed: &[&str]) -> Result<String> {
    if allowed.contains(&value) {
        Ok(value.to_string())
    } else {
        Err(Error::DataMismatch(format!(
            "config key `{key}`: `{value}` is not one of {allowed:?}"
        )))
    }
}

fn png_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("png"))
            == Some(true)
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_degrade(a: &DegradeArgs) -> Result<()> {
    let scale: usize = a.scale.parse().unwrap();
    println!(
        "config: hr={} out={} scale={} force={}",
        a.hr.display(),
        a.out.display(),
        scale,
        a.force
    );
    let files = png_paths(&a.hr)?;
    if files.is_empty() {
        eprintln!("warning: no PNG files in {}", a.hr.display());
        return Ok(());
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for path in &files {
        let dest = a.out.join(path.file_name().unwrap());
        if dest.exists() && !a.force {
            return Err(Error::invalid(
                "degrade",
                format!("{} exists; pass --force to overwrite", dest.display()),
            ));
        }
        let hr = modcrop(&load_png(path)?, scale)?;
        let lr = bicubic_resize(&hr, hr.width / scale, hr.height / scale)?;
        imaging::save_png(&lr, &dest)?;
        println!(
            "{}: {}x{} -> {}x{}",
            path.file_name().unwrap().to_string_lossy(),
            hr.width,
            hr.height,
            lr.width,
            lr.height
        );
    }
    Ok(())
}

fn cmd_pack(a: &PackArgs) -> Result<()> {
    let scale: usize = a.scale.parse().unwrap();
    let stride = a.stride.unwrap_or(a.patch);
    if a.channels != 1 && a.channels != 3 {
        return Err(Error::invalid("pack", "channels must be 1 or 3"));
    }
    println!(
        "config: hr={} scale={} patch={} stride={} channels={} out={}",
        a.hr.display(),
        scale,
        a.patch,
        stride,
        a.channels,
        a.out.display()
    );
    let mut pairs: Vec<PatchPair> = Vec::new();
    for path in &png_paths(&a.hr)? {
        let img = load_png(path)?;
        let img = match a.channels {
            1 => imaging::to_luma(&img)?,
            _ => {
                if img.channels != 3 {
                    return Err(Error::DataMismatch(format!(
                        "{}: {}-channel image in a channels=3 pack",
                        path.display(),
                        img.channels
                    )));
                }
                img
            }
        };
        pairs.extend(extract_pairs(&img, scale, a.patch, stride)?);
    }
    pack_dataset(&pairs, scale, a.patch, a.channels, &a.out)?;
    println!("packed {} pairs into {}", pairs.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let pack = read_dataset(&a.data)?;
    if let Some(scale) = a.scale {
        if scale != pack.scale {
            return Err(Error::DataMismatch(format!(
                "--scale {} but {} is packed at scale {}",
                scale,
                a.data.display(),
                pack.scale
            )));
        }
    }
    let model_config = SrSeNetConfig {
        depth: a.depth,
        width: a.width,
        upscale: pack.scale,
        se_enabled: !a.no_se,
        input_channels: pack.channels,
        reduction: a.reduction,
        leaky_slope: a.slope,
    };
    model_config.validate()?;
    let train_config = TrainConfig {
        iterations: a.iters,
        batch_size: a.batch,
        seed: a.seed,
        adam: AdamConfig { learning_rate: a.lr, ..AdamConfig::default() },
        charbonnier_epsilon: a.epsilon,
        lr_decay_interval: a.lr_decay,
        clip_norm: a.clip_norm,
        eval_interval: a.eval_interval,
        eval_pairs: a.eval_pairs,
        checkpoint_path: a.ckpt.clone(),
        curve_path: a.curve.clone(),
    };
    println!(
        "config: data={} scale={} iters={} batch={} lr={} no_se={} seed={} depth={} width={} \
         reduction={} slope={} precision={} eval_interval={} eval_pairs={} lr_decay={:?} \
         clip_norm={:?} epsilon={} ckpt={:?} curve={:?}",
        a.data.display(),
        pack.scale,
        a.iters,
        a.batch,
        a.lr,
        a.no_se,
        a.seed,
        a.depth,
        a.width,
        a.reduction,
        a.slope,
        a.precision,
        a.eval_interval,
        a.eval_pairs,
        a.lr_decay,
        a.clip_norm,
        a.epsilon,
        a.ckpt,
        a.curve
    );
    println!("pack: {} pairs, patch {}, channels {}", pack.pairs.len(), pack.patch, pack.channels);

    fn go<T: Scalar>(
        config: &SrSeNetConfig,
        pack: &imaging::DatasetPack,
        cfg: &TrainConfig,
    ) -> Result<()> {
        let mut net = build_srsenet::<T>(config, cfg.seed)?;
        let report = train_loop(&mut net, pack, cfg)?;
        if let Some(row) = report.curve.last() {
            println!(
                "final: iteration {} loss {:.6} psnr {:.2} dB",
                row.iteration, row.loss, row.psnr_db
            );
        }
        Ok(())
    }
    match a.precision.as_str() {
        "double" => go::<f64>(&model_config, &pack, &train_config),
        _ => go::<f32>(&model_config, &pack, &train_config),
    }
}

fn split_channel(img: &Image, c: usize) -> Image {
    let data: Vec<u8> =
        (0..img.width * img.height).map(|i| img.data[i * img.channels + c]).collect();
    Image::new(img.width, img.height, 1, ColorSpace::Luma, data).unwrap()
}

fn run_sr_typed<T: Scalar>(net: &SrSeNet<T>, img: &Image) -> Result<Image> {
    let r = net.config.upscale;
    let base_img = bicubic_resize(img, img.width * r, img.height * r)?;
    let lr = image_to_nchw::<T>(img);
    let base = image_to_nchw::<T>(&base_img);
    let sr = net.infer(&lr, &base)?;
    nchw_to_image(&sr, img.colorspace)
}

fn cmd_sr(a: &SrArgs) -> Result<()> {
    let info = peek_checkpoint(&a.ckpt)?;
    println!(
        "config: ckpt={} in={} out={} | model: depth={} width={} scale={} se={} channels={} \
         precision={:?} iteration={}",
        a.ckpt.display(),
        a.input.display(),
        a.out.display(),
        info.config.depth,
        info.config.width,
        info.config.upscale,
        info.config.se_enabled,
        info.config.input_channels,
        info.precision,
        info.iteration
    );

    fn go<T: Scalar>(a: &SrArgs) -> Result<()> {
        let (net, _, _) = load_checkpoint::<T>(&a.ckpt)?;
        let img = load_png(&a.input)?;
        let r = net.config.upscale;
        let out = match (net.config.input_channels, img.channels) {
            (1, 1) => run_sr_typed(&net, &img)?,
            (1, 3) => {
                // Y-channel model on a color input: super-resolve luma, carry
                // chroma up with bicubic, recompose.
                let ycbcr = imaging::rgb_to_ycbcr(&img)?;
                let y_sr = run_sr_typed(&net, &split_channel(&ycbcr, 0))?;
                let (w, h) = (img.width * r, img.height * r);
                let cb = bicubic_resize(&split_channel(&ycbcr, 1), w, h)?;
                let cr = bicubic_resize(&split_channel(&ycbcr, 2), w, h)?;
                let mut data = Vec::with_capacity(w * h * 3);
                for i in 0..w * h {
                    data.push(y_sr.data[i]);
                    data.push(cb.data[i]);
                    data.push(cr.data[i]);
                }
                imaging::ycbcr_to_rgb(&Image::new(w, h, 3, ColorSpace::YCbCr, data)?)?
            }
            (3, 3) => run_sr_typed(&net, &img)?,
            (expected, got) => {
                return Err(Error::DataMismatch(format!(
                    "{}: model expects {expected}-channel input, image has {got} channels",
                    a.input.display()
                )))
            }
        };
        imaging::save_png(&out, &a.out)?;
        println!("wrote {} ({}x{})", a.out.display(), out.width, out.height);
        Ok(())
    }
    match info.precision {
        Precision::Double => go::<f64>(a),
        Precision::Single => go::<f32>(a),
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let scale: usize = a.scale.parse().unwrap();
    let source = match (&a.sr, a.bicubic) {
        (Some(dir), false) => SrSource::Dir(dir),
        (None, true) => SrSource::Bicubic,
        _ => {
            return Err(Error::invalid("eval", "exactly one of --sr DIR or --bicubic is required"))
        }
    };
    let shave = a.shave.unwrap_or(scale);
    let channel = match a.channel.as_str() {
        "rgb" => ChannelMode::RgbMean,
        _ => ChannelMode::Y,
    };
    println!(
        "config: hr={} source={} scale={} shave={} channel={}",
        a.hr.display(),
        match &source {
            SrSource::Dir(d) => d.display().to_string(),
            SrSource::Bicubic => "bicubic".to_string(),
        },
        scale,
        shave,
        channel.as_str()
    );
    let protocol = EvalProtocol { channel, shave, peak: 255.0 };
    let report = evaluate_benchmark(&a.hr, &source, scale, &protocol)?;
    let mut stdout = std::io::stdout();
    write_report_csv(&report, &mut stdout).map_err(|e| Error::io("stdout", e))?;
    if let Some(path) = &a.out {
        let mut buf = Vec::new();
        write_report_csv(&report, &mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    println!("config: seed={} precision={}", a.seed, a.precision);
    let reports = srsenet::gradcheck::run_suite(a.seed, a.inject_error.as_deref())?;
    let mut failed = Vec::new();
    for r in &reports {
        println!(
            "{:<24} max_rel {:>10.3e}  threshold {:>8.1e}  {}",
            r.name,
            r.max_rel_err,
            r.threshold,
            if r.passed() { "ok" } else { "FAIL" }
        );
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        println!("all {} gradient checks passed", reports.len());
        Ok(())
    } else {
        Err(Error::GradientCheckFailed { ops: failed.join(", ") })
    }
}
