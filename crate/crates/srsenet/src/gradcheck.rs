//! Gradient-check suite: every differentiable op's analytic gradient against
//! the central finite-difference oracle, in double precision, plus a tiny
//! end-to-end network check. Used by both the test suite and `srse gradcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_grad, Tape, Var};
use crate::error::Result;
use crate::model::{build_srsenet, SrSeNetConfig};
use crate::ops;
use crate::optim::CharbonnierLoss;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct OpReport {
    pub name: String,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= self.threshold
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    let mut max_diff = 0.0f64;
    for (a, n) in analytic.data().iter().zip(numeric.data()) {
        max_diff = max_diff.max((a - n).abs());
    }
    max_diff / analytic.max_abs().max(numeric.max_abs()).max(1e-6)
}

/// Checks one op: the op's output is projected to a scalar with a fixed
/// random tensor, then each input's analytic gradient is compared against
/// finite differences of that scalar.
fn check_op<F>(
    name: &str,
    threshold: f64,
    inputs: &[Tensor<f64>],
    rng: &mut ChaCha8Rng,
    corrupt: bool,
    build: F,
) -> Result<OpReport>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let out_shape = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        tape.shape(build(&tape, &vars)?)
    };
    let projection = rand_tensor(rng, out_shape);

    let run = |inputs: &[Tensor<f64>]| -> Result<(f64, Vec<Tensor<f64>>)> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let y = build(&tape, &vars)?;
        let proj = tape.leaf(projection.clone(), false);
        let loss = ops::tape::sum(&tape, ops::tape::mul_elementwise(&tape, y, proj)?)?;
        let value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let analytic = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect();
        Ok((value, analytic))
    };

    let (_, mut analytic) = run(inputs)?;
    if corrupt {
        let g = analytic[0].data_mut();
        g[0] += 1e-2;
    }
    let mut max = 0.0f64;
    for (j, a) in analytic.iter().enumerate() {
        let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
        let numeric = finite_diff_grad(
            |x| {
                probe[j] = x.clone();
                run(&probe).map(|(v, _)| v)
            },
            &inputs[j],
            1e-6,
        )?;
        max = max.max(rel_err(a, &numeric));
    }
    Ok(OpReport { name: name.to_string(), max_rel_err: max, threshold })
}

fn check_full_net(seed: u64, corrupt: bool) -> Result<OpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e5e);
    let config = SrSeNetConfig {
        depth: 2,
        width: 8,
        upscale: 2,
        se_enabled: true,
        input_channels: 1,
        reduction: 4,
        leaky_slope: 0.2,
    };
    let net = build_srsenet::<f64>(&config, seed)?;
    let lr = rand_tensor(&mut rng, [1, 1, 8, 8]);
    let base = rand_tensor(&mut rng, [1, 1, 16, 16]);
    let target = rand_tensor(&mut rng, [1, 1, 16, 16]);
    let loss_fn = CharbonnierLoss::default();

    let tape = Tape::new();
    let bound = net.bind(&tape);
    let lrv = tape.leaf(lr.clone(), false);
    let basev = tape.leaf(base.clone(), false);
    let fwd = net.forward_on_tape(&tape, &bound, lrv, basev)?;
    let loss = loss_fn.on_tape(&tape, fwd.sr, &target)?;
    let grads = tape.backward(loss)?;

    let names: Vec<String> = net.param_entries().iter().map(|(n, _)| n.clone()).collect();
    let mut max = 0.0f64;
    for (idx, name) in names.iter().enumerate() {
        let shape = net.param_entries()[idx].1.shape();
        let mut analytic = grads.get_or_zeros(bound.param_vars()[idx], shape);
        if corrupt && idx == 0 {
            analytic.data_mut()[0] += 1e-2;
        }
        let numeric = finite_diff_grad(
            |x| {
                let mut probe = net.clone();
                *probe.param_tensors_mut()[idx] = x.clone();
                let sr = probe.infer(&lr, &base)?;
                loss_fn.eval(&sr, &target)
            },
            &net.param_entries()[idx].1.clone(),
            1e-5,
        )?;
        let err = rel_err(&analytic, &numeric);
        if err > max {
            max = err;
        }
        let _ = name;
    }
    Ok(OpReport { name: "srsenet_end_to_end".to_string(), max_rel_err: max, threshold: 1e-4 })
}

/// Runs the whole suite. `corrupt` perturbs the named op's analytic gradient,
/// a hook for verifying that the harness actually detects wrong gradients.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<OpReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hit = |name: &str| corrupt == Some(name);
    let mut reports = Vec::new();

    let x = rand_tensor(&mut rng, [1, 2, 3, 3]);
    reports.push(check_op("sigmoid", 1e-6, &[x], &mut rng, hit("sigmoid"), |t, v| {
        ops::tape::sigmoid(t, v[0])
    })?);

    // keep inputs away from the kink at 0
    let mut x = rand_tensor(&mut rng, [1, 2, 4, 4]);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    reports.push(check_op("leaky_relu", 1e-6, &[x], &mut rng, hit("leaky_relu"), |t, v| {
        ops::tape::leaky_relu(t, v[0], 0.2)
    })?);

    let a = rand_tensor(&mut rng, [2, 3, 4, 4]);
    let b = rand_tensor(&mut rng, [2, 3, 1, 1]);
    reports.push(check_op("add_broadcast", 1e-6, &[a, b], &mut rng, hit("add_broadcast"), |t, v| {
        ops::tape::add(t, v[0], v[1])
    })?);

    let u = rand_tensor(&mut rng, [1, 3, 4, 4]);
    let s = rand_tensor(&mut rng, [1, 3, 1, 1]);
    reports.push(check_op(
        "mul_channelwise",
        1e-6,
        &[u, s],
        &mut rng,
        hit("mul_channelwise"),
        |t, v| ops::tape::mul_channelwise(t, v[0], v[1]),
    )?);

    let x = rand_tensor(&mut rng, [1, 2, 3, 3]);
    reports.push(check_op(
        "global_avg_pool",
        1e-6,
        &[x],
        &mut rng,
        hit("global_avg_pool"),
        |t, v| ops::tape::global_avg_pool(t, v[0]),
    )?);

    let x = rand_tensor(&mut rng, [2, 8, 1, 1]);
    let w = rand_tensor(&mut rng, [1, 4, 1, 8]);
    let b = rand_tensor(&mut rng, [1, 4, 1, 1]);
    reports.push(check_op("dense", 1e-6, &[x, w, b], &mut rng, hit("dense"), |t, v| {
        ops::tape::dense(t, v[0], v[1], v[2])
    })?);

    let x = rand_tensor(&mut rng, [2, 3, 5, 5]);
    let w = rand_tensor(&mut rng, [4, 3, 3, 3]);
    let b = rand_tensor(&mut rng, [1, 4, 1, 1]);
    reports.push(check_op("conv2d", 1e-6, &[x, w, b], &mut rng, hit("conv2d"), |t, v| {
        ops::tape::conv2d(t, v[0], v[1], v[2], 1, 1)
    })?);

    for (k, s, p) in [(4usize, 2usize, 1usize), (8, 4, 2), (16, 8, 4)] {
        let x = rand_tensor(&mut rng, [1, 2, 3, 3]);
        let w = rand_tensor(&mut rng, [2, 1, k, k]);
        let b = rand_tensor(&mut rng, [1, 1, 1, 1]);
        let name = format!("conv2d_transpose_k{k}s{s}p{p}");
        reports.push(check_op(&name, 1e-6, &[x, w, b], &mut rng, hit(&name), move |t, v| {
            ops::tape::conv_transpose2d(t, v[0], v[1], v[2], s, p)
        })?);
    }

    // SE layer on (1,8,4,4) with reduction 4
    let u = rand_tensor(&mut rng, [1, 8, 4, 4]);
    let w1 = rand_tensor(&mut rng, [1, 2, 1, 8]);
    let b1 = rand_tensor(&mut rng, [1, 2, 1, 1]);
    let w2 = rand_tensor(&mut rng, [1, 8, 1, 2]);
    let b2 = rand_tensor(&mut rng, [1, 8, 1, 1]);
    reports.push(check_op(
        "se_layer",
        1e-5,
        &[u, w1, b1, w2, b2],
        &mut rng,
        hit("se_layer"),
        |t, v| {
            let z = ops::tape::global_avg_pool(t, v[0])?;
            let a = ops::tape::leaky_relu(t, ops::tape::dense(t, z, v[1], v[2])?, 0.0)?;
            let s = ops::tape::sigmoid(t, ops::tape::dense(t, a, v[3], v[4])?)?;
            ops::tape::mul_channelwise(t, v[0], s)
        },
    )?);

    // full SrSE block on (1,8,5,5)
    let x = rand_tensor(&mut rng, [1, 8, 5, 5]);
    let c1 = rand_tensor(&mut rng, [8, 8, 3, 3]);
    let cb1 = rand_tensor(&mut rng, [1, 8, 1, 1]);
    let c2 = rand_tensor(&mut rng, [8, 8, 3, 3]);
    let cb2 = rand_tensor(&mut rng, [1, 8, 1, 1]);
    let w1 = rand_tensor(&mut rng, [1, 2, 1, 8]);
    let b1 = rand_tensor(&mut rng, [1, 2, 1, 1]);
    let w2 = rand_tensor(&mut rng, [1, 8, 1, 2]);
    let b2 = rand_tensor(&mut rng, [1, 8, 1, 1]);
    reports.push(check_op(
        "srse_block",
        1e-5,
        &[x, c1, cb1, c2, cb2, w1, b1, w2, b2],
        &mut rng,
        hit("srse_block"),
        |t, v| {
            let y = ops::tape::conv2d(t, v[0], v[1], v[2], 1, 1)?;
            let y = ops::tape::leaky_relu(t, y, 0.2)?;
            let y = ops::tape::conv2d(t, y, v[3], v[4], 1, 1)?;
            let z = ops::tape::global_avg_pool(t, y)?;
            let a = ops::tape::leaky_relu(t, ops::tape::dense(t, z, v[5], v[6])?, 0.0)?;
            let s = ops::tape::sigmoid(t, ops::tape::dense(t, a, v[7], v[8])?)?;
            let y = ops::tape::mul_channelwise(t, y, s)?;
            ops::tape::add(t, y, v[0])
        },
    )?);

    let pred = rand_tensor(&mut rng, [1, 1, 3, 3]);
    let target = rand_tensor(&mut rng, [1, 1, 3, 3]);
    reports.push(check_op(
        "charbonnier",
        1e-6,
        &[pred],
        &mut rng,
        hit("charbonnier"),
        move |t, v| ops::tape::charbonnier(t, v[0], &target, 1e-3),
    )?);

    reports.push(check_full_net(seed, hit("srsenet_end_to_end"))?);
    Ok(reports)
}
