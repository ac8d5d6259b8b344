use tmoe::attention::multi_head_tmoe;
use tmoe::model::{encoder_block, ForwardCtx, Model, ModelConfig, PatchConfig, LN_EPS};
use tmoe::numerics::{grad_check, grad_check_where, layer_norm, Graph, ParamStore, Rng, Tensor};
use tmoe::Error;

fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::timeexpert(8, 2, 2, 4);
    cfg.patch = PatchConfig {
        lookback: 16,
        patch_len: 4,
        stride: 4,
    };
    cfg.dropout = 0.0;
    cfg
}

fn random_window(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn min_gap(traces: &[Vec<Vec<tmoe::attention::HeadTrace>>]) -> f64 {
    traces
        .iter()
        .flatten()
        .flatten()
        .filter_map(|t| t.min_selection_gap())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn tiny_timeexpert_gradients() {
    let h = 1e-3;
    let cfg = tiny_config();
    let model = Model::new(cfg).unwrap();
    for seed in 0..40 {
        let store = model.init_params(seed).cast::<f64>();
        let mut rng = Rng::new(seed);
        let window = random_window(&mut rng, 16, 1);
        let target = random_window(&mut rng, 4, 1);
        let (_, traces) = model.predict_traced(&store, &window).unwrap();
        if min_gap(&traces) <= 10.0 * h {
            continue;
        }
        let report = grad_check(
            |g, s| model.loss(g, s, &window, &target, &mut ForwardCtx::eval()),
            &store,
            h,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
        return;
    }
    panic!("no probe point with a stable selection");
}

#[test]
fn encoder_block_gradients() {
    let h = 1e-3;
    let cfg = tiny_config();
    let model = Model::new(cfg.clone()).unwrap();
    for seed in 0..40 {
        let mut store = model.init_params(seed).cast::<f64>();
        let mut rng = Rng::new(seed + 7);
        store.insert("x", random_window(&mut rng, 4, 8));
        store.insert("probe", random_window(&mut rng, 4, 8));
        let (_, traces) =
            multi_head_tmoe(store.get("x").unwrap(), &store, "encoder.0.attn", &cfg.tmoe).unwrap();
        let gap = traces.iter().filter_map(|t| t.min_selection_gap()).fold(f64::INFINITY, f64::min);
        if gap <= 10.0 * h {
            continue;
        }
        let report = grad_check_where(
            |g, s| {
                let x = g.param(s, "x")?;
                let (y, _) = encoder_block(g, s, "encoder.0", &cfg, x, &mut ForwardCtx::eval())?;
                let p = g.param(s, "probe")?;
                let py = g.mul(y, p)?;
                g.sum(py)
            },
            &store,
            h,
            |n| n == "x" || n.starts_with("encoder.0."),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
        return;
    }
    panic!("no probe point with a stable selection");
}

#[test]
fn zero_sublayers_reduce_to_double_norm() {
    let cfg = tiny_config();
    let model = Model::new(cfg.clone()).unwrap();
    let mut store = model.init_params(1).cast::<f64>();
    let names: Vec<String> = store.names().filter(|n| n.starts_with("encoder.0.")).map(String::from).collect();
    for n in names {
        if !n.contains("norm") {
            store.get_mut(&n).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x = random_window(&mut Rng::new(3), 4, 8);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let (y, _) = encoder_block(&mut g, &store, "encoder.0", &cfg, xv, &mut ForwardCtx::eval()).unwrap();
    let ones = vec![1.0; 8];
    let zeros = vec![0.0; 8];
    let once = layer_norm(&x, &ones, &zeros, LN_EPS).unwrap();
    let twice = layer_norm(&once, &ones, &zeros, LN_EPS).unwrap();
    assert!(g.value(y).max_abs_diff(&twice) < 1e-12);
}

#[test]
fn single_token_block_is_finite() {
    let mut cfg = tiny_config();
    cfg.patch = PatchConfig { lookback: 4, patch_len: 4, stride: 4 };
    let model = Model::new(cfg).unwrap();
    let store = model.init_params(2);
    let y = model.predict(&store, &Tensor::<f32>::filled(&[4, 1], 1e-7)).unwrap();
    assert!(y.is_finite());
}

#[test]
fn block_matches_composed_oracle() {
    let cfg = tiny_config();
    let model = Model::new(cfg.clone()).unwrap();
    let store = model.init_params(5).cast::<f64>();
    let x = random_window(&mut Rng::new(5), 4, 8);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let (y, _) = encoder_block(&mut g, &store, "encoder.0", &cfg, xv, &mut ForwardCtx::eval()).unwrap();

    let p = |n: &str| store.get(&format!("encoder.0.{n}")).unwrap().clone();
    let (attn, _) = multi_head_tmoe(&x, &store, "encoder.0.attn", &cfg.tmoe).unwrap();
    let add = |a: &Tensor<f64>, b: &Tensor<f64>| {
        Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).unwrap()
    };
    let z = layer_norm(&add(&x, &attn), p("norm1.gamma").data(), p("norm1.beta").data(), LN_EPS).unwrap();
    let dense = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, act: bool| {
        let mut out = Vec::new();
        for i in 0..x.rows() {
            for j in 0..w.cols() {
                let v: f64 = b.data()[j] + (0..x.cols()).map(|d| x.at(i, d) * w.at(d, j)).sum::<f64>();
                out.push(if act { tmoe::numerics::kernels::gelu(v) } else { v });
            }
        }
        Tensor::new(vec![x.rows(), w.cols()], out).unwrap()
    };
    let hdn = dense(&z, &p("ffn.fc1.w"), &p("ffn.fc1.b"), true);
    let f = dense(&hdn, &p("ffn.fc2.w"), &p("ffn.fc2.b"), false);
    let out = layer_norm(&add(&z, &f), p("norm2.gamma").data(), p("norm2.beta").data(), LN_EPS).unwrap();
    assert!(g.value(y).max_abs_diff(&out) < 1e-12);
}

#[test]
fn default_shapes() {
    let mut cfg = ModelConfig::default();
    cfg.tmoe.d_model = 16;
    cfg.tmoe.num_heads = 2;
    cfg.d_ff = 32;
    let model = Model::new(cfg).unwrap();
    assert_eq!(model.config().num_tokens(), 11);
    let store = model.init_params(0);
    let mut rng = Rng::new(1);
    let window = random_window(&mut rng, 96, 7).cast::<f32>();
    let y = model.predict(&store, &window).unwrap();
    assert_eq!(y.shape(), &[96, 7]);
}

#[test]
fn channels_are_independent() {
    let model = Model::new(tiny_config()).unwrap();
    let store = model.init_params(3).cast::<f64>();
    let mut rng = Rng::new(9);
    let base = random_window(&mut rng, 16, 1);
    let other = random_window(&mut rng, 16, 1);
    let third = random_window(&mut rng, 16, 1);
    let stack = |cols: &[&Tensor<f64>]| {
        let mut data = Vec::new();
        for t in 0..16 {
            for c in cols {
                data.push(c.data()[t]);
            }
        }
        Tensor::new(vec![16, cols.len()], data).unwrap()
    };

    let y = model.predict(&store, &stack(&[&base, &base])).unwrap();
    assert_eq!(y.column(0), y.column(1));

    let y = model.predict(&store, &stack(&[&base, &other, &third])).unwrap();
    let yp = model.predict(&store, &stack(&[&third, &base, &other])).unwrap();
    assert_eq!(y.column(0), yp.column(1));
    assert_eq!(y.column(2), yp.column(0));

    let zeroed = Tensor::zeros(&[16, 1]);
    let yz = model.predict(&store, &stack(&[&base, &zeroed, &third])).unwrap();
    assert_eq!(y.column(0), yz.column(0));
    assert_eq!(y.column(2), yz.column(2));
    assert_ne!(y.column(1), yz.column(1));
}

#[test]
fn affine_inputs_give_affine_forecasts() {
    let model = Model::new(tiny_config()).unwrap();
    let store = model.init_params(4).cast::<f64>();
    let mut rng = Rng::new(4);
    for _ in 0..5 {
        let x = random_window(&mut rng, 16, 2);
        let (a, b) = (0.5 + 3.0 * rng.uniform(), rng.normal() * 5.0);
        let mut ax = x.clone();
        ax.data_mut().iter_mut().for_each(|v| *v = a * *v + b);
        let y = model.predict(&store, &x).unwrap();
        let ay = model.predict(&store, &ax).unwrap();
        for (p, q) in y.data().iter().zip(ay.data()) {
            assert!((a * p + b - q).abs() <= 1e-4, "{} vs {}", a * p + b, q);
        }
    }
}

#[test]
fn dropout_only_in_training() {
    let mut cfg = tiny_config();
    cfg.dropout = 0.5;
    let model = Model::new(cfg).unwrap();
    let store = model.init_params(0);
    let x = random_window(&mut Rng::new(0), 16, 1).cast::<f32>();
    assert_eq!(model.predict(&store, &x).unwrap(), model.predict(&store, &x).unwrap());
    let run = |seed| {
        let mut g = Graph::new();
        let out = model.forward(&mut g, &store, &x, &mut ForwardCtx::train(Rng::new(seed))).unwrap();
        g.value(out.output).clone()
    };
    assert_ne!(run(1), run(2));
    assert_eq!(run(1), run(1));
}

fn generative(segments: usize) -> Model {
    let mut cfg = ModelConfig::timeexpert_g(8, 2, 2, segments);
    cfg.dropout = 0.0;
    Model::new(cfg).unwrap()
}

#[test]
fn generative_single_segment() {
    let model = generative(1);
    let store = model.init_params(0);
    let ctx = random_window(&mut Rng::new(1), 96, 2).cast::<f32>();
    let mut g = Graph::new();
    let out = model.forward(&mut g, &store, &ctx, &mut ForwardCtx::eval()).unwrap();
    assert_eq!(g.shape(out.output), &[96, 2]);
    let (y, steps) = model.generate(&store, &ctx, 96).unwrap();
    assert_eq!(steps, 1);
    assert_eq!(y.data(), g.value(out.output).data());
}

#[test]
fn generative_positions_ignore_later_segments() {
    let model = generative(4);
    let store = model.init_params(3).cast::<f64>();
    let mut rng = Rng::new(11);
    for _ in 0..20 {
        let ctx = random_window(&mut rng, 4 * 96, 1);
        let i = rng.below(3);
        let mut perturbed = ctx.clone();
        for r in (i + 1) * 96..4 * 96 {
            perturbed.data_mut()[r] += rng.normal() * 10.0;
        }
        let run = |w: &Tensor<f64>| {
            let mut g = Graph::new();
            let out = model.forward(&mut g, &store, w, &mut ForwardCtx::eval()).unwrap();
            g.value(out.output).clone()
        };
        let (a, b) = (run(&ctx), run(&perturbed));
        for r in 0..(i + 1) * 96 {
            assert!((a.data()[r] - b.data()[r]).abs() <= 1e-6);
        }
    }
}

#[test]
fn generative_position_loss_has_no_gradient_from_the_future() {
    let model = generative(3);
    let mut store = model.init_params(1).cast::<f64>();
    store.insert("ctx", random_window(&mut Rng::new(2), 3 * 96, 1));
    let target = random_window(&mut Rng::new(3), 96, 1);
    for i in 0..3 {
        let mut g = Graph::new();
        let w = g.param(&store, "ctx").unwrap();
        let out = model.forward_generative(&mut g, &store, w, &mut ForwardCtx::eval()).unwrap();
        let pos = g.slice_rows(out.output, i * 96, 96).unwrap();
        let loss = g.mse(pos, &target).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(w).unwrap();
        assert!(grad[(i + 1) * 96..].iter().all(|&v| v == 0.0));
        assert!(grad[..(i + 1) * 96].iter().any(|&v| v != 0.0));
    }
}

#[test]
fn generation_step_count() {
    let model = generative(2);
    let store = model.init_params(0);
    let ctx = random_window(&mut Rng::new(1), 192, 1).cast::<f32>();
    let (y, steps) = model.generate(&store, &ctx, 192).unwrap();
    assert_eq!(steps, 2);
    assert_eq!(y.shape(), &[192, 1]);
    let (_, steps) = model.generate(&store, &ctx, 100).unwrap();
    assert_eq!(steps, 2);
    // context grows past the positional table and is trimmed
    let (y, steps) = model.generate(&store, &ctx, 96 * 16).unwrap();
    assert_eq!(steps, 16);
    assert!(y.is_finite());
}

#[test]
fn generative_rejects_ragged_context() {
    let model = generative(2);
    let store = model.init_params(0);
    let ctx = Tensor::<f32>::zeros(&[150, 1]);
    let mut g = Graph::new();
    assert!(matches!(
        model.forward(&mut g, &store, &ctx, &mut ForwardCtx::eval()),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn generative_gradients() {
    let h = 1e-3;
    let model = generative(2);
    for seed in 0..40 {
        let store: ParamStore<f64> = model.init_params(seed).cast();
        let mut rng = Rng::new(seed);
        let ctx = random_window(&mut rng, 192, 1);
        let target = random_window(&mut rng, 96, 1);
        let mut g = Graph::new();
        let out = model.forward(&mut g, &store, &ctx, &mut ForwardCtx::eval()).unwrap();
        if min_gap(&out.traces) <= 10.0 * h {
            continue;
        }
        let report = grad_check_where(
            |g, s| model.loss(g, s, &ctx, &target, &mut ForwardCtx::eval()),
            &store,
            h,
            |n| !n.starts_with("head") && !n.starts_with("embed.w"),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
        return;
    }
    panic!("no stable probe point");
}
