use std::ops::Range;

use crate::attention::HeadTrace;
use crate::error::{Error, Result};
use crate::model::encoder::{encoder_block, init_encoder_params, linear};
use crate::model::norm::instance_normalize;
use crate::model::patch::{embed_patches, patchify};
use crate::model::{ModelConfig, ModelVariant};
use crate::numerics::{Graph, ParamStore, Rng, Scalar, Tensor, Var};

/// Per-forward state: train/eval mode and the stream feeding dropout and
/// random-subset attention.
pub struct ForwardCtx {
    pub training: bool,
    pub rng: Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            training: false,
            rng: Rng::new(0),
        }
    }

    pub fn train(rng: Rng) -> Self {
        Self { training: true, rng }
    }

    pub(crate) fn dropout<F: Scalar>(&mut self, g: &mut Graph<F>, x: Var, p: f64) -> Result<Var> {
        if !self.training || p <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..g.value(x).len())
            .map(|_| if self.rng.uniform() < p { F::zero() } else { F::of(keep) })
            .collect();
        g.mask_mul(x, mask)
    }
}

/// Selection traces of one channel: `layers[l][h]`.
pub type ChannelTraces = Vec<Vec<HeadTrace>>;

pub struct ForwardOutput {
    /// `[H x C]` forecast, or for the generative variant `[(n * seg) x C]`
    /// where row `r` predicts context row `r + seg`.
    pub output: Var,
    pub traces: Vec<ChannelTraces>,
}

/// A TimeExpert or TimeExpert-G model. Holds only the configuration;
/// weights live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    /// Fresh weights: linear layers uniform(+-1/sqrt(fan_in)), zero biases,
    /// positional table uniform(-0.02, 0.02).
    pub fn init_params(&self, seed: u64) -> ParamStore<f32> {
        let cfg = &self.config;
        let d = cfg.d_model();
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        store.init_linear(&mut rng, "embed", cfg.patch.patch_len, d, false);
        store.init_uniform(&mut rng, "embed.pos", &[cfg.max_tokens(), d], 0.02);
        for l in 0..cfg.num_layers {
            init_encoder_params(&mut store, &mut rng, &format!("encoder.{l}"), cfg);
        }
        match cfg.variant {
            ModelVariant::TimeExpert => {
                store.init_linear(&mut rng, "head", cfg.num_tokens() * d, cfg.horizon, true)
            }
            ModelVariant::TimeExpertG => {
                store.init_linear(&mut rng, "head", d, cfg.patch.patch_len, true)
            }
        }
        store
    }

    /// Lookback positions covered by each token.
    pub fn token_spans(&self) -> Vec<Range<usize>> {
        let p = &self.config.patch;
        (0..p.num_tokens())
            .map(|i| i * p.stride..i * p.stride + p.patch_len)
            .collect()
    }

    fn encode<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        tokens: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, ChannelTraces)> {
        let mut h = embed_patches(g, store, tokens)?;
        let mut traces = Vec::with_capacity(self.config.num_layers);
        for l in 0..self.config.num_layers {
            let (next, tr) = encoder_block(g, store, &format!("encoder.{l}"), &self.config, h, ctx)?;
            h = next;
            traces.push(tr);
        }
        Ok((h, traces))
    }

    fn check_window<F: Scalar>(&self, window: &Tensor<F>) -> Result<()> {
        if window.shape().len() != 2 || window.cols() == 0 {
            return Err(Error::InvalidShape(format!(
                "expected a [time x channels] window, got {:?}",
                window.shape()
            )));
        }
        Ok(())
    }

    pub fn forward<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        window: &Tensor<F>,
        ctx: &mut ForwardCtx,
    ) -> Result<ForwardOutput> {
        self.check_window(window)?;
        match self.config.variant {
            ModelVariant::TimeExpert => self.forward_timeexpert(g, store, window, ctx),
            ModelVariant::TimeExpertG => {
                let w = g.constant(window.clone())?;
                self.forward_generative(g, store, w, ctx)
            }
        }
    }

    fn forward_timeexpert<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        window: &Tensor<F>,
        ctx: &mut ForwardCtx,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        if window.rows() != cfg.patch.lookback {
            return Err(Error::InvalidShape(format!(
                "window has {} steps, lookback is {}",
                window.rows(),
                cfg.patch.lookback
            )));
        }
        let n = cfg.num_tokens();
        let d = cfg.d_model();
        let mut columns = Vec::with_capacity(window.cols());
        let mut traces = Vec::with_capacity(window.cols());
        for c in 0..window.cols() {
            let (normed, stats) = instance_normalize(&window.column(c));
            let tokens = patchify(&normed, cfg.patch.patch_len, cfg.patch.stride)?;
            let tokens = g.constant(tokens)?;
            let (h, tr) = self.encode(g, store, tokens, ctx)?;
            let flat = g.reshape(h, vec![1, n * d])?;
            let y = linear(g, store, "head", flat)?;
            let y = g.affine(y, F::of(stats.denominator()), F::of(stats.mean))?;
            columns.push(g.reshape(y, vec![cfg.horizon, 1])?);
            traces.push(tr);
        }
        let output = g.concat_cols(&columns)?;
        Ok(ForwardOutput { output, traces })
    }

    /// Generative forward on a window that already lives on the tape, so
    /// callers can differentiate with respect to the inputs.
    pub fn forward_generative<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        window: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<ForwardOutput> {
        let seg = self.config.patch.patch_len;
        let (len, channels) = (g.value(window).rows(), g.value(window).cols());
        if len == 0 || len % seg != 0 {
            return Err(Error::InvalidArgument(format!(
                "context length {len} is not a multiple of the segment length {seg}"
            )));
        }
        let n = len / seg;
        if n > self.config.max_tokens() {
            return Err(Error::InvalidArgument(format!(
                "context of {n} segments exceeds {}",
                self.config.max_tokens()
            )));
        }
        let by_channel = g.transpose(window)?;
        let mut columns = Vec::with_capacity(channels);
        let mut traces = Vec::with_capacity(channels);
        for c in 0..channels {
            let row = g.slice_rows(by_channel, c, 1)?;
            let tokens = g.reshape(row, vec![n, seg])?;
            let (h, tr) = self.encode(g, store, tokens, ctx)?;
            let y = linear(g, store, "head", h)?;
            columns.push(g.reshape(y, vec![n * seg, 1])?);
            traces.push(tr);
        }
        let output = g.concat_cols(&columns)?;
        Ok(ForwardOutput { output, traces })
    }

    /// Training loss on one `(lookback, target)` pair. TimeExpert compares
    /// the forecast with the target; TimeExpert-G scores every position's
    /// next-segment prediction (the last position's target is the first
    /// segment of `target`).
    pub fn loss<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        lookback: &Tensor<F>,
        target: &Tensor<F>,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let out = self.forward(g, store, lookback, ctx)?;
        match self.config.variant {
            ModelVariant::TimeExpert => g.mse(out.output, target),
            ModelVariant::TimeExpertG => {
                let seg = self.config.patch.patch_len;
                if target.rows() < seg {
                    return Err(Error::InvalidArgument(format!(
                        "next-segment loss needs a target of at least {seg} steps"
                    )));
                }
                let c = lookback.cols();
                let mut shifted = lookback.data()[seg * c..].to_vec();
                shifted.extend_from_slice(&target.data()[..seg * c]);
                let shifted = Tensor::new(vec![lookback.rows(), c], shifted)?;
                g.mse(out.output, &shifted)
            }
        }
    }

    /// `[H x C]` forecast in evaluation mode.
    pub fn predict<F: Scalar>(&self, store: &ParamStore<F>, lookback: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(self.predict_traced(store, lookback)?.0)
    }

    /// Forecast plus the selection traces of the (first) forward pass.
    pub fn predict_traced<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        lookback: &Tensor<F>,
    ) -> Result<(Tensor<F>, Vec<ChannelTraces>)> {
        match self.config.variant {
            ModelVariant::TimeExpert => {
                let mut g = Graph::new();
                let out = self.forward(&mut g, store, lookback, &mut ForwardCtx::eval())?;
                Ok((g.value(out.output).clone(), out.traces))
            }
            ModelVariant::TimeExpertG => {
                let (y, _, traces) = self.generate_inner(store, lookback, self.config.horizon)?;
                Ok((y, traces))
            }
        }
    }

    /// Autoregressive generation: repeatedly predicts the next segment from
    /// the last position and appends it to the context (dropping the oldest
    /// segments beyond the positional table). Returns the `[horizon x C]`
    /// forecast and the number of steps taken.
    pub fn generate<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        context: &Tensor<F>,
        horizon: usize,
    ) -> Result<(Tensor<F>, usize)> {
        if self.config.variant != ModelVariant::TimeExpertG {
            return Err(Error::InvalidArgument("generation needs the generative variant".into()));
        }
        let (y, steps, _) = self.generate_inner(store, context, horizon)?;
        Ok((y, steps))
    }

    fn generate_inner<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        context: &Tensor<F>,
        horizon: usize,
    ) -> Result<(Tensor<F>, usize, Vec<ChannelTraces>)> {
        self.check_window(context)?;
        let seg = self.config.patch.patch_len;
        let c = context.cols();
        let max_rows = self.config.max_tokens() * seg;
        let mut ctx_rows = context.data().to_vec();
        let mut produced: Vec<F> = Vec::with_capacity((horizon + seg) * c);
        let mut steps = 0;
        let mut first_traces = None;
        while produced.len() < horizon * c {
            let rows = ctx_rows.len() / c;
            let window = Tensor::new(vec![rows, c], ctx_rows.clone())?;
            let mut g = Graph::new();
            let out = self.forward(&mut g, store, &window, &mut ForwardCtx::eval())?;
            let pred = g.value(out.output);
            let next = &pred.data()[(rows - seg) * c..];
            produced.extend_from_slice(next);
            ctx_rows.extend_from_slice(next);
            if ctx_rows.len() > max_rows * c {
                ctx_rows.drain(..ctx_rows.len() - max_rows * c);
            }
            first_traces.get_or_insert(out.traces);
            steps += 1;
        }
        produced.truncate(horizon * c);
        Ok((
            Tensor::new(vec![horizon, c], produced)?,
            steps,
            first_traces.unwrap_or_default(),
        ))
    }
}
