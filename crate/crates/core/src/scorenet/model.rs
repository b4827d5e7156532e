use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ScoreNetConfig;
use super::conv::ConvGeom;
use super::freq::Direction;
use super::graph::{self, Var};
use super::norm::NORM_EPS;
use super::tensor::Tensor;
use crate::diffusion::{ScoreModel, SdeParams};
use crate::error::{Error, Result};
use crate::stft::{Complex64, Spectrogram};

pub const FOURIER_FREQS: &str = "embed/fourier_freqs";

pub type ParamTensors = BTreeMap<String, Tensor>;
pub type ParamVars = BTreeMap<String, Var>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Normal with variance `1 / fan_in`.
    Fan(usize),
    Zeros,
    Ones,
    Fourier(f64),
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

impl ParamSpec {
    pub fn trainable(&self) -> bool {
        !matches!(self.init, Init::Fourier(_))
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    w: String,
    b: String,
    stride_t: usize,
}

#[derive(Debug, Clone)]
struct NormLayer {
    scale: String,
    shift: String,
}

#[derive(Debug, Clone)]
struct Dense {
    w: String,
    b: String,
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: NormLayer,
    conv1: ConvLayer,
    temb: Dense,
    norm2: NormLayer,
    conv2: ConvLayer,
    skip: Option<ConvLayer>,
}

#[derive(Debug, Clone)]
enum EncStep {
    Res(ResBlock),
    Down(ConvLayer),
}

#[derive(Debug, Clone)]
enum DecStep {
    Res(ResBlock),
    Up(ConvLayer),
}

struct Builder<'a> {
    cfg: &'a ScoreNetConfig,
    specs: Vec<ParamSpec>,
}

impl Builder<'_> {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> String {
        self.specs.push(ParamSpec {
            name: name.clone(),
            shape,
            init,
        });
        name
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: (usize, usize), stride_t: usize, zero: bool) -> ConvLayer {
        let init = if zero { Init::Zeros } else { Init::Fan(cin * k.0 * k.1) };
        ConvLayer {
            w: self.param(format!("{name}/w"), vec![cout, cin, k.0, k.1], init),
            b: self.param(format!("{name}/b"), vec![cout], Init::Zeros),
            stride_t,
        }
    }

    fn kernel(&self) -> (usize, usize) {
        (self.cfg.time_kernel, self.cfg.freq_kernel)
    }

    fn norm(&mut self, name: &str, channels: usize) -> Result<NormLayer> {
        if channels % self.cfg.groups != 0 {
            return Err(Error::Config(format!(
                "net: {name} has {channels} channels, not divisible by {} groups",
                self.cfg.groups
            )));
        }
        Ok(NormLayer {
            scale: self.param(format!("{name}/scale"), vec![channels], Init::Ones),
            shift: self.param(format!("{name}/shift"), vec![channels], Init::Zeros),
        })
    }

    fn dense(&mut self, name: &str, nin: usize, nout: usize) -> Dense {
        Dense {
            w: self.param(format!("{name}/w"), vec![nout, nin], Init::Fan(nin)),
            b: self.param(format!("{name}/b"), vec![nout], Init::Zeros),
        }
    }

    fn resblock(&mut self, name: &str, cin: usize, cout: usize) -> Result<ResBlock> {
        let k = self.kernel();
        Ok(ResBlock {
            norm1: self.norm(&format!("{name}/norm1"), cin)?,
            conv1: self.conv(&format!("{name}/conv1"), cin, cout, k, 1, false),
            temb: self.dense(&format!("{name}/temb"), self.cfg.embed_dim, cout),
            norm2: self.norm(&format!("{name}/norm2"), cout)?,
            conv2: self.conv(&format!("{name}/conv2"), cout, cout, k, 1, false),
            skip: (cin != cout).then(|| self.conv(&format!("{name}/skip"), cin, cout, (1, 1), 1, false)),
        })
    }
}

/// Causal U-shaped encoder-decoder score network.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    config: ScoreNetConfig,
    specs: Vec<ParamSpec>,
    embed: (Dense, Dense),
    conv_in: ConvLayer,
    encoder: Vec<EncStep>,
    mid: ResBlock,
    decoder: Vec<DecStep>,
    norm_out: NormLayer,
    conv_out: ConvLayer,
}

impl ScoreNet {
    pub fn new(config: ScoreNetConfig) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let mut b = Builder { cfg: &cfg, specs: Vec::new() };
        let e = cfg.embed_dim;
        b.param(FOURIER_FREQS.into(), vec![e / 2], Init::Fourier(cfg.fourier_scale));
        let embed = (b.dense("embed/dense0", e, e), b.dense("embed/dense1", e, e));
        let k = b.kernel();
        let chans: Vec<usize> = cfg.channel_multipliers.iter().map(|m| m * cfg.base_channels).collect();
        let conv_in = b.conv("conv_in", 4, chans[0], k, 1, false);

        let mut cur = chans[0];
        let mut skips = vec![cur];
        let mut encoder = Vec::new();
        for (l, &cl) in chans.iter().enumerate() {
            for r in 0..cfg.resblocks_per_resolution {
                encoder.push(EncStep::Res(b.resblock(&format!("enc{l}.{r}"), cur, cl)?));
                cur = cl;
                skips.push(cur);
            }
            if l + 1 < chans.len() {
                encoder.push(EncStep::Down(b.conv(&format!("enc{l}.down"), cur, cur, k, 2, false)));
                skips.push(cur);
            }
        }
        let mid = b.resblock("mid", cur, cur)?;
        let mut decoder = Vec::new();
        for (l, &cl) in chans.iter().enumerate().rev() {
            for r in 0..=cfg.resblocks_per_resolution {
                let s = skips.pop().expect("one skip per decoder block");
                decoder.push(DecStep::Res(b.resblock(&format!("dec{l}.{r}"), cur + s, cl)?));
                cur = cl;
            }
            if l > 0 {
                decoder.push(DecStep::Up(b.conv(&format!("dec{l}.up"), cur, cur, k, 2, false)));
            }
        }
        debug_assert!(skips.is_empty());
        let norm_out = b.norm("norm_out", cur)?;
        let conv_out = b.conv("conv_out", cur, 2, k, 1, true);
        let specs = b.specs;
        Ok(Self {
            config,
            specs,
            embed,
            conv_in,
            encoder,
            mid,
            decoder,
            norm_out,
            conv_out,
        })
    }

    pub fn config(&self) -> &ScoreNetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn param_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.trainable())
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    /// Human-readable summary: one line per tensor plus totals.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for s in &self.specs {
            let n: usize = s.shape.iter().product();
            let tag = if s.trainable() { "" } else { " (frozen)" };
            out.push_str(&format!("{:<28} {:?} {n}{tag}\n", s.name, s.shape));
        }
        out.push_str(&format!(
            "levels {} tensors {} trainable parameters {}\n",
            self.config.levels(),
            self.specs.len(),
            self.param_count()
        ));
        out
    }

    pub fn init_params(&self, seed: u64) -> ScoreNetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = ParamTensors::new();
        for s in &self.specs {
            let n: usize = s.shape.iter().product();
            let data: Vec<f64> = match s.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Fan(fan) => {
                    let d = Normal::new(0.0, (1.0 / fan as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| d.sample(&mut rng)).collect()
                }
                Init::Fourier(scale) => {
                    let d = Normal::new(0.0, scale).expect("positive std");
                    (0..n).map(|_| d.sample(&mut rng)).collect()
                }
            };
            tensors.insert(s.name.clone(), Tensor::from_vec(&s.shape, data));
        }
        ScoreNetParams {
            ema: tensors.clone(),
            tensors,
        }
    }

    /// Checks names, shapes and finiteness of a parameter set.
    pub fn check_params(&self, params: &ParamTensors) -> Result<()> {
        if params.len() != self.specs.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                self.specs.len(),
                params.len()
            )));
        }
        for s in &self.specs {
            let t = params
                .get(&s.name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {}", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "{}: expected {:?}, got {:?}",
                    s.name,
                    s.shape,
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter {}", s.name)));
            }
        }
        Ok(())
    }

    /// Wraps tensors as graph leaves; trainable ones track gradients.
    pub fn vars(&self, params: &ParamTensors, track: bool) -> ParamVars {
        self.specs
            .iter()
            .map(|s| {
                let t = params[&s.name].clone();
                let v = if track && s.trainable() {
                    Var::param(t)
                } else {
                    Var::constant(t)
                };
                (s.name.clone(), v)
            })
            .collect()
    }

    fn embedding(&self, p: &ParamVars, t: f64) -> Result<Var> {
        let freqs = p[FOURIER_FREQS].value().data();
        let mut feats = Vec::with_capacity(2 * freqs.len());
        feats.extend(freqs.iter().map(|f| (std::f64::consts::TAU * f * t).sin()));
        feats.extend(freqs.iter().map(|f| (std::f64::consts::TAU * f * t).cos()));
        let x = Var::constant(Tensor::from_vec(&[feats.len()], feats));
        let h = graph::silu(&graph::linear(&x, &p[&self.embed.0.w], &p[&self.embed.0.b])?);
        Ok(graph::silu(&graph::linear(&h, &p[&self.embed.1.w], &p[&self.embed.1.b])?))
    }

    /// Process-time embedding vector.
    pub fn time_embedding(&self, params: &ParamTensors, t: f64) -> Result<Vec<f64>> {
        let p = self.vars(params, false);
        Ok(self.embedding(&p, t)?.value().data().to_vec())
    }

    fn conv(&self, p: &ParamVars, layer: &ConvLayer, x: &Var) -> Result<Var> {
        let geom = ConvGeom {
            stride_t: layer.stride_t,
            stride_f: 1,
            causal: self.config.causal,
        };
        graph::conv(x, &p[&layer.w], &p[&layer.b], geom)
    }

    fn norm(&self, p: &ParamVars, layer: &NormLayer, x: &Var) -> Result<Var> {
        graph::group_norm(x, &p[&layer.scale], &p[&layer.shift], self.config.groups, NORM_EPS)
    }

    fn resblock(&self, p: &ParamVars, b: &ResBlock, x: &Var, emb: &Var) -> Result<Var> {
        let h = graph::silu(&self.norm(p, &b.norm1, x)?);
        let h = self.conv(p, &b.conv1, &h)?;
        let bias = graph::linear(emb, &p[&b.temb.w], &p[&b.temb.b])?;
        let h = graph::channel_bias(&h, &bias)?;
        let h = graph::silu(&self.norm(p, &b.norm2, &h)?);
        let h = self.conv(p, &b.conv2, &h)?;
        let skip = match &b.skip {
            Some(layer) => self.conv(p, layer, x)?,
            None => x.clone(),
        };
        Ok(graph::scale(&graph::add(&h, &skip)?, std::f64::consts::FRAC_1_SQRT_2))
    }

    /// Graph-level forward pass: `[4, T, F]` input to `[2, T, F]` output.
    pub fn forward_var(&self, p: &ParamVars, input: &Var, t: f64) -> Result<Var> {
        let (c, _, bins) = input.value().dims3();
        if c != 4 {
            return Err(Error::Shape(format!("expected 4 input channels, got {c}")));
        }
        if !self.config.supports_bins(bins) {
            return Err(Error::Shape(format!(
                "{bins} bins not divisible by 2^{}",
                self.config.levels() - 1
            )));
        }
        let emb = self.embedding(p, t)?;
        let mut h = self.conv(p, &self.conv_in, input)?;
        let mut skips = vec![h.clone()];
        for step in &self.encoder {
            h = match step {
                EncStep::Res(b) => self.resblock(p, b, &h, &emb)?,
                EncStep::Down(layer) => {
                    let d = graph::resample_freq(&h, Direction::Down)?;
                    self.conv(p, layer, &d)?
                }
            };
            skips.push(h.clone());
        }
        h = self.resblock(p, &self.mid, &h, &emb)?;
        for step in &self.decoder {
            h = match step {
                DecStep::Res(b) => {
                    let s = skips.pop().expect("balanced skips");
                    self.resblock(p, b, &graph::concat(&h, &s)?, &emb)?
                }
                DecStep::Up(layer) => {
                    let target = skips.last().expect("balanced skips").value().shape()[1];
                    let u = graph::conv_transpose(&h, &p[&layer.w], &p[&layer.b], 2)?;
                    let u = graph::crop_frames(&u, target)?;
                    graph::resample_freq(&u, Direction::Up)?
                }
            };
        }
        let h = graph::silu(&self.norm(p, &self.norm_out, &h)?);
        self.conv(p, &self.conv_out, &h)
    }

    /// Network output `D(x_t, y, t)`; the score is `D / sigma(t)`, see
    /// [`NetScore`].
    pub fn forward(&self, params: &ParamTensors, x_t: &Spectrogram, y: &Spectrogram, t: f64) -> Result<Spectrogram> {
        let input = Var::constant(stack_input(x_t, y)?);
        let out = self.forward_var(&self.vars(params, false), &input, t)?;
        if !out.value().is_finite() {
            return Err(Error::NonFinite("score network output".into()));
        }
        Ok(unstack_output(out.value(), x_t))
    }
}

/// `[re x, im x, re y, im y]` channels of shape `[4, T, F]`.
pub fn stack_input(x_t: &Spectrogram, y: &Spectrogram) -> Result<Tensor> {
    if !x_t.same_shape(y) {
        return Err(Error::Shape(format!(
            "x_t {:?} vs y {:?}",
            x_t.shape(),
            y.shape()
        )));
    }
    let n = x_t.data.len();
    let mut data = vec![0.0; 4 * n];
    for (i, (a, b)) in x_t.data.iter().zip(&y.data).enumerate() {
        data[i] = a.re;
        data[n + i] = a.im;
        data[2 * n + i] = b.re;
        data[3 * n + i] = b.im;
    }
    Ok(Tensor::from_vec(&[4, x_t.frames, x_t.bins], data))
}

/// Reads a `[2, T, F]` tensor back as a complex spectrogram shaped like `like`.
pub fn unstack_output(out: &Tensor, like: &Spectrogram) -> Spectrogram {
    let n = like.data.len();
    let d = out.data();
    let mut s = like.clone();
    for (i, z) in s.data.iter_mut().enumerate() {
        *z = Complex64::new(d[i], d[n + i]);
    }
    s
}

/// Learnable tensors plus their exponential moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetParams {
    pub tensors: ParamTensors,
    pub ema: ParamTensors,
}

/// Evaluates `loss_fn` on tracked parameters and returns the loss with
/// gradients for every trainable tensor.
pub fn gradients<F>(net: &ScoreNet, params: &ParamTensors, loss_fn: F) -> Result<(f64, ParamTensors)>
where
    F: FnOnce(&ParamVars) -> Result<Var>,
{
    let vars = net.vars(params, true);
    let loss = loss_fn(&vars)?;
    let value = loss.value().data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value}")));
    }
    let mut grads = graph::backward(&loss)?;
    let mut out = ParamTensors::new();
    for s in net.specs().iter().filter(|s| s.trainable()) {
        let v = &vars[&s.name];
        let g = grads.take(v).unwrap_or_else(|| Tensor::zeros(&s.shape));
        out.insert(s.name.clone(), g);
    }
    Ok((value, out))
}

/// A network bound to one parameter set, usable by the sampler.
///
/// Score of `x_t` if `x0 - y` were complex Gaussian with variance `v`:
/// `-(x_t - y) / (sigma(t)^2 + w(t)^2 v)`.
pub fn prior_score(x_t: &Spectrogram, y: &Spectrogram, t: f64, v: f64, sde: &SdeParams) -> Spectrogram {
    let w = sde.mean_weight(t);
    let s = sde.std(t);
    let k = -1.0 / (s * s + w * w * v);
    let mut out = x_t.clone();
    for (o, yv) in out.data.iter_mut().zip(&y.data) {
        *o = (*o - yv) * k;
    }
    out
}

/// The score is the network output divided by `sigma(t)`, so the network
/// itself regresses the unit-variance noise, plus the prior score when the
/// config enables it.
#[derive(Debug, Clone, Copy)]
pub struct NetScore<'a> {
    pub net: &'a ScoreNet,
    pub params: &'a ParamTensors,
    pub sde: &'a SdeParams,
}

impl ScoreModel for NetScore<'_> {
    fn score(&self, x_t: &Spectrogram, y: &Spectrogram, t: f64) -> Result<Spectrogram> {
        let mut s = self.net.forward(self.params, x_t, y, t)?;
        s.scale(1.0 / self.sde.std(t));
        if let Some(v) = self.net.config().prior_var {
            let p = prior_score(x_t, y, t, v, self.sde);
            s.data.iter_mut().zip(&p.data).for_each(|(a, b)| *a += b);
        }
        Ok(s)
    }
}
