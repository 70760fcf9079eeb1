//! Regression from one representation space to another.
//!
//! The main model is an affine layer followed by `tanh` (optionally with one
//! hidden `tanh` layer), trained full-batch with Adam under drop-connect and
//! an L2 weight penalty. A closed-form ridge solver covers the linear case,
//! both as a fast path and as a reference for the gradient-trained model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_solve;
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Random stream used for drop-connect masks; initialisation uses stream 0.
const MASK_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// `tanh(x·W + b)`
    TanhDirect,
    /// `tanh(x·W1 + b1)·W2 + b2` with the given hidden width.
    TanhHidden(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Adam,
    /// Exact ridge solution; requires `linear_mode` and `keep_rate = 1`.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub architecture: Architecture,
    /// Probability that a weight is kept during a training epoch.
    pub keep_rate: f64,
    pub l2_lambda: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Identity activation on a single affine layer.
    pub linear_mode: bool,
    pub solver: Solver,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            architecture: Architecture::TanhDirect,
            keep_rate: 0.7,
            l2_lambda: 0.001,
            step_size: 1e-2,
            epochs: 500,
            seed: 0,
            linear_mode: false,
            solver: Solver::Adam,
        }
    }
}

impl RegressorConfig {
    /// Linear model trained by gradient descent without drop-connect.
    pub fn linear(l2_lambda: f64) -> Self {
        RegressorConfig {
            keep_rate: 1.0,
            l2_lambda,
            linear_mode: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::argument(format!("keep_rate {} outside (0, 1]", self.keep_rate)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::argument(format!("l2_lambda {} must be >= 0", self.l2_lambda)));
        }
        match self.solver {
            Solver::Adam => {
                if !(self.step_size > 0.0 && self.step_size.is_finite()) {
                    return Err(Error::argument(format!("step_size {} must be > 0", self.step_size)));
                }
                if self.epochs == 0 {
                    return Err(Error::argument("epochs must be positive"));
                }
            }
            Solver::ClosedForm => {
                if !self.linear_mode || self.keep_rate != 1.0 {
                    return Err(Error::argument(
                        "closed-form solver requires linear_mode and keep_rate = 1",
                    ));
                }
            }
        }
        if let Architecture::TanhHidden(0) = self.architecture {
            return Err(Error::argument("hidden width must be positive"));
        }
        Ok(())
    }

    /// The architecture actually built; `linear_mode` forces a single layer.
    pub fn effective_architecture(&self) -> Architecture {
        if self.linear_mode {
            Architecture::TanhDirect
        } else {
            self.architecture
        }
    }
}

/// One affine map, `x·weights + bias`, with `weights` shaped `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Layer {
            weights: Array2::zeros((d_in, d_out)),
            bias: Array1::zeros(d_out),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|x| x.is_finite())
    }
}

/// Drop-connect masks, one 0/1 matrix per layer's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks(pub Vec<Array2<f64>>);

impl Masks {
    pub fn ones(model: &RegressionModel) -> Self {
        Masks(model.layers.iter().map(|l| Array2::ones(l.weights.dim())).collect())
    }

    pub fn sample<R: Rng>(model: &RegressionModel, keep_rate: f64, rng: &mut R) -> Self {
        Masks(
            model
                .layers
                .iter()
                .map(|l| {
                    Array2::from_shape_simple_fn(l.weights.dim(), || {
                        if rng.random::<f64>() < keep_rate {
                            1.0
                        } else {
                            0.0
                        }
                    })
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub layers: Vec<Layer>,
    pub config: RegressorConfig,
    pub loss_trace: Vec<f64>,
}

/// Uniform weights in `±1/√fan_in` from a generator seeded by `cfg.seed`;
/// zero biases.
pub fn init_model(cfg: &RegressorConfig, d_in: usize, d_out: usize) -> Result<RegressionModel> {
    cfg.validate()?;
    if d_in == 0 || d_out == 0 {
        return Err(Error::argument("model dimensions must be positive"));
    }
    let dims = match cfg.effective_architecture() {
        Architecture::TanhDirect => vec![(d_in, d_out)],
        Architecture::TanhHidden(h) => vec![(d_in, h), (h, d_out)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = dims
        .into_iter()
        .map(|(i, o)| {
            let bound = 1.0 / (i as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((i, o), || rng.random_range(-bound..=bound)),
                bias: Array1::zeros(o),
            }
        })
        .collect();
    Ok(RegressionModel {
        layers,
        config: cfg.clone(),
        loss_trace: Vec::new(),
    })
}

/// Intermediate values of one forward pass.
struct Forward {
    /// Hidden activations (only for the two-layer network).
    hidden: Option<Array2<f64>>,
    output: Array2<f64>,
}

impl RegressionModel {
    pub fn d_in(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.d_in() {
            return Err(Error::argument(format!(
                "model expects {} input columns, got {}",
                self.d_in(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: ArrayView2<f64>, weights: &[Array2<f64>]) -> Forward {
        let first = &self.layers[0];
        let mut z = x.dot(&weights[0]);
        z += &first.bias;
        if self.layers.len() == 1 {
            if !self.config.linear_mode {
                z.mapv_inplace(f64::tanh);
            }
            return Forward { hidden: None, output: z };
        }
        z.mapv_inplace(f64::tanh);
        let mut out = z.dot(&weights[1]);
        out += &self.layers[1].bias;
        Forward {
            hidden: Some(z),
            output: out,
        }
    }

    fn masked_weights(&self, masks: &Masks) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .zip(&masks.0)
            .map(|(l, m)| &l.weights * m)
            .collect()
    }

    fn weight_penalty(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Flat text form: header lines with architecture and configuration,
    /// then each layer's weights row-major and its bias, then the loss trace.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let (arch, hidden) = match c.architecture {
            Architecture::TanhDirect => ("tanh-direct", 0),
            Architecture::TanhHidden(h) => ("tanh-hidden", h),
        };
        let solver = match c.solver {
            Solver::Adam => "adam",
            Solver::ClosedForm => "closed-form",
        };
        let mut out = String::from("#neurodecode-model v1\n");
        let _ = writeln!(
            out,
            "architecture={arch}\thidden={hidden}\td_in={}\td_out={}\tlayers={}",
            self.d_in(),
            self.d_out(),
            self.layers.len()
        );
        let _ = writeln!(
            out,
            "keep_rate={}\tl2_lambda={}\tstep_size={}\tepochs={}\tseed={}\tlinear_mode={}\tsolver={solver}",
            c.keep_rate, c.l2_lambda, c.step_size, c.epochs, c.seed, c.linear_mode
        );
        for (k, layer) in self.layers.iter().enumerate() {
            let (r, cols) = layer.weights.dim();
            let _ = writeln!(out, "layer={k}\trows={r}\tcols={cols}");
            for row in layer.weights.rows() {
                let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            let line: Vec<String> = layer.bias.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "bias {}", line.join(" "));
        }
        let trace: Vec<String> = self.loss_trace.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "loss_trace {}", trace.join(" "));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::format_any(format!("model file ends before {what}")))
        };
        let (n, magic) = next("header")?;
        if magic != "#neurodecode-model v1" {
            return Err(Error::format(n, "not a model file"));
        }
        let (n, shape) = next("shape line")?;
        let shape = key_values(n, shape)?;
        let (n, cfg_line) = next("config line")?;
        let cfg = key_values(n, cfg_line)?;
        let get = |kv: &[(String, String)], key: &str, line: usize| -> Result<String> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::format(line, format!("missing '{key}'")))
        };
        fn num<T: std::str::FromStr>(v: String, line: usize) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format(line, format!("invalid number '{v}'")))
        }
        let hidden: usize = num(get(&shape, "hidden", 2)?, 2)?;
        let architecture = match get(&shape, "architecture", 2)?.as_str() {
            "tanh-direct" => Architecture::TanhDirect,
            "tanh-hidden" => Architecture::TanhHidden(hidden),
            other => return Err(Error::format(2, format!("unknown architecture '{other}'"))),
        };
        let n_layers: usize = num(get(&shape, "layers", 2)?, 2)?;
        let config = RegressorConfig {
            architecture,
            keep_rate: num(get(&cfg, "keep_rate", 3)?, 3)?,
            l2_lambda: num(get(&cfg, "l2_lambda", 3)?, 3)?,
            step_size: num(get(&cfg, "step_size", 3)?, 3)?,
            epochs: num(get(&cfg, "epochs", 3)?, 3)?,
            seed: num(get(&cfg, "seed", 3)?, 3)?,
            linear_mode: num(get(&cfg, "linear_mode", 3)?, 3)?,
            solver: match get(&cfg, "solver", 3)?.as_str() {
                "adam" => Solver::Adam,
                "closed-form" => Solver::ClosedForm,
                other => return Err(Error::format(3, format!("unknown solver '{other}'"))),
            },
        };

        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (n, head) = next("layer header")?;
            let head = key_values(n, head)?;
            let rows: usize = num(get(&head, "rows", n)?, n)?;
            let cols: usize = num(get(&head, "cols", n)?, n)?;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next("weight row")?;
                let row = floats(n, line)?;
                if row.len() != cols {
                    return Err(Error::format(n, format!("expected {cols} weights")));
                }
                values.extend(row);
            }
            let (n, bias) = next("bias")?;
            let bias = bias
                .strip_prefix("bias")
                .ok_or_else(|| Error::format(n, "expected bias line"))?;
            let bias = floats(n, bias)?;
            if bias.len() != cols {
                return Err(Error::format(n, format!("expected {cols} biases")));
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), values)
                    .map_err(|e| Error::format(n, e.to_string()))?,
                bias: Array1::from(bias),
            });
        }
        let (n, trace) = next("loss trace")?;
        let trace = trace
            .strip_prefix("loss_trace")
            .ok_or_else(|| Error::format(n, "expected loss_trace line"))?;
        let model = RegressionModel {
            layers,
            config,
            loss_trace: floats(n, trace)?,
        };
        let expected_layers = match model.config.effective_architecture() {
            Architecture::TanhDirect => 1,
            Architecture::TanhHidden(_) => 2,
        };
        if model.layers.len() != expected_layers
            || model.layers.windows(2).any(|w| w[0].weights.ncols() != w[1].weights.nrows())
        {
            return Err(Error::format_any("layer shapes do not match the architecture"));
        }
        Ok(model)
    }
}

fn key_values(line: usize, text: &str) -> Result<Vec<(String, String)>> {
    text.split('\t')
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::format(line, format!("expected key=value, found '{f}'")))
        })
        .collect()
}

fn floats(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::format(line, format!("invalid number '{f}'")))
        })
        .collect()
}

/// Parameter-shaped gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Layer>);

fn check_xy(model: &RegressionModel, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
    model.check_input(x)?;
    if y.ncols() != model.d_out() || y.nrows() != x.nrows() {
        return Err(Error::argument(format!(
            "targets are {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            x.nrows(),
            model.d_out()
        )));
    }
    Ok(())
}

/// Mean squared error of the masked forward pass (averaged over rows and
/// outputs) plus `l2_lambda` times the sum of squared weights, and its exact
/// gradient with the masks held fixed.
pub fn loss_and_gradients(
    model: &RegressionModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    masks: &Masks,
) -> Result<(f64, Gradients)> {
    check_xy(model, &x, &y)?;
    if masks.0.len() != model.layers.len()
        || masks.0.iter().zip(&model.layers).any(|(m, l)| m.dim() != l.weights.dim())
    {
        return Err(Error::argument("masks do not match the weight shapes"));
    }
    let lambda = model.config.l2_lambda;
    let weights = model.masked_weights(masks);
    let fwd = model.forward(x, &weights);

    let scale = 1.0 / (y.len() as f64);
    let residual = &fwd.output - &y;
    let loss = residual.iter().map(|r| r * r).sum::<f64>() * scale + lambda * model.weight_penalty();

    // d loss / d output
    let mut delta = residual * (2.0 * scale);
    let mut grads = Vec::with_capacity(model.layers.len());
    match &fwd.hidden {
        None => {
            if !model.config.linear_mode {
                Zip::from(&mut delta)
                    .and(&fwd.output)
                    .for_each(|d, &o| *d *= 1.0 - o * o);
            }
            grads.push(layer_grad(x, &delta, &masks.0[0], &model.layers[0], lambda));
        }
        Some(hidden) => {
            let out_grad = layer_grad(hidden.view(), &delta, &masks.0[1], &model.layers[1], lambda);
            let mut d_hidden = delta.dot(&weights[1].t());
            Zip::from(&mut d_hidden)
                .and(hidden)
                .for_each(|d, &h| *d *= 1.0 - h * h);
            grads.push(layer_grad(x, &d_hidden, &masks.0[0], &model.layers[0], lambda));
            grads.push(out_grad);
        }
    }
    Ok((loss, Gradients(grads)))
}

fn layer_grad(
    input: ArrayView2<f64>,
    delta: &Array2<f64>,
    mask: &Array2<f64>,
    layer: &Layer,
    lambda: f64,
) -> Layer {
    let mut weights = input.t().dot(delta) * mask;
    weights.scaled_add(2.0 * lambda, &layer.weights);
    Layer {
        weights,
        bias: delta.sum_axis(Axis(0)),
    }
}

struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl AdamState {
    fn new(model: &RegressionModel) -> Self {
        let zeros: Vec<Layer> = model
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, layers: &mut [Layer], grads: &Gradients, step_size: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (k, layer) in layers.iter_mut().enumerate() {
            let g = &grads.0[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            adam_step(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, step_size, c1, c2);
            adam_step(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, step_size, c1, c2);
        }
    }
}

fn adam_step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    step_size: f64,
    c1: f64,
    c2: f64,
) {
    Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= step_size * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
    });
}

/// Full-batch Adam for `config.epochs` epochs, drawing a fresh drop-connect
/// mask per weight each epoch. Records the masked training loss of every
/// epoch before its update.
pub fn train(mut model: RegressionModel, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<RegressionModel> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if cfg.solver != Solver::Adam {
        return Err(Error::argument("train() runs the Adam solver; use fit() for closed-form"));
    }
    check_xy(&model, &x, &y)?;
    if x.nrows() < 2 {
        return Err(Error::argument("training needs at least 2 rows"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::argument("training data must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(MASK_STREAM);
    let mut adam = AdamState::new(&model);
    let all_kept = Masks::ones(&model);
    model.loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let sampled;
        let masks = if cfg.keep_rate < 1.0 {
            sampled = Masks::sample(&model, cfg.keep_rate, &mut rng);
            &sampled
        } else {
            &all_kept
        };
        let (loss, grads) = loss_and_gradients(&model, x, y, masks)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        model.loss_trace.push(loss);
        adam.update(&mut model.layers, &grads, cfg.step_size);
        if !model.layers.iter().all(Layer::is_finite) {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
    }
    Ok(model)
}

/// Builds a model for `cfg` and fits it with the configured solver.
pub fn fit(cfg: &RegressorConfig, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<RegressionModel> {
    cfg.validate()?;
    match cfg.solver {
        Solver::Adam => train(init_model(cfg, x.ncols(), y.ncols())?, x, y),
        Solver::ClosedForm => {
            // the gradient objective averages over rows and outputs
            let lambda = cfg.l2_lambda * y.len() as f64;
            let mut model = ridge_closed_form(x, y, lambda, true)?;
            model.config = cfg.clone();
            Ok(model)
        }
    }
}

/// Deterministic forward pass using expected weights (`keep_rate · W`).
pub fn predict(model: &RegressionModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.check_input(&x)?;
    let keep = model.config.keep_rate;
    let weights: Vec<Array2<f64>> = model.layers.iter().map(|l| &l.weights * keep).collect();
    Ok(model.forward(x, &weights).output)
}

/// Ridge regression solving `(XᵀX + λI) W = XᵀY`, on column-centred data
/// when `fit_intercept` is set (the bias then reproduces the target means).
///
/// Uses the `N × N` dual system when inputs outnumber rows.
pub fn ridge_closed_form(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    lambda: f64,
    fit_intercept: bool,
) -> Result<RegressionModel> {
    let (n, d_in) = x.dim();
    if y.nrows() != n || n == 0 || d_in == 0 || y.ncols() == 0 {
        return Err(Error::argument(format!(
            "ridge: inputs {}x{} and targets {}x{} incompatible",
            n,
            d_in,
            y.nrows(),
            y.ncols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::argument(format!("ridge lambda {lambda} must be >= 0")));
    }
    let (x_mean, y_mean) = if fit_intercept {
        (
            x.mean_axis(Axis(0)).expect("rows"),
            y.mean_axis(Axis(0)).expect("rows"),
        )
    } else {
        (Array1::zeros(d_in), Array1::zeros(y.ncols()))
    };
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;

    let weights = if d_in <= n {
        let mut gram = xc.t().dot(&xc);
        gram.diag_mut().mapv_inplace(|g| g + lambda);
        cholesky_solve(gram.view(), xc.t().dot(&yc).view())?
    } else {
        let mut gram = xc.dot(&xc.t());
        gram.diag_mut().mapv_inplace(|g| g + lambda);
        xc.t().dot(&cholesky_solve(gram.view(), yc.view())?)
    };
    let bias = &y_mean - &x_mean.dot(&weights);
    let config = RegressorConfig {
        keep_rate: 1.0,
        l2_lambda: lambda / y.len() as f64,
        linear_mode: true,
        solver: Solver::ClosedForm,
        ..Default::default()
    };
    Ok(RegressionModel {
        layers: vec![Layer { weights, bias }],
        config,
        loss_trace: Vec::new(),
    })
}
