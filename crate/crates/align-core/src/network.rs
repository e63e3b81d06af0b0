//! Linear networks, loss functions, analytic gradients and the
//! gradient-descent training loop.
//!
//! A network is the ordered product `W_d ... W_1`; gradients follow the
//! chain rule with an overall 1/n factor, and a step updates every layer
//! simultaneously from the pre-step weights.

use crate::error::{Error, Result};
use crate::linalg::{
    adjacent_scores_from_svds, invariance_scores_from_svds, svd, Matrix, UsSvd,
};

/// Loss above which training aborts with a divergence error.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Ordered layer matrices `[W_1, ..., W_d]` with `W_i` of shape
/// `k_i x k_{i-1}`.
#[derive(Debug, Clone)]
pub struct LinearNetwork {
    layers: Vec<Matrix>,
}

impl LinearNetwork {
    pub fn new(layers: Vec<Matrix>) -> Result<LinearNetwork> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            if layers[i].cols() != layers[i - 1].rows() {
                return Err(Error::ShapeMismatch {
                    context: "LinearNetwork::new",
                    expected: format!("layer {} with {} columns", i, layers[i - 1].rows()),
                    found: format!("{}x{}", layers[i].rows(), layers[i].cols()),
                });
            }
        }
        Ok(LinearNetwork { layers })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Matrix {
        &self.layers[i]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Dimension chain `[k_0, ..., k_d]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].cols());
        for w in &self.layers {
            dims.push(w.rows());
        }
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }
}

/// Paired training matrices: inputs `x` (k_0 x n) and targets `y` (k_d x n).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Dataset> {
        if x.cols() != y.cols() || x.cols() == 0 {
            return Err(Error::ShapeMismatch {
                context: "Dataset::new",
                expected: format!("matching sample counts >= 1, x has {}", x.cols()),
                found: format!("y has {}", y.cols()),
            });
        }
        Ok(Dataset { x, y })
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }
}

/// Apply the network to a batch of column vectors.
pub fn forward(net: &LinearNetwork, x: &Matrix) -> Result<Matrix> {
    if x.rows() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "forward",
            expected: format!("{} input rows", net.input_dim()),
            found: format!("{}", x.rows()),
        });
    }
    let mut acc = net.layers[0].matmul(x);
    for w in &net.layers[1..] {
        acc = w.matmul(&acc);
    }
    Ok(acc)
}

/// The collapsed product `W_d ... W_1`.
pub fn end_to_end(net: &LinearNetwork) -> Matrix {
    let mut acc = net.layers[0].clone();
    for w in &net.layers[1..] {
        acc = w.matmul(&acc);
    }
    acc
}

/// Squared loss `(1/2n) * ||Y - f(X)||_F^2`.
pub fn mse_loss(net: &LinearNetwork, data: &Dataset) -> Result<f64> {
    let pred = forward(net, &data.x)?;
    if pred.shape() != data.y.shape() {
        return Err(Error::ShapeMismatch {
            context: "mse_loss",
            expected: format!("{:?}", data.y.shape()),
            found: format!("{:?}", pred.shape()),
        });
    }
    let n = data.samples() as f64;
    Ok(data.y.sub(&pred).frob_norm_sq() / (2.0 * n))
}

/// Backward cumulants `(W_d ... W_{i+1})^T dL_dF` for every layer, indexed
/// by layer (0-based). Built right-to-left with matrix-vector sized work.
fn backward_chain(net: &LinearNetwork, dl_df: &Matrix) -> Vec<Matrix> {
    let d = net.depth();
    let mut chain = vec![Matrix::zeros(1, 1); d];
    chain[d - 1] = dl_df.clone();
    for i in (0..d - 1).rev() {
        chain[i] = net.layers[i + 1].t_matmul(&chain[i + 1]);
    }
    chain
}

/// Forward cumulants `W_{i-1} ... W_1 X` for every layer (0-based); entry 0
/// is `X` itself.
fn forward_chain(net: &LinearNetwork, x: &Matrix) -> Vec<Matrix> {
    let d = net.depth();
    let mut chain = Vec::with_capacity(d);
    chain.push(x.clone());
    for i in 1..d {
        let next = net.layers[i - 1].matmul(&chain[i - 1]);
        chain.push(next);
    }
    chain
}

/// Gradient of `(1/n) * sum_l loss_l` with respect to layer `i` (0-based),
/// for per-sample output gradients stacked in `dl_df` (k_d x n).
pub fn general_gradient(
    net: &LinearNetwork,
    x: &Matrix,
    dl_df: &Matrix,
    layer: usize,
) -> Result<Matrix> {
    if layer >= net.depth() {
        return Err(Error::InvalidArgument(format!(
            "layer index {layer} out of range for depth {}",
            net.depth()
        )));
    }
    if dl_df.rows() != net.output_dim() || dl_df.cols() != x.cols() {
        return Err(Error::ShapeMismatch {
            context: "general_gradient",
            expected: format!("{}x{}", net.output_dim(), x.cols()),
            found: format!("{}x{}", dl_df.rows(), dl_df.cols()),
        });
    }
    let back = backward_chain(net, dl_df);
    let fwd = forward_chain(net, x);
    let n = x.cols() as f64;
    Ok(back[layer].matmul_t(&fwd[layer]).scale(1.0 / n))
}

/// Analytic squared-loss gradient with respect to layer `i` (0-based):
/// `-(1/n) (W_d...W_{i+1})^T (Y - f(X)) (W_{i-1}...W_1 X)^T`.
pub fn mse_gradient(net: &LinearNetwork, data: &Dataset, layer: usize) -> Result<Matrix> {
    let pred = forward(net, &data.x)?;
    let dl_df = pred.sub(&data.y);
    general_gradient(net, &data.x, &dl_df, layer)
}

/// Numerically stable softmax cross-entropy over columns.
///
/// Returns the mean loss and the per-column, unaveraged output gradient
/// `softmax(logits) - labels`; the 1/n factor is applied downstream by
/// [`general_gradient`].
pub fn softmax_xent_grad(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != labels.shape() {
        return Err(Error::ShapeMismatch {
            context: "softmax_xent_grad",
            expected: format!("{:?}", labels.shape()),
            found: format!("{:?}", logits.shape()),
        });
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite {
            context: "softmax_xent_grad",
        });
    }
    let (k, n) = logits.shape();
    let mut grad = Matrix::zeros(k, n);
    let mut total = 0.0;
    for j in 0..n {
        let mut max = f64::NEG_INFINITY;
        for i in 0..k {
            max = max.max(logits.get(i, j));
        }
        let mut z = 0.0;
        for i in 0..k {
            z += (logits.get(i, j) - max).exp();
        }
        let lse = max + z.ln();
        let mut ce = 0.0;
        for i in 0..k {
            let p = (logits.get(i, j) - lse).exp();
            let label = labels.get(i, j);
            grad.set(i, j, p - label);
            ce += label * (lse - logits.get(i, j));
        }
        total += ce;
    }
    Ok((total / n as f64, grad))
}

/// Binary logistic loss for 1-dimensional outputs with +/-1 targets:
/// mean of `ln(1 + exp(-y f))`.
pub fn logistic_grad(predictions: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if predictions.shape() != targets.shape() || predictions.rows() != 1 {
        return Err(Error::ShapeMismatch {
            context: "logistic_grad",
            expected: format!("1x{} predictions and targets", targets.cols()),
            found: format!("{:?} vs {:?}", predictions.shape(), targets.shape()),
        });
    }
    if !predictions.is_finite() {
        return Err(Error::NonFinite {
            context: "logistic_grad",
        });
    }
    let n = predictions.cols();
    let mut grad = Matrix::zeros(1, n);
    let mut total = 0.0;
    for j in 0..n {
        let y = targets.get(0, j);
        let m = y * predictions.get(0, j);
        // softplus(-m), stable on both sides.
        total += if m > 0.0 {
            (-m).exp().ln_1p()
        } else {
            -m + m.exp().ln_1p()
        };
        let sig = if m > 0.0 {
            let e = (-m).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + m.exp())
        };
        grad.set(0, j, -y * sig);
    }
    Ok((total / n as f64, grad))
}

/// Which loss drives a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxXent,
    Logistic,
}

impl LossKind {
    /// Loss value and per-column output gradient at `predictions`.
    ///
    /// The gradient is unaveraged; [`general_gradient`] applies the 1/n.
    /// For the squared loss the value is `(1/2n) ||Y - F||_F^2`; the other
    /// losses are plain means over columns.
    pub fn eval(&self, predictions: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
        match self {
            LossKind::Mse => {
                if predictions.shape() != targets.shape() {
                    return Err(Error::ShapeMismatch {
                        context: "LossKind::Mse",
                        expected: format!("{:?}", targets.shape()),
                        found: format!("{:?}", predictions.shape()),
                    });
                }
                let n = targets.cols() as f64;
                let diff = predictions.sub(targets);
                Ok((diff.frob_norm_sq() / (2.0 * n), diff))
            }
            LossKind::SoftmaxXent => softmax_xent_grad(predictions, targets),
            LossKind::Logistic => logistic_grad(predictions, targets),
        }
    }
}

/// Loss and per-layer gradients for linear matrix sensing:
/// `(1/2n) sum_i (y_i - Tr(M_i^T W_d...W_1))^2`.
pub fn sensing_loss_grad(
    net: &LinearNetwork,
    sensors: &[Matrix],
    targets: &[f64],
) -> Result<(f64, Vec<Matrix>)> {
    if sensors.is_empty() {
        return Err(Error::InvalidArgument("no sensors given".into()));
    }
    if sensors.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "sensing_loss_grad",
            expected: format!("{} targets", sensors.len()),
            found: format!("{}", targets.len()),
        });
    }
    let product = end_to_end(net);
    for m in sensors {
        if m.shape() != product.shape() {
            return Err(Error::ShapeMismatch {
                context: "sensing_loss_grad",
                expected: format!("{:?}", product.shape()),
                found: format!("{:?}", m.shape()),
            });
        }
    }
    let n = sensors.len() as f64;
    let residuals: Vec<f64> = sensors
        .iter()
        .zip(targets)
        .map(|(m, &y)| y - m.frob_dot(&product))
        .collect();
    let loss = residuals.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);

    // The gradient is linear in the sensors, so fold them first:
    // grad_j = -(1/n) suffix_j^T (sum_i r_i M_i) prefix_j^T.
    let mut folded = Matrix::zeros(product.rows(), product.cols());
    for (m, &r) in sensors.iter().zip(&residuals) {
        folded = folded.add(&m.scale(r));
    }

    let d = net.depth();
    // prefix[i] = W_{i-1} ... W_1 (identity for i = 0).
    let mut prefix: Vec<Matrix> = Vec::with_capacity(d);
    prefix.push(Matrix::identity(net.input_dim()));
    for i in 1..d {
        prefix.push(net.layers[i - 1].matmul(&prefix[i - 1]));
    }
    // suffix_t[i] = (W_d ... W_{i+1})^T folded, built right-to-left.
    let mut suffix_t = vec![Matrix::zeros(1, 1); d];
    suffix_t[d - 1] = folded;
    for i in (0..d - 1).rev() {
        suffix_t[i] = net.layers[i + 1].t_matmul(&suffix_t[i + 1]);
    }
    let grads = (0..d)
        .map(|i| suffix_t[i].matmul_t(&prefix[i]).scale(-1.0 / n))
        .collect();
    Ok((loss, grads))
}

/// One simultaneous gradient-descent step: every gradient is evaluated at
/// the pre-step weights, then all layers move at once.
pub fn gd_step(
    net: &LinearNetwork,
    data: &Dataset,
    gamma: f64,
    loss: LossKind,
) -> Result<LinearNetwork> {
    let pred = forward(net, &data.x)?;
    let (_, dl_df) = loss.eval(&pred, &data.y)?;
    let back = backward_chain(net, &dl_df);
    let fwd = forward_chain(net, &data.x);
    let n = data.samples() as f64;
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let grad = back[i].matmul_t(&fwd[i]).scale(1.0 / n);
            w.sub_scaled(&grad, gamma)
        })
        .collect();
    LinearNetwork::new(layers)
}

/// One simultaneous step on the sensing objective.
pub fn sensing_gd_step(
    net: &LinearNetwork,
    sensors: &[Matrix],
    targets: &[f64],
    gamma: f64,
) -> Result<LinearNetwork> {
    let (_, grads) = sensing_loss_grad(net, sensors, targets)?;
    let layers = net
        .layers
        .iter()
        .zip(&grads)
        .map(|(w, g)| w.sub_scaled(g, gamma))
        .collect();
    LinearNetwork::new(layers)
}

/// Training-loop configuration. Defaults follow the experiment protocol:
/// learning rate 1e-2, stop when the loss falls below 1e-4.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub loss_stop: f64,
    pub record_every: usize,
    pub rank_tol: f64,
    /// Keep full layer snapshots in each record (memory-heavy).
    pub keep_snapshots: bool,
    /// Compare at most this many leading singular directions when scoring.
    pub score_dir_cap: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            max_steps: 100_000,
            loss_stop: 1e-4,
            record_every: 100,
            rank_tol: crate::linalg::DEFAULT_RANK_TOL,
            keep_snapshots: false,
            score_dir_cap: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "max_steps and record_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded point of a training run. Scores that are undefined at a
/// step (no singular value above threshold, e.g. a zero layer) are NaN.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    /// Adjacent alignment scores, length d - 1.
    pub adjacent: Vec<f64>,
    /// Left-basis invariance vs step 0, length d.
    pub inv_u: Vec<f64>,
    /// Right-basis invariance vs step 0, length d.
    pub inv_v: Vec<f64>,
    pub snapshot: Option<Vec<Matrix>>,
}

/// A recorded training run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    pub steps_run: usize,
    pub final_loss: f64,
}

impl TrainTrace {
    pub fn depth(&self) -> usize {
        self.records.first().map_or(0, |r| r.inv_u.len())
    }
}

fn score_value(s: &Result<crate::linalg::AlignmentScore>) -> f64 {
    match s {
        Ok(sc) => sc.value,
        Err(_) => f64::NAN,
    }
}

/// Shared recording step: canonical svd per layer, adjacent + invariance
/// scores against the step-0 decompositions.
pub(crate) fn record_scores(
    layers: &[Matrix],
    reference: &[UsSvd],
    step: usize,
    loss: f64,
    config: &TrainConfig,
) -> Result<TraceRecord> {
    let decs: Vec<UsSvd> = layers.iter().map(svd).collect::<Result<Vec<_>>>()?;
    let adjacent = adjacent_scores_from_svds(&decs, config.rank_tol, config.score_dir_cap)
        .iter()
        .map(score_value)
        .collect();
    let inv = invariance_scores_from_svds(&decs, reference, config.rank_tol, config.score_dir_cap);
    let inv_u = inv.iter().map(|(u, _)| score_value(u)).collect();
    let inv_v = inv.iter().map(|(_, v)| score_value(v)).collect();
    Ok(TraceRecord {
        step,
        loss,
        adjacent,
        inv_u,
        inv_v,
        snapshot: config.keep_snapshots.then(|| layers.to_vec()),
    })
}

/// Generic training driver over a step function and loss evaluator.
fn train_loop<S, L>(
    net0: LinearNetwork,
    config: &TrainConfig,
    mut step_fn: S,
    mut loss_fn: L,
) -> Result<(TrainTrace, LinearNetwork)>
where
    S: FnMut(&LinearNetwork) -> Result<LinearNetwork>,
    L: FnMut(&LinearNetwork) -> Result<f64>,
{
    config.validate()?;
    let reference: Vec<UsSvd> = net0.layers().iter().map(svd).collect::<Result<Vec<_>>>()?;
    let mut net = net0;
    let mut loss = loss_fn(&net)?;
    let mut records = vec![record_scores(net.layers(), &reference, 0, loss, config)?];
    let mut converged = loss <= config.loss_stop;
    let mut steps_run = 0;
    if !converged {
        for t in 1..=config.max_steps {
            net = step_fn(&net)?;
            loss = loss_fn(&net)?;
            steps_run = t;
            if !loss.is_finite() || loss > DIVERGENCE_GUARD {
                return Err(Error::Divergence { step: t, loss });
            }
            let stop = loss <= config.loss_stop;
            if t % config.record_every == 0 || stop || t == config.max_steps {
                records.push(record_scores(net.layers(), &reference, t, loss, config)?);
            }
            if stop {
                converged = true;
                break;
            }
        }
    }
    Ok((
        TrainTrace {
            records,
            converged,
            steps_run,
            final_loss: loss,
        },
        net,
    ))
}

/// Gradient descent until `loss <= loss_stop` or `max_steps`, recording a
/// trace every `record_every` steps (plus step 0 and the final step).
pub fn train(
    net0: LinearNetwork,
    data: &Dataset,
    config: &TrainConfig,
    loss_kind: LossKind,
) -> Result<(TrainTrace, LinearNetwork)> {
    // Fail fast on incompatible data rather than inside the loop.
    let pred = forward(&net0, &data.x)?;
    loss_kind.eval(&pred, &data.y)?;
    train_loop(
        net0,
        config,
        |net| gd_step(net, data, config.learning_rate, loss_kind),
        |net| {
            let pred = forward(net, &data.x)?;
            Ok(loss_kind.eval(&pred, &data.y)?.0)
        },
    )
}

/// Training loop for the sensing objective.
pub fn train_sensing(
    net0: LinearNetwork,
    sensors: &[Matrix],
    targets: &[f64],
    config: &TrainConfig,
) -> Result<(TrainTrace, LinearNetwork)> {
    sensing_loss_grad(&net0, sensors, targets)?;
    train_loop(
        net0,
        config,
        |net| sensing_gd_step(net, sensors, targets, config.learning_rate),
        |net| Ok(sensing_loss_grad(net, sensors, targets)?.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_net(dims: &[usize], rng: &mut Rng) -> LinearNetwork {
        let layers = (1..dims.len())
            .map(|i| Matrix::random_normal(dims[i], dims[i - 1], rng).scale(0.5))
            .collect();
        LinearNetwork::new(layers).unwrap()
    }

    #[test]
    fn forward_identity_and_scalar() {
        let net = LinearNetwork::new(vec![Matrix::identity(3), Matrix::identity(3)]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(forward(&net, &x).unwrap().max_abs_diff(&x) < 1e-15);

        let net = LinearNetwork::new(vec![
            Matrix::from_rows(&[vec![3.0]]).unwrap(),
            Matrix::from_rows(&[vec![2.0]]).unwrap(),
        ])
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(forward(&net, &x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn forward_matches_end_to_end() {
        let mut rng = Rng::new(10);
        let net = random_net(&[4, 6, 3, 5], &mut rng);
        let x = Matrix::random_normal(4, 7, &mut rng);
        let via_forward = forward(&net, &x).unwrap();
        let via_product = end_to_end(&net).matmul(&x);
        assert!(via_forward.max_abs_diff(&via_product) < 1e-12);
    }

    #[test]
    fn mse_loss_cases() {
        let net = LinearNetwork::new(vec![Matrix::from_rows(&[vec![0.0]]).unwrap()]).unwrap();
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
        )
        .unwrap();
        assert!((mse_loss(&net, &data).unwrap() - 0.5).abs() < 1e-15);

        let mut rng = Rng::new(11);
        let net = random_net(&[3, 4, 2], &mut rng);
        let x = Matrix::random_normal(3, 5, &mut rng);
        let y = forward(&net, &x).unwrap();
        let data = Dataset::new(x, y).unwrap();
        assert!(mse_loss(&net, &data).unwrap() < 1e-24);
    }

    #[test]
    fn mse_loss_matches_scalar_loop() {
        let mut rng = Rng::new(12);
        let net = random_net(&[3, 3, 3], &mut rng);
        let x = Matrix::random_normal(3, 4, &mut rng);
        let y = Matrix::random_normal(3, 4, &mut rng);
        let pred = forward(&net, &x).unwrap();
        let mut manual = 0.0;
        for j in 0..4 {
            for i in 0..3 {
                let diff = y.get(i, j) - pred.get(i, j);
                manual += diff * diff;
            }
        }
        manual /= 2.0 * 4.0;
        let data = Dataset::new(x, y).unwrap();
        assert!((mse_loss(&net, &data).unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn mse_gradient_simple_cases() {
        // d = 1, W = 0, X = Y = [[1]]: gradient is -(1/n)(Y - WX)X^T = [[-1]].
        let net = LinearNetwork::new(vec![Matrix::from_rows(&[vec![0.0]]).unwrap()]).unwrap();
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
        )
        .unwrap();
        let g = mse_gradient(&net, &data, 0).unwrap();
        assert!((g.get(0, 0) + 1.0).abs() < 1e-15);

        // At an interpolating solution the gradient vanishes.
        let mut rng = Rng::new(13);
        let net = random_net(&[3, 4, 3], &mut rng);
        let x = Matrix::random_normal(3, 3, &mut rng);
        let y = forward(&net, &x).unwrap();
        let data = Dataset::new(x, y).unwrap();
        for i in 0..2 {
            assert!(mse_gradient(&net, &data, i).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn general_gradient_consistency_with_mse() {
        let mut rng = Rng::new(14);
        let net = random_net(&[4, 5, 3], &mut rng);
        let x = Matrix::random_normal(4, 6, &mut rng);
        let y = Matrix::random_normal(3, 6, &mut rng);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let dl_df = forward(&net, &x).unwrap().sub(&y);
        for i in 0..2 {
            let a = mse_gradient(&net, &data, i).unwrap();
            let b = general_gradient(&net, &x, &dl_df, i).unwrap();
            assert_eq!(a.as_slice(), b.as_slice());
        }
        let zero = Matrix::zeros(3, 6);
        assert!(general_gradient(&net, &x, &zero, 1).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn softmax_xent_known_values() {
        // Equal logits over k classes: loss = ln k.
        let logits = Matrix::zeros(4, 3);
        let labels = Matrix::from_fn(4, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let (loss, _) = softmax_xent_grad(&logits, &labels).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);

        // Saturated correct logits drive the loss to zero.
        let logits = labels.scale(1e6);
        let (loss, _) = softmax_xent_grad(&logits, &labels).unwrap();
        assert!(loss < 1e-9);

        // Direct-definition oracle on a random case.
        let mut rng = Rng::new(15);
        let logits = Matrix::random_normal(5, 4, &mut rng);
        let labels = Matrix::from_fn(5, 4, |i, j| if i == (j + 1) % 5 { 1.0 } else { 0.0 });
        let (loss, grad) = softmax_xent_grad(&logits, &labels).unwrap();
        let mut manual = 0.0;
        for j in 0..4 {
            let exps: Vec<f64> = (0..5).map(|i| logits.get(i, j).exp()).collect();
            let z: f64 = exps.iter().sum();
            for i in 0..5 {
                if labels.get(i, j) == 1.0 {
                    manual -= (exps[i] / z).ln();
                }
                let p = exps[i] / z;
                assert!((grad.get(i, j) - (p - labels.get(i, j))).abs() < 1e-10);
            }
        }
        manual /= 4.0;
        assert!((loss - manual).abs() < 1e-10);
    }

    #[test]
    fn sensing_simple_cases() {
        // Single sensor M = I, d = 1, W = 0, y = 1: loss 0.5, grad [[-1]].
        let net = LinearNetwork::new(vec![Matrix::from_rows(&[vec![0.0]]).unwrap()]).unwrap();
        let (loss, grads) =
            sensing_loss_grad(&net, &[Matrix::identity(1)], &[1.0]).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        assert!((grads[0].get(0, 0) + 1.0).abs() < 1e-15);

        // Exact targets give zero loss and zero gradients.
        let mut rng = Rng::new(16);
        let net = random_net(&[3, 3, 3], &mut rng);
        let p = end_to_end(&net);
        let sensors: Vec<Matrix> = (0..4).map(|_| Matrix::random_normal(3, 3, &mut rng)).collect();
        let targets: Vec<f64> = sensors.iter().map(|m| m.frob_dot(&p)).collect();
        let (loss, grads) = sensing_loss_grad(&net, &sensors, &targets).unwrap();
        assert!(loss < 1e-20);
        for g in grads {
            assert!(g.max_abs() < 1e-10);
        }
    }

    #[test]
    fn gd_step_zero_rate_and_one_step() {
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
        )
        .unwrap();
        let net = LinearNetwork::new(vec![Matrix::from_rows(&[vec![0.0]]).unwrap()]).unwrap();
        let same = gd_step(&net, &data, 0.0, LossKind::Mse).unwrap();
        assert_eq!(same.layer(0).get(0, 0), 0.0);
        let stepped = gd_step(&net, &data, 1.0, LossKind::Mse).unwrap();
        assert_eq!(stepped.layer(0).get(0, 0), 1.0);
        assert!(mse_loss(&stepped, &data).unwrap() < 1e-30);
    }

    #[test]
    fn updates_are_simultaneous_not_sequential() {
        let mut rng = Rng::new(17);
        let net = random_net(&[2, 2, 2], &mut rng);
        let data = Dataset::new(
            Matrix::random_normal(2, 3, &mut rng),
            Matrix::random_normal(2, 3, &mut rng),
        )
        .unwrap();
        let gamma = 0.05;
        let joint = gd_step(&net, &data, gamma, LossKind::Mse).unwrap();

        // Sequential: update layer 0, then recompute the gradient for layer 1.
        let g0 = mse_gradient(&net, &data, 0).unwrap();
        let w0 = net.layer(0).sub_scaled(&g0, gamma);
        let partial = LinearNetwork::new(vec![w0.clone(), net.layer(1).clone()]).unwrap();
        let g1 = mse_gradient(&partial, &data, 1).unwrap();
        let w1 = net.layer(1).sub_scaled(&g1, gamma);

        assert!(joint.layer(0).max_abs_diff(&w0) < 1e-15);
        assert!(joint.layer(1).max_abs_diff(&w1) > 1e-9);
    }

    #[test]
    fn train_records_and_stops() {
        let mut rng = Rng::new(18);
        let net = random_net(&[3, 3, 3], &mut rng);
        let x = Matrix::random_normal(3, 3, &mut rng);
        let y = x.scale(0.8);
        let data = Dataset::new(x, y).unwrap();
        let config = TrainConfig {
            learning_rate: 0.05,
            max_steps: 20_000,
            loss_stop: 1e-8,
            record_every: 100,
            ..TrainConfig::default()
        };
        let (trace, _) = train(net, &data, &config, LossKind::Mse).unwrap();
        assert!(trace.converged);
        assert!(trace.final_loss <= 1e-8);
        let mut prev = None;
        for r in &trace.records {
            if let Some(p) = prev {
                assert!(r.step > p);
            }
            prev = Some(r.step);
            assert_eq!(r.adjacent.len(), 1);
            assert_eq!(r.inv_u.len(), 2);
        }
    }

    #[test]
    fn divergence_is_an_error() {
        let mut rng = Rng::new(19);
        let net = random_net(&[3, 3, 3], &mut rng);
        let x = Matrix::random_normal(3, 3, &mut rng);
        let y = Matrix::random_normal(3, 3, &mut rng).scale(10.0);
        let data = Dataset::new(x, y).unwrap();
        let config = TrainConfig {
            learning_rate: 50.0,
            max_steps: 10_000,
            loss_stop: 1e-12,
            ..TrainConfig::default()
        };
        match train(net, &data, &config, LossKind::Mse) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
