"""Small fully connected regressor fusing the group picks and the FD angle.

The network maps the concatenated vector [theta_c,1..P, theta_fd] (degrees)
to the final angle through two hidden layers and a linear output. Inputs are
normalized by 90 degrees before the first layer and the output denormalized
after the last, so the learned map lives on roughly [-1, 1].

Everything here is plain numpy: explicit forward, explicit backprop, and a
plain-text serialized model, with no framework behind it.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrays import AnalogCombiner, ArrayGeometry, SourceConfig
from .clustering import GMIND, cluster_true_set
from .pipeline import run_front_end
from .rootmusic import EstimationFailure

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is corrupt, incomplete, or from an unknown format version."""


class TrainingDivergence(RuntimeError):
    """Loss became non-finite; carries the history up to the failure."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0.0).astype(float)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (_tanh, _tanh_grad)}


@dataclass
class MlpModel:
    layer_dims: list                 # [inputs, h1, h2, 1]
    weights: list                    # per layer, shape (fan_in, fan_out)
    biases: list                     # per layer, shape (fan_out,)
    activation: str = "relu"
    input_scale: float = 90.0
    output_scale: float = 90.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        dims = list(self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("parameter count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} parameter shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} parameters must be finite")


@dataclass
class TrainingConfig:
    angle_max_deg: float = 70.0
    grid_step_deg: float = 1.0
    snr_list_db: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "sgd"  # or "adam"; plain minibatch descent is the baseline
    hidden_dims: tuple = (32, 16)
    # optional (epochs, learning_rate, batch_size) sequence; overrides the
    # three scalar fields when set
    stages: tuple | None = None

    def __post_init__(self):
        if not 0.0 < self.angle_max_deg < 90.0:
            raise ValueError("angle_max_deg must lie in (0, 90)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.grid_step_deg <= 0:
            raise ValueError("grid_step_deg must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        if self.stages is not None:
            norm = tuple((int(e), float(lr), int(bs)) for e, lr, bs in self.stages)
            self.stages = norm
            if any(e < 1 or lr <= 0 or bs < 1 for e, lr, bs in norm):
                raise ValueError("every stage needs epochs >= 1, lr > 0, batch >= 1")

    def schedule(self):
        if self.stages is not None:
            return self.stages
        return ((self.epochs, self.learning_rate, self.batch_size),)


@dataclass
class LabeledDataset:
    inputs: np.ndarray    # Q x (P+1), degrees
    labels: np.ndarray    # Q, degrees
    provenance: list = field(default_factory=list)  # (theta0_deg, snr_db, seed) per row
    dropped: int = 0


def init_model(layer_dims, activation: str = "relu", seed: int = 0) -> MlpModel:
    """He-scaled random weights; hidden biases start at a positive constant so
    every unit begins in its active (affine) region over the input range.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        last = i == len(layer_dims) - 2
        biases.append(np.zeros(fan_out) if last else np.full(fan_out, 0.5))
    return MlpModel(layer_dims=list(layer_dims), weights=weights, biases=biases,
                    activation=activation)


def _forward_pass(model: MlpModel, x_scaled: np.ndarray):
    """Scaled-space forward keeping pre-activations for backprop."""
    act, _ = ACTIVATIONS[model.activation]
    pre, post = [], [x_scaled]
    h = x_scaled
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == n_layers - 1 else act(z)
        post.append(h)
    return pre, post


def forward_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Predicted angles (degrees) for a Q x (P+1) input block."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.layer_dims[0]:
        raise ValueError(f"inputs must be Q x {model.layer_dims[0]}")
    if not np.all(np.isfinite(inputs)):
        raise ValueError("inputs must be finite")
    _, post = _forward_pass(model, inputs / model.input_scale)
    return post[-1][:, 0] * model.output_scale


def forward(model: MlpModel, x) -> float:
    """Predicted angle (degrees) for one input vector of length P+1."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.layer_dims[0]:
        raise ValueError(f"input must have length {model.layer_dims[0]}")
    return float(forward_batch(model, x[None, :])[0])


def loss_and_gradients(model: MlpModel, inputs: np.ndarray, labels: np.ndarray):
    """Mean squared error (degrees^2) and its gradients for every layer."""
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    q = inputs.shape[0]
    _, grad_act = ACTIVATIONS[model.activation]
    pre, post = _forward_pass(model, inputs / model.input_scale)
    pred = post[-1][:, 0] * model.output_scale
    err = pred - labels
    loss = float(np.mean(err**2))

    n_layers = len(model.weights)
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    # d loss / d scaled-output
    delta = (2.0 / q) * err[:, None] * model.output_scale
    for i in range(n_layers - 1, -1, -1):
        d_weights[i] = post[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * grad_act(pre[i - 1])
    return loss, d_weights, d_biases


def dataset_loss(model: MlpModel, dataset: LabeledDataset) -> float:
    pred = forward_batch(model, dataset.inputs)
    return float(np.mean((pred - dataset.labels) ** 2))


def train(model: MlpModel, dataset: LabeledDataset, cfg: TrainingConfig):
    """Minimize the MSE by mini-batch descent; returns (model, loss_history).

    The model is updated in place. loss_history[k] is the full-dataset loss
    after epoch k; entry 0 is the pre-training loss. Deterministic for a
    fixed cfg.seed. When cfg.stages is set, the stages run back to back with
    one shuffling stream and persistent optimizer state, and the history
    spans all of them.
    """
    if dataset.inputs.shape[0] == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    q = dataset.inputs.shape[0]
    history = [dataset_loss(model, dataset)]

    adam_m = [np.zeros_like(w) for w in model.weights] + [np.zeros_like(b) for b in model.biases]
    adam_v = [np.zeros_like(g) for g in adam_m]
    adam_t = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    for epochs, lr, batch_size in cfg.schedule():
        for _ in range(epochs):
            order = rng.permutation(q)
            for start in range(0, q, batch_size):
                batch = order[start:start + batch_size]
                _, dw, db = loss_and_gradients(model, dataset.inputs[batch], dataset.labels[batch])
                grads = dw + db
                params = model.weights + model.biases
                if cfg.optimizer == "adam":
                    adam_t += 1
                    for g, m, v, prm in zip(grads, adam_m, adam_v, params):
                        m *= beta1
                        m += (1 - beta1) * g
                        v *= beta2
                        v += (1 - beta2) * g**2
                        mhat = m / (1 - beta1**adam_t)
                        vhat = v / (1 - beta2**adam_t)
                        prm -= lr * mhat / (np.sqrt(vhat) + eps)
                else:
                    for g, prm in zip(grads, params):
                        prm -= lr * g
            epoch_loss = dataset_loss(model, dataset)
            history.append(epoch_loss)
            if not np.isfinite(epoch_loss):
                raise TrainingDivergence("training loss became non-finite", history)
    return model, history


def gradient_check(model: MlpModel, inputs, labels, step: float = 1e-6) -> float:
    """Largest relative disagreement between backprop and central differences,
    taken over every weight and bias entry.
    """
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _, dw, db = loss_and_gradients(model, inputs, labels)
    analytic = dw + db
    params = model.weights + model.biases
    worst = 0.0
    for prm, grad in zip(params, analytic):
        flat = prm.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + step
            hi, _, _ = loss_and_gradients(model, inputs, labels)
            flat[idx] = keep - step
            lo, _, _ = loss_and_gradients(model, inputs, labels)
            flat[idx] = keep
            numeric = (hi - lo) / (2.0 * step)
            scale = max(abs(numeric), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(numeric - gflat[idx]) / scale)
    return worst


def save_model(model: MlpModel, path) -> None:
    """Write the model as a self-describing JSON text document."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "input_scale": model.input_scale,
        "output_scale": model.output_scale,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> MlpModel:
    """Read a model document; rejects corrupt files and unknown versions."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError(f"model file {path} lacks a format_version field")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc['format_version']!r} "
            f"(expected {MODEL_FORMAT_VERSION})")
    required = ("layer_dims", "activation", "input_scale", "output_scale", "weights", "biases")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ModelFormatError(f"model file {path} missing fields: {', '.join(missing)}")
    try:
        return MlpModel(
            layer_dims=list(doc["layer_dims"]),
            weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
            biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
            activation=doc["activation"],
            input_scale=float(doc["input_scale"]),
            output_scale=float(doc["output_scale"]),
        )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"model file {path} is inconsistent: {exc}") from exc


def generate_training_data(geometry: ArrayGeometry, combiner: AnalogCombiner | None,
                           cfg: TrainingConfig, method: str = GMIND,
                           noiseless: bool = False, snapshots: int = 100,
                           threads: int = 1) -> LabeledDataset:
    """Run the full front end over the angle grid x SNR list to build one
    labeled row [theta_c,1..P, theta_fd] per (angle, SNR) pair.

    Rows whose front end raises an estimation failure are dropped and counted.
    Per-point seeds are derived from cfg.seed, so the dataset is identical for
    any thread count.
    """
    angles = np.arange(-cfg.angle_max_deg, cfg.angle_max_deg + cfg.grid_step_deg / 2,
                       cfg.grid_step_deg)
    jobs = []
    for ai, theta in enumerate(angles):
        for si, snr_db in enumerate(cfg.snr_list_db):
            seed = np.random.SeedSequence([int(cfg.seed), ai, si])
            jobs.append((float(theta), float(snr_db), seed))

    def one(job):
        theta0, snr_db, seed = job
        source = SourceConfig(true_angle_deg=theta0, snr_db=snr_db, snapshots=snapshots)
        try:
            fe = run_front_end(geometry, source, combiner, seed, noiseless)
        except EstimationFailure:
            return None
        picks = cluster_true_set(fe.theta_fd_deg, fe.candidate_sets, method)
        row = list(picks.angles_deg) + [fe.theta_fd_deg]
        return row, theta0, (theta0, snr_db, seed.entropy)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    rows, labels, provenance = [], [], []
    dropped = 0
    for res in results:
        if res is None:
            dropped += 1
            continue
        row, label, prov = res
        rows.append(row)
        labels.append(label)
        provenance.append(prov)
    if not rows:
        raise RuntimeError("every training row failed estimation")
    return LabeledDataset(inputs=np.array(rows, dtype=float),
                          labels=np.array(labels, dtype=float),
                          provenance=provenance, dropped=dropped)
