"""Conditional variational autoencoder over archived elite solutions.

Plain-numpy MLPs with hand-written backpropagation. The encoder maps a
flattened solution plus its environment vector to a Gaussian latent
(mu, log sigma^2); the decoder reconstructs the solution from a latent
sample and the environment vector. Training minimizes mean squared
reconstruction error plus the closed-form KL divergence to a standard
normal prior, with Adam updates. Sampling the prior and decoding against a
new environment yields warm-start populations for the optimizer.

Solutions are flattened as: positions normalized per swarm box, weights
as-is, receiver indices divided by the swarm size. Dataset-level min/max
statistics renormalize both model inputs; they are stored in the
checkpoint so generation inverts them exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .objectives import Solution, repair
from .rng import CVAE_STREAM, stream
from .scenario import Scenario

CHECKPOINT_VERSION = 1


class DimensionMismatchError(ValueError):
    """Model and data disagree about vector layouts."""


class CheckpointMismatchError(ValueError):
    """A checkpoint cannot serve the requested scenario layout."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


# --- solution flattening ------------------------------------------------------

def encode_solution(x: Solution, s: Scenario) -> np.ndarray:
    """Flatten a feasible solution to [0, 1] coordinates.

    Layout: swarm-1 positions (normalized to box 1), swarm-2 positions,
    weights (both swarms), receiver indices / n_uav.
    """
    if x.n_uav != s.n_uav:
        raise DimensionMismatchError("solution and scenario disagree on swarm size")
    parts = []
    for i in (0, 1):
        box = s.area_bounds[i]
        parts.append(((x.positions[i] - box.lo) / (box.hi - box.lo)).ravel())
    parts.append(x.weights.ravel())
    parts.append(x.receivers.astype(float) / s.n_uav)
    return np.concatenate(parts)


def decode_solution(vec: np.ndarray, s: Scenario) -> tuple[Solution, bool]:
    """Invert :func:`encode_solution`, round receivers, repair."""
    vec = np.asarray(vec, dtype=float)
    expected = solution_dim(s)
    if vec.shape != (expected,):
        raise DimensionMismatchError(f"expected length {expected}, got {vec.shape}")
    n = s.n_uav
    positions = np.empty((2, n, 3))
    offset = 0
    for i in (0, 1):
        box = s.area_bounds[i]
        block = vec[offset: offset + 3 * n].reshape(n, 3)
        positions[i] = box.lo + block * (box.hi - box.lo)
        offset += 3 * n
    weights = vec[offset: offset + 2 * n].reshape(2, n)
    offset += 2 * n
    receivers = np.clip(np.round(vec[offset:] * n), 0, n - 1).astype(int)
    return repair(Solution(positions, weights, receivers), s)


def solution_dim(s: Scenario) -> int:
    return 8 * s.n_uav + 2


# --- training data --------------------------------------------------------------

@dataclass
class TrainingSet:
    """Paired (solution encoding, condition vector) rows with provenance."""

    x: np.ndarray  # (n, solution_dim)
    c: np.ndarray  # (n, condition_dim)
    provenance: list[tuple[int, int]] = field(default_factory=list)  # (scenario seed, archive index)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if len(self.x) != len(self.c):
            raise DimensionMismatchError("x and c row counts differ")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.c))):
            raise ValueError("training pairs must be finite")
        if np.any(self.x < -1e-9) or np.any(self.x > 1 + 1e-9):
            raise ValueError("solution encodings must be normalized to [0, 1]")

    def __len__(self) -> int:
        return len(self.x)


def build_dataset(runs) -> TrainingSet:
    """Turn (scenario, archive) pairs into a training set.

    Every archive entry becomes one row; provenance records the owning
    scenario seed and the entry's index in its archive.
    """
    from .scenario import condition_vector

    xs, cs, provenance = [], [], []
    dims = None
    for scenario, archive in runs:
        c = condition_vector(scenario)
        pair_dims = (solution_dim(scenario), len(c))
        if dims is None:
            dims = pair_dims
        elif dims != pair_dims:
            raise DimensionMismatchError(f"run dims {pair_dims} != first run dims {dims}")
        for idx, entry in enumerate(archive.entries):
            xs.append(encode_solution(entry.solution, scenario))
            cs.append(c)
            provenance.append((scenario.rng_seed, idx))
    if not xs:
        raise ValueError("no training pairs: all archives were empty")
    return TrainingSet(np.array(xs), np.array(cs), provenance)


# --- model ----------------------------------------------------------------------

@dataclass
class CvaeModel:
    """MLP encoder/decoder pair plus a linear skip into the decoder output.

    The skip path (decoder input straight to the reconstruction) lets the
    decoder represent near-identity structure exactly; the solution's
    position block closely tracks the condition's initial-position block,
    and hidden tanh layers alone cannot regress that map to the precision
    the energy objective needs.
    """

    latent_dim: int
    solution_dim: int
    condition_dim: int
    hidden: tuple[int, ...]
    n_uav: int
    n_eaves_known: int
    enc_weights: list[np.ndarray]
    enc_biases: list[np.ndarray]
    dec_weights: list[np.ndarray]
    dec_biases: list[np.ndarray]
    dec_skip: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray
    version: int = CHECKPOINT_VERSION

    def parameters(self) -> list[np.ndarray]:
        return (
            self.enc_weights + self.enc_biases
            + self.dec_weights + self.dec_biases + [self.dec_skip]
        )

    def check_finite(self):
        for p in self.parameters():
            if not np.all(np.isfinite(p)):
                raise TrainingDivergedError("non-finite model parameter")


def _layer_sizes(model: CvaeModel) -> tuple[list[int], list[int]]:
    enc = [model.solution_dim + model.condition_dim, *model.hidden, 2 * model.latent_dim]
    dec = [model.latent_dim + model.condition_dim, *model.hidden, model.solution_dim]
    return enc, dec


def init_model(
    s: Scenario,
    latent_dim: int = 20,
    hidden: tuple[int, ...] = (128, 128),
    rng: np.random.Generator | None = None,
    x_stats: tuple[np.ndarray, np.ndarray] | None = None,
    c_stats: tuple[np.ndarray, np.ndarray] | None = None,
) -> CvaeModel:
    """Glorot-initialized model matching the scenario's vector layout."""
    rng = rng if rng is not None else stream(0, CVAE_STREAM)
    sol_dim = solution_dim(s)
    cond_dim = s.condition_dim
    model = CvaeModel(
        latent_dim=latent_dim,
        solution_dim=sol_dim,
        condition_dim=cond_dim,
        hidden=tuple(hidden),
        n_uav=s.n_uav,
        n_eaves_known=s.n_eaves_known,
        enc_weights=[], enc_biases=[], dec_weights=[], dec_biases=[],
        dec_skip=np.zeros((latent_dim + cond_dim, sol_dim)),
        x_lo=np.zeros(sol_dim) if x_stats is None else np.asarray(x_stats[0], dtype=float),
        x_hi=np.ones(sol_dim) if x_stats is None else np.asarray(x_stats[1], dtype=float),
        c_lo=np.zeros(cond_dim) if c_stats is None else np.asarray(c_stats[0], dtype=float),
        c_hi=np.ones(cond_dim) if c_stats is None else np.asarray(c_stats[1], dtype=float),
    )
    enc_sizes, dec_sizes = _layer_sizes(model)
    for sizes, weights, biases in (
        (enc_sizes, model.enc_weights, model.enc_biases),
        (dec_sizes, model.dec_weights, model.dec_biases),
    ):
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            scale = math.sqrt(2.0 / (n_in + n_out))
            weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
    return model


def _normalize(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    out = np.where(span > 1e-12, (v - lo) / np.where(span > 1e-12, span, 1.0), 0.0)
    return out


def _denormalize(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    return np.where(span > 1e-12, lo + v * span, lo)


def _mlp_forward(h, weights, biases):
    """Linear stack with tanh between layers; returns output and caches."""
    caches = []
    for k, (w, b) in enumerate(zip(weights, biases)):
        a = h @ w + b
        if k < len(weights) - 1:
            out = np.tanh(a)
        else:
            out = a
        caches.append((h, out, k < len(weights) - 1))
        h = out
    return h, caches


def _mlp_backward(d_out, weights, caches):
    """Backprop through the stack; returns (d_input, d_weights, d_biases)."""
    d_ws = [None] * len(weights)
    d_bs = [None] * len(weights)
    grad = d_out
    for k in reversed(range(len(weights))):
        h_in, h_out, activated = caches[k]
        if activated:
            grad = grad * (1.0 - h_out * h_out)
        d_ws[k] = h_in.T @ grad
        d_bs[k] = grad.sum(axis=0)
        grad = grad @ weights[k].T
    return grad, d_ws, d_bs


@dataclass
class ForwardResult:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray
    x_recon: np.ndarray


def _decode(model: CvaeModel, dec_in: np.ndarray):
    """Decoder stack plus the linear skip; returns output and MLP caches."""
    mlp_out, caches = _mlp_forward(dec_in, model.dec_weights, model.dec_biases)
    return mlp_out + dec_in @ model.dec_skip, caches


def forward(model: CvaeModel, x_norm: np.ndarray, c_norm: np.ndarray, eps: np.ndarray) -> ForwardResult:
    """Encoder, reparameterization (z = mu + sigma * eps), decoder."""
    x_norm = np.atleast_2d(x_norm)
    c_norm = np.atleast_2d(c_norm)
    eps = np.atleast_2d(eps)
    if x_norm.shape[1] != model.solution_dim or c_norm.shape[1] != model.condition_dim:
        raise DimensionMismatchError("input widths do not match the model")
    enc_out, _ = _mlp_forward(np.hstack([x_norm, c_norm]), model.enc_weights, model.enc_biases)
    mu = enc_out[:, : model.latent_dim]
    logvar = enc_out[:, model.latent_dim:]
    z = mu + np.exp(0.5 * logvar) * eps
    x_recon, _ = _decode(model, np.hstack([z, c_norm]))
    if not np.all(np.isfinite(x_recon)):
        raise TrainingDivergedError("non-finite activation in forward pass")
    return ForwardResult(mu=mu, logvar=logvar, z=z, x_recon=x_recon)


def loss_and_grads(
    model: CvaeModel,
    x_norm: np.ndarray,
    c_norm: np.ndarray,
    beta: float,
    eps: np.ndarray,
):
    """Total loss (recon MSE + beta * KL) and gradients per parameter.

    Reconstruction averages the squared error over batch and dimensions;
    KL is the closed form -0.5 * sum(1 + logvar - mu^2 - exp(logvar)),
    averaged over the batch. Gradient layout matches
    ``model.parameters()``.
    """
    x_norm = np.atleast_2d(x_norm)
    c_norm = np.atleast_2d(c_norm)
    eps = np.atleast_2d(eps)
    batch = len(x_norm)

    enc_in = np.hstack([x_norm, c_norm])
    enc_out, enc_caches = _mlp_forward(enc_in, model.enc_weights, model.enc_biases)
    mu = enc_out[:, : model.latent_dim]
    logvar = enc_out[:, model.latent_dim:]
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    dec_in = np.hstack([z, c_norm])
    x_recon, dec_caches = _decode(model, dec_in)

    diff = x_recon - x_norm
    recon = float(np.mean(diff * diff))
    kl_terms = -0.5 * (1.0 + logvar - mu * mu - np.exp(logvar))
    kl = float(kl_terms.sum(axis=1).mean())
    total = recon + beta * kl
    if not math.isfinite(total):
        raise TrainingDivergedError(f"loss diverged (recon={recon}, kl={kl})")

    # decoder backward: MLP stack and skip path share the output gradient
    d_recon = 2.0 * diff / diff.size
    d_dec_in, d_dec_w, d_dec_b = _mlp_backward(d_recon, model.dec_weights, dec_caches)
    d_skip = dec_in.T @ d_recon
    d_dec_in = d_dec_in + d_recon @ model.dec_skip.T
    d_z = d_dec_in[:, : model.latent_dim]

    # reparameterization + KL backward
    d_mu = d_z + beta * mu / batch
    d_logvar = d_z * 0.5 * sigma * eps + beta * 0.5 * (np.exp(logvar) - 1.0) / batch
    d_enc_out = np.hstack([d_mu, d_logvar])
    _, d_enc_w, d_enc_b = _mlp_backward(d_enc_out, model.enc_weights, enc_caches)

    grads = d_enc_w + d_enc_b + d_dec_w + d_dec_b + [d_skip]
    return total, recon, kl, grads


# --- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainHyper:
    lr: float = 5e-4
    epochs: int = 200
    batch: int = 32
    beta: float = 1.0
    beta_warmup_frac: float = 0.1  # linear KL ramp over the first fraction of epochs
    weight_decay: float = 1e-3  # decoupled decay on hidden weights; skip path exempt
    seed: int = 0
    latent_dim: int = 20
    hidden: tuple[int, ...] = (128, 128)


def train(
    dataset: TrainingSet,
    scenario: Scenario,
    hyper: TrainHyper = TrainHyper(),
) -> tuple[CvaeModel, list[float]]:
    """Deterministic Adam training; returns the model and per-epoch loss."""
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    rng = stream(hyper.seed, CVAE_STREAM)
    x_lo, x_hi = dataset.x.min(axis=0), dataset.x.max(axis=0)
    c_lo, c_hi = dataset.c.min(axis=0), dataset.c.max(axis=0)
    model = init_model(
        scenario,
        latent_dim=hyper.latent_dim,
        hidden=hyper.hidden,
        rng=rng,
        x_stats=(x_lo, x_hi),
        c_stats=(c_lo, c_hi),
    )
    if model.solution_dim != dataset.x.shape[1] or model.condition_dim != dataset.c.shape[1]:
        raise DimensionMismatchError("dataset layout does not match the scenario")
    x_all = _normalize(dataset.x, model.x_lo, model.x_hi)
    c_all = _normalize(dataset.c, model.c_lo, model.c_hi)

    params = model.parameters()
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    warmup = max(1, int(round(hyper.beta_warmup_frac * hyper.epochs)))
    curve: list[float] = []
    n = len(dataset)
    for epoch in range(hyper.epochs):
        beta = hyper.beta * min(1.0, (epoch + 1) / warmup)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch):
            idx = order[start: start + hyper.batch]
            eps = rng.standard_normal((len(idx), model.latent_dim))
            loss, _, _, grads = loss_and_grads(model, x_all[idx], c_all[idx], beta, eps)
            epoch_loss += loss * len(idx)
            step += 1
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= 0.9
                m += 0.1 * g
                v *= 0.999
                v += 0.001 * g * g
                m_hat = m / (1.0 - 0.9 ** step)
                v_hat = v / (1.0 - 0.999 ** step)
                p -= hyper.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        curve.append(epoch_loss / n)
    model.check_finite()
    return model, curve


# --- generation -----------------------------------------------------------------

def generate_population(
    model: CvaeModel, s: Scenario, n: int, rng: np.random.Generator
) -> list[Solution]:
    """Decode ``n`` prior samples against the scenario's environment vector."""
    from .scenario import condition_vector

    if model.n_uav != s.n_uav or model.n_eaves_known != s.n_eaves_known:
        raise CheckpointMismatchError(
            f"model trained for n_uav={model.n_uav}, n_eaves_known={model.n_eaves_known}; "
            f"scenario has {s.n_uav}, {s.n_eaves_known}"
        )
    if n == 0:
        return []
    c = _normalize(condition_vector(s), model.c_lo, model.c_hi)
    c_batch = np.tile(c, (n, 1))
    z = rng.standard_normal((n, model.latent_dim))
    x_norm, _ = _decode(model, np.hstack([z, c_batch]))
    population = []
    for row in x_norm:
        encoding = np.clip(_denormalize(row, model.x_lo, model.x_hi), 0.0, 1.0)
        solution, _feasible = decode_solution(encoding, s)
        population.append(solution)
    return population


# --- persistence ----------------------------------------------------------------

def save_model(model: CvaeModel, path) -> None:
    data = {
        "schema_version": model.version,
        "kind": "cvae-checkpoint",
        "latent_dim": model.latent_dim,
        "solution_dim": model.solution_dim,
        "condition_dim": model.condition_dim,
        "hidden": list(model.hidden),
        "condition_layout": {"n_uav": model.n_uav, "n_eaves_known": model.n_eaves_known},
        "x_lo": model.x_lo.tolist(),
        "x_hi": model.x_hi.tolist(),
        "c_lo": model.c_lo.tolist(),
        "c_hi": model.c_hi.tolist(),
        "dec_skip": model.dec_skip.tolist(),
        "enc_weights": [w.tolist() for w in model.enc_weights],
        "enc_biases": [b.tolist() for b in model.enc_biases],
        "dec_weights": [w.tolist() for w in model.dec_weights],
        "dec_biases": [b.tolist() for b in model.dec_biases],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> CvaeModel:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or data.get("kind") != "cvae-checkpoint":
        raise CheckpointMismatchError("not a checkpoint file")
    if data.get("schema_version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"checkpoint schema {data.get('schema_version')!r} unsupported"
        )
    layout = data["condition_layout"]
    model = CvaeModel(
        latent_dim=data["latent_dim"],
        solution_dim=data["solution_dim"],
        condition_dim=data["condition_dim"],
        hidden=tuple(data["hidden"]),
        n_uav=layout["n_uav"],
        n_eaves_known=layout["n_eaves_known"],
        enc_weights=[np.array(w, dtype=float) for w in data["enc_weights"]],
        enc_biases=[np.array(b, dtype=float) for b in data["enc_biases"]],
        dec_weights=[np.array(w, dtype=float) for w in data["dec_weights"]],
        dec_biases=[np.array(b, dtype=float) for b in data["dec_biases"]],
        dec_skip=np.array(data["dec_skip"], dtype=float),
        x_lo=np.array(data["x_lo"], dtype=float),
        x_hi=np.array(data["x_hi"], dtype=float),
        c_lo=np.array(data["c_lo"], dtype=float),
        c_hi=np.array(data["c_hi"], dtype=float),
    )
    enc_sizes, dec_sizes = _layer_sizes(model)
    for sizes, weights in ((enc_sizes, model.enc_weights), (dec_sizes, model.dec_weights)):
        shapes = [w.shape for w in weights]
        expected = [(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        if shapes != expected:
            raise CheckpointMismatchError(f"layer shapes {shapes} do not match {expected}")
    if model.dec_skip.shape != (dec_sizes[0], dec_sizes[-1]):
        raise CheckpointMismatchError(
            f"skip shape {model.dec_skip.shape} does not match {(dec_sizes[0], dec_sizes[-1])}"
        )
    return model
