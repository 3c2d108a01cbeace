"""Gradient-descent training for masked nets, plus a batched trial harness.

Everything here is full-batch plain GD; the only adaptivity is optional
step halving when a step would increase the loss (off by default).  Masks
are enforced by zeroing the corresponding gradient entries, so pruned
coordinates never move.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import Activation
from .landscape import numerical_rank
from .network import SparseLayer, SparseNet, forward, loss as net_loss

DIVERGE_FACTOR = 1e12


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
            raise ValueError(f"need X (d_x, n) and Y (d_y, n); got {X.shape} and {Y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[1]


def gen_synthetic(n: int, d_x: int, d_y: int, seed: int = 0, a_norm: float = 5.0,
                  noise: float = 1.0, target: str = "gaussian") -> Dataset:
    """X ~ N(0,1), Y = A X + noise * eps with ||A||_F scaled to a_norm.

    target "identity" uses A = the first d_y rows of I instead (then a_norm
    is ignored).  Separate child seeds keep X, A and eps independent.
    """
    ss = np.random.SeedSequence(seed)
    rng_x, rng_a, rng_e = (np.random.default_rng(s) for s in ss.spawn(3))
    X = rng_x.standard_normal((d_x, n))
    if target == "gaussian":
        A = rng_a.standard_normal((d_y, d_x))
        A *= a_norm / np.linalg.norm(A)
    elif target == "identity":
        A = np.eye(d_y, d_x)
    else:
        raise ValueError(f"unknown target {target!r}")
    Y = A @ X + noise * rng_e.standard_normal((d_y, n))
    return Dataset(X, Y, seed=seed, metadata={"A": A, "noise": noise, "target": target})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 50000
    grad_tol: float = 1e-8
    plateau_rel: float = 1e-12
    plateau_window: int = 200
    seed: int = 0
    init: str = "default"      # "default" | "scaled" | "keep"
    init_scale: float = 1.0
    rank_every: int = 0        # 0 disables hidden-rank sampling
    backtrack: bool = False    # halve the step while it would increase the loss


def init_net(net: SparseNet, config: TrainConfig) -> SparseNet:
    """Fresh weights: uniform(-s/sqrt(fan_in), s/sqrt(fan_in)) per layer,
    with s = 1 ("default") or init_scale ("scaled"); "keep" returns net."""
    if config.init == "keep":
        return net
    if config.init not in ("default", "scaled"):
        raise ValueError(f"unknown init {config.init!r}")
    scale = config.init_scale if config.init == "scaled" else 1.0
    rng = np.random.default_rng(config.seed)
    layers = []
    for layer in net.layers:
        bound = scale / math.sqrt(layer.n_in)
        W = rng.uniform(-bound, bound, size=layer.weights.shape) * layer.mask
        b = None
        if layer.bias is not None:
            b = rng.uniform(-bound, bound, size=layer.bias.shape) * layer.bias_mask
        layers.append(SparseLayer(W, layer.mask, b, layer.bias_mask))
    return SparseNet(tuple(layers), net.activation)


def grad_net(net: SparseNet, X: np.ndarray, Y: np.ndarray):
    """Masked gradients of 0.5 ||net(X) - Y||_F^2 for every layer.

    Returns (weight_grads, bias_grads, loss_value); bias grads are None
    where the layer has no bias.
    """
    act = net.activation
    with np.errstate(over="ignore", invalid="ignore"):
        hiddens = [np.asarray(X, dtype=float)]
        pres = []
        L = len(net.layers)
        for k, layer in enumerate(net.layers):
            pre = layer.affine(hiddens[-1])
            pres.append(pre)
            hiddens.append(act(pre) if k < L - 1 else pre)
        resid = hiddens[-1] - Y
        value = 0.5 * float(np.sum(resid * resid))

        w_grads = [None] * L
        b_grads = [None] * L
        G = resid
        for k in range(L - 1, -1, -1):
            layer = net.layers[k]
            w_grads[k] = (G @ hiddens[k].T) * layer.mask
            if layer.bias is not None:
                b_grads[k] = G.sum(axis=1) * layer.bias_mask
            if k > 0:
                G = (layer.weights.T @ G) * act.derivative(pres[k - 1])
        return w_grads, b_grads, value


@dataclass(frozen=True)
class TrainTrace:
    losses: np.ndarray              # per epoch, including epoch 0
    grad_norms: np.ndarray
    net: SparseNet                  # final parameters
    stop_reason: str                # converged_grad | plateau | max_epochs | diverged
    ranks: tuple = ()               # ((epoch, (rank_h1, ...)), ...)
    config: TrainConfig | None = None

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])

    @property
    def epochs(self) -> int:
        return len(self.losses) - 1

    @property
    def diverged(self) -> bool:
        return self.stop_reason == "diverged"

    @property
    def monotone_violation(self) -> float:
        jumps = np.diff(self.losses)
        return float(max(0.0, jumps.max())) if len(jumps) else 0.0

    def to_csv(self) -> str:
        n_layers = len(self.net.layers)
        rank_at = {epoch: r for epoch, r in self.ranks}
        buf = io.StringIO()
        buf.write("epoch,loss" + "".join(f",rank_layer_{k+1}" for k in range(n_layers)) + "\n")
        for e, lv in enumerate(self.losses):
            cells = [str(e), repr(float(lv))]
            r = rank_at.get(e)
            cells += [str(v) for v in r] if r is not None else [""] * n_layers
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _layer_output_ranks(net: SparseNet, X: np.ndarray) -> tuple:
    out, hiddens = forward(net, X)
    return tuple(numerical_rank(h) for h in hiddens) + (numerical_rank(out),)


def gd_train(net: SparseNet, dataset: Dataset, config: TrainConfig = TrainConfig()) -> TrainTrace:
    """Full-batch gradient descent; divergence is recorded, not raised."""
    net = init_net(net, config)
    X, Y = dataset.X, dataset.Y
    lr = config.learning_rate
    weights = [layer.weights.copy() for layer in net.layers]
    biases = [None if layer.bias is None else layer.bias.copy() for layer in net.layers]

    def rebuild() -> SparseNet:
        layers = tuple(
            SparseLayer(w, layer.mask, b, layer.bias_mask)
            for w, b, layer in zip(weights, biases, net.layers)
        )
        return SparseNet(layers, net.activation)

    losses = []
    grad_norms = []
    ranks = []
    stop_reason = "max_epochs"
    current = rebuild()
    w_grads, b_grads, value = grad_net(current, X, Y)
    limit = DIVERGE_FACTOR * max(1.0, abs(value))

    for epoch in range(config.max_epochs + 1):
        losses.append(value)
        gnorm = math.sqrt(
            sum(float(np.sum(g * g)) for g in w_grads)
            + sum(float(np.sum(g * g)) for g in b_grads if g is not None)
        )
        grad_norms.append(gnorm)
        if config.rank_every and epoch % config.rank_every == 0:
            ranks.append((epoch, _layer_output_ranks(current, X)))

        if not math.isfinite(value) or value > limit:
            stop_reason = "diverged"
            break
        if gnorm < config.grad_tol:
            stop_reason = "converged_grad"
            break
        w = config.plateau_window
        if len(losses) > w:
            drop = losses[-w - 1] - losses[-1]
            if drop <= config.plateau_rel * max(1.0, abs(losses[-w - 1])):
                stop_reason = "plateau"
                break
        if epoch == config.max_epochs:
            break

        step = lr
        while True:
            trial_w = [wt - step * g for wt, g in zip(weights, w_grads)]
            trial_b = [None if b is None else b - step * g
                       for b, g in zip(biases, b_grads)]
            weights_saved, biases_saved = weights, biases
            weights, biases = trial_w, trial_b
            current = rebuild()
            w_grads_new, b_grads_new, new_value = grad_net(current, X, Y)
            if not config.backtrack or new_value <= value or step < 1e-16 * lr:
                w_grads, b_grads, value = w_grads_new, b_grads_new, new_value
                break
            weights, biases = weights_saved, biases_saved
            step *= 0.5

    return TrainTrace(
        losses=np.asarray(losses), grad_norms=np.asarray(grad_norms),
        net=rebuild(), stop_reason=stop_reason, ranks=tuple(ranks), config=config,
    )


# ---------------------------------------------------------------------------
# batched independent trials on a flat-vector objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialStats:
    labels: tuple                  # one label per trial
    final_losses: np.ndarray
    final_thetas: np.ndarray
    epochs: np.ndarray
    counts: dict
    clusters: tuple                # ((loss_center, size), ...) sorted by center

    def fraction(self, label: str) -> float:
        return self.counts.get(label, 0) / len(self.labels)

    def to_json(self) -> dict:
        return {
            "trials": [
                {"label": lab, "final_loss": float(lv), "epochs": int(e)}
                for lab, lv, e in zip(self.labels, self.final_losses, self.epochs)
            ],
            "clusters": [{"loss": c, "size": s} for c, s in self.clusters],
            "counts": dict(self.counts),
            "fractions": {k: v / len(self.labels) for k, v in self.counts.items()},
        }


def loss_clusters(losses, rel_tol: float = 1e-3) -> tuple:
    """Greedy 1-d clustering of final losses: sorted values join the current
    cluster while within rel_tol of its running mean (floored at 1)."""
    vals = np.sort(np.asarray(losses, dtype=float))
    vals = vals[np.isfinite(vals)]
    if len(vals) == 0:
        return ()
    clusters = []
    mean, count = float(vals[0]), 1
    for v in vals[1:]:
        if abs(v - mean) <= rel_tol * max(1.0, abs(mean)):
            mean = float(mean + (v - mean) / (count + 1))
            count += 1
        else:
            clusters.append((mean, count))
            mean, count = float(v), 1
    clusters.append((mean, count))
    return tuple(clusters)


def run_trials(objective, n_trials: int, config: TrainConfig = TrainConfig()) -> TrialStats:
    """n_trials independent GD runs, advanced in one batched loop.

    Trial t draws its start from default_rng(config.seed + t), so results
    are identical whether trials run alone or batched.  All per-step work
    is elementwise across trials; finished trials freeze in place.
    """
    dim = objective.dim
    bounds = objective.init_bounds
    theta = np.empty((n_trials, dim))
    for t in range(n_trials):
        rng = np.random.default_rng(config.seed + t)
        theta[t] = rng.uniform(-bounds, bounds)

    lr = config.learning_rate
    active = np.ones(n_trials, dtype=bool)
    stop_epoch = np.full(n_trials, config.max_epochs, dtype=int)
    diverged = np.zeros(n_trials, dtype=bool)
    w = config.plateau_window
    history = np.empty((config.max_epochs + 1, n_trials))

    with np.errstate(over="ignore", invalid="ignore"):
        value = objective.loss(theta)
        limit = DIVERGE_FACTOR * np.maximum(1.0, np.abs(value))
        for epoch in range(config.max_epochs + 1):
            history[epoch] = value
            bad = active & (~np.isfinite(value) | (value > limit))
            if bad.any():
                diverged |= bad
                stop_epoch[bad] = epoch
                active &= ~bad
            if active.any():
                g = objective.grad(theta)
                gnorm = np.sqrt(np.sum(g * g, axis=-1))
                done = active & (gnorm < config.grad_tol)
                if epoch > w:
                    drop = history[epoch - w] - value
                    done |= active & (drop <= config.plateau_rel * np.maximum(1.0, np.abs(history[epoch - w])))
                if done.any():
                    stop_epoch[done] = epoch
                    active &= ~done
            if not active.any() or epoch == config.max_epochs:
                history[epoch + 1:] = value
                break
            theta[active] -= lr * g[active]
            new_value = objective.loss(theta)
            value = np.where(active, new_value, value)

    final_losses = value.copy()
    labels = []
    counts: dict = {}
    for t in range(n_trials):
        label = "diverged" if diverged[t] else objective.classify(float(final_losses[t]), theta[t])
        labels.append(label)
        counts[label] = counts.get(label, 0) + 1

    return TrialStats(
        labels=tuple(labels),
        final_losses=final_losses,
        final_thetas=theta,
        epochs=stop_epoch,
        counts=counts,
        clusters=loss_clusters(final_losses[~diverged]),
    )


# ---------------------------------------------------------------------------
# random masked nets
# ---------------------------------------------------------------------------

def _repair_mask(mask: np.ndarray, rng) -> np.ndarray:
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.integers(mask.shape[1])] = True
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(mask.shape[0]), j] = True
    return mask


def random_sparse_mask(shape, sparsity: float, seed: int = 0, repair: bool | None = None):
    """Bernoulli masks with zero-probability `sparsity` per entry.

    One (p, d) shape: returns a single mask; a draw with an all-zero row or
    column raises unless repair=True.  A list of layer shapes: returns
    (masks, realized_sparsity) with every row/column repaired to be nonzero,
    which keeps the stacked net effective (bias-free removal rules find
    nothing to strip).
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    rng = np.random.default_rng(seed)
    single = len(shape) == 2 and all(isinstance(v, (int, np.integer)) for v in shape)
    shapes = [tuple(shape)] if single else [tuple(s) for s in shape]

    masks = []
    for shp in shapes:
        m = rng.random(shp) >= sparsity
        if single and not repair:
            if not m.any(axis=1).all():
                raise ValueError("mask draw has an all-zero row; pick another seed or repair=True")
            if not m.any(axis=0).all():
                raise ValueError("mask draw has an all-zero column; pick another seed or repair=True")
        else:
            m = _repair_mask(m, rng)
        masks.append(m)

    if single:
        return masks[0]
    total = sum(m.size for m in masks)
    zeros = sum(int(m.size - np.count_nonzero(m)) for m in masks)
    return masks, zeros / total


def random_effective_net(dims, sparsity: float, seed: int = 0,
                         activation: Activation | None = None,
                         init_scale: float = 1.0):
    """Random masked net over the dim chain with all rows/cols kept nonzero.

    Returns (net, realized_sparsity).  dims = (d_x, p_1, ..., d_y).
    """
    dims = [int(d) for d in dims]
    if len(dims) < 3:
        raise ValueError("need at least input, one hidden and output dims")
    shapes = [(dims[k + 1], dims[k]) for k in range(len(dims) - 1)]
    masks, realized = random_sparse_mask(shapes, sparsity, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    layers = []
    for mask in masks:
        bound = init_scale / math.sqrt(mask.shape[1])
        W = rng.uniform(-bound, bound, size=mask.shape) * mask
        layers.append(SparseLayer(W, mask))
    act = activation if activation is not None else Activation.linear()
    return SparseNet(tuple(layers), act), realized
