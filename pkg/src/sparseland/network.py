"""Masked feed-forward networks and the structural operations on them.

A network here is a stack of :class:`SparseLayer` objects (linear output,
shared hidden activation).  Masks are hard structural constraints: a masked
entry holds the exact float 0.0 at all times, and every operation in the
package preserves that invariant bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .activations import Activation


def _as_mask(mask, shape) -> np.ndarray:
    m = np.asarray(mask)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} != weight shape {shape}")
    vals = np.unique(m)
    if not np.all(np.isin(vals, (0, 1, True, False))):
        raise ValueError("mask entries must be 0/1")
    out = m.astype(bool).copy()
    out.setflags(write=False)
    return out


def _locked(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SparseLayer:
    """One affine layer with a binary mask (and optional masked bias).

    weights: (n_out, n_in); mask: same shape, True = trainable/connected.
    Masked positions must carry weight exactly 0.0; the constructor rejects
    anything else rather than silently projecting.
    """

    weights: np.ndarray
    mask: np.ndarray
    bias: np.ndarray | None = None
    bias_mask: np.ndarray | None = None

    def __post_init__(self):
        w = _locked(self.weights)
        if w.ndim != 2:
            raise ValueError("weights must be a 2-d array")
        m = _as_mask(self.mask, w.shape)
        bad = np.count_nonzero(w[~m])
        if bad:
            raise ValueError(f"{bad} masked weight entries are nonzero; masks pin exact zeros")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mask", m)
        if self.bias is not None:
            b = _locked(self.bias)
            if b.shape != (w.shape[0],):
                raise ValueError(f"bias shape {b.shape} != ({w.shape[0]},)")
            bm = _as_mask(self.bias_mask if self.bias_mask is not None else np.ones_like(b), b.shape)
            if np.count_nonzero(b[~bm]):
                raise ValueError("masked bias entries must be exactly zero")
            object.__setattr__(self, "bias", b)
            object.__setattr__(self, "bias_mask", bm)
        elif self.bias_mask is not None:
            raise ValueError("bias_mask given without bias")

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, weights, bias=None) -> "SparseLayer":
        """Same structure, new values (masked entries must still be zero)."""
        return SparseLayer(weights, self.mask, self.bias if bias is None else bias, self.bias_mask)

    def affine(self, X: np.ndarray) -> np.ndarray:
        out = self.weights @ X
        if self.bias is not None:
            out = out + self.bias[:, None]
        return out


@dataclass(frozen=True)
class SparseNet:
    """>= 2 masked affine layers; hidden activations, linear output layer."""

    layers: tuple
    activation: Activation

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 2:
            raise ValueError("a network needs at least 2 layers (one hidden)")
        for a, b in zip(layers, layers[1:]):
            if b.n_in != a.n_out:
                raise ValueError(f"layer dims mismatch: {a.n_out} -> {b.n_in}")
        object.__setattr__(self, "layers", layers)

    @property
    def dims(self) -> tuple:
        """(d_in, hidden..., d_out)"""
        return (self.layers[0].n_in,) + tuple(l.n_out for l in self.layers)

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layers) - 1

    def with_layer_weights(self, weights: Sequence[np.ndarray], biases=None) -> "SparseNet":
        new = []
        for i, layer in enumerate(self.layers):
            b = None if biases is None else biases[i]
            new.append(layer.with_weights(weights[i], b))
        return SparseNet(tuple(new), self.activation)


def forward(net: SparseNet, X: np.ndarray):
    """Network output plus the post-activation hidden outputs, in order.

    X is (d_in, n).  Returns (output (d_out, n), [hidden_1, ..., hidden_{L-1}]).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != net.layers[0].n_in:
        raise ValueError(f"X must be ({net.layers[0].n_in}, n)")
    hiddens = []
    h = X
    for layer in net.layers[:-1]:
        h = net.activation(layer.affine(h))
        hiddens.append(h)
    out = net.layers[-1].affine(h)
    return out, hiddens


def loss(net: SparseNet, X: np.ndarray, Y: np.ndarray) -> float:
    """0.5 * squared Frobenius residual of the network on (X, Y)."""
    out, _ = forward(net, X)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != out.shape:
        raise ValueError(f"Y shape {Y.shape} != output shape {out.shape}")
    r = out - Y
    return 0.5 * float(np.sum(r * r))


# ---------------------------------------------------------------------------
# pattern decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatternDecomposition:
    """Grouping of first-layer neurons by identical mask rows.

    patterns[i] is the shared boolean row of group i (first-occurrence
    order); groups[i] the neuron indices with that row; supports[i] the
    input indices the pattern keeps; data_slices[i] the corresponding row
    slice of X, shape (d_i, n).
    """

    patterns: tuple
    groups: tuple
    supports: tuple
    data_slices: tuple

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def group_widths(self) -> tuple:
        return tuple(len(g) for g in self.groups)

    @property
    def support_sizes(self) -> tuple:
        return tuple(len(s) for s in self.supports)

    def weight_blocks(self, W: np.ndarray) -> list:
        """Per-group dense blocks W_i = W[group rows][:, support]."""
        W = np.asarray(W, dtype=float)
        return [W[np.ix_(g, s)] for g, s in zip(self.groups, self.supports)]

    def output_blocks(self, U: np.ndarray) -> list:
        """Per-group output-weight blocks U_i = U[:, group rows]."""
        U = np.asarray(U, dtype=float)
        return [U[:, list(g)] for g in self.groups]


def decompose_patterns(layer: SparseLayer, X: np.ndarray) -> PatternDecomposition:
    """Group the layer's neurons by identical mask rows.

    Rows with an all-zero mask have no surviving inputs and make the grouped
    form ill-defined; run `effective_subnetwork` first to strip them.
    """
    X = np.asarray(X, dtype=float)
    mask = layer.mask
    if X.ndim != 2 or X.shape[0] != mask.shape[1]:
        raise ValueError(f"X must be ({mask.shape[1]}, n)")
    dead = np.flatnonzero(~mask.any(axis=1))
    if dead.size:
        raise ValueError(f"ineffective hidden neuron(s) {dead.tolist()}: all-zero mask row")
    patterns, groups = [], []
    seen = {}
    for j in range(mask.shape[0]):
        key = mask[j].tobytes()
        if key in seen:
            groups[seen[key]].append(j)
        else:
            seen[key] = len(patterns)
            patterns.append(mask[j])
            groups.append([j])
    supports = tuple(tuple(np.flatnonzero(p)) for p in patterns)
    slices = tuple(_locked(X[list(s), :]) for s in supports)
    return PatternDecomposition(
        patterns=tuple(_locked(p, dtype=bool) for p in patterns),
        groups=tuple(tuple(g) for g in groups),
        supports=supports,
        data_slices=slices,
    )


# ---------------------------------------------------------------------------
# effective subnetwork reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemovalReport:
    """What the reduction removed.

    removed_edges: (layer index 0-based, out neuron, in neuron) triples.
    neutered: (level, neuron) hidden nodes left with no surviving path role;
    their rows/columns are zero but the indexing of the net is unchanged.
    isolated_inputs / isolated_outputs: indices with no surviving connection.
    """

    removed_edges: tuple
    removed_biases: tuple
    neutered: tuple
    isolated_inputs: tuple
    isolated_outputs: tuple

    @property
    def is_effective(self) -> bool:
        return not self.isolated_inputs and not self.isolated_outputs


class NotEffectiveError(ValueError):
    """Raised when a reduced network has isolated inputs or outputs."""

    def __init__(self, report: RemovalReport, net: "SparseNet"):
        self.report = report
        self.reduced = net
        parts = []
        if report.isolated_inputs:
            parts.append(f"isolated inputs {list(report.isolated_inputs)}")
        if report.isolated_outputs:
            parts.append(f"isolated outputs {list(report.isolated_outputs)}")
        super().__init__("network not effective: " + ", ".join(parts))


def _reduce_masks(masks: list, bias_masks: list):
    """Iterative dead-connection removal on boolean layer masks (in place).

    Rules, applied to hidden nodes until a fixed point:
      * out-degree 0  -> drop all incoming edges and the node's bias
      * in-degree 0 and no live bias -> drop all outgoing edges
    A live bias keeps a node's outgoing edges: the constant still propagates.
    """
    L = len(masks)
    removed_edges, removed_biases = [], []
    changed = True
    while changed:
        changed = False
        for k in range(L - 1):  # hidden level k sits between layers k and k+1
            out_deg = masks[k + 1].sum(axis=0)
            in_deg = masks[k].sum(axis=1)
            has_bias = bias_masks[k] if bias_masks[k] is not None else np.zeros(len(in_deg), dtype=bool)
            for j in np.flatnonzero((out_deg == 0) & ((in_deg > 0) | has_bias)):
                for i in np.flatnonzero(masks[k][j]):
                    removed_edges.append((k, int(j), int(i)))
                masks[k][j, :] = False
                if has_bias[j]:
                    removed_biases.append((k, int(j)))
                    bias_masks[k][j] = False
                changed = True
            out_deg = masks[k + 1].sum(axis=0)
            in_deg = masks[k].sum(axis=1)
            has_bias = bias_masks[k] if bias_masks[k] is not None else np.zeros(len(in_deg), dtype=bool)
            for j in np.flatnonzero((in_deg == 0) & ~has_bias & (out_deg > 0)):
                for i in np.flatnonzero(masks[k + 1][:, j]):
                    removed_edges.append((k + 1, int(i), int(j)))
                masks[k + 1][:, j] = False
                changed = True
    return removed_edges, removed_biases


def effective_subnetwork(net: SparseNet, require_effective: bool = True):
    """Strip connections that cannot lie on any input-to-output path.

    Returns (reduced net, RemovalReport).  The reduced net has the same
    shapes; removed positions are masked and zeroed, so evaluating it agrees
    with the original whenever the removed parameters are zero.  With
    ``require_effective`` (default) a reduction that leaves an input or
    output with no connections raises :class:`NotEffectiveError` (the error
    carries the reduced net and report).
    """
    masks = [l.mask.copy() for l in net.layers]
    bias_masks = [None if l.bias_mask is None else l.bias_mask.copy() for l in net.layers]
    removed_edges, removed_biases = _reduce_masks(masks, bias_masks)

    neutered = []
    for k in range(len(masks) - 1):
        in_deg = masks[k].sum(axis=1)
        out_deg = masks[k + 1].sum(axis=0)
        has_bias = bias_masks[k] if bias_masks[k] is not None else np.zeros(len(in_deg), dtype=bool)
        for j in range(masks[k].shape[0]):
            if out_deg[j] == 0 or (in_deg[j] == 0 and not has_bias[j]):
                neutered.append((k + 1, int(j)))  # level numbering: inputs are level 0

    isolated_inputs = tuple(int(j) for j in np.flatnonzero(masks[0].sum(axis=0) == 0))
    isolated_outputs = tuple(int(i) for i in np.flatnonzero(masks[-1].sum(axis=1) == 0))

    report = RemovalReport(
        removed_edges=tuple(removed_edges),
        removed_biases=tuple(removed_biases),
        neutered=tuple(neutered),
        isolated_inputs=isolated_inputs,
        isolated_outputs=isolated_outputs,
    )

    new_layers = []
    for layer, m, bm in zip(net.layers, masks, bias_masks):
        w = layer.weights * m
        if layer.bias is not None:
            b = layer.bias * bm
            new_layers.append(SparseLayer(w, m, b, bm))
        else:
            new_layers.append(SparseLayer(w, m))
    reduced = SparseNet(tuple(new_layers), net.activation)

    if require_effective and not report.is_effective:
        raise NotEffectiveError(report, reduced)
    return reduced, report


# ---------------------------------------------------------------------------
# JSON network specs
# ---------------------------------------------------------------------------

def _parse_matrix(rows) -> np.ndarray:
    # entries may be numbers or decimal strings ("0.125"), row-major lists
    return np.array([[float(v) for v in row] for row in rows], dtype=float)


def net_from_json(obj) -> SparseNet:
    """Build a network from the JSON layout used by the CLI.

    {"layers": [{"weights": [[...]], "mask": [[...]], "bias": [...]?,
                 "bias_mask": [...]?}, ...],
     "activation": {"kind": ..., "params": {...}}}
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    layers = []
    for spec in obj["layers"]:
        w = _parse_matrix(spec["weights"])
        mask = np.array(spec.get("mask", np.ones_like(w)), dtype=bool)
        bias = spec.get("bias")
        bias_mask = spec.get("bias_mask")
        if bias is not None:
            bias = np.array([float(v) for v in bias])
            bias_mask = None if bias_mask is None else np.array(bias_mask, dtype=bool)
        layers.append(SparseLayer(w, mask, bias, bias_mask))
    act = Activation.from_json(obj.get("activation", {"kind": "linear"}))
    return SparseNet(tuple(layers), act)


def net_to_json(net: SparseNet) -> dict:
    out = {"layers": [], "activation": net.activation.to_json()}
    for layer in net.layers:
        spec = {
            "weights": layer.weights.tolist(),
            "mask": layer.mask.astype(int).tolist(),
        }
        if layer.bias is not None:
            spec["bias"] = layer.bias.tolist()
            spec["bias_mask"] = layer.bias_mask.astype(int).tolist()
        out["layers"].append(spec)
    return out
