"""Derivatives, spectra and stationary-point classification.

The analytic gradient/Hessian here cover the grouped two-layer linear
objective

    L(U, W) = 0.5 * || sum_i U_i W_i Z_i  -  Y ||_F^2

which is where the interesting certified points live.  Everything else is
handled by finite differences plus direct loss probes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .network import SparseNet, forward

GRAD_FD_STEP = 1e-5
HESS_FD_STEP = 1e-4
NULL_TOL = 1e-6


@dataclass(frozen=True)
class GroupBlock:
    """One grouped factor: contribution u @ w @ z to the fit."""

    u: np.ndarray  # (d_y, p_i)
    w: np.ndarray  # (p_i, d_i)
    z: np.ndarray  # (d_i, n)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        if u.shape[1] != w.shape[0] or w.shape[1] != z.shape[0]:
            raise ValueError(f"inconsistent block shapes {u.shape} {w.shape} {z.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class TwoLayerLinearInstance:
    """Grouped two-layer linear objective with target Y (d_y, n)."""

    groups: tuple
    Y: np.ndarray

    def __post_init__(self):
        groups = tuple(g if isinstance(g, GroupBlock) else GroupBlock(*g) for g in self.groups)
        if not groups:
            raise ValueError("need at least one group")
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        d_y = groups[0].u.shape[0]
        n = groups[0].z.shape[1]
        for g in groups:
            if g.u.shape[0] != d_y or g.z.shape[1] != n:
                raise ValueError("groups disagree on d_y or n")
        if Y.shape != (d_y, n):
            raise ValueError(f"Y must be ({d_y}, {n})")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "Y", Y)

    @property
    def d_y(self) -> int:
        return self.groups[0].u.shape[0]

    @property
    def n(self) -> int:
        return self.groups[0].z.shape[1]

    def residual(self) -> np.ndarray:
        R = -self.Y
        for g in self.groups:
            R = R + g.u @ g.w @ g.z
        return R

    def loss(self) -> float:
        R = self.residual()
        return 0.5 * float(np.sum(R * R))

    def with_blocks(self, us, ws) -> "TwoLayerLinearInstance":
        groups = tuple(GroupBlock(u, w, g.z) for u, w, g in zip(us, ws, self.groups))
        return TwoLayerLinearInstance(groups, self.Y)

    # flat parameter vector = concat(vec(u_1), vec(w_1), vec(u_2), ...)
    def pack(self) -> np.ndarray:
        return np.concatenate([np.concatenate([g.u.ravel(), g.w.ravel()]) for g in self.groups])

    def unpack(self, theta: np.ndarray) -> "TwoLayerLinearInstance":
        us, ws, off = [], [], 0
        for g in self.groups:
            nu, nw = g.u.size, g.w.size
            us.append(theta[off:off + nu].reshape(g.u.shape))
            ws.append(theta[off + nu:off + nu + nw].reshape(g.w.shape))
            off += nu + nw
        if off != theta.size:
            raise ValueError("flat vector has wrong length")
        return self.with_blocks(us, ws)

    def loss_at(self, theta: np.ndarray) -> float:
        return self.unpack(np.asarray(theta, dtype=float)).loss()


def instance_from_net(net: SparseNet, X: np.ndarray, Y: np.ndarray) -> TwoLayerLinearInstance:
    """Grouped view of a 2-layer linear network (dense output layer)."""
    from .network import decompose_patterns

    if len(net.layers) != 2:
        raise ValueError("grouped instance requires exactly 2 layers")
    if net.activation.kind != "linear":
        raise ValueError("grouped instance requires the linear activation")
    dec = decompose_patterns(net.layers[0], X)
    ws = dec.weight_blocks(net.layers[0].weights)
    us = dec.output_blocks(net.layers[1].weights)
    groups = tuple(GroupBlock(u, w, z) for u, w, z in zip(us, ws, dec.data_slices))
    return TwoLayerLinearInstance(groups, np.asarray(Y, dtype=float))


def grad_two_layer_linear(inst: TwoLayerLinearInstance) -> list:
    """[(dL/dU_i, dL/dW_i)] with R = sum U_i W_i Z_i - Y:
    dU_i = R (W_i Z_i)^T,  dW_i = U_i^T R Z_i^T."""
    R = inst.residual()
    out = []
    for g in inst.groups:
        out.append((R @ (g.w @ g.z).T, g.u.T @ R @ g.z.T))
    return out


def grad_flat(inst: TwoLayerLinearInstance) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([gu.ravel(), gw.ravel()]) for gu, gw in grad_two_layer_linear(inst)]
    )


def hessian_two_layer_linear(inst: TwoLayerLinearInstance) -> np.ndarray:
    """Exact Hessian for the two-group, width-1-per-group shape.

    Parameter order (u_1, w_1, u_2, w_2) flattened; for the canonical
    d_y = 2, d_i = 2 case this is the 8x8 matrix.  Other shapes are not
    supported analytically; use fd_hessian on inst.loss_at instead.
    """
    if len(inst.groups) != 2 or any(g.u.shape[1] != 1 for g in inst.groups):
        raise ValueError(
            "analytic Hessian covers exactly 2 groups of width 1; "
            "use fd_hessian(inst.loss_at, inst.pack()) for other shapes"
        )
    g1, g2 = inst.groups
    u1, w1 = g1.u[:, 0], g1.w[0, :]
    u2, w2 = g2.u[:, 0], g2.w[0, :]
    d_y, d1, d2 = u1.size, w1.size, w2.size
    G11 = g1.z @ g1.z.T
    G12 = g1.z @ g2.z.T
    G22 = g2.z @ g2.z.T
    R = inst.residual()
    RZ1 = R @ g1.z.T
    RZ2 = R @ g2.z.T
    I = np.eye(d_y)

    n = 2 * d_y + d1 + d2
    H = np.zeros((n, n))
    s = {
        "u1": slice(0, d_y),
        "w1": slice(d_y, d_y + d1),
        "u2": slice(d_y + d1, 2 * d_y + d1),
        "w2": slice(2 * d_y + d1, n),
    }

    def put(a, b, block):
        H[s[a], s[b]] = block
        if a != b:
            H[s[b], s[a]] = block.T

    put("u1", "u1", (w1 @ G11 @ w1) * I)
    put("u1", "w1", np.outer(u1, G11 @ w1) + RZ1)
    put("u1", "u2", (w2 @ G12.T @ w1) * I)
    put("u1", "w2", np.outer(u2, G12.T @ w1))
    put("w1", "w1", (u1 @ u1) * G11)
    put("w1", "u2", np.outer(G12 @ w2, u1))
    put("w1", "w2", (u1 @ u2) * G12)
    put("u2", "u2", (w2 @ G22 @ w2) * I)
    put("u2", "w2", np.outer(u2, G22 @ w2) + RZ2)
    put("w2", "w2", (u2 @ u2) * G22)

    asym = np.max(np.abs(H - H.T))
    if asym > 1e-12 * max(1.0, np.max(np.abs(H))):
        raise AssertionError(f"Hessian asymmetry {asym}")
    return H


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_gradient(f, x: np.ndarray, h: float = GRAD_FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_hessian(f, x: np.ndarray, h: float = HESS_FD_STEP) -> np.ndarray:
    """Central second-difference Hessian, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h**2)
            H[j, i] = H[i, j]
    return H


def grad_fd(net: SparseNet, X: np.ndarray, Y: np.ndarray, h: float = GRAD_FD_STEP) -> list:
    """FD loss gradient of a network; masked coordinates are exactly 0.

    Returns [(dW_layer, dbias_layer or None), ...].
    """
    from .network import loss as net_loss

    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    weights = [l.weights.copy() for l in net.layers]
    biases = [None if l.bias is None else l.bias.copy() for l in net.layers]

    def eval_loss():
        return net_loss(net.with_layer_weights(weights, biases), X, Y)

    out = []
    for li, layer in enumerate(net.layers):
        gw = np.zeros_like(layer.weights)
        for (i, j) in zip(*np.nonzero(layer.mask)):
            orig = weights[li][i, j]
            weights[li][i, j] = orig + h
            fp = eval_loss()
            weights[li][i, j] = orig - h
            fm = eval_loss()
            weights[li][i, j] = orig
            gw[i, j] = (fp - fm) / (2 * h)
        gb = None
        if layer.bias is not None:
            gb = np.zeros_like(layer.bias)
            for i in np.flatnonzero(layer.bias_mask):
                orig = biases[li][i]
                biases[li][i] = orig + h
                fp = eval_loss()
                biases[li][i] = orig - h
                fm = eval_loss()
                biases[li][i] = orig
                gb[i] = (fp - fm) / (2 * h)
        out.append((gw, gb))
    return out


# ---------------------------------------------------------------------------
# spectra and stationary-point classification
# ---------------------------------------------------------------------------

def sym_eig(A: np.ndarray):
    """Eigendecomposition of a symmetric matrix, ascending eigenvalues.

    Rejects visibly asymmetric input instead of silently symmetrizing.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(A)
    return w, V


@dataclass(frozen=True)
class StationaryReport:
    grad_norm: float
    eigenvalues: np.ndarray
    null_basis: np.ndarray  # (n, k), columns span the numerical kernel
    min_probe: str  # strict_local_min | local_min_nonstrict | saddle | inconclusive
    probe_evidence: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "grad_norm": self.grad_norm,
            "eigenvalues": list(map(float, self.eigenvalues)),
            "null_basis": self.null_basis.tolist(),
            "min_probe": self.min_probe,
            "probe_evidence": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                               for k, v in self.probe_evidence.items()},
        }


def classify_stationary(
    loss_fn,
    point: np.ndarray,
    grad_fn=None,
    hessian_fn=None,
    null_tol: float = NULL_TOL,
    probe_radius: float = 1e-2,
    n_probes: int = 500,
    seed: int = 0,
) -> StationaryReport:
    """Probe-backed second-order classification of a candidate minimum.

    Gradient/Hessian default to finite differences of ``loss_fn``.  Probes
    evaluate the loss directly along random unit directions and along the
    numerical kernel of the Hessian (where flat quadratics hide quartic
    behavior), each at radii {r, r/10}.  The verdict is conservative:
    "strict_local_min" only if every probe strictly increased the loss.
    """
    x0 = np.asarray(point, dtype=float)
    f0 = float(loss_fn(x0))
    g = np.asarray(grad_fn(x0), dtype=float) if grad_fn is not None else fd_gradient(loss_fn, x0)
    grad_norm = float(np.linalg.norm(g))
    H = np.asarray(hessian_fn(x0), dtype=float) if hessian_fn is not None else fd_hessian(loss_fn, x0)
    evals, evecs = sym_eig(H)

    lam_scale = float(np.max(np.abs(evals))) if evals.size else 0.0
    null_cols = np.flatnonzero(np.abs(evals) <= null_tol * max(lam_scale, 1e-300))
    null_basis = evecs[:, null_cols]

    scale = max(1.0, abs(f0))
    dec_tol = 1e-12 * scale  # any decrease beyond this kills minimality
    pos_tol = 1e-14 * scale  # strictness demands growth above noise

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_probes, x0.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probes = [dirs]
    if null_basis.shape[1]:
        # kernel directions and random kernel mixtures, both signs
        mix = rng.standard_normal((max(2 * n_probes // 10, 8), null_basis.shape[1]))
        mix /= np.linalg.norm(mix, axis=1, keepdims=True)
        kdirs = mix @ null_basis.T
        probes.append(np.vstack([null_basis.T, -null_basis.T, kdirs, -kdirs]))
    all_dirs = np.vstack(probes)

    worst = np.inf
    for r in (probe_radius, probe_radius / 10.0):
        for d in all_dirs:
            delta = float(loss_fn(x0 + r * d)) - f0
            worst = min(worst, delta)

    evidence = {
        "f0": f0,
        "worst_probe_delta": worst,
        "n_directions": int(all_dirs.shape[0]),
        "radii": [probe_radius, probe_radius / 10.0],
        "null_dim": int(null_basis.shape[1]),
    }

    if grad_norm > 1e-6 * scale:
        verdict = "inconclusive"
    elif evals.size and evals[0] < -null_tol * max(lam_scale, 1e-300):
        verdict = "saddle"
    elif worst < -dec_tol:
        verdict = "saddle"
    elif worst > pos_tol:
        verdict = "strict_local_min"
    elif worst >= -dec_tol:
        verdict = "local_min_nonstrict"
    else:
        verdict = "inconclusive"

    return StationaryReport(
        grad_norm=grad_norm,
        eigenvalues=evals,
        null_basis=null_basis,
        min_probe=verdict,
        probe_evidence=evidence,
    )


def report_to_json_str(report: StationaryReport) -> str:
    return json.dumps(report.to_json())
