"""Certified bad points of masked-network objectives.

Three constructions, each self-validating (the builders recompute the
defining identities and abort on any mismatch rather than hand out an
unverified instance):

* a spurious strict local minimum of a two-group masked linear net
  (dense output layer, loss 0.5 ||.||_F^2);
* a spurious valley of a 3-input/2-hidden/3-output net with both layers
  masked (unscaled ||.||_F^2 loss, so the valley level is y4^2 on the nose);
* a spurious valley of a single-channel length-2 SAME-mode conv layer
  (loss 0.5 ||.||_F^2, valley level exactly 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activations import Activation
from .calculus import (
    TwoLayerLinearInstance,
    GroupBlock,
    StationaryReport,
    classify_stationary,
    grad_flat,
    hessian_two_layer_linear,
    sym_eig,
)
from .convmodes import ConvSpec, conv_matrix
from .network import SparseLayer, SparseNet


class ConstructionError(ValueError):
    """A certified instance failed its own defining identities."""


# ---------------------------------------------------------------------------
# spurious strict minimum (masked linear, dense output layer)
# ---------------------------------------------------------------------------

_SQ = math.sqrt
Z1_REF = np.array([[_SQ(0.9), 0.0, _SQ(0.1), 0.0], [0.0, _SQ(0.8), 0.0, _SQ(0.2)]])
Z2_REF = np.array([[_SQ(0.1), 0.0, _SQ(0.9), 0.0], [0.0, _SQ(0.2), 0.0, _SQ(0.8)]])
A1_REF = np.array([[7 / 8, 7 / 9], [3 / 4, 5 / 3]])
A2_REF = np.array([[15 / 8, 16 / 9], [7 / 4, 11 / 3]])

RESIDUAL_Z1_REF = np.array([[-0.4, 0.4], [0.4, -0.4]])
RESIDUAL_Z2_REF = np.array([[-0.8, 0.4], [0.4, -0.2]])
MIN_LOSS_REF = 221.0 / 360.0
BETTER_LOSS_BOUND = 0.572

HESSIAN_REF = np.array([
    [2.0, 0.0, 0.6, 1.4, 2.2, 0.0, 0.6, 0.8],
    [0.0, 2.0, 1.4, 0.6, 0.0, 2.2, 1.2, 1.6],
    [0.6, 1.4, 2.0, 0.0, 0.6, 0.6, 1.8, 0.0],
    [1.4, 0.6, 0.0, 2.0, 1.6, 1.6, 0.0, 2.4],
    [2.2, 0.0, 0.6, 1.6, 5.0, 0.0, 0.2, 2.4],
    [0.0, 2.2, 0.6, 1.6, 0.0, 5.0, 2.4, 3.8],
    [0.6, 1.2, 1.8, 0.0, 0.2, 2.4, 5.0, 0.0],
    [0.8, 1.6, 0.0, 2.4, 2.4, 3.8, 0.0, 5.0],
])
EIGENVALUES_REF = (0.0, 0.0, 0.0997, 1.2886, 1.8647, 5.2568, 7.1369, 12.3533)


@dataclass(frozen=True)
class SpuriousMinimumInstance:
    """Two groups of one neuron each, parameters (u1, w1, u2, w2) in R^2."""

    z1: np.ndarray
    z2: np.ndarray
    Y: np.ndarray
    theta: np.ndarray        # flat (u1, w1, u2, w2), the certified minimum
    theta_prime: np.ndarray  # a strictly better point elsewhere
    expected_hessian: np.ndarray = field(default_factory=lambda: HESSIAN_REF.copy())
    expected_eigenvalues: tuple = EIGENVALUES_REF
    loss_reference: float = MIN_LOSS_REF
    better_loss_bound: float = BETTER_LOSS_BOUND

    def as_group_instance(self, theta=None) -> TwoLayerLinearInstance:
        th = self.theta if theta is None else np.asarray(theta, dtype=float)
        u1, w1, u2, w2 = th[0:2], th[2:4], th[4:6], th[6:8]
        groups = (
            GroupBlock(u1.reshape(2, 1), w1.reshape(1, 2), self.z1),
            GroupBlock(u2.reshape(2, 1), w2.reshape(1, 2), self.z2),
        )
        return TwoLayerLinearInstance(groups, self.Y)

    def loss_at(self, theta) -> float:
        return self.as_group_instance(theta).loss()

    def grad_at(self, theta) -> np.ndarray:
        return grad_flat(self.as_group_instance(theta))

    def hessian_at(self, theta) -> np.ndarray:
        return hessian_two_layer_linear(self.as_group_instance(theta))

    def as_network(self, theta=None) -> SparseNet:
        """The same objective as a masked 2-layer net on X = [Z1; Z2]."""
        th = self.theta if theta is None else np.asarray(theta, dtype=float)
        u1, w1, u2, w2 = th[0:2], th[2:4], th[4:6], th[6:8]
        W = np.array([[w1[0], w1[1], 0.0, 0.0], [0.0, 0.0, w2[0], w2[1]]])
        mask = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=bool)
        U = np.column_stack([u1, u2])
        layers = (SparseLayer(W, mask), SparseLayer(U, np.ones_like(U, dtype=bool)))
        return SparseNet(layers, Activation.linear())

    @property
    def X(self) -> np.ndarray:
        return np.vstack([self.z1, self.z2])


def spurious_minimum_instance() -> SpuriousMinimumInstance:
    """Build and self-validate the certified strict-minimum instance.

    The target is Y = A1 Z1 + A2 Z2 for fixed rational A1, A2; the data
    groups are orthonormal within themselves and correlated across
    (Z1 Z2^T = diag(0.6, 0.8)), which is what pins the gradient to zero
    at theta while leaving room for a strictly better point.
    """
    theta = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0])
    theta_prime = np.array([0.25, 1.0, 0.65, 2.2, 0.8, 1.0, 2.2, 2.9])
    Y = A1_REF @ Z1_REF + A2_REF @ Z2_REF
    inst = SpuriousMinimumInstance(z1=Z1_REF.copy(), z2=Z2_REF.copy(), Y=Y,
                                   theta=theta, theta_prime=theta_prime)

    problems = []

    def check(name, got, want, tol):
        err = float(np.max(np.abs(np.asarray(got) - np.asarray(want))))
        if err > tol:
            problems.append(f"{name}: max deviation {err:.3e} > {tol:.0e}")

    I2 = np.eye(2)
    check("Z1 Z1^T = I", inst.z1 @ inst.z1.T, I2, 1e-12)
    check("Z2 Z2^T = I", inst.z2 @ inst.z2.T, I2, 1e-12)
    check("Z1 Z2^T = diag(0.6, 0.8)", inst.z1 @ inst.z2.T, np.diag([0.6, 0.8]), 1e-12)

    gi = inst.as_group_instance()
    R = gi.residual()
    check("R Z1^T", R @ inst.z1.T, RESIDUAL_Z1_REF, 1e-12)
    check("R Z2^T", R @ inst.z2.T, RESIDUAL_Z2_REF, 1e-12)
    check("loss at theta", gi.loss(), MIN_LOSS_REF, 1e-12)

    loss_prime = inst.loss_at(theta_prime)
    if not (loss_prime < BETTER_LOSS_BOUND < MIN_LOSS_REF):
        problems.append(
            f"better point: loss {loss_prime!r} must be < {BETTER_LOSS_BOUND} < {MIN_LOSS_REF!r}"
        )

    if problems:
        raise ConstructionError("minimum instance failed validation: " + "; ".join(problems))
    return inst


@dataclass(frozen=True)
class MinimumVerification:
    report: StationaryReport
    grad_zero: bool
    hessian_match: bool
    hessian_psd: bool
    eigs_match: bool
    strict_probe_pass: bool
    better_point_exists: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (self.grad_zero and self.hessian_match and self.hessian_psd
                and self.eigs_match and self.strict_probe_pass and self.better_point_exists)

    def to_json(self) -> dict:
        out = {
            "grad_zero": self.grad_zero,
            "hessian_match": self.hessian_match,
            "hessian_psd": self.hessian_psd,
            "eigs_match": self.eigs_match,
            "strict_probe_pass": self.strict_probe_pass,
            "better_point_exists": self.better_point_exists,
            "passed": self.passed,
            "report": self.report.to_json(),
            "details": {k: float(v) for k, v in self.details.items()},
        }
        return out


def verify_spurious_minimum(inst: SpuriousMinimumInstance, n_probes: int = 500,
                            probe_radius: float = 1e-2, seed: int = 0) -> MinimumVerification:
    """Re-derive every certified property of the minimum instance."""
    H = inst.hessian_at(inst.theta)
    evals, _ = sym_eig(H)
    report = classify_stationary(
        inst.loss_at, inst.theta,
        grad_fn=inst.grad_at, hessian_fn=inst.hessian_at,
        probe_radius=probe_radius, n_probes=n_probes, seed=seed,
    )
    hess_err = float(np.max(np.abs(H - inst.expected_hessian)))
    eig_err = float(np.max(np.abs(evals - np.asarray(inst.expected_eigenvalues))))
    loss_prime = inst.loss_at(inst.theta_prime)
    loss_theta = inst.loss_at(inst.theta)
    return MinimumVerification(
        report=report,
        grad_zero=report.grad_norm < 1e-10,
        hessian_match=hess_err < 1e-12,
        hessian_psd=bool(evals[0] >= -1e-8 * max(1.0, float(evals[-1]))),
        eigs_match=eig_err <= 1e-3,
        strict_probe_pass=report.min_probe == "strict_local_min",
        better_point_exists=bool(loss_prime < inst.better_loss_bound < loss_theta),
        details={
            "hessian_max_err": hess_err,
            "eig_max_err": eig_err,
            "loss_theta": loss_theta,
            "loss_theta_prime": loss_prime,
            "grad_norm": report.grad_norm,
        },
    )


# ---------------------------------------------------------------------------
# spurious valley (both layers masked)
# ---------------------------------------------------------------------------

# STRICT_Y satisfies every recorded y-constraint;
# EXPERIMENT_Y trips "y3 > 4*y4" but still builds (flag-only).
STRICT_Y = (1.0, 2.0, 9.0, 2.0)
EXPERIMENT_Y = (1.0, 2.0, 6.0, 2.0)


@dataclass(frozen=True)
class SpuriousValleyInstance:
    """8-parameter masked 2-layer net on X = I_3 with an unscaled
    squared-Frobenius loss.

    theta = (w1, w2, w3, w4, w5, w6, w7, w8): first layer rows
    (w5, w6, 0), (0, w7, w8); second layer [[w1, 0], [w2, w3], [0, w4]].
    On the valley (w4 = 0 branch) the loss is pinned at y4^2 while a
    disconnected region reaches y1^2 (y3 / (y2+y3))^2 < y4^2.
    """

    y: tuple
    activation: Activation
    a: float
    b: float
    valley_theta: np.ndarray
    escape_theta: np.ndarray
    constraints: dict
    Y: np.ndarray

    @property
    def valley_loss(self) -> float:
        return self.y[3] ** 2

    @property
    def escape_loss(self) -> float:
        y1, y2, y3, _ = self.y
        return y1 ** 2 * (y3 / (y2 + y3)) ** 2

    @property
    def constraints_ok(self) -> bool:
        return all(self.constraints.values())

    def loss(self, theta) -> np.ndarray | float:
        """Unscaled ||M(theta) - Y||_F^2, broadcasting over leading axes."""
        th = np.asarray(theta, dtype=float)
        y1, y2, y3, y4 = self.y
        s = self.activation(th[..., 4:8])
        s5, s6, s7, s8 = (s[..., i] for i in range(4))
        w1, w2, w3, w4 = (th[..., i] for i in range(4))
        L = ((w1 * s5 - y1) ** 2 + (w1 * s6 - y1) ** 2
             + (w2 * s5 - y2) ** 2 + (w2 * s6 + w3 * s7 - (y2 + y3)) ** 2
             + (w3 * s8) ** 2 + (w4 * s7) ** 2 + (w4 * s8 - y4) ** 2)
        return L if L.ndim else float(L)

    def grad(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        y1, y2, y3, y4 = self.y
        z = th[..., 4:8]
        s = self.activation(z)
        ds = self.activation.derivative(z)
        s5, s6, s7, s8 = (s[..., i] for i in range(4))
        w1, w2, w3, w4 = (th[..., i] for i in range(4))
        # residual entries, scaled by the d/dM factor 2
        r11 = 2 * (w1 * s5 - y1)
        r12 = 2 * (w1 * s6 - y1)
        r21 = 2 * (w2 * s5 - y2)
        r22 = 2 * (w2 * s6 + w3 * s7 - (y2 + y3))
        r23 = 2 * (w3 * s8)
        r32 = 2 * (w4 * s7)
        r33 = 2 * (w4 * s8 - y4)
        g = np.empty_like(th)
        g[..., 0] = r11 * s5 + r12 * s6
        g[..., 1] = r21 * s5 + r22 * s6
        g[..., 2] = r22 * s7 + r23 * s8
        g[..., 3] = r32 * s7 + r33 * s8
        g[..., 4] = (r11 * w1 + r21 * w2) * ds[..., 0]
        g[..., 5] = (r12 * w1 + r22 * w2) * ds[..., 1]
        g[..., 6] = (r22 * w3 + r32 * w4) * ds[..., 2]
        g[..., 7] = (r23 * w3 + r33 * w4) * ds[..., 3]
        return g

    def as_network(self, theta=None) -> SparseNet:
        th = self.valley_theta if theta is None else np.asarray(theta, dtype=float)
        w1, w2, w3, w4, w5, w6, w7, w8 = th
        layer1 = SparseLayer(
            np.array([[w5, w6, 0.0], [0.0, w7, w8]]),
            np.array([[1, 1, 0], [0, 1, 1]], dtype=bool),
        )
        layer2 = SparseLayer(
            np.array([[w1, 0.0], [w2, w3], [0.0, w4]]),
            np.array([[1, 0], [1, 1], [0, 1]], dtype=bool),
        )
        return SparseNet((layer1, layer2), self.activation)


def _pick_scale(act: Activation) -> float:
    """Choose a with 1/a in the positive part of sigma's range."""
    if act.kind == "tanh":
        return 2.0
    if act.kind == "shifted_sigmoid":
        return 4.0
    if act.kind == "sigmoid":
        return 4.0
    return 1.0  # unbounded-above kinds reach 1


def valley_instance(y_values=STRICT_Y, activation: Activation | None = None) -> SpuriousValleyInstance:
    """Build and self-validate the two-layer valley instance.

    Requires sigma(0) = 0 and a positive value in sigma's range.  The
    y-constraints (y3 > 4 y4 > 4 y1 > 0, y2 > 0) are recorded as booleans;
    violating them still builds the instance (the probes' lower bound is
    then not guaranteed) so measured/legacy value sets stay usable.
    """
    act = activation if activation is not None else Activation.tanh()
    y1, y2, y3, y4 = (float(v) for v in y_values)
    if float(act(0.0)) != 0.0:
        raise ConstructionError(f"valley construction needs sigma(0) = 0, got {act(0.0)} for {act.kind}")

    a = _pick_scale(act)
    b = a
    for target in (1.0 / a, 1.0 / b, y2 / ((y2 + y3) * a)):
        if not act.contains(target):
            raise ConstructionError(f"no valid scale: {target} outside range of {act.kind}")

    inv = act.inverse
    valley_theta = np.array([
        y1 * a, y2 * a, y3 * b, 0.0,
        inv(1.0 / a), inv(1.0 / a), inv(1.0 / b), 0.0,
    ])
    escape_theta = np.array([
        y1 * a, (y2 + y3) * a, 0.0, y4 * a,
        inv(y2 / ((y2 + y3) * a)), inv(1.0 / a), 0.0, inv(1.0 / a),
    ])
    constraints = {
        "y1 > 0": y1 > 0,
        "y2 > 0": y2 > 0,
        "y4 > y1": y4 > y1,
        "y3 > 4*y4": y3 > 4 * y4,
    }
    Y = np.array([[y1, y1, 0.0], [y2, y2 + y3, 0.0], [0.0, 0.0, y4]])
    inst = SpuriousValleyInstance(
        y=(y1, y2, y3, y4), activation=act, a=a, b=b,
        valley_theta=valley_theta, escape_theta=escape_theta,
        constraints=constraints, Y=Y,
    )

    problems = []
    lv = inst.loss(valley_theta)
    if abs(lv - inst.valley_loss) > 1e-12 * max(1.0, inst.valley_loss):
        problems.append(f"valley loss {lv!r} != y4^2 = {inst.valley_loss!r}")
    le = inst.loss(escape_theta)
    if abs(le - inst.escape_loss) > 1e-12 * max(1.0, inst.escape_loss):
        problems.append(f"escape loss {le!r} != {inst.escape_loss!r}")
    if inst.constraints["y4 > y1"] and not (inst.escape_loss < y1 ** 2 < inst.valley_loss):
        problems.append("ordering escape < y1^2 < y4^2 failed")
    if problems:
        raise ConstructionError("valley instance failed validation: " + "; ".join(problems))
    return inst


@dataclass(frozen=True)
class ValleyProbeReport:
    n_probes: int
    radius: float
    min_excess: float          # min over probes of loss - y4^2
    falsifications: int        # probes with loss < y4^2 - 1e-10
    delta4_strict_ok: bool     # dedicated w4 perturbations strictly increase

    @property
    def ok(self) -> bool:
        return self.falsifications == 0 and self.delta4_strict_ok

    def to_json(self) -> dict:
        return {
            "n_probes": self.n_probes,
            "radius": self.radius,
            "min_excess": self.min_excess,
            "falsifications": self.falsifications,
            "delta4_strict_ok": self.delta4_strict_ok,
            "ok": self.ok,
        }


def probe_valley(inst: SpuriousValleyInstance, n_probes: int = 1000,
                 radius: float = 0.05, seed: int = 0) -> ValleyProbeReport:
    """Random bounded perturbations around the valley point.

    The guarantee needs |delta_3| <= |w3|/2 and sigma(w7 + delta_7) within
    a factor 2 of sigma(w7); deltas are clipped/shrunk into that set.  The
    lower bound only holds for constraint-satisfying y-values.
    """
    rng = np.random.default_rng(seed)
    theta = inst.valley_theta
    act = inst.activation
    deltas = rng.uniform(-radius, radius, size=(n_probes, 8))
    w3 = theta[2]
    deltas[:, 2] = np.clip(deltas[:, 2], -abs(w3) / 2, abs(w3) / 2)
    s7 = float(act(theta[6]))
    for _ in range(60):  # shrink delta_7 until sigma stays within factor 2
        bad = np.abs(np.asarray(act(theta[6] + deltas[:, 6])) - s7) > abs(s7) / 2
        if not bad.any():
            break
        deltas[bad, 6] *= 0.5

    losses = inst.loss(theta[None, :] + deltas)
    excess = losses - inst.valley_loss
    falsifications = int(np.count_nonzero(excess < -1e-10))

    # w4-only perturbations must strictly increase the loss
    d4 = np.zeros((40, 8))
    d4[:, 3] = np.linspace(-radius, radius, 41)[np.arange(41) != 20]  # skip 0
    l4 = inst.loss(theta[None, :] + d4)
    delta4_strict_ok = bool(np.all(l4 > inst.valley_loss))

    return ValleyProbeReport(
        n_probes=n_probes,
        radius=radius,
        min_excess=float(np.min(excess)),
        falsifications=falsifications,
        delta4_strict_ok=delta4_strict_ok,
    )


@dataclass(frozen=True)
class GdObjective:
    """Plain-vector view of an instance for the gradient-descent trial
    harness: batched loss/grad plus per-coordinate init bounds."""

    dim: int
    loss: callable
    grad: callable
    init_bounds: np.ndarray
    classify: callable  # (final_loss, theta) -> label
    reference_level: float

    def __post_init__(self):
        b = np.asarray(self.init_bounds, dtype=float)
        if b.shape != (self.dim,):
            raise ValueError("init_bounds must match dim")
        object.__setattr__(self, "init_bounds", b)


def valley_trial_objective(inst: SpuriousValleyInstance) -> GdObjective:
    """Trial objective for the valley instance with fan-in init bounds.

    Labels: "valley" when the final loss sits at y4^2 (1e-3 relative) with
    |w4| <= 1e-4; "escaped" when the loss is at least 5% below y4^2;
    "other" otherwise.
    """
    y4sq = inst.valley_loss

    def classify(final_loss: float, theta: np.ndarray) -> str:
        if abs(final_loss - y4sq) <= 1e-3 * y4sq and abs(theta[3]) <= 1e-4:
            return "valley"
        if final_loss < y4sq * 0.95:
            return "escaped"
        return "other"

    bounds = np.array([1 / math.sqrt(2)] * 4 + [1 / math.sqrt(3)] * 4)
    return GdObjective(
        dim=8, loss=inst.loss, grad=inst.grad,
        init_bounds=bounds, classify=classify, reference_level=y4sq,
    )


# ---------------------------------------------------------------------------
# SAME-mode convolution valley (single channel)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvValleyInstance:
    """L(U, w) = 0.5 || U f(w) - diag(1, 4) ||_F^2 with f the SAME-mode
    conv matrix of a length-2 kernel on length-2 inputs.

    theta = (u1, u2, u3, u4, w1, w2), U row-major.  The branch w1 = 0,
    w2 = a > 0, u3 = 4/a holds the loss at exactly 1/2 under the bounded
    perturbations below, yet the witness point reaches loss 0.
    """

    target: np.ndarray
    a: float

    @property
    def valley_loss(self) -> float:
        return 0.5

    def f(self, w: np.ndarray) -> np.ndarray:
        return conv_matrix(ConvSpec(w, 2, "same"))

    def loss(self, theta) -> np.ndarray | float:
        th = np.asarray(theta, dtype=float)
        u = th[..., 0:4]
        w1, w2 = th[..., 4], th[..., 5]
        # entries of U @ [[w1, w2], [0, w1]] - target
        r11 = u[..., 0] * w1 - self.target[0, 0]
        r12 = u[..., 0] * w2 + u[..., 1] * w1 - self.target[0, 1]
        r21 = u[..., 2] * w1 - self.target[1, 0]
        r22 = u[..., 2] * w2 + u[..., 3] * w1 - self.target[1, 1]
        L = 0.5 * (r11 ** 2 + r12 ** 2 + r21 ** 2 + r22 ** 2)
        return L if L.ndim else float(L)

    def valley_point(self, a: float | None = None) -> np.ndarray:
        a = self.a if a is None else float(a)
        if a <= 0:
            raise ValueError("the valley branch needs a > 0")
        return np.array([0.0, 0.0, 4.0 / a, 0.0, 0.0, a])

    def global_witness(self) -> np.ndarray:
        return np.array([1.0, 0.0, 0.0, 4.0, 1.0, 0.0])


def conv_valley_instance(a: float = 1.0) -> ConvValleyInstance:
    inst = ConvValleyInstance(target=np.diag([1.0, 4.0]), a=float(a))
    problems = []
    for scale in (0.5, 1.0, 2.0, a):
        lv = inst.loss(inst.valley_point(scale))
        if lv != 0.5:
            problems.append(f"valley loss at a={scale} is {lv!r}, expected exactly 0.5")
    lw = inst.loss(inst.global_witness())
    if not lw < 1e-20:
        problems.append(f"global witness loss {lw!r} not < 1e-20")
    F = inst.f(np.array([1.0, 2.0]))
    if not np.array_equal(F, np.array([[1.0, 2.0], [0.0, 1.0]])):
        problems.append(f"conv matrix layout unexpected: {F.tolist()}")
    if problems:
        raise ConstructionError("conv valley failed validation: " + "; ".join(problems))
    return inst


def probe_conv_valley(inst: ConvValleyInstance, a: float | None = None,
                      n_probes: int = 500, seed: int = 0) -> ValleyProbeReport:
    """Bounded perturbations around the SAME-mode valley point.

    Bound set: |eps_i|, |delta_i| <= 0.1 with eps_3 further clipped to
    0.5/a, eps_2 to 0.25/a and delta_2 to 0.1 a.
    """
    a = inst.a if a is None else float(a)
    theta = inst.valley_point(a)
    rng = np.random.default_rng(seed)
    deltas = rng.uniform(-0.1, 0.1, size=(n_probes, 6))
    deltas[:, 1] = np.clip(deltas[:, 1], -0.25 / a, 0.25 / a)  # eps_2 (u2)
    deltas[:, 2] = np.clip(deltas[:, 2], -0.5 / a, 0.5 / a)    # eps_3 (u3)
    deltas[:, 5] = np.clip(deltas[:, 5], -0.1 * a, 0.1 * a)    # delta_2 (w2)
    losses = inst.loss(theta[None, :] + deltas)
    excess = losses - inst.valley_loss
    falsifications = int(np.count_nonzero(excess < -1e-12))

    d1 = np.zeros((40, 6))
    d1[:, 4] = np.linspace(-0.1, 0.1, 41)[np.arange(41) != 20]  # kernel w1 only
    l1 = inst.loss(theta[None, :] + d1)
    delta1_strict_ok = bool(np.all(l1 > inst.valley_loss))

    return ValleyProbeReport(
        n_probes=n_probes,
        radius=0.1,
        min_excess=float(np.min(excess)),
        falsifications=falsifications,
        delta4_strict_ok=delta1_strict_ok,
    )
