"""Descent paths, structural condition checks and rank certificates.

The path builders emit piecewise-linear parameter paths whose sampled loss
is non-increasing; they are the constructive side of the "no spurious
valley" guarantees for grouped two-layer linear objectives.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from .activations import Activation
from .calculus import GroupBlock, TwoLayerLinearInstance
from .network import SparseNet, decompose_patterns, forward

RANK_TOL = 1e-8
ORTHO_TOL = 1e-10


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSegment:
    name: str
    start: np.ndarray  # flat parameter vector
    end: np.ndarray


@dataclass(frozen=True)
class PathTrace:
    """Sampled piecewise-linear path.  t runs over [0, 1); the terminal
    point is reported separately as (end_params, end_loss)."""

    t: np.ndarray
    losses: np.ndarray
    params: np.ndarray  # (len(t), dim)
    segments: tuple
    end_params: np.ndarray
    end_loss: float

    @property
    def monotone_violation(self) -> float:
        """Largest positive jump between consecutive sampled losses."""
        seq = np.append(self.losses, self.end_loss)
        return float(max(0.0, np.max(np.diff(seq))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["t", "loss"])
        for t, l in zip(self.t, self.losses):
            writer.writerow([repr(float(t)), repr(float(l))])
        writer.writerow([repr(1.0), repr(float(self.end_loss))])
        return buf.getvalue()


def _trace_segments(segments: list, loss_at, n_samples: int) -> PathTrace:
    # uniform global t grid plus every segment start; segment k covers
    # [k/K, (k+1)/K)
    K = len(segments)
    if K == 0:
        raise ValueError("path needs at least one segment")
    ts = set(np.linspace(0.0, 1.0, n_samples, endpoint=False).tolist())
    ts.update(k / K for k in range(K))
    ts = np.array(sorted(ts))
    params, losses = [], []
    for t in ts:
        k = min(int(t * K), K - 1)
        s = t * K - k
        theta = (1.0 - s) * segments[k].start + s * segments[k].end
        params.append(theta)
        losses.append(loss_at(theta))
    end = segments[-1].end
    return PathTrace(
        t=ts,
        losses=np.array(losses),
        params=np.array(params),
        segments=tuple(segments),
        end_params=end.copy(),
        end_loss=float(loss_at(end)),
    )


@dataclass(frozen=True)
class ZeroColumnResult:
    """Output rewrite U -> U0 with U0 @ W = U @ W and U0 zero on the
    redundant-row positions of W."""

    U0: np.ndarray
    rank: int
    permutation: tuple  # pivot order: first `rank` entries index basis rows of W
    basis_rows: tuple

    @property
    def zero_columns(self) -> tuple:
        return tuple(sorted(self.permutation[self.rank:]))


def zero_column_transform(U: np.ndarray, W: np.ndarray, tol: float = 1e-10) -> ZeroColumnResult:
    """Rewrite U so the product U @ W is carried by a row basis of W.

    W is (p, n) with rank r; the returned U0 satisfies U0 @ W = U @ W and
    has exact zeros in the p - r columns matching W's redundant rows
    (column-pivoted QR on W^T picks the basis).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    p = W.shape[0]
    if U.shape[1] != p:
        raise ValueError(f"U has {U.shape[1]} columns, W has {p} rows")
    _, Rq, piv = scipy.linalg.qr(W.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rq))
    top = diag[0] if diag.size else 0.0
    r = int(np.count_nonzero(diag > tol * top)) if top > 0 else 0
    basis, dep = piv[:r], piv[r:]
    U0 = np.zeros_like(U)
    if r:
        U0[:, basis] = U[:, basis]
        if dep.size:
            # rows W[dep] = C @ W[basis]; fold the dependent columns of U in
            C = np.linalg.lstsq(W[basis].T, W[dep].T, rcond=None)[0].T
            U0[:, basis] += U[:, dep] @ C
    return ZeroColumnResult(
        U0=U0, rank=r, permutation=tuple(int(i) for i in piv), basis_rows=tuple(int(i) for i in basis)
    )


def _full_rank_completion(W: np.ndarray, res: ZeroColumnResult) -> np.ndarray:
    """Replace redundant rows of W so the result has full column rank.

    Keeps the basis rows; the first d - r freed rows get an orthonormal
    basis of the orthogonal complement, remaining freed rows are zeroed.
    """
    p, d = W.shape
    r = res.rank
    if p < d:
        raise ValueError(f"cannot complete rank: {p} rows < {d} columns")
    W0 = W.copy()
    dep = list(res.permutation[r:])
    for row in dep:
        W0[row] = 0.0
    if r < d:
        basis = W[list(res.basis_rows)] if r else np.zeros((0, d))
        _, _, vt = np.linalg.svd(basis, full_matrices=True) if r else (None, None, np.eye(d))
        complement = vt[r:]
        for vec, row in zip(complement, dep):
            W0[row] = vec
    return W0


def nonincreasing_path_overparam(inst: TwoLayerLinearInstance, n_samples: int = 1000) -> PathTrace:
    """Non-increasing path to the grouped optimum when every group has at
    least as many neurons as support coordinates (p_i >= d_i).

    Per deficient group: rewrite the output weights onto a row basis (loss
    constant), then complete the freed rows to full column rank (loss
    constant); finally move all output blocks jointly to the least-squares
    solution (convex segment ending at its minimum).
    """
    us = [g.u.copy() for g in inst.groups]
    ws = [g.w.copy() for g in inst.groups]
    for i, g in enumerate(inst.groups):
        p_i, d_i = g.w.shape
        if p_i < d_i:
            raise ValueError(f"group {i} has width {p_i} < support {d_i}; path needs p_i >= d_i")

    segments = []

    def snapshot():
        return inst.with_blocks(us, ws).pack()

    for i, g in enumerate(inst.groups):
        res = zero_column_transform(us[i], ws[i])
        if res.rank == ws[i].shape[1]:
            continue  # already full column rank; nothing to free
        before = snapshot()
        us[i] = res.U0
        segments.append(PathSegment(f"rewire_output_g{i}", before, snapshot()))
        before = snapshot()
        ws[i] = _full_rank_completion(ws[i], res)
        segments.append(PathSegment(f"complete_rank_g{i}", before, snapshot()))

    Z = np.vstack([g.z for g in inst.groups])
    M = inst.Y @ np.linalg.pinv(Z)
    before = snapshot()
    off = 0
    for i, g in enumerate(inst.groups):
        d_i = g.z.shape[0]
        us[i] = M[:, off:off + d_i] @ np.linalg.pinv(ws[i])
        off += d_i
    segments.append(PathSegment("solve_output", before, snapshot()))

    return _trace_segments(segments, inst.loss_at, n_samples)


def nonincreasing_path_scalar_output(inst: TwoLayerLinearInstance, n_samples: int = 1000) -> PathTrace:
    """Non-increasing path to the dense optimum for scalar-output instances.

    Neurons with exactly zero output weight are parked (w -> 0, loss
    constant) and revived (u: 0 -> 1, loss constant); the hidden weights
    then move jointly to the least-squares solution of the resulting linear
    model, a convex segment ending at its minimum.
    """
    if inst.d_y != 1:
        raise ValueError("path construction requires d_y = 1")
    us = [g.u.copy() for g in inst.groups]
    ws = [g.w.copy() for g in inst.groups]
    segments = []

    def snapshot():
        return inst.with_blocks(us, ws).pack()

    for i, g in enumerate(inst.groups):
        for k in range(g.w.shape[0]):
            if us[i][0, k] == 0.0:
                if np.any(ws[i][k] != 0.0):
                    before = snapshot()
                    ws[i][k] = 0.0
                    segments.append(PathSegment(f"park_w_g{i}n{k}", before, snapshot()))
                before = snapshot()
                us[i][0, k] = 1.0
                segments.append(PathSegment(f"revive_u_g{i}n{k}", before, snapshot()))

    # stacked linear model in the hidden weights: rows u_jk * z_i
    phi_rows = []
    for i, g in enumerate(inst.groups):
        for k in range(g.w.shape[0]):
            phi_rows.append(us[i][0, k] * g.z)
    Phi = np.vstack(phi_rows)
    v_star = np.linalg.lstsq(Phi.T, inst.Y.ravel(), rcond=None)[0]
    before = snapshot()
    off = 0
    for i, g in enumerate(inst.groups):
        for k in range(g.w.shape[0]):
            d_i = g.z.shape[0]
            ws[i][k] = v_star[off:off + d_i]
            off += d_i
    segments.append(PathSegment("solve_hidden", before, snapshot()))

    return _trace_segments(segments, inst.loss_at, n_samples)


def random_grouped_instance(cond: str, seed: int = 0, n_groups: int = 3,
                            n: int = 12, d_y: int = 2) -> TwoLayerLinearInstance:
    """Random grouped two-layer linear instance shaped for one of the two
    path constructions.

    cond "overparam": group widths p_i = d_i + r with r cycling 0, 1, 2, so
    every group satisfies p_i >= d_i.  cond "scalar": d_y is forced to 1,
    widths are unconstrained and roughly a quarter of the output weights
    are exact zeros to exercise the park/revive moves.
    """
    rng = np.random.default_rng(seed)
    if cond == "scalar":
        d_y = 1
    elif cond != "overparam":
        raise ValueError(f"cond must be 'overparam' or 'scalar', got {cond!r}")
    groups = []
    for i in range(n_groups):
        d_i = int(rng.integers(1, 4))
        if cond == "overparam":
            p_i = d_i + (i % 3)
        else:
            p_i = int(rng.integers(1, 5))
        z = rng.standard_normal((d_i, n))
        u = rng.standard_normal((d_y, p_i))
        w = rng.standard_normal((p_i, d_i))
        if cond == "scalar":
            u = u * (rng.random((d_y, p_i)) >= 0.25)
        groups.append(GroupBlock(u, w, z))
    Y = rng.standard_normal((d_y, n))
    return TwoLayerLinearInstance(tuple(groups), Y)


# ---------------------------------------------------------------------------
# condition and assumption checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    """Which sufficient landscape conditions an instance satisfies."""

    cond_overparam: bool          # every group: width >= support size
    cond_orthogonal: bool         # pairwise Z_i Z_j^T ~ 0 across groups
    cond_scalar: bool             # single output dimension
    width_vs_n: bool              # last hidden width >= number of samples
    fanin_ok: bool                # each output neuron reads >= n hidden units
    intrinsic_dims: tuple         # per-group upper bound on dim span{sigma(w^T Z_i)}
    group_widths: tuple
    support_sizes: tuple

    def to_json(self) -> dict:
        return {
            "cond_overparam": self.cond_overparam,
            "cond_orthogonal": self.cond_orthogonal,
            "cond_scalar": self.cond_scalar,
            "width_vs_n": self.width_vs_n,
            "fanin_ok": self.fanin_ok,
            "intrinsic_dims": list(self.intrinsic_dims),
            "group_widths": list(self.group_widths),
            "support_sizes": list(self.support_sizes),
        }


def _poly_degree(act: Activation):
    if act.kind == "linear":
        return 1
    if act.kind == "polynomial":
        nz = [i for i, c in enumerate(act.coeffs) if c != 0.0]
        return max(nz) if nz else 0
    return None


def check_conditions(net: SparseNet, X: np.ndarray, Y: np.ndarray, ortho_tol: float = ORTHO_TOL) -> ConditionReport:
    X = np.asarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[1]
    dec = decompose_patterns(net.layers[0], X)

    overparam = all(p >= d for p, d in zip(dec.group_widths, dec.support_sizes))
    ortho = True
    norms = [float(np.linalg.norm(z)) for z in dec.data_slices]
    for i, j in combinations_with_replacement(range(dec.n_groups), 2):
        if i == j:
            continue
        cross = float(np.linalg.norm(dec.data_slices[i] @ dec.data_slices[j].T))
        if cross > ortho_tol * norms[i] * norms[j]:
            ortho = False
            break

    t = _poly_degree(net.activation)
    dims = []
    for d_i in dec.support_sizes:
        if t is None:
            dims.append(n)
        else:
            dims.append(min(math.comb(d_i + t, t), n))

    return ConditionReport(
        cond_overparam=overparam,
        cond_orthogonal=ortho,
        cond_scalar=(net.layers[-1].n_out == 1),
        width_vs_n=(net.layers[-1].n_in >= n),
        fanin_ok=bool(np.all(net.layers[-1].mask.sum(axis=1) >= n)),
        intrinsic_dims=tuple(dims),
        group_widths=dec.group_widths,
        support_sizes=dec.support_sizes,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Genericity checks on data and mask for the rank certificates."""

    data_ok: bool
    zero_entries: tuple      # (row, col) entries equal to 0.0
    duplicate_pairs: tuple   # (row, col_a, col_b) with |x_a| == |x_b|
    mask_ok: bool
    zero_rows: tuple         # mask rows with no connections

    @property
    def ok(self) -> bool:
        return self.data_ok and self.mask_ok


def check_assumptions(X: np.ndarray, mask: np.ndarray, max_reports: int = 16) -> AssumptionReport:
    """Data rows need nonzero entries with pairwise distinct magnitudes;
    the mask needs no all-zero rows.  Exact float comparisons by design."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mask = np.atleast_2d(np.asarray(mask)).astype(bool)
    zeros, dups = [], []
    for k in range(X.shape[0]):
        row = X[k]
        for i in np.flatnonzero(row == 0.0):
            if len(zeros) < max_reports:
                zeros.append((k, int(i)))
        order = np.argsort(np.abs(row), kind="stable")
        vals = np.abs(row[order])
        for a in np.flatnonzero(np.diff(vals) == 0.0):
            if len(dups) < max_reports:
                dups.append((k, int(order[a]), int(order[a + 1])))
    zero_rows = tuple(int(j) for j in np.flatnonzero(~mask.any(axis=1)))
    return AssumptionReport(
        data_ok=not zeros and not dups,
        zero_entries=tuple(zeros),
        duplicate_pairs=tuple(dups),
        mask_ok=not zero_rows,
        zero_rows=zero_rows,
    )


def activation_admissible(act: Activation, n: int, max_order: int = 64,
                          max_start: int = 6, max_step: int = 4):
    """Search for n derivative orders in arithmetic progression that are all
    nonzero at 0.  Returns (True, orders) or (False, None).

    Only analytic activations qualify; the witness orders feed the
    rank-certificate argument for sigma(W X) with n samples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not act.is_analytic:
        return False, None
    for start in range(max_start + 1):
        for step in range(1, max_step + 1):
            orders = tuple(start + step * i for i in range(n))
            if orders[-1] > max_order:
                continue
            if all(act.taylor_nonzero(k) for k in orders):
                return True, orders
    return False, None


# ---------------------------------------------------------------------------
# ranks
# ---------------------------------------------------------------------------

def numerical_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Count of singular values above tol * s_max."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def hidden_rank_certificate(net: SparseNet, X: np.ndarray, tol: float = RANK_TOL) -> tuple:
    """Numerical rank of every post-activation hidden output on X."""
    _, hiddens = forward(net, X)
    return tuple(numerical_rank(h, tol) for h in hiddens)


# ---------------------------------------------------------------------------
# polynomial feature maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMaps:
    """Finite feature factorization of a polynomial activation:
    sigma(w . x + b) = psi(w, b) . phi(x) for all w, x."""

    exponents: tuple  # multi-indices over the d data coordinates
    coeffs: tuple
    d: int
    degree: int

    @property
    def feature_dim(self) -> int:
        return len(self.exponents)

    def psi(self, w, b: float = 0.0) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.d,):
            raise ValueError(f"w must have shape ({self.d},)")
        out = np.empty(self.feature_dim)
        for idx, alpha in enumerate(self.exponents):
            total = sum(alpha)
            w_pow = math.prod(w[i] ** a for i, a in enumerate(alpha) if a)
            acc = 0.0
            for k in range(total, self.degree + 1):
                c = self.coeffs[k] if k < len(self.coeffs) else 0.0
                if c == 0.0:
                    continue
                multi = math.factorial(k)
                for a in alpha:
                    multi //= math.factorial(a)
                multi //= math.factorial(k - total)
                acc += c * multi * w_pow * b ** (k - total)
            out[idx] = acc
        return out

    def phi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"x must have shape ({self.d},)")
        return np.array([
            math.prod(x[i] ** a for i, a in enumerate(alpha) if a) for alpha in self.exponents
        ])


def poly_feature_maps(coeffs, d: int) -> FeatureMaps:
    """Feature maps for sigma(z) = sum_k coeffs[k] z^k acting on R^d inputs.

    feature_dim = C(d + t, t) with t the true degree.  Component order:
    total degree descending, variable count ascending, then first-variable-
    heavy lexicographic (matches the usual worked quadratic layout).
    """
    coeffs = tuple(float(c) for c in coeffs)
    if d < 1:
        raise ValueError("d must be >= 1")
    nz = [i for i, c in enumerate(coeffs) if c != 0.0]
    t = max(nz) if nz else 0
    exps = []
    for total in range(t + 1):
        for combo in combinations_with_replacement(range(d), total):
            alpha = [0] * d
            for i in combo:
                alpha[i] += 1
            exps.append(tuple(alpha))
    exps.sort(key=lambda a: (-sum(a), sum(1 for v in a if v), tuple(-v for v in a)))
    maps = FeatureMaps(exponents=tuple(exps), coeffs=coeffs, d=d, degree=t)
    assert maps.feature_dim == math.comb(d + t, t)
    return maps
