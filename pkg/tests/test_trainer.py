import csv
import io
import math

import numpy as np
import pytest

from sparseland import (
    Activation,
    Dataset,
    SparseLayer,
    SparseNet,
    TrainConfig,
    effective_subnetwork,
    gd_train,
    gen_synthetic,
    grad_fd,
    grad_net,
    init_net,
    loss,
    loss_clusters,
    random_effective_net,
    random_sparse_mask,
    run_trials,
    valley_instance,
    valley_trial_objective,
)
from sparseland.counterexamples import EXPERIMENT_Y


def small_net(seed=0, act=None, biases=True):
    r = np.random.default_rng(seed)
    m1 = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=bool)
    m2 = np.array([[1, 1, 0, 1], [0, 1, 1, 1]], dtype=bool)
    W = r.standard_normal((4, 3)) * m1
    U = r.standard_normal((2, 4)) * m2
    if biases:
        layers = (SparseLayer(W, m1, r.standard_normal(4)),
                  SparseLayer(U, m2, r.standard_normal(2)))
    else:
        layers = (SparseLayer(W, m1), SparseLayer(U, m2))
    return SparseNet(layers, act or Activation.tanh())


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(ValueError, match="d_x, n"):
        Dataset(np.zeros((2, 5)), np.zeros((1, 4)))
    with pytest.raises(ValueError):
        Dataset(np.zeros(5), np.zeros((1, 5)))


def test_gen_synthetic_norm_and_determinism():
    ds = gen_synthetic(50, 7, 3, seed=11, a_norm=5.0)
    assert np.linalg.norm(ds.metadata["A"]) == pytest.approx(5.0, abs=1e-12)
    assert ds.X.shape == (7, 50) and ds.Y.shape == (3, 50)
    again = gen_synthetic(50, 7, 3, seed=11, a_norm=5.0)
    assert np.array_equal(ds.X, again.X) and np.array_equal(ds.Y, again.Y)
    other = gen_synthetic(50, 7, 3, seed=12, a_norm=5.0)
    assert not np.array_equal(ds.X, other.X)


def test_gen_synthetic_noiseless_and_identity():
    ds = gen_synthetic(20, 4, 2, seed=3, noise=0.0)
    assert np.array_equal(ds.Y, ds.metadata["A"] @ ds.X)
    ds = gen_synthetic(20, 4, 2, seed=3, target="identity")
    assert np.array_equal(ds.metadata["A"], np.eye(2, 4))
    with pytest.raises(ValueError, match="target"):
        gen_synthetic(10, 2, 1, target="laplace")


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("act", [Activation.tanh(), Activation.sigmoid(),
                                 Activation.softplus()], ids=lambda a: a.kind)
def test_grad_net_matches_fd(act):
    net = small_net(seed=1, act=act)
    r = np.random.default_rng(2)
    X, Y = r.standard_normal((3, 12)), r.standard_normal((2, 12))
    w_grads, b_grads, value = grad_net(net, X, Y)
    assert value == pytest.approx(loss(net, X, Y), rel=1e-14)
    fd = grad_fd(net, X, Y)
    for k, (fw, fb) in enumerate(fd):
        assert np.allclose(w_grads[k], fw, rtol=1e-6, atol=1e-7), k
        assert np.allclose(b_grads[k], fb, rtol=1e-6, atol=1e-7), k
        # masked coordinates carry exactly zero gradient
        assert np.all(w_grads[k][~net.layers[k].mask] == 0.0)


def test_grad_net_no_bias():
    net = small_net(seed=4, biases=False)
    r = np.random.default_rng(5)
    X, Y = r.standard_normal((3, 6)), r.standard_normal((2, 6))
    _, b_grads, _ = grad_net(net, X, Y)
    assert b_grads == [None, None]


# ---------------------------------------------------------------------------
# gd_train
# ---------------------------------------------------------------------------

def test_train_linear_reaches_optimum():
    ds = gen_synthetic(30, 5, 2, seed=7, noise=0.5)
    net, _ = random_effective_net((5, 8, 2), sparsity=0.0, seed=1)
    cfg = TrainConfig(learning_rate=0.005, max_epochs=20000, grad_tol=1e-10, seed=2)
    trace = gd_train(net, ds, cfg)
    # dense linear net: the optimum is ordinary least squares
    A_star, *_ = np.linalg.lstsq(ds.X.T, ds.Y.T, rcond=None)
    best = 0.5 * np.sum((A_star.T @ ds.X - ds.Y) ** 2)
    assert trace.final_loss - best < 1e-6
    assert trace.monotone_violation <= 1e-12  # ulp wobble once at the floor
    assert trace.stop_reason in ("converged_grad", "plateau")
    assert trace.epochs == len(trace.losses) - 1


def test_train_keeps_masked_weights_zero():
    ds = gen_synthetic(25, 3, 2, seed=0)
    net = small_net(seed=3)
    trace = gd_train(net, ds, TrainConfig(max_epochs=300, seed=1))
    for layer in trace.net.layers:
        assert np.all(layer.weights[~layer.mask] == 0.0)


def test_train_deterministic():
    ds = gen_synthetic(20, 3, 2, seed=5)
    net = small_net(seed=6)
    cfg = TrainConfig(max_epochs=200, seed=9)
    t1 = gd_train(net, ds, cfg)
    t2 = gd_train(net, ds, cfg)
    assert np.array_equal(t1.losses, t2.losses)
    assert np.array_equal(t1.grad_norms, t2.grad_norms)
    for a, b in zip(t1.net.layers, t2.net.layers):
        assert np.array_equal(a.weights, b.weights)


def test_train_divergence_recorded():
    ds = gen_synthetic(20, 3, 2, seed=5)
    net = small_net(seed=6, act=Activation.linear())
    trace = gd_train(net, ds, TrainConfig(learning_rate=10.0, max_epochs=500, seed=1))
    assert trace.stop_reason == "diverged"
    assert trace.diverged
    assert not math.isfinite(trace.final_loss) or trace.final_loss > 1e6


def test_backtracking_prevents_divergence():
    ds = gen_synthetic(20, 3, 2, seed=5)
    net = small_net(seed=6, act=Activation.linear())
    cfg = TrainConfig(learning_rate=10.0, max_epochs=400, seed=1, backtrack=True)
    trace = gd_train(net, ds, cfg)
    assert not trace.diverged
    assert trace.monotone_violation == 0.0


def test_init_modes():
    net = small_net(seed=8)
    ds = gen_synthetic(10, 3, 2, seed=1)
    kept = gd_train(net, ds, TrainConfig(max_epochs=0, init="keep"))
    assert kept.losses[0] == pytest.approx(loss(net, ds.X, ds.Y), rel=1e-14)

    scaled = init_net(net, TrainConfig(init="scaled", init_scale=0.1, seed=0))
    for layer in scaled.layers:
        bound = 0.1 / math.sqrt(layer.n_in)
        assert np.max(np.abs(layer.weights)) <= bound
        assert np.all(layer.weights[~layer.mask] == 0.0)

    with pytest.raises(ValueError, match="init"):
        init_net(net, TrainConfig(init="orthogonal"))


def test_trace_csv_rank_columns():
    ds = gen_synthetic(15, 3, 2, seed=2)
    net = small_net(seed=1)
    trace = gd_train(net, ds, TrainConfig(max_epochs=6, rank_every=2, seed=0,
                                          grad_tol=0.0, plateau_window=10**6))
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    assert rows[0] == ["epoch", "loss", "rank_layer_1", "rank_layer_2"]
    assert len(rows) == trace.epochs + 2
    by_epoch = {int(r[0]): r for r in rows[1:]}
    for e, ranks in trace.ranks:
        assert by_epoch[e][2:] == [str(v) for v in ranks]
    assert {e for e, _ in trace.ranks} == {0, 2, 4, 6}
    # unsampled epochs leave the rank cells empty
    assert by_epoch[1][2:] == ["", ""]
    assert float(by_epoch[3][1]) == trace.losses[3]


# ---------------------------------------------------------------------------
# batched trials
# ---------------------------------------------------------------------------

def quadratic_objective(dim=3):
    from sparseland.counterexamples import GdObjective
    target = np.arange(1.0, dim + 1)

    def lf(th):
        d = th - target
        out = np.sum(d * d, axis=-1)
        return out if out.ndim else float(out)

    return GdObjective(
        dim=dim,
        loss=lf,
        grad=lambda th: 2 * (th - target),
        init_bounds=np.ones(dim),
        classify=lambda lv, th: "near" if lv < 1e-6 else "far",
        reference_level=0.0,
    )


def test_run_trials_quadratic_all_converge():
    stats = run_trials(quadratic_objective(), 6,
                       TrainConfig(learning_rate=0.1, max_epochs=2000, seed=0))
    assert stats.labels == ("near",) * 6
    assert stats.fraction("near") == 1.0
    assert len(stats.clusters) == 1
    assert stats.clusters[0][1] == 6


def test_run_trials_single_equals_batched():
    inst = valley_instance(EXPERIMENT_Y)
    obj = valley_trial_objective(inst)
    cfg = TrainConfig(learning_rate=0.01, max_epochs=300, seed=40)
    batch = run_trials(obj, 4, cfg)
    for t in range(4):
        solo = run_trials(obj, 1, TrainConfig(learning_rate=0.01, max_epochs=300,
                                              seed=40 + t))
        assert solo.final_losses[0] == batch.final_losses[t]      # bitwise
        assert np.array_equal(solo.final_thetas[0], batch.final_thetas[t])
        assert solo.epochs[0] == batch.epochs[t]
        assert solo.labels[0] == batch.labels[t]


def test_run_trials_divergence_label():
    stats = run_trials(quadratic_objective(), 3,
                       TrainConfig(learning_rate=5.0, max_epochs=200, seed=1))
    assert set(stats.labels) == {"diverged"}
    assert stats.clusters == ()  # diverged trials excluded from clustering


def test_trial_stats_json():
    stats = run_trials(quadratic_objective(), 5,
                       TrainConfig(learning_rate=0.1, max_epochs=2000, seed=3))
    blob = stats.to_json()
    assert set(blob) == {"trials", "clusters", "counts", "fractions"}
    assert len(blob["trials"]) == 5
    assert {"label", "final_loss", "epochs"} == set(blob["trials"][0])
    assert blob["fractions"]["near"] == 1.0
    assert blob["clusters"][0]["size"] == 5


# ---------------------------------------------------------------------------
# loss clustering
# ---------------------------------------------------------------------------

def test_loss_clusters_frozen_cases():
    assert loss_clusters([]) == ()
    got = loss_clusters([2.0, 1.0, 1.0005])
    assert [s for _, s in got] == [2, 1]
    assert got[0][0] == pytest.approx(1.00025, rel=1e-12) and got[1][0] == 2.0
    # the relative tolerance floors at 1, merging tiny near-zero values
    assert loss_clusters([1e-4, 5e-4]) == ((pytest.approx(3e-4, rel=1e-12), 2),)
    got = loss_clusters([5.0, 5.004, 5.008, 7.0], rel_tol=1e-3)
    assert [size for _, size in got] == [2, 1, 1]
    centers = [c for c, _ in got]
    assert centers == sorted(centers)
    assert all(isinstance(c, float) and not isinstance(c, np.floating) for c in centers)
    assert loss_clusters([1.0, float("nan"), float("inf"), 1.0]) == ((1.0, 2),)


# ---------------------------------------------------------------------------
# random masks and nets
# ---------------------------------------------------------------------------

def test_single_mask_draw():
    m = random_sparse_mask((6, 5), 0.0, seed=0)
    assert m.all()
    with pytest.raises(ValueError, match="sparsity"):
        random_sparse_mask((6, 5), 1.0)
    # seed 0 at this sparsity draws an empty row, which the strict mode rejects
    with pytest.raises(ValueError, match="all-zero row"):
        random_sparse_mask((4, 4), 0.75, seed=0)
    m = random_sparse_mask((4, 4), 0.75, seed=0, repair=True)
    assert m.any(axis=1).all() and m.any(axis=0).all()
    again = random_sparse_mask((4, 4), 0.75, seed=0, repair=True)
    assert np.array_equal(m, again)


def test_mask_list_repair_and_realized():
    masks, realized = random_sparse_mask([(400, 400)], 0.9, seed=0)
    (m,) = masks
    assert m.any(axis=1).all() and m.any(axis=0).all()
    assert realized >= 0.9      # this fixed seed keeps the target after repair
    assert abs(realized - 0.9) < 0.01


def test_random_effective_net():
    net, realized = random_effective_net((6, 10, 10, 2), sparsity=0.4, seed=12)
    assert net.dims == (6, 10, 10, 2)
    assert 0.2 < realized < 0.5
    assert net.activation.kind == "linear"
    for layer in net.layers:
        assert np.all(layer.weights[~layer.mask] == 0.0)
    # repaired masks leave nothing for the reduction to strip
    reduced, report = effective_subnetwork(net)
    assert report.removed_edges == ()
    assert report.is_effective
    net2, _ = random_effective_net((6, 10, 10, 2), sparsity=0.4, seed=12)
    for a, b in zip(net.layers, net2.layers):
        assert np.array_equal(a.weights, b.weights)
    with pytest.raises(ValueError):
        random_effective_net((6, 2), sparsity=0.1)
