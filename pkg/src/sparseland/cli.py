"""Command-line surface.

Subcommands: verify, train, trials, path, prune, rank, conv-rank, replay.
Exit codes: 0 verified/converged, 1 ran but falsified/diverged, 2 usage or
input error.  Every run writes a JSON manifest (next to --out, or
<command>.manifest.json in the working directory) from which `replay`
reproduces the outputs bit-identically.  The SEED environment variable
overrides --seed for all commands except replay, which always uses the
seeds recorded in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .activations import KINDS, activation_named
from .convmodes import MODES, ConvSpec, conv_matrix, conv_rank_expected
from .counterexamples import (
    conv_valley_instance,
    probe_conv_valley,
    probe_valley,
    spurious_minimum_instance,
    valley_instance,
    valley_trial_objective,
    verify_spurious_minimum,
)
from .landscape import (
    hidden_rank_certificate,
    nonincreasing_path_overparam,
    nonincreasing_path_scalar_output,
    numerical_rank,
    random_grouped_instance,
)
from .network import net_from_json, net_to_json, effective_subnetwork
from .trainer import TrainConfig, gd_train, gen_synthetic, random_effective_net, run_trials

try:
    from importlib.metadata import version as _dist_version
    VERSION = _dist_version("sparseland")
except Exception:  # not installed; running from a checkout
    VERSION = "0.1.0"

VERIFY_INSTANCES = ("sd-minimum", "ss-valley", "cnn-same-valley")


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _payload_digest(payload: dict) -> str:
    return _sha256(json.dumps(payload, sort_keys=True))


def _parse_floats(text: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _parse_ints(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load_net_spec(path: str):
    """Parse a network JSON file; exits with diagnostics on bad input."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(2)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        print(f"error: malformed JSON in {path}: line {e.lineno} column {e.colno}: {e.msg}",
              file=sys.stderr)
        raise SystemExit(2)
    try:
        return net_from_json(obj)
    except (ValueError, KeyError, TypeError) as e:
        print(f"error: bad network spec in {path}: {e}", file=sys.stderr)
        raise SystemExit(2)


def _mask_sparsity(net) -> float:
    total = sum(layer.mask.size for layer in net.layers)
    zeros = sum(int(layer.mask.size - np.count_nonzero(layer.mask)) for layer in net.layers)
    return zeros / total


# ---------------------------------------------------------------------------
# handlers: each returns (exit_code, payload, primary, summary_lines);
# primary is a non-JSON artifact (CSV) or None when the payload is the
# artifact itself
# ---------------------------------------------------------------------------

def cmd_verify(args):
    if args.instance == "sd-minimum":
        inst = spurious_minimum_instance()
        ver = verify_spurious_minimum(inst, n_probes=args.probes, seed=args.seed)
        payload = ver.to_json()
        lines = [f"{k}: {v}" for k, v in payload.items() if isinstance(v, bool)]
        return (0 if ver.passed else 1), payload, None, lines

    if args.instance == "ss-valley":
        act = activation_named(args.activation)
        inst = valley_instance(args.y, act)
        probe = probe_valley(inst, n_probes=args.probes, radius=args.radius, seed=args.seed)
        verified = probe.ok and inst.constraints_ok
        payload = {
            "activation": act.kind,
            "y": list(inst.y),
            "valley_loss": inst.valley_loss,
            "escape_loss": inst.escape_loss,
            "constraints": inst.constraints,
            "constraints_ok": inst.constraints_ok,
            "probe": probe.to_json(),
            "verified": verified,
        }
        lines = [
            f"valley loss {inst.valley_loss}, escape loss {inst.escape_loss}",
            f"probe min excess {probe.min_excess:.3e}, falsifications {probe.falsifications}",
            f"constraints ok: {inst.constraints_ok}",
            f"verified: {verified}",
        ]
        return (0 if verified else 1), payload, None, lines

    # cnn-same-valley
    scales = (args.scale,) if args.scale is not None else (0.5, 1.0, 2.0)
    per_scale = []
    all_ok = True
    for a in scales:
        inst = conv_valley_instance(a)
        probe = probe_conv_valley(inst, n_probes=args.probes, seed=args.seed)
        witness = float(inst.loss(inst.global_witness()))
        ok = probe.ok and witness < 1e-20
        all_ok &= ok
        per_scale.append({
            "a": a, "valley_loss": inst.valley_loss, "witness_loss": witness,
            "probe": probe.to_json(), "ok": ok,
        })
    payload = {"scales": per_scale, "verified": all_ok}
    lines = [f"a={e['a']}: min excess {e['probe']['min_excess']:.3e}, ok {e['ok']}"
             for e in per_scale] + [f"verified: {all_ok}"]
    return (0 if all_ok else 1), payload, None, lines


def cmd_train(args):
    if args.spec:
        net = _load_net_spec(args.spec)
        init = "keep" if not args.reinit else ("scaled" if args.scale_init != 1.0 else "default")
    elif args.dims:
        act = activation_named(args.activation)
        net, _ = random_effective_net(args.dims, args.sparsity, seed=args.seed, activation=act)
        init = "scaled" if args.scale_init != 1.0 else "default"
    else:
        print("error: train needs --spec or --dims", file=sys.stderr)
        raise SystemExit(2)

    d_x, d_y = net.layers[0].n_in, net.layers[-1].n_out
    dataset = gen_synthetic(args.n, d_x, d_y, seed=args.seed, a_norm=args.a_norm,
                            noise=args.noise, target=args.target)
    config = TrainConfig(
        learning_rate=args.lr, max_epochs=args.epochs, seed=args.seed,
        init=init, init_scale=args.scale_init, rank_every=args.rank_every,
        backtrack=args.backtrack,
    )
    trace = gd_train(net, dataset, config)

    optimum = gap = None
    if trace.net.activation.kind == "linear":
        X, Y = dataset.X, dataset.Y
        optimum = 0.5 * float(np.sum((Y - (Y @ np.linalg.pinv(X)) @ X) ** 2))
        gap = trace.final_loss - optimum

    payload = {
        "final_loss": trace.final_loss,
        "stop_reason": trace.stop_reason,
        "epochs": trace.epochs,
        "realized_sparsity": _mask_sparsity(trace.net),
        "optimum": optimum,
        "gap": gap,
        "monotone_violation": trace.monotone_violation,
        "ranks": [[e, list(r)] for e, r in trace.ranks],
    }
    lines = [f"final loss {trace.final_loss!r} after {trace.epochs} epochs ({trace.stop_reason})",
             f"realized sparsity {payload['realized_sparsity']:.4f}"]
    if gap is not None:
        lines.append(f"L - L* = {gap!r} (L* = {optimum!r})")
    return (1 if trace.diverged else 0), payload, trace.to_csv(), lines


def cmd_trials(args):
    act = activation_named(args.activation)
    inst = valley_instance(args.y, act)
    objective = valley_trial_objective(inst)
    config = TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, seed=args.seed)
    stats = run_trials(objective, args.n, config)
    payload = stats.to_json()
    n = len(stats.labels)
    lines = [f"{n} trials, activation {act.kind}, y = {list(inst.y)}"]
    for label in sorted(stats.counts):
        lines.append(f"  {label}: {stats.counts[label]}/{n} ({stats.fraction(label):.0%})")
    lines.append(f"loss clusters: {len(stats.clusters)}")
    for center, size in stats.clusters:
        lines.append(f"  {center!r} x{size}")
    code = 1 if stats.counts.get("diverged", 0) == n else 0
    return code, payload, None, lines


def cmd_path(args):
    cond = "overparam" if args.cond == 1 else "scalar"
    inst = random_grouped_instance(cond, seed=args.seed, n_groups=args.groups, n=args.n)
    if cond == "overparam":
        trace = nonincreasing_path_overparam(inst, n_samples=args.samples)
    else:
        trace = nonincreasing_path_scalar_output(inst, n_samples=args.samples)
    Z = np.vstack([g.z for g in inst.groups])
    optimum = 0.5 * float(np.sum((inst.Y - (inst.Y @ np.linalg.pinv(Z)) @ Z) ** 2))
    violation = trace.monotone_violation
    gap = trace.end_loss - optimum
    ok = violation <= 1e-10 and abs(gap) <= 1e-8
    payload = {
        "cond": args.cond,
        "monotone_violation": violation,
        "end_loss": trace.end_loss,
        "optimum": optimum,
        "gap": gap,
        "segments": [s.name for s in trace.segments],
        "ok": ok,
    }
    lines = [f"cond-{args.cond} path, {len(trace.segments)} segments",
             f"monotone violation {violation:.3e}",
             f"end loss {trace.end_loss!r}, optimum {optimum!r}, gap {gap:.3e}"]
    return (0 if ok else 1), payload, trace.to_csv(), lines


def cmd_prune(args):
    net = _load_net_spec(args.spec)
    reduced, report = effective_subnetwork(net, require_effective=False)
    payload = {
        "removed_edges": [list(e) for e in report.removed_edges],
        "removed_biases": [list(b) for b in report.removed_biases],
        "neutered": [list(v) for v in report.neutered],
        "isolated_inputs": list(report.isolated_inputs),
        "isolated_outputs": list(report.isolated_outputs),
        "is_effective": report.is_effective,
        "sparsity_before": _mask_sparsity(net),
        "sparsity_after": _mask_sparsity(reduced),
        "reduced": net_to_json(reduced),
    }
    lines = [
        f"removed {len(report.removed_edges)} edges, {len(report.removed_biases)} biases, "
        f"{len(report.neutered)} neurons neutered",
        f"sparsity {payload['sparsity_before']:.4f} -> {payload['sparsity_after']:.4f}",
        f"effective: {report.is_effective}",
    ]
    return (0 if report.is_effective else 1), payload, None, lines


def cmd_rank(args):
    if args.spec:
        net = _load_net_spec(args.spec)
    else:
        act = activation_named(args.activation)
        net, _ = random_effective_net(args.dims, args.sparsity, seed=args.seed,
                                      activation=act, init_scale=args.scale_init)
    rng = np.random.default_rng(args.seed)
    X = rng.standard_normal((net.layers[0].n_in, args.n))
    ranks = hidden_rank_certificate(net, X)
    full = [r == min(net.layers[k].n_out, args.n) for k, r in enumerate(ranks)]
    payload = {"n": args.n, "ranks": list(ranks), "full_rank": full, "all_full": all(full)}
    lines = [f"hidden ranks on n={args.n} gaussian samples: {list(ranks)}",
             f"full rank per layer: {full}"]
    return (0 if all(full) else 1), payload, None, lines


def cmd_conv_rank(args):
    kernel = np.asarray(args.kernel, dtype=float)
    mode = args.mode.lower()
    if mode not in MODES:
        print(f"error: mode must be one of {MODES}", file=sys.stderr)
        raise SystemExit(2)
    try:
        spec = ConvSpec(kernel, args.d, mode)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(2)
    expected = conv_rank_expected(spec)
    numeric = numerical_rank(conv_matrix(spec))
    payload = {"mode": mode, "d": args.d, "kernel": [float(k) for k in kernel],
               "expected": expected, "numeric": numeric, "match": expected == numeric}
    lines = [f"expected {expected}, numeric {numeric}"]
    return (0 if expected == numeric else 1), payload, None, lines


HANDLERS = {
    "verify": cmd_verify,
    "train": cmd_train,
    "trials": cmd_trials,
    "path": cmd_path,
    "prune": cmd_prune,
    "rank": cmd_rank,
    "conv-rank": cmd_conv_rank,
}

# config keys that are plumbing, not inputs
_NON_CONFIG = {"command", "out", "json_out", "manifest"}


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest_path).read_text())
        command = manifest["command"]
        config = manifest["config"]
        expected_payload = manifest["payload_sha256"]
        expected_primary = manifest["outputs"]["primary"]["sha256"]
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: bad manifest {args.manifest_path}: {e}", file=sys.stderr)
        raise SystemExit(2)
    if command not in HANDLERS:
        print(f"error: manifest names unknown command {command!r}", file=sys.stderr)
        raise SystemExit(2)
    ns = argparse.Namespace(**{k: (tuple(v) if isinstance(v, list) else v)
                               for k, v in config.items()})
    code, payload, primary, _ = HANDLERS[command](ns)
    primary_text = primary if primary is not None else json.dumps(payload, indent=2)
    got_payload = _payload_digest(payload)
    got_primary = _sha256(primary_text)
    match = got_payload == expected_payload and got_primary == expected_primary
    out_payload = {
        "command": command,
        "match": match,
        "payload_sha256": {"expected": expected_payload, "got": got_payload},
        "primary_sha256": {"expected": expected_primary, "got": got_primary},
        "replayed_exit_code": code,
    }
    lines = [f"replayed {command}: {'outputs identical' if match else 'OUTPUT MISMATCH'}"]
    if args.out:
        Path(args.out).write_text(primary_text)
        lines.append(f"wrote {args.out}")
    return (0 if match else 1), out_payload, None, lines


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sparseland",
        description="Loss-landscape analysis for masked (pruned) networks: "
                    "certified bad points, descent paths, rank certificates, "
                    "convolution mode ranks and GD experiments.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed, help="RNG seed (env SEED overrides)")
        sp.add_argument("--out", default=None, help="write the primary artifact to this path")
        sp.add_argument("--json", dest="json_out", action="store_true",
                        help="print the JSON payload instead of a summary")

    sp = sub.add_parser("verify", help="re-check a certified landscape instance")
    sp.add_argument("instance", choices=VERIFY_INSTANCES)
    sp.add_argument("--activation", default="tanh", help="ss-valley only")
    sp.add_argument("--y", type=_parse_floats, default=(1.0, 2.0, 9.0, 2.0),
                    help="ss-valley target values y1,y2,y3,y4")
    sp.add_argument("--probes", type=int, default=500)
    sp.add_argument("--radius", type=float, default=0.05, help="ss-valley probe radius")
    sp.add_argument("--scale", type=float, default=None, help="cnn valley parameter a")
    common(sp)

    sp = sub.add_parser("train", help="full-batch GD on a masked net")
    sp.add_argument("--spec", default=None, help="network JSON file")
    sp.add_argument("--dims", type=_parse_ints, default=None,
                    help="layer sizes, e.g. 20,100,100,1 (random masked net)")
    sp.add_argument("--sparsity", type=float, default=0.0)
    sp.add_argument("--activation", default="linear", help=f"one of {', '.join(KINDS[:-1])}")
    sp.add_argument("--n", type=int, default=100, help="number of samples")
    sp.add_argument("--noise", type=float, default=1.0)
    sp.add_argument("--a-norm", type=float, default=5.0)
    sp.add_argument("--target", choices=("gaussian", "identity"), default="gaussian")
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--epochs", type=int, default=5000)
    sp.add_argument("--scale-init", type=float, default=1.0)
    sp.add_argument("--rank-every", type=int, default=100)
    sp.add_argument("--backtrack", action="store_true",
                    help="halve steps that would increase the loss")
    sp.add_argument("--reinit", action="store_true",
                    help="re-initialize weights even when --spec is given")
    common(sp)

    sp = sub.add_parser("trials", help="repeated GD runs on the masked valley objective")
    sp.add_argument("--n", type=int, default=100, help="number of trials")
    sp.add_argument("--activation", default="tanh")
    sp.add_argument("--y", type=_parse_floats, default=(1.0, 2.0, 9.0, 2.0))
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--epochs", type=int, default=50000)
    common(sp)

    sp = sub.add_parser("path", help="non-increasing descent path on a random grouped instance")
    sp.add_argument("--cond", type=int, choices=(1, 3), default=1,
                    help="1: every group overparametrized; 3: scalar output")
    sp.add_argument("--groups", type=int, default=3)
    sp.add_argument("--n", type=int, default=12, help="number of samples")
    sp.add_argument("--samples", type=int, default=1000, help="points sampled along the path")
    common(sp)

    sp = sub.add_parser("prune", help="strip connections off every input-output path")
    sp.add_argument("--spec", required=True, help="network JSON file")
    common(sp)

    sp = sub.add_parser("rank", help="hidden-layer rank certificate on gaussian data")
    sp.add_argument("--spec", default=None, help="network JSON file")
    sp.add_argument("--dims", type=_parse_ints, default=(6, 6, 6),
                    help="layer sizes for a random masked net")
    sp.add_argument("--sparsity", type=float, default=0.3)
    sp.add_argument("--activation", default="tanh")
    sp.add_argument("--scale-init", type=float, default=3.0)
    sp.add_argument("--n", type=int, default=6, help="number of samples")
    common(sp)

    sp = sub.add_parser("conv-rank", help="closed-form vs numeric rank of a conv matrix")
    sp.add_argument("--mode", required=True, help="FULL, SAME or VALID")
    sp.add_argument("--d", type=int, required=True, help="input length")
    sp.add_argument("--kernel", type=_parse_floats, required=True, help="kernel values k0,k1,...")
    common(sp)

    sp = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    sp.add_argument("manifest_path", help="manifest JSON written by a previous run")
    sp.add_argument("--out", default=None, help="also write the replayed artifact here")
    sp.add_argument("--json", dest="json_out", action="store_true")

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command

    if command == "replay":
        code, payload, _, lines = cmd_replay(args)
        print(json.dumps(payload, indent=2) if args.json_out else "\n".join(lines))
        return code

    if "SEED" in os.environ:
        try:
            args.seed = int(os.environ["SEED"])
        except ValueError:
            print(f"error: SEED must be an integer, got {os.environ['SEED']!r}", file=sys.stderr)
            return 2

    code, payload, primary, lines = HANDLERS[command](args)
    primary_text = primary if primary is not None else json.dumps(payload, indent=2)

    out_path = Path(args.out) if args.out else None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(primary_text)

    config = {k: (list(v) if isinstance(v, tuple) else v)
              for k, v in vars(args).items() if k not in _NON_CONFIG}
    manifest = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": VERSION,
        "payload_sha256": _payload_digest(payload),
        "outputs": {
            "primary": {
                "path": str(out_path) if out_path else None,
                "sha256": _sha256(primary_text),
            },
        },
        "exit_code": code,
    }
    manifest_path = (Path(str(out_path) + ".manifest.json") if out_path
                     else Path(f"{command}.manifest.json"))
    manifest_path.write_text(json.dumps(manifest, indent=2))

    print(json.dumps(payload, indent=2) if args.json_out else "\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
