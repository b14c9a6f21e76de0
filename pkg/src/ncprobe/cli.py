"""Command-line driver.

Exit codes: 0 success, 1 I/O failure, 2 validation or usage error. Every
command writes a ``<out>.manifest.json`` next to its main output; it records
the resolved configuration, seeds and input digests, and
``ncprobe replay MANIFEST`` re-runs it.
"""
import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .core import load_csv, load_fmx, load_idx, load_split, save_fmx, save_split
from .errors import InvalidSpec, NcError
from .metrics import DEFAULT_RANK_REL_TOL, metric_bundle, nc1, pearson
from .network import NetworkSpec, forward, init_network, load_net, save_net
from .synth import SyntheticSpec, TransferPairSpec, make_classification_task, make_transfer_pair
from .training import TrainConfig, train
from .transfer import FineTuneMethod, Method, layer_features, layerwise_probe, probe_layer, run_transfer

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class UsageError(NcError):
    pass


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path}: invalid JSON ({exc})") from None


def _write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _digest(path) -> str:
    p = Path(path)
    h = hashlib.sha256()
    files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
    for q in files:
        if p.is_dir():
            h.update(str(q.relative_to(p)).encode())
        h.update(q.read_bytes())
    return h.hexdigest()


def _manifest_path(out) -> Path:
    return Path(out).with_suffix(".manifest.json")


def _write_manifest(command, argv, config, seeds, inputs, outputs, out):
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    _write_json(manifest, _manifest_path(out))


def _load_config(path) -> TrainConfig:
    return TrainConfig.from_dict(_read_json(path))


def _fmt(x) -> str:
    return repr(float(x))


# metrics ------------------------------------------------------------------


def cmd_metrics(args, argv):
    if args.format == "idx":
        if not args.labels:
            raise UsageError("--format idx requires --labels")
        fm = load_idx(args.input, args.labels)
        inputs = [args.input, args.labels]
    else:
        if args.labels:
            raise UsageError("--labels only applies to --format idx")
        fm = load_fmx(args.input) if args.format == "fmx" else load_csv(args.input)
        inputs = [args.input]
    bundle = metric_bundle(fm, rank_rel_tol=args.rank_tol)
    _write_json(bundle.to_dict(), args.out)
    _write_manifest("metrics", argv, {"format": args.format, "rank_tol": args.rank_tol}, {"power_seed": 0},
                    inputs, [args.out], args.out)
    return EXIT_OK


# pretrain -----------------------------------------------------------------


def _write_history(hist, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "acc", "lr"])
        for t, loss, acc, lr in hist.rows():
            w.writerow([t, _fmt(loss), _fmt(acc), _fmt(lr)])


def cmd_pretrain(args, argv):
    config = _load_config(args.config)
    spec = NetworkSpec.from_dict(_read_json(args.spec))
    data = load_split(args.data)
    if spec.input_dim != data.d or spec.n_classes != data.n_classes:
        raise InvalidSpec(f"network spec ({spec.input_dim} -> {spec.n_classes}) does not match data "
                          f"({data.d} features, {data.n_classes} classes)")
    net, hist = train(init_network(spec), data, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_net(net, out)
    hist_path = out.with_suffix(".history.csv")
    _write_history(hist, hist_path)
    outputs = [out, hist_path]
    if args.dump_activations:
        ddir = Path(args.dump_activations)
        ddir.mkdir(parents=True, exist_ok=True)
        _, acts = forward(net, data.train.data)
        for i, a in enumerate(acts, start=1):
            p = ddir / f"layer{i}.fmx"
            save_fmx(data.train.with_data(a), p)
            outputs.append(p)
    _write_manifest("pretrain", argv, {"train": config.to_dict(), "network": spec.to_dict()},
                    {"train": config.seed, "init": spec.seed}, [args.config, args.spec, args.data], outputs, out)
    return EXIT_OK


# transfer -----------------------------------------------------------------


def _method_from_args(args) -> FineTuneMethod:
    kind = Method(args.method)
    if kind in (Method.LAYER, Method.SCL):
        if args.layer is None:
            raise UsageError(f"--method {kind.value} requires --layer")
        return FineTuneMethod(kind, args.layer)
    if args.layer is not None:
        raise UsageError(f"--method {kind.value} takes no --layer")
    return FineTuneMethod(kind)


def cmd_transfer(args, argv):
    method = _method_from_args(args)
    config = _load_config(args.config)
    net = load_net(args.model)
    data = load_split(args.data)
    result = run_transfer(net, data, method, config)
    _write_json(result.to_dict(), args.out)
    _write_manifest("transfer", argv, {"train": config.to_dict(), "method": method.kind.value, "layer": method.layer},
                    {"train": config.seed}, [args.model, args.data, args.config], [args.out], args.out)
    return EXIT_OK


# layerwise ----------------------------------------------------------------


def _print_correlation(label, xs, ys):
    try:
        r = pearson(xs, ys)
        print(f"pearson_r({label}) = {r!r}")
    except NcError as exc:
        print(f"pearson_r({label}) = nan ({exc})")


def cmd_layerwise(args, argv):
    config = _load_config(args.config)
    net = load_net(args.model)
    data = load_split(args.data)
    rows = layerwise_probe(net, data, args.pool, config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "accuracy", "nc1"])
        for r in rows:
            w.writerow([r.layer, _fmt(r.accuracy), _fmt(r.nc1)])
    _print_correlation("nc1, accuracy", [r.nc1 for r in rows], [r.accuracy for r in rows])
    _write_manifest("layerwise", argv, {"train": config.to_dict(), "pool": args.pool}, {"train": config.seed},
                    [args.model, args.data, args.config], [args.out], args.out)
    return EXIT_OK


# sweep --------------------------------------------------------------------

KNOBS = ("proj-depth", "layer", "noise")
DEFAULT_SWEEP_ENCODER = [64] * 5


def parse_vary(text: str):
    """``knob=a..b`` (inclusive integer range) or ``knob=v1,v2,...``."""
    if "=" not in text:
        raise UsageError(f"--vary expects KNOB=VALUES, got {text!r}")
    knob, values = text.split("=", 1)
    knob = knob.strip()
    if knob not in KNOBS:
        raise UsageError(f"unknown knob {knob!r}; choose from {', '.join(KNOBS)}")
    cast = float if knob == "noise" else int
    try:
        if ".." in values:
            lo, hi = values.split("..", 1)
            if knob == "noise":
                raise UsageError("noise takes an explicit list, e.g. noise=0.4,0.6")
            grid = list(range(int(lo), int(hi) + 1))
        else:
            grid = [cast(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse values {values!r} for {knob}") from None
    if not grid:
        raise UsageError("empty grid")
    return knob, grid


def sweep_point(knob, value, seed_offset, pair: TransferPairSpec, config: TrainConfig, spec: NetworkSpec):
    """One pretrain -> strip -> linear-probe run; returns the CSV row values."""
    if knob == "noise":
        src = pair.source
        pair = TransferPairSpec(SyntheticSpec(src.n_classes, src.per_class, src.input_dim, src.latent_dim,
                                              value, src.warp_depth, src.seed),
                                pair.target_classes, pair.target_per_class, pair.shift_seed)
    source, target = make_transfer_pair(pair)
    enc = list(spec.encoder_dims)
    proj = [enc[-1]] * value if knob == "proj-depth" else []
    net_spec = NetworkSpec(source.d, enc, source.n_classes, proj, spec.seed + seed_offset)
    run_cfg = config.replace(seed=config.seed + seed_offset)
    net, _ = train(init_network(net_spec), source, run_cfg)
    layer = value if knob == "layer" else len(enc)
    if not 1 <= layer <= len(enc):
        raise InvalidSpec(f"layer {layer} outside encoder range 1..{len(enc)}")
    source_nc1 = nc1(source.train.with_data(layer_features(net, source.train.data, layer)))
    probe = probe_layer(net, target, layer, None, run_cfg)
    return value, seed_offset, source_nc1, probe.nc1, probe.accuracy


def _sweep_job(job):
    return sweep_point(*job)


def cmd_sweep(args, argv):
    knob, grid = parse_vary(args.vary)
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    config = _load_config(args.config)
    pair = TransferPairSpec.from_dict(_read_json(args.pair))
    if args.spec:
        spec = NetworkSpec.from_dict(_read_json(args.spec))
    else:
        src = pair.source
        spec = NetworkSpec(src.input_dim, DEFAULT_SWEEP_ENCODER, src.n_classes)
    if knob == "proj-depth" and any(v < 0 for v in grid):
        raise UsageError("proj-depth values must be >= 0")
    if knob == "noise" and any(v <= 0 for v in grid):
        raise UsageError("noise values must be > 0")
    jobs = [(knob, v, s, pair, config, spec) for v in grid for s in range(args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["knob", "seed", "source_nc1", "target_nc1", "transfer_acc"])
        for value, seed, s_nc1, t_nc1, acc in rows:
            w.writerow([value, seed, _fmt(s_nc1), _fmt(t_nc1), _fmt(acc)])
    _print_correlation("target_nc1, transfer_acc", [r[3] for r in rows], [r[4] for r in rows])
    _write_manifest("sweep", argv,
                    {"train": config.to_dict(), "network": spec.to_dict(), "pair": pair.to_dict(),
                     "knob": knob, "grid": grid},
                    {"train": [config.seed + s for s in range(args.seeds)],
                     "init": [spec.seed + s for s in range(args.seeds)]},
                    [p for p in (args.config, args.pair, args.spec) if p], [args.out], args.out)
    return EXIT_OK


# synth --------------------------------------------------------------------


def cmd_synth(args, argv):
    raw = _read_json(args.spec)
    out = Path(args.out)
    if "source" in raw:
        pair = TransferPairSpec.from_dict(raw)
        source, target = make_transfer_pair(pair)
        save_split(source, out / "source")
        save_split(target, out / "target")
        config = pair.to_dict()
    else:
        spec = SyntheticSpec.from_dict(raw)
        save_split(make_classification_task(spec), out)
        config = spec.to_dict()
    _write_manifest("synth", argv, config, {}, [args.spec], [out], out / "synth")
    return EXIT_OK


# replay / entry point -----------------------------------------------------


def cmd_replay(args, argv):
    manifest = _read_json(args.manifest)
    if "argv" not in manifest:
        raise InvalidSpec("manifest has no argv")
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncprobe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ncprobe {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("metrics", help="collapse metrics of a feature file")
    m.add_argument("--input", required=True)
    m.add_argument("--format", choices=["fmx", "csv", "idx"], default="fmx")
    m.add_argument("--labels")
    m.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_REL_TOL)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_metrics)

    pt = sub.add_parser("pretrain", help="train a network from scratch")
    pt.add_argument("--config", required=True)
    pt.add_argument("--data", required=True, help="directory with train.fmx and test.fmx")
    pt.add_argument("--spec", required=True, help="network spec JSON")
    pt.add_argument("--out", required=True)
    pt.add_argument("--dump-activations")
    pt.set_defaults(func=cmd_pretrain)

    t = sub.add_parser("transfer", help="fine-tune a checkpoint on downstream data")
    t.add_argument("--model", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--method", choices=[m.value for m in Method], required=True)
    t.add_argument("--layer", type=int)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_transfer)

    lw = sub.add_parser("layerwise", help="linear probe on every encoder layer")
    lw.add_argument("--model", required=True)
    lw.add_argument("--data", required=True)
    lw.add_argument("--pool", type=int)
    lw.add_argument("--config", required=True)
    lw.add_argument("--out", required=True)
    lw.set_defaults(func=cmd_layerwise)

    sw = sub.add_parser("sweep", help="pretrain/probe grid over one knob")
    sw.add_argument("--vary", required=True, help="proj-depth=0..3 | layer=1..L | noise=v1,v2")
    sw.add_argument("--seeds", type=int, default=1)
    sw.add_argument("--pair", required=True, help="transfer pair spec JSON")
    sw.add_argument("--config", required=True)
    sw.add_argument("--spec", help="network spec JSON (default: five 64-wide encoder layers)")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    sy = sub.add_parser("synth", help="write a synthetic task or transfer pair as FMX")
    sy.add_argument("--spec", required=True)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except NcError as exc:
        print(f"ncprobe {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"ncprobe {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
