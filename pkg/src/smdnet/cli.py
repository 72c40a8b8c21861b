"""Command-line driver: ``smdnet {gen,train,infer,eval,compare}``.

Every verb accepts ``--config FILE`` with flat ``key = value`` lines named like
the long flags (dashes or underscores); flags on the command line win.
Errors print one line ``error[<Class>]: message`` and exit with status 1
(2 for usage errors).
"""

import argparse
import csv
import io
import os
import sys
from dataclasses import replace

import numpy as np

from . import io as fio
from .backbone import TrainConfig, infer_grid, init_model, train
from .data import SceneConfig, StereoSample, make_dataset
from .field import OMEGA, OUTPUT_DIMS
from .metrics import aggregate, evaluate

DATA_ENV = "SMDNET_DATA"
SPLITS = ("train", "val", "test", "ood")
MAPS = {"bimodal": ("disparity", "uncertainty", "pi", "mu1", "mu2"),
        "unimodal": ("disparity", "uncertainty"),
        "l1": ("disparity",)}


class CliError(Exception):
    kind = "Error"

    def __init__(self, msg, kind=None):
        super().__init__(msg)
        if kind:
            self.kind = kind


class UsageError(CliError):
    kind = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_root():
    return os.environ.get(DATA_ENV)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {v!r}")


# -- dataset on disk -------------------------------------------------------------

def write_sample(folder, sample):
    os.makedirs(folder, exist_ok=True)
    fio.write_png(os.path.join(folder, "left.png"), sample.left)
    fio.write_png(os.path.join(folder, "right.png"), sample.right)
    fio.write_pfm(os.path.join(folder, "gt.pfm"), sample.gt_raw.astype(np.float32))
    h, w = sample.left.shape[:2]
    fio.write_kv(os.path.join(folder, "meta.txt"),
                 {"d_max": repr(sample.d_max), "sr": sample.sr, "seed": sample.seed,
                  "width": w, "height": h})


def read_sample(folder):
    for name in ("left.png", "right.png", "gt.pfm", "meta.txt"):
        if not os.path.isfile(os.path.join(folder, name)):
            raise CliError(f"{folder}: missing {name}", "MissingFile")
    meta = fio.read_kv(os.path.join(folder, "meta.txt"))
    d_max = float(meta["d_max"])
    gt = fio.read_pfm(os.path.join(folder, "gt.pfm")).astype(np.float64)
    return StereoSample(left=fio.read_png(os.path.join(folder, "left.png")),
                        right=fio.read_png(os.path.join(folder, "right.png")),
                        gt=gt / d_max, d_max=d_max, sr=int(meta["sr"]), seed=int(meta["seed"]))


def read_manifest(root):
    path = os.path.join(root, "manifest.txt")
    if not os.path.isfile(path):
        raise CliError(f"no dataset at {root!r} (manifest.txt missing)", "MissingDataset")
    out = {}
    with open(path) as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            split, name, seed = line.split()
            out.setdefault(split, []).append(name)
    return out


def split_dirs(root, split):
    names = read_manifest(root).get(split)
    if not names:
        raise CliError(f"split {split!r} is empty or missing in {root!r}", "MissingDataset")
    return [(n, os.path.join(root, split, n)) for n in names]


def _writable_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise CliError(f"cannot write to {path!r}", "Unwritable")


def _writable_file(path):
    _writable_dir(os.path.dirname(os.path.abspath(path)))


def _require(a, *names):
    missing = [n for n in names if getattr(a, n) in (None, [])]
    if missing:
        raise UsageError("missing " + ", ".join("--" + n.replace("_", "-") for n in missing))


# -- verbs ------------------------------------------------------------------------

def cmd_gen(a):
    root = a.out or _default_root()
    if not root:
        raise UsageError(f"--out is required when {DATA_ENV} is unset")
    tmpl = SceneConfig(width=a.width, height=a.height, sr=a.sr, n_layers=a.layers, d_lo=a.d_lo,
                       d_hi=a.d_hi, d_max=a.d_max, texture=a.texture)
    try:
        tmpl.validate()
    except ValueError as e:
        raise CliError(str(e), "ConfigError") from None
    _writable_dir(root)
    data = make_dataset(a.train, a.val, a.test, tmpl, a.seed, n_ood=a.ood)
    lines = [f"# master_seed {a.seed}\n"]
    for split, samples in data.items():
        for k, s in enumerate(samples):
            name = f"{k:05d}"
            write_sample(os.path.join(root, split, name), s)
            lines.append(f"{split} {name} {s.seed}\n")
    fio.atomic_write(os.path.join(root, "manifest.txt"), "".join(lines).encode())
    print(f"wrote {sum(len(v) for v in data.values())} samples to {root}")


def _train_config(a, sr):
    gt_sr = sr if a.gt_res == "super" else 1
    return TrainConfig(n_points=a.points, crop=a.crop, epochs=a.epochs, lr=a.lr, loss=a.head,
                       sampling=a.sampling, rho=a.rho, gt_sr=gt_sr,
                       augment=tuple(x for x in a.augment.split(",") if x), seed=a.seed)


def cmd_train(a):
    _require(a, "out")
    root = a.data or _default_root()
    if not root:
        raise UsageError(f"--data is required when {DATA_ENV} is unset")
    dirs = split_dirs(root, "train")
    if a.resume and not os.path.isfile(a.resume):
        raise CliError(f"resume checkpoint {a.resume!r} not found", "MissingFile")
    _writable_file(a.out)
    if a.log:
        _writable_file(a.log)
    samples = [read_sample(d) for _, d in dirs]
    d_max, sr = samples[0].d_max, samples[0].sr
    try:
        cfg = _train_config(a, sr)
        cfg.validate()
    except ValueError as e:
        raise CliError(str(e), "ConfigError") from None

    if a.resume:
        model, old_cfg, state = fio.load_checkpoint(a.resume)
        if state is None or old_cfg is None:
            raise CliError("checkpoint holds no training state", "ResumeMismatch")
        if replace(old_cfg, epochs=cfg.epochs) != cfg:
            raise CliError("training flags differ from the resumed run", "ResumeMismatch")
        if model.d_max != d_max:
            raise CliError("dataset d_max differs from the resumed run", "ResumeMismatch")
    else:
        model = init_model(a.head, a.seed, base=a.base, feat_dim=a.feat_dim,
                           width_factor=a.width_factor, omega=a.omega, d_max=d_max)
        state = None

    def on_epoch(st):
        fio.save_checkpoint(a.out, model, cfg, st)
        if a.log:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["epoch", "loss"])
            w.writerows((k + 1, repr(v)) for k, v in enumerate(st.trace))
            fio.atomic_write(a.log, buf.getvalue().encode())
        if not a.quiet:
            print(f"epoch {st.epoch} loss {st.trace[-1]:.6f}", flush=True)

    try:
        state = train(model, samples, cfg, state=state, on_epoch=on_epoch)
    except ValueError as e:
        raise CliError(str(e), "ConfigError") from None
    fio.save_checkpoint(a.out, model, cfg, state)


def _load_model(path):
    if not os.path.isfile(path):
        raise CliError(f"checkpoint {path!r} not found", "MissingFile")
    return fio.load_checkpoint(path)[0]


def predict(model, sample, scale, batch=16384, uncertainty=True):
    if scale < 1:
        raise CliError("--out-scale must be >= 1", "ConfigError")
    h, w = sample.left.shape[:2]
    out = infer_grid(model, sample.left, sample.right, w * scale, h * scale, batch=batch,
                     uncertainty=uncertainty)
    out["disparity"] = out["disparity"] * model.d_max
    for k in ("mu1", "mu2"):
        if k in out:
            out[k] = out[k] * model.d_max
    return out


def _samples_from_args(a):
    if a.sample:
        return [(os.path.basename(os.path.normpath(a.sample)), a.sample)]
    root = a.data or _default_root()
    if not root:
        raise UsageError(f"give --sample or --data (or set {DATA_ENV})")
    return split_dirs(root, a.split)


def cmd_infer(a):
    _require(a, "ckpt", "out")
    model = _load_model(a.ckpt)
    items = _samples_from_args(a)
    for _, d in items:
        if not os.path.isdir(d):
            raise CliError(f"sample directory {d!r} not found", "MissingFile")
    if a.out_scale < 1:
        raise CliError("--out-scale must be >= 1", "ConfigError")
    _writable_dir(a.out)
    for name, d in items:
        out = predict(model, read_sample(d), a.out_scale, a.batch)
        folder = os.path.join(a.out, name) if len(items) > 1 or not a.sample else a.out
        os.makedirs(folder, exist_ok=True)
        for key in MAPS[model.kind]:
            fio.write_pfm(os.path.join(folder, f"{key}.pfm"), out[key].astype(np.float32))
            if a.png:
                fio.write_png(os.path.join(folder, f"{key}.png"), fio.colorize(out[key]))
        print(f"{name}: {out['disparity'].shape[1]}x{out['disparity'].shape[0]}")


def evaluate_split(items, pred_fn):
    """Per-sample reports (None where the prediction could not be scored) and errors."""
    reports, errors = {}, {}
    for name, d in items:
        sample = read_sample(d)
        try:
            pred = pred_fn(name, sample)
            reports[name] = evaluate(pred, sample.gt_raw, 1.0)
        except (ValueError, CliError, FileNotFoundError) as e:
            errors[name] = f"{type(e).__name__}: {e}"
    return reports, errors


def _ckpt_predictor(model, scale, batch):
    def fn(name, sample):
        return predict(model, sample, scale or sample.sr, batch, uncertainty=False)["disparity"]
    return fn


def _file_predictor(folder):
    def fn(name, sample):
        path = os.path.join(folder, name, "disparity.pfm")
        if not os.path.isfile(path):
            raise CliError(f"missing prediction {path}", "MissingFile")
        return fio.read_pfm(path).astype(np.float64)
    return fn


def cmd_eval(a):
    root = a.data or _default_root()
    if not root:
        raise UsageError(f"--data is required when {DATA_ENV} is unset")
    if bool(a.pred) == bool(a.ckpt):
        raise UsageError("give exactly one of --pred or --ckpt")
    items = split_dirs(root, a.split)
    if a.pred and not os.path.isdir(a.pred):
        raise CliError(f"prediction directory {a.pred!r} not found", "MissingFile")
    if a.out:
        _writable_dir(a.out)
    fn = _file_predictor(a.pred) if a.pred else _ckpt_predictor(_load_model(a.ckpt), a.out_scale, a.batch)
    reports, errors = evaluate_split(items, fn)
    for name, msg in errors.items():
        print(f"warning[{name}]: {msg}", file=sys.stderr)
    if not reports:
        raise CliError("no sample could be evaluated", "ResolutionMismatch")
    total = aggregate(reports.values())
    if a.out:
        for name, r in reports.items():
            fio.atomic_write(os.path.join(a.out, f"{name}.txt"), r.to_text().encode())
        fio.atomic_write(os.path.join(a.out, "aggregate.txt"), total.to_text().encode())
    sys.stdout.write(total.to_text())
    return total


def cmd_compare(a):
    _require(a, "ckpt")
    root = a.data or _default_root()
    if not root:
        raise UsageError(f"--data is required when {DATA_ENV} is unset")
    items = split_dirs(root, a.split)
    models = [(p, _load_model(p)) for p in a.ckpt]
    rows = []
    for path, model in models:
        reports, errors = evaluate_split(items, _ckpt_predictor(model, a.out_scale, a.batch))
        for name, msg in errors.items():
            print(f"warning[{path}:{name}]: {msg}", file=sys.stderr)
        if not reports:
            raise CliError(f"{path}: no sample could be evaluated", "ResolutionMismatch")
        r = aggregate(reports.values())
        rows.append([os.path.basename(path), model.kind, OUTPUT_DIMS[model.kind],
                     r.see3_avg, r.see5_avg, r.epe_avg])
    header = ["checkpoint", "head", "dims", "see3_avg", "see5_avg", "epe_avg"]
    if a.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([*row[:3], *(repr(v) for v in row[3:])] for row in rows)
        _writable_file(a.out)
        fio.atomic_write(a.out, buf.getvalue().encode())
    width = max(len(header[0]), *(len(r[0]) for r in rows))
    print(f"{header[0]:<{width}}  {'head':<8} dims  {'SEE3':>8} {'SEE5':>8} {'EPE':>8}")
    for name, kind, dims, s3, s5, e in rows:
        print(f"{name:<{width}}  {kind:<8} {dims:>4}  {s3:8.4f} {s5:8.4f} {e:8.4f}")
    return rows


# -- parser -------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="smdnet", description="Stereo mixture-density toy pipeline")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", help=f"dataset root (default ${DATA_ENV})")
    g.add_argument("--train", type=int, default=64)
    g.add_argument("--val", type=int, default=8)
    g.add_argument("--test", type=int, default=16)
    g.add_argument("--ood", type=int, default=0, help="out-of-domain test scenes")
    g.add_argument("--sr", type=int, default=4, choices=(1, 2, 4))
    g.add_argument("--width", type=int, default=96)
    g.add_argument("--height", type=int, default=96)
    g.add_argument("--layers", type=int, default=3)
    g.add_argument("--d-lo", type=float, default=1.0)
    g.add_argument("--d-hi", type=float, default=10.0)
    g.add_argument("--d-max", type=float, default=12.0)
    g.add_argument("--texture", default="in", choices=("in", "ood"))
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", help=f"dataset root (default ${DATA_ENV})")
    t.add_argument("--out", help="checkpoint path (required)")
    t.add_argument("--log", help="CSV loss trace")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.add_argument("--head", default="bimodal", choices=tuple(OUTPUT_DIMS))
    t.add_argument("--sampling", default="random", choices=("random", "dda"))
    t.add_argument("--rho", type=int, default=10)
    t.add_argument("--gt-res", default="super", choices=("base", "super"))
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--points", type=int, default=2048)
    t.add_argument("--crop", type=int, default=64)
    t.add_argument("--augment", default="chromatic,vflip")
    t.add_argument("--base", type=int, default=16)
    t.add_argument("--feat-dim", type=int, default=32)
    t.add_argument("--width-factor", type=float, default=1 / 8)
    t.add_argument("--omega", type=float, default=OMEGA)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--quiet", type=_bool, nargs="?", const=True, default=False)
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("infer", help="predict disparity at any output scale")
    i.add_argument("--ckpt", help="checkpoint (required)")
    i.add_argument("--sample", help="one sample directory")
    i.add_argument("--data", help=f"dataset root (default ${DATA_ENV})")
    i.add_argument("--split", default="test", choices=SPLITS)
    i.add_argument("--out", help="output directory (required)")
    i.add_argument("--out-scale", type=int, default=1)
    i.add_argument("--batch", type=int, default=16384)
    i.add_argument("--png", type=_bool, nargs="?", const=True, default=False)
    i.set_defaults(fn=cmd_infer)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--data", help=f"dataset root (default ${DATA_ENV})")
    e.add_argument("--split", default="test", choices=SPLITS)
    e.add_argument("--pred", help="directory written by infer")
    e.add_argument("--ckpt", help="predict on the fly with this checkpoint")
    e.add_argument("--out-scale", type=int, default=None, help="default: ground-truth scale")
    e.add_argument("--batch", type=int, default=16384)
    e.add_argument("--out", help="report directory")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("compare", help="side-by-side table over checkpoints")
    c.add_argument("--ckpt", nargs="+", help="checkpoints (required)")
    c.add_argument("--data", help=f"dataset root (default ${DATA_ENV})")
    c.add_argument("--split", default="test", choices=SPLITS)
    c.add_argument("--out-scale", type=int, default=None, help="default: ground-truth scale")
    c.add_argument("--batch", type=int, default=16384)
    c.add_argument("--out", help="CSV table path")
    c.set_defaults(fn=cmd_compare)

    for sp in (g, t, i, e, c):
        sp.add_argument("--config", help="flat key = value file; flags override it")
    return p


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    if not os.path.isfile(args.config):
        raise CliError(f"config file {args.config!r} not found", "MissingFile")
    verb_parser = parser._subparsers._group_actions[0].choices[args.verb]
    allowed = {act.dest for act in verb_parser._actions if act.dest not in ("help", "config", "fn")}
    try:
        values = fio.read_config(args.config, allowed)
    except fio.ConfigError as e:
        raise CliError(str(e), "ConfigError") from None
    for act in verb_parser._actions:
        if act.dest in values and act.nargs == "+":
            values[act.dest] = values[act.dest].split()
    verb_parser.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        args.fn(args)
    except UsageError as e:
        print(f"error[{e.kind}]: {e}", file=sys.stderr)
        return 2
    except CliError as e:
        print(f"error[{e.kind}]: {e}", file=sys.stderr)
        return 1
    except fio.PfmError as e:
        print(f"error[PfmError]: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error[{type(e).__name__}]: {str(e).splitlines()[0] if str(e) else ''}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
