"""File formats: PFM disparity maps, PNG images, checkpoints and flat config files."""

import io
import json
import os
import re
import sys
import tempfile
import zipfile
from dataclasses import asdict, fields

import numpy as np
from PIL import Image

from .backbone import AdamState, ConvNet, ConvSpec, SmdModel, TrainConfig, TrainState
from .field import MlpHead

CHECKPOINT_VERSION = 1


class PfmError(ValueError):
    def __init__(self, msg, offset=None):
        if offset is not None:
            msg = f"{msg} at byte {offset}"
        super().__init__(msg)
        self.offset = offset


class ConfigError(ValueError):
    pass


def atomic_write(path, data):
    """Write ``data`` (bytes) to ``path`` through a temp file in the same directory."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- PFM ------------------------------------------------------------------------

def pfm_bytes(field, little_endian=None):
    field = np.asarray(field)
    if field.ndim != 2:
        raise PfmError("PFM disparity maps must be 2-D")
    if little_endian is None:
        little_endian = sys.byteorder == "little"
    dtype = np.dtype("<f4" if little_endian else ">f4")
    h, w = field.shape
    header = f"Pf\n{w} {h}\n{-1.0 if little_endian else 1.0}\n".encode("ascii")
    return header + np.ascontiguousarray(field[::-1], dtype=dtype).tobytes()


def write_pfm(path, field, little_endian=None):
    atomic_write(path, pfm_bytes(field, little_endian))


def parse_pfm(buf):
    """Decode a single-channel PFM; rows are stored bottom-to-top."""
    pos = 0
    lines = []
    for _ in range(3):
        end = buf.find(b"\n", pos)
        if end < 0:
            raise PfmError("truncated header", len(buf))
        lines.append((pos, buf[pos:end].decode("ascii", errors="replace").strip()))
        pos = end + 1
    (o_magic, magic), (o_dims, dims), (o_scale, scale) = lines
    if magic == "PF":
        raise PfmError("colour PFM (PF) is not a disparity map", o_magic)
    if magic != "Pf":
        raise PfmError(f"bad magic {magic!r}", o_magic)
    m = re.fullmatch(r"(\d+)\s+(\d+)", dims)
    if not m:
        raise PfmError(f"bad dimensions line {dims!r}", o_dims)
    w, h = int(m.group(1)), int(m.group(2))
    try:
        s = float(scale)
    except ValueError:
        raise PfmError(f"bad scale line {scale!r}", o_scale) from None
    if s == 0 or not np.isfinite(s):
        raise PfmError("scale must be finite and non-zero", o_scale)
    need = 4 * w * h
    if len(buf) - pos < need:
        raise PfmError(f"truncated payload: expected {need} bytes, file ends", len(buf))
    dtype = np.dtype("<f4" if s < 0 else ">f4")
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data[::-1].astype(np.float32)


def read_pfm(path):
    with open(path, "rb") as f:
        return parse_pfm(f.read())


# -- PNG ------------------------------------------------------------------------

# piecewise-linear map from dark blue through cyan, yellow to dark red
COLORMAP = np.array([
    [0.00, 0.0, 0.0, 0.5],
    [0.15, 0.0, 0.0, 1.0],
    [0.40, 0.0, 1.0, 1.0],
    [0.60, 1.0, 1.0, 0.0],
    [0.85, 1.0, 0.0, 0.0],
    [1.00, 0.5, 0.0, 0.0],
])


def colorize(field, lo=None, hi=None):
    """Map a scalar field to 8-bit RGB with :data:`COLORMAP`; NaNs become black."""
    field = np.asarray(field, dtype=np.float64)
    finite = np.isfinite(field)
    vals = field[finite] if finite.any() else np.zeros(1)
    lo = vals.min() if lo is None else lo
    hi = vals.max() if hi is None else hi
    t = np.clip((field - lo) / (hi - lo), 0, 1) if hi > lo else np.zeros_like(field)
    t = np.where(finite, t, 0.0)
    rgb = np.stack([np.interp(t, COLORMAP[:, 0], COLORMAP[:, c]) for c in (1, 2, 3)], axis=-1)
    rgb[~finite] = 0.0
    return np.round(rgb * 255).astype(np.uint8)


def png_bytes(rgb):
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        rgb = np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, rgb):
    atomic_write(path, png_bytes(rgb))


def read_png(path):
    """RGB image as float64 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


# -- checkpoints ------------------------------------------------------------------

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy(a):
    buf = io.BytesIO()
    np.save(buf, np.asarray(a), allow_pickle=False)
    return buf.getvalue()


def checkpoint_bytes(model, cfg=None, state=None):
    """Deterministic zip holding every tensor plus JSON metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "d_max": model.d_max,
        "net": {"in_ch": model.net.in_ch, "specs": [asdict(s) for s in model.net.specs]},
        "head": {"widths": list(model.head.widths), "omega": model.head.omega,
                 "activations": list(model.head.activations)},
        "train_config": None if cfg is None else {**asdict(cfg), "augment": list(cfg.augment)},
        "epoch": None if state is None else state.epoch,
        "trace": None if state is None else [float(v) for v in state.trace],
        "adam": None if state is None else {
            "t": state.adam.t, "lr": state.adam.lr, "beta1": state.adam.beta1,
            "beta2": state.adam.beta2, "eps": state.adam.eps},
    }
    entries = [("meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())]
    entries += [(f"net/{k:03d}.npy", _npy(p)) for k, p in enumerate(model.net.params())]
    entries += [(f"head/{k:03d}.npy", _npy(p)) for k, p in enumerate(model.head.params())]
    if state is not None:
        entries += [(f"adam/m/{k:03d}.npy", _npy(p)) for k, p in enumerate(state.adam.m)]
        entries += [(f"adam/v/{k:03d}.npy", _npy(p)) for k, p in enumerate(state.adam.v)]
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, data in entries:
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)
    return buf.getvalue()


def save_checkpoint(path, model, cfg=None, state=None):
    atomic_write(path, checkpoint_bytes(model, cfg, state))


def load_checkpoint(path):
    """Returns ``(model, cfg, state)``; ``cfg`` and ``state`` may be None."""
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")

        def arrays(prefix):
            names = sorted(n for n in zf.namelist() if n.startswith(prefix))
            return [np.load(io.BytesIO(zf.read(n)), allow_pickle=False) for n in names]

        net = ConvNet(meta["net"]["in_ch"], [ConvSpec(**s) for s in meta["net"]["specs"]])
        net.set_params(arrays("net/"))
        head = MlpHead(meta["head"]["widths"], meta["head"]["omega"], meta["head"]["activations"])
        head.set_params(arrays("head/"))
        model = SmdModel(net, head, meta["kind"], meta["d_max"])
        cfg = None
        if meta["train_config"] is not None:
            tc = dict(meta["train_config"])
            tc["augment"] = tuple(tc["augment"])
            cfg = TrainConfig(**tc)
        state = None
        if meta["adam"] is not None:
            adam = AdamState(arrays("adam/m/"), arrays("adam/v/"), **meta["adam"])
            state = TrainState(adam, meta["epoch"], list(meta["trace"]))
    return model, cfg, state


# -- flat key = value config files ---------------------------------------------------

def read_config(path, allowed):
    """Parse ``key = value`` lines (``#`` comments); unknown keys raise :class:`ConfigError`."""
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in allowed:
                raise ConfigError(f"{path}:{n}: unknown key {key!r}")
            out[key] = value
    return out


def write_kv(path, mapping):
    atomic_write(path, "".join(f"{k} = {v}\n" for k, v in mapping.items()).encode())


def read_kv(path):
    out = {}
    with open(path) as f:
        for line in f:
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                out[k] = v
    return out


def config_fields(cls):
    return {f.name for f in fields(cls)}
