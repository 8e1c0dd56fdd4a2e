"""File formats: run configs, binary checkpoints, CSV tables and PGM/PPM rasters."""
from __future__ import annotations

import csv
import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .data import LabeledSet, SpiralConfig, check_box
from .flow import SCHEMES, STEP_MODES, FlowModel
from .losses import ClassifierHead, LossConfig
from .trainer import TrainConfig
from .velocity import VelocityField

VARIANTS = {
    "unshared": (False, "none"),
    "shared": (True, "none"),
    "shared_ic_data": (True, "data"),
    "shared_ic_domain": (True, "domain"),
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    variant: str = "shared"
    n_steps: int = 20
    hidden: int = 10
    dim: int = 2
    scheme: str = "euler"
    step_mode: str = "normalized"
    use_bias: bool = True
    # training
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 300
    epochs: int = 1000
    seed: int = 0
    shuffle: bool = True
    # objective
    weight_decay: float = 1e-4
    ic_weight: float = 1.0
    domain_samples_per_batch: int = 300
    domain_box: tuple = (-6.0, 6.0, -6.0, 6.0)
    # data
    n_per_class: int = 1000
    turns: float = 1.0
    radius_scale: float = 4.0
    noise_sigma: float = 0.05
    data_seed: int = 0

    @property
    def shared(self) -> bool:
        return VARIANTS[self.variant][0]

    @property
    def ic_mode(self) -> str:
        return VARIANTS[self.variant][1]

    def spiral(self) -> SpiralConfig:
        return SpiralConfig(self.n_per_class, self.turns, self.radius_scale, self.noise_sigma, self.data_seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.beta1, self.beta2, self.adam_eps, self.batch_size,
                           self.epochs, self.seed, self.shuffle)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.weight_decay, self.ic_mode,
                          self.ic_weight if self.ic_mode != "none" else 0.0,
                          self.domain_samples_per_batch, tuple(self.domain_box))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["domain_box"] = [float(v) for v in self.domain_box]
        return d


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key, value, kind):
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    # tuple: the domain box
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(f"{key}: expected [x0, x1, y0, y1]")
    return tuple(_coerce(key, v, "float") for v in value)


def make_run_config(values: dict) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kw = {k: _coerce(k, v, _FIELD_TYPES[k]) for k, v in values.items()}
    cfg = RunConfig(**kw)
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"variant: must be one of {', '.join(VARIANTS)}")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"scheme: must be one of {', '.join(SCHEMES)}")
    if cfg.step_mode not in STEP_MODES:
        raise ConfigError(f"step_mode: must be one of {', '.join(STEP_MODES)}")
    for key in ("n_steps", "hidden", "dim"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be >= 1")
    if cfg.dim != 2:
        raise ConfigError("dim: the spiral task is 2-dimensional")
    try:
        check_box(cfg.domain_box)
        cfg.spiral(), cfg.train_config(), cfg.loss_config()
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return cfg


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        values = yaml.safe_load(text) or {}
    except yaml.YAMLError as err:
        raise ConfigError(f"config is not valid key: value text: {err}") from err
    if not isinstance(values, dict):
        raise ConfigError("config must be a flat mapping of key: value lines")
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; nested key(s): {', '.join(map(str, nested))}")
    values.update(overrides or {})
    return make_run_config(values)


def dump_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.as_dict(), sort_keys=True, default_flow_style=None))


# checkpoints

MAGIC = b"RESFLOW\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIBBBBBI")
_VARIANT_CODES = {name: i for i, name in enumerate(VARIANTS)}
NO_VARIANT = 255


def encode_checkpoint(model: FlowModel, head: ClassifierHead, variant: str | None = None) -> bytes:
    use_bias = model.fields[0].use_bias
    params = np.concatenate([np.ravel(p) for p in model.parameters() + head.parameters()])
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, model.dim, model.hidden, model.n_steps,
        int(model.shared), _VARIANT_CODES.get(variant, NO_VARIANT),
        SCHEMES.index(model.scheme), STEP_MODES.index(model.step_mode), int(use_bias),
        params.size,
    )
    return header + params.astype("<f8").tobytes()


def decode_checkpoint(blob: bytes) -> tuple[FlowModel, ClassifierHead, str | None]:
    if len(blob) < _HEADER.size:
        raise ValueError("checkpoint truncated")
    (magic, version, D, H, L, shared, variant, scheme, step_mode, use_bias,
     count) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError("not a checkpoint file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    n_fields = 1 if shared else L
    expected = n_fields * (2 * D * H + H) + D + 1
    if count != expected or values.size != expected:
        raise ValueError(f"checkpoint holds {values.size} values, expected {expected}")
    fields, pos = [], 0

    def take(*shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = values[pos:pos + n].reshape(shape)
        pos += n
        return out

    for _ in range(n_fields):
        fields.append(VelocityField(take(H, D), take(H), take(D, H), bool(use_bias)))
    model = FlowModel(fields, L, bool(shared), SCHEMES[scheme], STEP_MODES[step_mode])
    head = ClassifierHead(take(D), take(1)[0])
    names = list(VARIANTS)
    return model, head, names[variant] if variant < len(names) else None


def save_checkpoint(path, model, head, variant=None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, head, variant))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())


# CSV

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_dataset(path, data: LabeledSet) -> None:
    write_csv(path, ("x1", "x2", "label"),
              ((x1, x2, int(y)) for (x1, x2), y in zip(data.points, data.labels)))


def read_dataset(path) -> LabeledSet:
    header, rows = read_csv(path)
    if header != ["x1", "x2", "label"]:
        raise ValueError(f"{path}: expected columns x1,x2,label")
    arr = np.array(rows, dtype=np.float64).reshape(-1, 3)
    return LabeledSet(arr[:, :2], arr[:, 2].astype(np.int64))


def write_grid_csv(path, grid) -> None:
    pts = grid.points()
    write_csv(path, ("x1", "x2", "value"),
              ((x, y, v) for (x, y), v in zip(pts, grid.values.ravel())))


def write_points_csv(path, points) -> None:
    write_csv(path, ("x1", "x2"), points)


# rasters: row 0 is the top of the box (largest y)

def _image(values: np.ndarray) -> np.ndarray:
    return np.flipud(np.asarray(values).T)


def write_pgm(path, values, lo: float = 0.0, hi: float = 1.0) -> None:
    """8-bit binary graymap of ``values[i, j]`` scaled linearly from [lo, hi]."""
    img = _image(values)
    scaled = np.clip((np.nan_to_num(img, nan=lo) - lo) / (hi - lo), 0.0, 1.0)
    data = np.round(255 * scaled).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode() + data.tobytes())


JACOBIAN_WINDOW = (-2.5, 2.5)
JACOBIAN_CMAP = "RdBu_r"


def write_ppm(path, values, lo: float = JACOBIAN_WINDOW[0], hi: float = JACOBIAN_WINDOW[1],
              cmap: str = JACOBIAN_CMAP) -> None:
    """8-bit binary pixmap through a matplotlib colormap; NaN cells are black."""
    from matplotlib import colormaps

    img = _image(values)
    t = np.clip((np.nan_to_num(img, nan=lo) - lo) / (hi - lo), 0.0, 1.0)
    rgb = colormaps[cmap](t)[..., :3]
    rgb[np.isnan(img)] = 0.0
    data = np.round(255 * rgb).astype(np.uint8)
    Path(path).write_bytes(f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode() + data.tobytes())
