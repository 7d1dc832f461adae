"""Experiment configuration: a flat ``key = value`` text file with dotted keys.

Grammar
-------
* One ``key = value`` per line; blank lines and lines starting with ``#`` are
  ignored. Keys are case-sensitive; surrounding whitespace is stripped.
* Lists are comma-separated; a vector list (mixture means) separates
  components with ``;`` and coordinates with ``,``.
* A key may appear only once.

Top-level keys: ``seed``, ``out``, ``workers``, ``variants``.

``dataset.<id>.<field>`` declares a dataset; ``<id>`` is any name made of
letters, digits, ``-`` and ``_``. Fields: ``kind`` (``csv``, ``tensor``,
``kdd99``, ``mixture``, ``kdd99_synth``), ``path``, ``labels_path``,
``label_column``, ``header`` (``auto``/``true``/``false``), ``delimiter``,
``decimate``, ``train_fraction``, and for mixtures ``n``, ``means``,
``stds``, ``weights``, ``seed``, ``labeled``.

``train.<field>`` overrides a :class:`ganbench.zoo.TrainConfig` field for every
variant; ``train.<VARIANT>.<field>`` overrides it for one variant. Values
absent from the file fall back to the variant's defaults.

``arch.generator``, ``arch.discriminator``, ``arch.encoder``, ``arch.aux``
give hidden layers as ``width:activation`` items, e.g.
``arch.generator = 64:leaky_relu:0.2, 64:leaky_relu:0.2``.

``metrics.<field>``: ``bandwidth`` (``median`` or a positive number),
``sample_size`` (default 2000, capped at the real row count), ``space``
(``raw`` or ``normalized``), ``unbiased``, ``critic_emd``, ``critic_steps``,
``kl_jsd``, ``bins``.

``plots.<field>``: ``enabled``, ``qq_points``, ``kde_points``, ``kde_column``.
"""
import hashlib
import re
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

from . import zoo


class ConfigError(ValueError):
    pass


_ID = re.compile(r"^[A-Za-z0-9_-]+$")
DATASET_KINDS = ("csv", "tensor", "kdd99", "mixture", "kdd99_synth")
_DATASET_FIELDS = {"kind", "path", "labels_path", "label_column", "header", "delimiter", "decimate",
                   "train_fraction", "n", "means", "stds", "weights", "seed", "labeled"}
_TRAIN_FIELDS = {f.name for f in fields(zoo.TrainConfig)} - {"seed"}
_ARCH_FIELDS = ("generator", "discriminator", "encoder", "aux")


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _int(text: str, key: str, minimum: Optional[int] = None) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {v}")
    return v


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _floats(text: str, key: str) -> List[float]:
    return [_float(t, key) for t in text.split(",") if t.strip()]


@dataclass
class DatasetConfig:
    id: str
    kind: str
    path: Optional[str] = None
    labels_path: Optional[str] = None
    label_column: Optional[str] = None
    header: Optional[bool] = None
    delimiter: str = ","
    decimate: int = 1
    train_fraction: float = 1.0
    n: int = 2000
    means: Tuple[Tuple[float, ...], ...] = ()
    stds: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()
    seed: int = 0
    labeled: bool = False


@dataclass
class MetricsConfig:
    bandwidth: Optional[float] = None
    sample_size: int = 2000
    space: str = "raw"
    unbiased: bool = False
    critic_emd: bool = False
    critic_steps: int = 500
    kl_jsd: bool = True
    bins: int = 50


@dataclass
class PlotsConfig:
    enabled: bool = True
    qq_points: int = 100
    kde_points: int = 200
    kde_column: Optional[str] = None


@dataclass
class ExperimentConfig:
    datasets: List[DatasetConfig]
    variants: List[zoo.GanVariant]
    seed: int = 0
    out: str = "ganbench-out"
    workers: int = 1
    train: Dict[str, str] = field(default_factory=dict)
    train_per_variant: Dict[str, Dict[str, str]] = field(default_factory=dict)
    arch: Dict[str, Tuple[Tuple[int, str], ...]] = field(default_factory=dict)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    plots: PlotsConfig = field(default_factory=PlotsConfig)
    source_hash: str = ""

    def train_config(self, variant: zoo.GanVariant, seed: int) -> zoo.TrainConfig:
        """Variant defaults, then global ``train.*`` overrides, then ``train.<VARIANT>.*``."""
        raw = dict(self.train)
        raw.update(self.train_per_variant.get(variant.value, {}))
        base = zoo.TrainConfig.for_variant(variant)
        overrides = {}
        for key, text in raw.items():
            default = getattr(base, key)
            label = f"train.{key}"
            if isinstance(default, bool):
                overrides[key] = _bool(text, label)
            elif isinstance(default, int):
                overrides[key] = _int(text, label)
            elif isinstance(default, float):
                overrides[key] = _float(text, label)
            else:
                overrides[key] = text.strip()
        overrides["seed"] = seed
        try:
            return zoo.TrainConfig.for_variant(variant, **overrides)
        except ValueError as exc:
            raise ConfigError(f"train config for {variant.value}: {exc}") from None

    def architecture(self) -> zoo.Architecture:
        return zoo.Architecture(**{k: v for k, v in self.arch.items()})


def _parse_layers(text: str, key: str) -> Tuple[Tuple[int, str], ...]:
    from .nn import parse_activation
    layers = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        width, _, act = item.partition(":")
        act = act or "leaky_relu:0.2"
        try:
            parse_activation(act)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        layers.append((_int(width, key, 1), act))
    if not layers:
        raise ConfigError(f"{key}: needs at least one hidden layer")
    return tuple(layers)


def parse_config_text(text: str) -> ExperimentConfig:
    pairs: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = key.strip(), value.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value

    datasets: Dict[str, Dict[str, str]] = {}
    train: Dict[str, str] = {}
    per_variant: Dict[str, Dict[str, str]] = {}
    arch = {}
    metrics = MetricsConfig()
    plots = PlotsConfig()
    top = {"seed": "0", "out": "ganbench-out", "workers": "1", "variants": ""}
    for key, value in pairs.items():
        parts = key.split(".")
        head = parts[0]
        if len(parts) == 1 and head in top:
            top[head] = value
        elif head == "dataset" and len(parts) == 3:
            _, ds_id, fld = parts
            if not _ID.match(ds_id):
                raise ConfigError(f"{key}: dataset id may use letters, digits, '-' and '_'")
            if fld not in _DATASET_FIELDS:
                raise ConfigError(f"{key}: unknown dataset field {fld!r}")
            datasets.setdefault(ds_id, {})[fld] = value
        elif head == "train" and len(parts) == 2:
            if parts[1] not in _TRAIN_FIELDS:
                raise ConfigError(f"{key}: unknown training field {parts[1]!r}")
            train[parts[1]] = value
        elif head == "train" and len(parts) == 3:
            v = _variant(parts[1], key)
            if parts[2] not in _TRAIN_FIELDS:
                raise ConfigError(f"{key}: unknown training field {parts[2]!r}")
            per_variant.setdefault(v.value, {})[parts[2]] = value
        elif head == "arch" and len(parts) == 2 and parts[1] in _ARCH_FIELDS:
            arch[parts[1]] = _parse_layers(value, key)
        elif head == "metrics" and len(parts) == 2:
            _set_metric(metrics, parts[1], value, key)
        elif head == "plots" and len(parts) == 2:
            _set_plot(plots, parts[1], value, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    variants = [_variant(v, "variants") for v in top["variants"].split(",") if v.strip()]
    if not variants:
        raise ConfigError("variants: at least one GAN variant is required")
    if len(set(variants)) != len(variants):
        raise ConfigError("variants: each variant may be listed once")
    if not datasets:
        raise ConfigError("at least one dataset.<id>.kind entry is required")
    cfg = ExperimentConfig(
        datasets=[_dataset(ds_id, f) for ds_id, f in datasets.items()],  # file order,
        variants=variants,
        seed=_int(top["seed"], "seed", 0),
        out=top["out"],
        workers=_int(top["workers"], "workers", 1),
        train=train,
        train_per_variant=per_variant,
        arch=arch,
        metrics=metrics,
        plots=plots,
        source_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )
    for v in variants:
        cfg.train_config(v, 0)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _variant(name: str, key: str) -> zoo.GanVariant:
    try:
        return zoo.parse_variant(name)
    except zoo.UnknownVariantError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _set_metric(m: MetricsConfig, name: str, value: str, key: str):
    if name == "bandwidth":
        if value.lower() == "median":
            m.bandwidth = None
        else:
            m.bandwidth = _float(value, key)
            if m.bandwidth <= 0:
                raise ConfigError(f"{key}: bandwidth must be positive")
    elif name == "sample_size":
        m.sample_size = _int(value, key, 1)
    elif name == "space":
        if value not in ("raw", "normalized"):
            raise ConfigError(f"{key}: expected 'raw' or 'normalized'")
        m.space = value
    elif name in ("unbiased", "critic_emd", "kl_jsd"):
        setattr(m, name, _bool(value, key))
    elif name in ("critic_steps", "bins"):
        setattr(m, name, _int(value, key, 1))
    else:
        raise ConfigError(f"unknown config key {key!r}")


def _set_plot(p: PlotsConfig, name: str, value: str, key: str):
    if name == "enabled":
        p.enabled = _bool(value, key)
    elif name in ("qq_points", "kde_points"):
        setattr(p, name, _int(value, key, 2))
    elif name == "kde_column":
        p.kde_column = value
    else:
        raise ConfigError(f"unknown config key {key!r}")


def _dataset(ds_id: str, f: Dict[str, str]) -> DatasetConfig:
    key = f"dataset.{ds_id}"
    kind = f.get("kind")
    if kind not in DATASET_KINDS:
        raise ConfigError(f"{key}.kind: expected one of {', '.join(DATASET_KINDS)}, got {kind!r}")
    d = DatasetConfig(id=ds_id, kind=kind)
    if kind in ("csv", "tensor", "kdd99"):
        if not f.get("path"):
            raise ConfigError(f"{key}.path is required for kind {kind}")
    d.path = f.get("path")
    d.labels_path = f.get("labels_path")
    d.label_column = f.get("label_column")
    header = f.get("header", "auto")
    d.header = None if header.lower() == "auto" else _bool(header, f"{key}.header")
    d.delimiter = f.get("delimiter", ",")
    d.decimate = _int(f.get("decimate", "1"), f"{key}.decimate", 1)
    d.train_fraction = _float(f.get("train_fraction", "1"), f"{key}.train_fraction")
    if not 0.0 < d.train_fraction <= 1.0:
        raise ConfigError(f"{key}.train_fraction must lie in (0, 1]")
    d.n = _int(f.get("n", "2000"), f"{key}.n", 1)
    d.seed = _int(f.get("seed", "0"), f"{key}.seed", 0)
    d.labeled = _bool(f.get("labeled", "false"), f"{key}.labeled")
    if kind == "mixture":
        if "means" not in f:
            raise ConfigError(f"{key}.means is required for a mixture")
        d.means = tuple(tuple(_floats(c, f"{key}.means")) for c in f["means"].split(";") if c.strip())
        k = len(d.means)
        d.stds = tuple(_floats(f.get("stds", ",".join(["1"] * k)), f"{key}.stds"))
        d.weights = tuple(_floats(f.get("weights", ",".join([repr(1.0 / k)] * k)), f"{key}.weights"))
        if len(d.stds) != k or len(d.weights) != k:
            raise ConfigError(f"{key}: means, stds and weights need one entry per component")
    return d
