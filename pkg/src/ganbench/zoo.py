"""GAN variants over MLPs, the alternating training loop, and sampling.

Sign conventions
----------------
``discriminator_loss`` returns the quantity the discriminator side optimizes;
it is ascended for every variant except LSGAN, whose least-squares loss is
descended (see :data:`DISCRIMINATOR_DIRECTION`). ``generator_loss`` always
returns a quantity to descend.

ACGAN signs default to the printed pairing: the discriminator (with its class
head Q) ascends ``L_S - L_C`` and the generator ascends the
generator-reachable part of ``L_S + L_C``. ``TrainConfig.acgan_signs =
"original"`` selects the pairing of the auxiliary-classifier work it comes
from instead (discriminator ascends ``L_S + L_C``, generator ascends
``L_C - L_S``). The fake-side classification term is ``Q(c | G(z, c))``.
"""
import enum
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import tensor as T
from .nn import Mlp, MlpSpec, build_mlp, clip_weights, make_optimizer
from .tensor import Tensor


class GanVariant(str, enum.Enum):
    VANILLA = "VANILLA"
    CGAN = "CGAN"
    ACGAN = "ACGAN"
    WGAN = "WGAN"
    WGAN_GP = "WGAN_GP"
    INFOGAN = "INFOGAN"
    LSGAN = "LSGAN"
    BIGAN = "BIGAN"


SUPPORTED_VARIANTS = tuple(v.value for v in GanVariant)
LABELED_VARIANTS = frozenset({GanVariant.CGAN, GanVariant.ACGAN})
CODED_VARIANTS = frozenset({GanVariant.CGAN, GanVariant.ACGAN, GanVariant.INFOGAN})
WASSERSTEIN_VARIANTS = frozenset({GanVariant.WGAN, GanVariant.WGAN_GP})
DISCRIMINATOR_DIRECTION = {v: ("descend" if v is GanVariant.LSGAN else "ascend") for v in GanVariant}
DEFAULT_INFOGAN_CODES = 4


class UnknownVariantError(ValueError):
    pass


class TrainingError(RuntimeError):
    """Training hit a non-finite loss; carries the epoch and the history so far."""

    def __init__(self, message: str, epoch: int, history: "TrainHistory"):
        super().__init__(message)
        self.epoch = epoch
        self.history = history


def parse_variant(name) -> GanVariant:
    if isinstance(name, GanVariant):
        return name
    key = str(name).strip().upper().replace("-", "_")
    if key in ("VANILLA_GAN", "GAN"):
        key = "VANILLA"
    try:
        return GanVariant(key)
    except ValueError:
        raise UnknownVariantError(
            f"unsupported GAN variant {name!r}; supported: {', '.join(SUPPORTED_VARIANTS)}"
        ) from None


@dataclass
class TrainConfig:
    """Hyperparameters of the alternating loop.

    Defaults are the shared column of the benchmark hyperparameter table
    (batch 64, latent 100, 5000 epochs, Adam at 2e-4). Use :meth:`for_variant`
    to get the per-variant defaults (RMSprop at 5e-5 with five clipped critic
    steps for WGAN, and so on).
    """

    epochs: int = 5000
    critic_steps: int = 1
    batch_size: int = 64
    latent_dim: int = 100
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    optimizer_g: str = "adam"
    optimizer_d: str = "adam"
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    rms_decay: float = 0.9
    clip: float = 0.01
    gp_weight: float = 10.0
    info_weight: float = 1.0
    seed: int = 0
    non_saturating: bool = False
    acgan_signs: str = "literal"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        for name in ("critic_steps", "batch_size", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.acgan_signs not in ("original", "literal"):
            raise ValueError("acgan_signs must be 'original' or 'literal'")

    @classmethod
    def for_variant(cls, variant, **overrides) -> "TrainConfig":
        v = parse_variant(variant)
        base = {}
        if v is GanVariant.WGAN:
            base = dict(optimizer_g="rmsprop", optimizer_d="rmsprop", lr_g=5e-5, lr_d=5e-5,
                        critic_steps=5)
        elif v is GanVariant.WGAN_GP:
            base = dict(lr_g=1e-4, lr_d=1e-4, beta1=0.0, beta2=0.9, critic_steps=5)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class NoisePrior:
    kind: str = "normal"
    dim: int = 100

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ValueError("prior kind must be 'normal' or 'uniform'")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal((n, self.dim))
        return rng.uniform(-1.0, 1.0, size=(n, self.dim))


_WIDE = ((256, "leaky_relu:0.2"), (512, "leaky_relu:0.2"))
_WIDE_REVERSED = ((512, "leaky_relu:0.2"), (256, "leaky_relu:0.2"))


@dataclass(frozen=True)
class Architecture:
    """Hidden layers of each network role.

    The default is generator ``[256, 512]`` and discriminator ``[512, 256]``
    with LeakyReLU(0.2); the encoder and Q head reuse the discriminator layout.
    """

    generator: Tuple[Tuple[int, str], ...] = _WIDE
    discriminator: Tuple[Tuple[int, str], ...] = _WIDE_REVERSED
    encoder: Tuple[Tuple[int, str], ...] = _WIDE_REVERSED
    aux: Tuple[Tuple[int, str], ...] = _WIDE_REVERSED


_NARROW = ((64, "leaky_relu:0.2"), (64, "leaky_relu:0.2"))
# Two 64-wide hidden layers everywhere: trains stably within a few thousand
# iterations on low-dimensional data, where the default widths tend to hop
# between modes.
DESK_ARCHITECTURE = Architecture(_NARROW, _NARROW, _NARROW, _NARROW)


@dataclass
class ModelBundle:
    """The networks of one variant plus its noise prior.

    ``encoder`` exists only for BIGAN and ``aux`` (the Q head) only for ACGAN
    and INFOGAN.
    """

    variant: GanVariant
    data_dim: int
    n_classes: int
    prior: NoisePrior
    generator: Mlp
    discriminator: Mlp
    encoder: Optional[Mlp] = None
    aux: Optional[Mlp] = None
    seed: int = 0

    @property
    def latent_dim(self) -> int:
        return self.prior.dim

    @property
    def code_dim(self) -> int:
        return self.n_classes if self.variant in CODED_VARIANTS else 0

    def networks(self) -> Dict[str, Mlp]:
        nets = {"G": self.generator, "D": self.discriminator}
        if self.encoder is not None:
            nets["E"] = self.encoder
        if self.aux is not None:
            nets["Q"] = self.aux
        return nets

    def discriminator_params(self) -> Dict[str, Tensor]:
        params = dict(self.discriminator.params)
        if self.variant is GanVariant.ACGAN:
            params.update(self.aux.params)
        return params

    def generator_params(self) -> Dict[str, Tensor]:
        params = dict(self.generator.params)
        if self.variant is GanVariant.BIGAN:
            params.update(self.encoder.params)
        if self.variant is GanVariant.INFOGAN:
            params.update(self.aux.params)
        return params

    def all_params(self) -> Dict[str, Tensor]:
        out = {}
        for net in self.networks().values():
            out.update(net.params)
        return out


def build_model(variant, data_dim: int, n_classes: Optional[int] = None, latent_dim: int = 100,
                arch: Optional[Architecture] = None, seed: int = 0,
                prior_kind: str = "normal") -> ModelBundle:
    """Wire the networks for ``variant``.

    CGAN appends a one-hot label to both the generator and discriminator
    inputs; ACGAN and INFOGAN append it (or the categorical code) to the
    generator input only and add a softmax head Q on data space; BIGAN's
    discriminator reads the pair ``(x, z)``.
    """
    v = parse_variant(variant)
    if data_dim < 1:
        raise ValueError("data_dim must be at least 1")
    if v in LABELED_VARIANTS:
        if n_classes is None or n_classes < 2:
            raise ValueError(f"{v.value} needs at least two label classes, got {n_classes}")
    elif v is GanVariant.INFOGAN:
        n_classes = n_classes or DEFAULT_INFOGAN_CODES
    else:
        n_classes = 0
    arch = arch or Architecture()
    net_seeds = np.random.SeedSequence(seed).generate_state(4, dtype=np.uint32)
    k = n_classes if v in CODED_VARIANTS else 0

    d_out = "sigmoid"
    if v in WASSERSTEIN_VARIANTS or v is GanVariant.LSGAN:
        d_out = "linear"
    d_in = data_dim
    if v is GanVariant.CGAN:
        d_in += n_classes
    elif v is GanVariant.BIGAN:
        d_in += latent_dim

    gen = build_mlp(MlpSpec(latent_dim + k, arch.generator, (data_dim, "tanh"), int(net_seeds[0])), "G.")
    disc = build_mlp(MlpSpec(d_in, arch.discriminator, (1, d_out), int(net_seeds[1])), "D.")
    enc = aux = None
    if v is GanVariant.BIGAN:
        enc = build_mlp(MlpSpec(data_dim, arch.encoder, (latent_dim, "linear"), int(net_seeds[2])), "E.")
    if v in (GanVariant.ACGAN, GanVariant.INFOGAN):
        aux = build_mlp(MlpSpec(data_dim, arch.aux, (n_classes, "softmax"), int(net_seeds[3])), "Q.")
    return ModelBundle(v, data_dim, n_classes, NoisePrior(prior_kind, latent_dim),
                       gen, disc, enc, aux, seed)


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _generator_input(bundle: ModelBundle, z, codes) -> Tensor:
    z = T.as_tensor(z)
    if bundle.code_dim:
        if codes is None:
            raise ValueError(f"{bundle.variant.value} needs labels/codes for the generator")
        return T.concat([z, Tensor(one_hot(codes, bundle.n_classes))], axis=1)
    return z


def _fake(bundle: ModelBundle, z, codes=None) -> Tensor:
    return bundle.generator(_generator_input(bundle, z, codes))


def _disc(bundle: ModelBundle, x: Tensor, labels=None, z=None) -> Tensor:
    if bundle.variant is GanVariant.CGAN:
        x = T.concat([x, Tensor(one_hot(labels, bundle.n_classes))], axis=1)
    elif bundle.variant is GanVariant.BIGAN:
        x = T.concat([x, T.as_tensor(z)], axis=1)
    return bundle.discriminator(x)


def _class_log_prob(q: Tensor, labels) -> Tensor:
    """Mean of ``log q[b, labels[b]]`` over the batch."""
    picked = T.sum_(q * Tensor(one_hot(labels, q.shape[1])), axis=1)
    return T.mean(T.log(picked))


def info_lower_bound(q_output, codes, prior: Optional[np.ndarray] = None) -> Tensor:
    """Variational mutual-information bound: ``mean log Q(c|x) + H(c)``.

    ``q_output`` rows must be distributions over code categories; ``prior``
    defaults to uniform.
    """
    q = T.as_tensor(q_output)
    sums = q.data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("q_output rows must sum to 1 within 1e-6")
    k = q.shape[1]
    p = np.full(k, 1.0 / k) if prior is None else np.asarray(prior, dtype=np.float64)
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    return _class_log_prob(q, codes) + entropy


def gradient_penalty(bundle: ModelBundle, x_real, x_fake, weight: float = 10.0,
                     rho=None, rng: Optional[np.random.Generator] = None) -> Tensor:
    """``weight * mean_rows (||grad_xhat F(xhat)||_2 - 1)^2`` on ``xhat = rho*fake + (1-rho)*real``."""
    xr = x_real.data if isinstance(x_real, Tensor) else np.asarray(x_real, dtype=np.float64)
    xf = x_fake.data if isinstance(x_fake, Tensor) else np.asarray(x_fake, dtype=np.float64)
    if xr.shape != xf.shape:
        raise ValueError(f"real and fake batches differ in shape: {xr.shape} vs {xf.shape}")
    if rho is None:
        rng = rng if rng is not None else np.random.default_rng()
        rho = rng.uniform(0.0, 1.0, size=(xr.shape[0], 1))
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64).reshape(-1, 1), xr.shape)
    x_hat = Tensor(rho * xf + (1.0 - rho) * xr, requires_grad=True)
    g = T.input_gradient(bundle.discriminator, x_hat)
    norms = T.sqrt(T.sum_(g * g, axis=1) + 1e-12)
    if not np.isfinite(norms.data).all():
        raise FloatingPointError("non-finite gradient norm in gradient penalty")
    return weight * T.mean(T.square(norms - 1.0))


def _check_batches(x: Tensor, z: Tensor):
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"real batch has {x.shape[0]} rows but noise batch has {z.shape[0]}")


def _checked(value: Tensor, term: str) -> Tensor:
    if not np.isfinite(value.data).all():
        raise FloatingPointError(f"non-finite {term}")
    return value


def _discriminator_objective(bundle: ModelBundle, x, z, labels=None, codes=None,
                             config: Optional[TrainConfig] = None, rho=None,
                             rng=None) -> Tuple[Tensor, float]:
    cfg = config or TrainConfig()
    v = bundle.variant
    x, z = T.as_tensor(x), T.as_tensor(z)
    _check_batches(x, z)
    if v in LABELED_VARIANTS and labels is None:
        raise ValueError(f"{v.value} needs labels for the real batch")
    if codes is None and v in LABELED_VARIANTS:
        codes = labels
    if codes is None and v is GanVariant.INFOGAN:
        codes = np.zeros(z.shape[0], dtype=np.int64)
    with T.no_grad():
        fake = _fake(bundle, z, codes)
        enc = bundle.encoder(x) if v is GanVariant.BIGAN else None
    fake = Tensor(fake.data)

    if v is GanVariant.BIGAN:
        d_real = _disc(bundle, x, z=Tensor(enc.data))
        d_fake = _disc(bundle, fake, z=z)
    else:
        d_real = _disc(bundle, x, labels)
        d_fake = _disc(bundle, fake, codes)
    d_real_mean = float(d_real.data.mean())

    if v is GanVariant.LSGAN:
        value = 0.5 * T.mean(T.square(d_real - 1.0)) + 0.5 * T.mean(T.square(d_fake))
    elif v in WASSERSTEIN_VARIANTS:
        value = T.mean(d_real) - T.mean(d_fake)
        if v is GanVariant.WGAN_GP:
            value = value - gradient_penalty(bundle, x, fake, cfg.gp_weight, rho=rho, rng=rng)
    else:
        value = T.mean(T.log(d_real)) + T.mean(T.log(1.0 - d_fake))
        if v is GanVariant.ACGAN:
            l_c = _class_log_prob(bundle.aux(x), labels) + _class_log_prob(bundle.aux(fake), codes)
            value = value - l_c if cfg.acgan_signs == "literal" else value + l_c
    return _checked(value, f"{v.value} discriminator loss"), d_real_mean


def discriminator_loss(bundle: ModelBundle, x, z, labels=None, codes=None,
                       config: Optional[TrainConfig] = None, rho=None, rng=None) -> Tensor:
    """Discriminator/critic objective on a real batch ``x`` and a noise batch ``z``.

    ``labels`` are the real rows' classes (CGAN, ACGAN); ``codes`` are the
    classes or categorical codes fed to the generator (defaults to
    ``labels``). Ascended for every variant except LSGAN.
    """
    return _discriminator_objective(bundle, x, z, labels, codes, config, rho, rng)[0]


def generator_loss(bundle: ModelBundle, z, codes=None, x=None,
                   config: Optional[TrainConfig] = None) -> Tensor:
    """Quantity the generator side descends.

    BIGAN also needs the real batch ``x`` because its encoder is updated
    together with the generator; INFOGAN's Q head is updated here as well.
    """
    cfg = config or TrainConfig()
    v = bundle.variant
    z = T.as_tensor(z)
    if v in CODED_VARIANTS and codes is None:
        if v is GanVariant.INFOGAN:
            codes = np.zeros(z.shape[0], dtype=np.int64)
        else:
            raise ValueError(f"{v.value} needs labels for the generator")
    fake = _fake(bundle, z, codes)

    if v is GanVariant.LSGAN:
        value = 0.5 * T.mean(T.square(_disc(bundle, fake) - 1.0))
    elif v in WASSERSTEIN_VARIANTS:
        value = -T.mean(_disc(bundle, fake))
    elif v is GanVariant.BIGAN:
        if x is None:
            raise ValueError("BIGAN generator loss needs the real batch x")
        x = T.as_tensor(x)
        _check_batches(x, z)
        d_real = _disc(bundle, x, z=bundle.encoder(x))
        d_fake = _disc(bundle, fake, z=z)
        if cfg.non_saturating:
            value = -(T.mean(T.log(1.0 - d_real)) + T.mean(T.log(d_fake)))
        else:
            value = T.mean(T.log(d_real)) + T.mean(T.log(1.0 - d_fake))
    else:
        d_fake = _disc(bundle, fake, codes)
        adv = -T.mean(T.log(d_fake)) if cfg.non_saturating else T.mean(T.log(1.0 - d_fake))
        if v is GanVariant.ACGAN:
            l_c = _class_log_prob(bundle.aux(fake), codes)
            if cfg.acgan_signs == "literal":
                # generator ascends L_S + L_C restricted to its own terms
                value = -(T.mean(T.log(1.0 - d_fake)) + l_c)
            else:
                value = adv - l_c
        elif v is GanVariant.INFOGAN:
            value = adv - cfg.info_weight * info_lower_bound(bundle.aux(fake), codes)
        else:
            value = adv
    return _checked(value, f"{v.value} generator loss")


@dataclass
class TrainHistory:
    """Per-epoch losses plus update counters.

    ``d_real`` holds the mean discriminator output on real data; for the
    probability-output variants a value near 0.5 indicates the discriminator
    can no longer separate real from generated rows.
    """

    d_loss: List[float] = field(default_factory=list)
    g_loss: List[float] = field(default_factory=list)
    d_real: List[float] = field(default_factory=list)
    d_updates: int = 0
    g_updates: int = 0

    def __len__(self):
        return len(self.d_loss)

    def digest(self) -> str:
        h = hashlib.sha256()
        for seq in (self.d_loss, self.g_loss, self.d_real):
            h.update(np.asarray(seq, dtype=np.float64).tobytes())
        return h.hexdigest()


def _class_sampler(labels: Optional[np.ndarray], k: int):
    if labels is None:
        return lambda rng, n: rng.integers(0, k, size=n)
    freq = np.bincount(labels, minlength=k).astype(np.float64)
    freq /= freq.sum()
    return lambda rng, n: rng.choice(k, size=n, p=freq)


def train(bundle: ModelBundle, data, labels=None, config: Optional[TrainConfig] = None,
          callback: Optional[Callable[[str, int, ModelBundle], None]] = None
          ) -> Tuple[ModelBundle, TrainHistory]:
    """Alternating training: per epoch, ``critic_steps`` discriminator updates then one generator update.

    Every discriminator update draws a fresh noise batch and a fresh data batch;
    WGAN clips the critic weights right after each of its updates. ``data``
    must already be scaled to the generator's ``[-1, 1]`` output range.
    ``callback(kind, epoch, bundle)`` fires after each update with kind
    ``"d"`` or ``"g"``. The bundle is updated in place and returned.
    """
    cfg = config or TrainConfig.for_variant(bundle.variant)
    x_all = np.asarray(data, dtype=np.float64)
    if x_all.ndim != 2 or x_all.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D matrix")
    if x_all.shape[1] != bundle.data_dim:
        raise ValueError(f"data has {x_all.shape[1]} columns, model expects {bundle.data_dim}")
    if not np.isfinite(x_all).all():
        raise ValueError("training data contains non-finite values")
    if cfg.latent_dim != bundle.latent_dim:
        raise ValueError(f"config latent_dim {cfg.latent_dim} != model latent_dim {bundle.latent_dim}")
    v = bundle.variant
    y_all = None
    if labels is not None:
        y_all = np.asarray(labels, dtype=np.int64)
        if y_all.shape != (x_all.shape[0],):
            raise ValueError("labels must have one entry per data row")
    if v in LABELED_VARIANTS and y_all is None:
        raise ValueError(f"{v.value} needs labels")

    history = TrainHistory()
    if cfg.epochs == 0:
        return bundle, history

    rng = np.random.default_rng(cfg.seed)
    d_params = bundle.discriminator_params()
    g_params = bundle.generator_params()
    d_opt = make_optimizer(cfg.optimizer_d, d_params, cfg.lr_d, cfg.beta1, cfg.beta2, cfg.eps, cfg.rms_decay)
    g_opt = make_optimizer(cfg.optimizer_g, g_params, cfg.lr_g, cfg.beta1, cfg.beta2, cfg.eps, cfg.rms_decay)
    d_direction = DISCRIMINATOR_DIRECTION[v]
    n = x_all.shape[0]
    B = cfg.batch_size
    sample_codes = None
    if v in CODED_VARIANTS:
        sample_codes = _class_sampler(y_all if v in LABELED_VARIANTS else None, bundle.n_classes)

    def batch():
        idx = rng.choice(n, size=B, replace=n < B)
        return x_all[idx], (y_all[idx] if y_all is not None else None)

    for epoch in range(cfg.epochs):
        try:
            d_losses = []
            d_real = 0.0
            for _ in range(cfg.critic_steps):
                z = bundle.prior.sample(rng, B)
                x, y = batch()
                codes = sample_codes(rng, B) if sample_codes else None
                obj, d_real = _discriminator_objective(bundle, x, z, y, codes, cfg, rng=rng)
                grads = T.backward(obj, d_params)
                d_opt.step(grads, d_direction)
                if v is GanVariant.WGAN:
                    clip_weights(d_params, cfg.clip)
                history.d_updates += 1
                d_losses.append(obj.item())
                if callback:
                    callback("d", epoch, bundle)

            z = bundle.prior.sample(rng, B)
            codes = sample_codes(rng, B) if sample_codes else None
            x = batch()[0] if v is GanVariant.BIGAN else None
            g_obj = generator_loss(bundle, z, codes, x, cfg)
            g_opt.step(T.backward(g_obj, g_params), "descend")
            history.g_updates += 1
            if callback:
                callback("g", epoch, bundle)
        except (FloatingPointError, T.NonFiniteError) as exc:
            raise TrainingError(f"training diverged at epoch {epoch}: {exc}", epoch, history) from exc
        history.d_loss.append(float(np.mean(d_losses)))
        history.g_loss.append(g_obj.item())
        history.d_real.append(d_real)
    return bundle, history


def generate(bundle: ModelBundle, n: int, seed: Optional[int] = None, labels=None,
             noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw ``n`` synthetic rows in the generator's normalized space.

    ``labels`` are required for CGAN/ACGAN; for INFOGAN they are optional
    categorical codes, sampled uniformly from the same seeded stream when
    omitted. ``noise`` may be passed in to share one latent stream across
    models.
    """
    v = bundle.variant
    if n == 0:
        return np.zeros((0, bundle.data_dim))
    if v in LABELED_VARIANTS and labels is None:
        raise ValueError(f"{v.value} generation needs labels")
    rng = np.random.default_rng(seed)
    if noise is None:
        noise = bundle.prior.sample(rng, n)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (n, bundle.latent_dim):
        raise ValueError(f"noise must have shape {(n, bundle.latent_dim)}, got {noise.shape}")
    codes = None
    if v in CODED_VARIANTS:
        codes = labels if labels is not None else rng.integers(0, bundle.n_classes, size=n)
        codes = np.asarray(codes, dtype=np.int64)
        if codes.shape != (n,):
            raise ValueError("need one label per generated row")
    with T.no_grad():
        return _fake(bundle, noise, codes).data.copy()


def encode(bundle: ModelBundle, x) -> np.ndarray:
    """BIGAN encoder ``E(x)``: data rows to latent rows."""
    if bundle.variant is not GanVariant.BIGAN:
        raise ValueError(f"encode needs a BIGAN bundle, got {bundle.variant.value}")
    with T.no_grad():
        return bundle.encoder(np.asarray(x, dtype=np.float64)).data.copy()


# Checkpoint layout (all integers little-endian):
#   8 bytes  magic b"GANBCKPT"
#   u32      format version
#   u64      header length H
#   H bytes  UTF-8 JSON header: variant, data_dim, n_classes, prior, seed,
#            networks (MlpSpec per role), params [{name, shape}] in storage
#            order, train_config (or null)
#   rest     float64 LE parameter values, concatenated in header order
CHECKPOINT_MAGIC = b"GANBCKPT"
CHECKPOINT_VERSION = 1


def checkpoint_bytes(bundle: ModelBundle, config: Optional[TrainConfig] = None) -> bytes:
    params = bundle.all_params()
    header = {
        "version": CHECKPOINT_VERSION,
        "variant": bundle.variant.value,
        "data_dim": bundle.data_dim,
        "n_classes": bundle.n_classes,
        "prior": {"kind": bundle.prior.kind, "dim": bundle.prior.dim},
        "seed": bundle.seed,
        "networks": {role: net.spec.to_dict() for role, net in bundle.networks().items()},
        "params": [{"name": k, "shape": list(p.shape)} for k, p in params.items()],
        "train_config": config.to_dict() if config is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params.values()]
    return b"".join(parts)


def save_checkpoint(path, bundle: ModelBundle, config: Optional[TrainConfig] = None):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(bundle, config))


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(8) != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, length = struct.unpack("<IQ", fh.read(12))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    return json.loads(fh.read(length).decode("utf-8"))


def load_checkpoint(path) -> Tuple[ModelBundle, Optional[TrainConfig]]:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()
    values = np.frombuffer(payload, dtype="<f8")
    v = parse_variant(header["variant"])
    nets = {role: Mlp(MlpSpec.from_dict(spec), prefix=f"{role}.")
            for role, spec in header["networks"].items()}
    prior = NoisePrior(header["prior"]["kind"], header["prior"]["dim"])
    bundle = ModelBundle(v, header["data_dim"], header["n_classes"], prior, nets["G"], nets["D"],
                         nets.get("E"), nets.get("Q"), header["seed"])
    params = bundle.all_params()
    offset = 0
    for entry in header["params"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = values[offset:offset + size]
        if chunk.size != size:
            raise ValueError("checkpoint payload is truncated")
        params[entry["name"]].data = chunk.reshape(entry["shape"]).astype(np.float64)
        offset += size
    cfg = header.get("train_config")
    return bundle, (TrainConfig.from_dict(cfg) if cfg else None)


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
