"""scikit-learn style wrappers around the GAN zoo.

``GANSynthesizer`` scales the training matrix to ``[-1, 1]``, trains one
variant, and samples rows back in the original units.
"""
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import zoo
from .datasets import NormState, apply_minmax, fit_minmax, invert_minmax


class RangeNormalizer(TransformerMixin, BaseEstimator):
    """Per-column min-max scaling to ``[-1, 1]``; constant columns map to 0."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.state_ = fit_minmax(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return apply_minmax(X, self.state_)

    def inverse_transform(self, X):
        check_is_fitted(self, "state_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return invert_minmax(X, self.state_)

    def _check_width(self, X):
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")

    @classmethod
    def from_state(cls, state: NormState) -> "RangeNormalizer":
        obj = cls()
        obj.state_ = state
        obj.n_features_in_ = state.mins.shape[0]
        return obj


class GANSynthesizer(BaseEstimator):
    """Train one GAN variant on a numeric matrix and sample synthetic rows.

    Parameters
    ----------
    variant : str
        One of :data:`ganbench.zoo.SUPPORTED_VARIANTS`.
    epochs, critic_steps, batch_size, latent_dim, lr_g, lr_d : optional
        Overrides of the variant's default training configuration; ``None``
        keeps the default.
    hidden_g, hidden_d : tuple of (width, activation), optional
        Hidden layers of the generator and discriminator.
    n_codes : int, optional
        Number of categorical codes for INFOGAN.
    random_state : int
        Seeds network initialization, batch draws and noise.

    Attributes
    ----------
    bundle_ : ModelBundle
    history_ : TrainHistory
    normalizer_ : RangeNormalizer
    classes_ : ndarray, only for label-conditioned variants
    """

    def __init__(self, variant: str = "VANILLA", epochs: Optional[int] = None,
                 critic_steps: Optional[int] = None, batch_size: Optional[int] = None,
                 latent_dim: Optional[int] = None, lr_g: Optional[float] = None,
                 lr_d: Optional[float] = None, hidden_g=None, hidden_d=None,
                 n_codes: Optional[int] = None, random_state: int = 0):
        self.variant = variant
        self.epochs = epochs
        self.critic_steps = critic_steps
        self.batch_size = batch_size
        self.latent_dim = latent_dim
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.hidden_g = hidden_g
        self.hidden_d = hidden_d
        self.n_codes = n_codes
        self.random_state = random_state

    def _config(self) -> zoo.TrainConfig:
        overrides = {k: getattr(self, k) for k in
                     ("epochs", "critic_steps", "batch_size", "latent_dim", "lr_g", "lr_d")
                     if getattr(self, k) is not None}
        overrides["seed"] = int(self.random_state)
        return zoo.TrainConfig.for_variant(self.variant, **overrides)

    def fit(self, X, y=None):
        v = zoo.parse_variant(self.variant)
        X = check_array(X, dtype=np.float64)
        labels = None
        n_classes = self.n_codes
        if v in zoo.LABELED_VARIANTS:
            if y is None:
                raise ValueError(f"{v.value} needs labels y")
            self.classes_, labels = np.unique(np.asarray(y), return_inverse=True)
            n_classes = len(self.classes_)
        cfg = self._config()
        default = zoo.Architecture()
        arch = zoo.Architecture(
            generator=tuple(map(tuple, self.hidden_g)) if self.hidden_g else default.generator,
            discriminator=tuple(map(tuple, self.hidden_d)) if self.hidden_d else default.discriminator,
        )
        self.normalizer_ = RangeNormalizer().fit(X)
        self.bundle_ = zoo.build_model(v, X.shape[1], n_classes, cfg.latent_dim, arch,
                                       seed=int(self.random_state))
        self.bundle_, self.history_ = zoo.train(self.bundle_, self.normalizer_.transform(X),
                                                labels, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n: int, y=None, random_state: Optional[int] = None) -> np.ndarray:
        """``n`` synthetic rows in the units of the training data."""
        check_is_fitted(self, "bundle_")
        labels = None
        if y is not None:
            y = np.asarray(y)
            if hasattr(self, "classes_"):
                if not np.isin(y, self.classes_).all():
                    raise ValueError("y contains labels not seen during fit")
                labels = np.searchsorted(self.classes_, y)
            else:
                labels = y.astype(np.int64)
        seed = self.random_state if random_state is None else random_state
        rows = zoo.generate(self.bundle_, n, seed=seed, labels=labels)
        if n == 0:
            return rows
        return self.normalizer_.inverse_transform(rows)

    def transform(self, X) -> np.ndarray:
        """BIGAN only: encode rows into the latent space."""
        check_is_fitted(self, "bundle_")
        X = check_array(X, dtype=np.float64)
        return zoo.encode(self.bundle_, self.normalizer_.transform(X))
