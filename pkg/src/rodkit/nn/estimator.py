from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ConfigError, DimensionError
from .model import ModelSpec, build_model, forward
from .train import NORMALIZATIONS, TrainConfig, train


@dataclass(frozen=True)
class InputNorm:
    """How complex snippets become network input.

    ``mode`` is one of ``per-frame-complex-std`` (each snippet standardized on
    its own), ``dataset-std`` (one ``mean``/``std`` pair fitted on the training
    set, like a standard scaler) or ``none``.
    """

    mode: str = "per-frame-complex-std"
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.mode not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if not self.std > 0:
            raise ConfigError("normalization std must be positive")

    @classmethod
    def fit(cls, sequences, mode: str = "dataset-std") -> "InputNorm":
        """Fit the joint real/imaginary mean and std over RAMap arrays (``dataset-std`` only)."""
        if mode != "dataset-std":
            return cls(mode)
        total = count = sq = 0.0
        for z in sequences:
            z = np.asarray(z)
            total += z.real.sum() + z.imag.sum()
            sq += np.square(z.real, dtype=np.float64).sum() + np.square(z.imag, dtype=np.float64).sum()
            count += 2 * z.size
        if count == 0:
            raise DimensionError("cannot fit normalization on an empty dataset")
        mean = total / count
        std = float(np.sqrt(max(sq / count - mean**2, 0.0)))
        return cls(mode, float(mean), std if std > 0 else 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


def ramap_to_input(snippet, norm="per-frame-complex-std") -> np.ndarray:
    """Stack a snippet of complex RAMaps into a ``(1, 2, tau, R, A)`` float64 tensor.

    Channel 0 holds real parts and channel 1 imaginary parts. ``norm`` is a
    mode name or an :class:`InputNorm`. With ``per-frame-complex-std`` the
    snippet is shifted and scaled jointly over both channels to zero mean
    and unit standard deviation; ``dataset-std`` applies fitted constants.
    """
    if not isinstance(norm, InputNorm):
        if norm == "dataset-std":
            raise ConfigError("dataset-std normalization needs fitted statistics (InputNorm.fit)")
        norm = InputNorm(norm)
    frames = [np.asarray(f) for f in snippet]
    if not frames:
        raise DimensionError("snippet is empty")
    if any(f.ndim != 2 or f.shape != frames[0].shape for f in frames):
        raise DimensionError("all RAMaps of a snippet must share the same 2-D shape")
    z = np.stack(frames).astype(np.complex128)
    x = np.stack([z.real, z.imag])[None]
    if norm.mode == "per-frame-complex-std":
        x = x - x.mean()
        std = x.std()
        if std > 0:
            x = x / std
    elif norm.mode == "dataset-std":
        x = (x - norm.mean) / norm.std
    return x


class RODNet(BaseEstimator):
    """Estimator wrapper: ``fit`` on snippets and ConfMaps, ``predict_proba`` ConfMaps.

    ``X`` holds complex snippets ``(n, tau, R, A)``; ``y`` holds ConfMap
    targets ``(n, C, tau, R, A)``.
    """

    def __init__(self, variant="CDC", num_stacks=1, base_channels=8, snippet_len=16,
                 learning_rate=1e-3, batch_size=4, epochs=10, optimizer="adam",
                 normalization="per-frame-complex-std", head_prior=None, rng_seed=0):
        self.variant = variant
        self.num_stacks = num_stacks
        self.base_channels = base_channels
        self.snippet_len = snippet_len
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.optimizer = optimizer
        self.normalization = normalization
        self.head_prior = head_prior
        self.rng_seed = rng_seed

    def _spec(self):
        return ModelSpec(self.variant, self.num_stacks, self.base_channels, self.snippet_len)

    def _train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs=self.epochs, optimizer=self.optimizer,
                           normalization=self.normalization, rng_seed=self.rng_seed)

    @staticmethod
    def _snippets(X):
        X = np.asarray(X)
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4:
            raise DimensionError(f"expected snippets (n, tau, R, A), got {X.shape}")
        return X

    def _inputs(self, X, norm):
        return np.concatenate([ramap_to_input(s, norm) for s in X]).astype(np.float32)

    def fit(self, X, y):
        cfg = self._train_config()
        X = self._snippets(X)
        self.input_norm_ = InputNorm.fit([X], self.normalization)
        self.model_ = build_model(self._spec(), self.rng_seed, head_prior=self.head_prior)
        self.model_.input_norm = self.input_norm_
        self.model_, self.loss_curve_ = train(self.model_, self._inputs(X, self.input_norm_),
                                              np.asarray(y, dtype=np.float32), cfg)
        return self

    def predict_proba(self, X, batch_size: int | None = None):
        check_is_fitted(self, "model_")
        x = self._inputs(self._snippets(X), self.input_norm_)
        bs = batch_size or self.batch_size
        return np.concatenate([forward(self.model_, x[i: i + bs])[0]
                               for i in range(0, len(x), bs)])

    def predict(self, X):
        """Per-cell class index of the largest confidence, ``(n, tau, R, A)``."""
        return self.predict_proba(X).argmax(axis=1)
