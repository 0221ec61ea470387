"""Secure logistic regression training and its plaintext reference trainers.

One secure iteration runs three strictly separated phases, everything inside
a phase batched into single rounds: (1) one shared matrix product computes
every example's weighted sum, truncated locally; (2) one batched activation;
(3) one batched elementwise multiplication forms the per-example gradients,
which are accumulated, truncated, scaled by the public learning rate and
truncated once more, all locally.  The learning rate is applied at the weight
update as a public fixed-point constant, so its quantized value (for example
encode(0.001) with 12 fractional bits is 4, an effective rate of about
0.00098) is what the model actually trains with.

The two plaintext trainers bracket the secure one: `train_plain_float` is
textbook full gradient descent on reals, while `train_plain_fixed` replays
the secure schedule on plaintext ring integers with exact truncation,
isolating share-truncation noise from fixed-point quantization.  No early
stopping anywhere: the iteration count is fixed up front.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .activation import batch_activate, clipped_relu, clipped_relu_fixed
from .engine import Session, batch_mul, matmul
from .errors import ProtocolError
from .fixedpoint import FixedPointParams, decode_array, encode, encode_array, exact_truncate
from .prefixnet import cached_plan
from .randomness import (
    TAG_BIT,
    TAG_CONVERSION,
    TAG_MATMUL,
    TAG_PREFIXNET,
    TAG_SCALAR,
)


@dataclass(frozen=True)
class TrainingConfig:
    eta: float = 0.001
    n_iter: int = 10
    params: FixedPointParams = field(default_factory=FixedPointParams)
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.n_iter < 0:
            raise ValueError("iteration count cannot be negative")


@dataclass
class Dataset:
    """Feature matrix with the leading all-ones dummy column, labels in {0,1}."""

    X: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.t = np.asarray(self.t)
        if self.X.ndim != 2 or self.t.ndim != 1 or self.X.shape[0] != self.t.shape[0]:
            raise ValueError(f"inconsistent dataset shapes {self.X.shape} / {self.t.shape}")
        if not np.all(self.X[:, 0] == 1.0):
            raise ValueError("first column must be the all-ones dummy feature")
        if not np.isin(self.t, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    @classmethod
    def from_features(cls, features, labels) -> "Dataset":
        features = np.asarray(features, dtype=np.float64)
        dummy = np.ones((features.shape[0], 1))
        return cls(np.hstack([dummy, features]), np.asarray(labels))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_weights(self) -> int:
        return self.X.shape[1]


def train_plain_float(X: np.ndarray, t: np.ndarray, cfg: TrainingConfig) -> np.ndarray:
    """Full gradient descent on reals; the fixed-point-free reference."""
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    w = np.zeros(X.shape[1])
    for _ in range(cfg.n_iter):
        o = clipped_relu(X @ w)
        w = w + cfg.eta * ((t - o) @ X)
    return w


def _check_field_overflow(values: np.ndarray, params: FixedPointParams, what: str):
    limit = 1 << (params.frac_bits + params.int_bits)
    if np.any(np.abs(values.view(params.signed_dtype).astype(np.int64)) >= limit):
        warnings.warn(
            f"{what} overflowed the {params.int_bits}-bit integer field; "
            "results degrade but training continues",
            RuntimeWarning,
            stacklevel=3,
        )


def train_plain_fixed(X: np.ndarray, t: np.ndarray, cfg: TrainingConfig) -> np.ndarray:
    """Replay of the secure schedule on plaintext ring integers.

    Uses exact floored truncation everywhere, so it bounds what the secure
    protocol computes up to local-truncation noise.  Returns decoded reals.
    """
    params = cfg.params
    x_enc = encode_array(X, params)
    t_enc = encode_array(np.asarray(t, dtype=np.float64), params)
    eta_enc = params.dtype(encode(cfg.eta, params))
    w = np.zeros(x_enc.shape[1], dtype=params.dtype)
    for _ in range(cfg.n_iter):
        z = exact_truncate(x_enc @ w, params)
        _check_field_overflow(z, params, "weighted sum")
        o = clipped_relu_fixed(z, params)
        grad = (t_enc - o)[:, None] * x_enc
        delta = exact_truncate(grad.sum(axis=0, dtype=params.dtype), params)
        _check_field_overflow(delta, params, "weight differential")
        w = w + exact_truncate(eta_enc * delta, params)
    return decode_array(w, params)


def train_secure(sess: Session, x_share: np.ndarray, t_share: np.ndarray,
                 cfg: TrainingConfig) -> np.ndarray:
    """Run the secure training protocol; returns this party's weight shares."""
    params = sess.params
    x_share = np.asarray(x_share, dtype=params.dtype)
    t_share = np.asarray(t_share, dtype=params.dtype)
    if x_share.ndim != 2 or t_share.ndim != 1 or x_share.shape[0] != t_share.shape[0]:
        raise ProtocolError(
            f"share dimension mismatch: X {x_share.shape}, labels {t_share.shape}"
        )
    n, m1 = x_share.shape
    eta_enc = params.dtype(encode(cfg.eta, params))
    w = np.zeros(m1, dtype=params.dtype)
    for _ in range(cfg.n_iter):
        z = matmul(sess, x_share, w.reshape(-1, 1)).ravel()
        z = sess.truncate(z)
        o = batch_activate(sess, z)
        diff = t_share - o
        grad = batch_mul(sess, np.repeat(diff, m1), x_share.ravel())
        delta = grad.reshape(n, m1).sum(axis=0, dtype=params.dtype)
        delta = sess.truncate(delta)
        w = w + sess.truncate(eta_enc * delta)
    return w


def predict_and_score(weights: np.ndarray, X: np.ndarray, t: np.ndarray) -> float:
    """Fraction of examples classified correctly at activation threshold 0.5."""
    o = clipped_relu(np.asarray(X, dtype=np.float64) @ np.asarray(weights, dtype=np.float64))
    predicted = (o >= 0.5).astype(np.int64)
    return float(np.mean(predicted == np.asarray(t, dtype=np.int64)))


def count_multiplications(n_samples: int, n_features: int, n_iter: int,
                          params: FixedPointParams) -> dict:
    """Closed-form tally of the secure multiplications one training run costs.

    `n_features` excludes the dummy column.  Returned per ring: plain ring
    multiplications and Z_2 bit multiplications.
    """
    m1 = n_features + 1
    width = params.frac_bits + params.int_bits + 2
    comps = len(cached_plan(width).compositions)
    ring_per_iter = n_samples * m1 * 2 + 4 * n_samples
    bit_per_iter = n_samples * (width + 2 * comps + (params.int_bits - 1))
    return {
        "ring": n_iter * ring_per_iter,
        "bit": n_iter * bit_per_iter,
        "total": n_iter * (ring_per_iter + bit_per_iter),
    }


def training_randomness_requests(n_samples: int, n_features: int, cfg: TrainingConfig,
                                 slack: float = 0.05) -> list:
    """Request plan the trusted initializer uses to provision one training run.

    Mirrors the consumption order of :func:`train_secure` exactly; pooled tags
    get a slack tail so statistical paths never starve mid-run.
    """
    params = cfg.params
    m1 = n_features + 1
    width = params.frac_bits + params.int_bits + 2
    requests = []
    for _ in range(cfg.n_iter):
        requests.append((TAG_MATMUL, (n_samples, m1, 1)))
        requests.append((TAG_PREFIXNET, (width, n_samples)))
        if params.int_bits > 1:
            requests.append((TAG_BIT, (params.int_bits - 1) * n_samples))
        requests.append((TAG_CONVERSION, 2 * n_samples))
        requests.append((TAG_SCALAR, n_samples))
        requests.append((TAG_SCALAR, n_samples))
        requests.append((TAG_SCALAR, n_samples * m1))
    if cfg.n_iter and slack > 0:
        bit_total = (params.int_bits - 1) * n_samples * cfg.n_iter
        scalar_total = (2 * n_samples + n_samples * m1) * cfg.n_iter
        conv_total = 2 * n_samples * cfg.n_iter
        if bit_total:
            requests.append((TAG_BIT, int(np.ceil(bit_total * slack))))
        requests.append((TAG_SCALAR, int(np.ceil(scalar_total * slack))))
        requests.append((TAG_CONVERSION, int(np.ceil(conv_total * slack))))
    return requests
