"""Secure evaluation of the clipped-ReLU activation over ring shares.

The activation rho(v) is 0 below -1/2, v + 1/2 in between, and 1 from 1/2 up.
Rather than running comparison protocols, the shifted value z' = z + 1/2 is
partially bit-decomposed: the bit just above the integer field tells whether
z' went negative, and the OR of the integer-field bits tells whether z' >= 1.
Everything else is local arithmetic plus two ring multiplications.  The two
bit-to-ring conversions are independent of each other and ride the same two
rounds.  Inputs must satisfy |decode(z)| < 2^(int_bits - 1) so the shifted
value never spills past the masked field.
"""

from __future__ import annotations

import numpy as np

from .bitops import decompose_batch_slices, or_tree_slices
from .engine import Session, batch_mul, convert_bits_to_ring
from .fixedpoint import FixedPointParams


def clipped_relu(v):
    """Plain-float activation used by cleartext training and oracles."""
    return np.clip(np.asarray(v, dtype=np.float64) + 0.5, 0.0, 1.0)


def clipped_relu_fixed(z, params: FixedPointParams):
    """Fixed-point activation on ring element(s), exact on the value grid."""
    z = np.atleast_1d(np.asarray(z, dtype=params.dtype))
    s = z.view(params.signed_dtype)
    half = params.scale // 2
    shifted = (z + params.dtype(half)).astype(params.dtype)
    out = np.where(s < -half, params.dtype(0),
                   np.where(s >= half, params.dtype(params.scale), shifted))
    return out.astype(params.dtype)


def batch_activate(sess: Session, zs: np.ndarray) -> np.ndarray:
    """Elementwise activation over a shared vector; rounds are independent of
    the batch size."""
    params = sess.params
    zs = np.atleast_1d(np.asarray(zs, dtype=params.dtype))
    batch = zs.size
    a, b = params.frac_bits, params.int_bits
    width = a + b + 2

    shifted = zs + params.dtype(params.scale // 2) if sess.is_alice else zs.copy()
    masked = shifted & params.dtype(((1 << width) - 1) & params.mask)

    slices = decompose_batch_slices(sess, masked, width)

    ones = (1 << batch) - 1
    sign_slice = slices[a + b]  # bit a+b+1, LSB-first
    pos_slice = sign_slice ^ ones if sess.is_alice else sign_slice
    geq1_slice = or_tree_slices(sess, slices[a:a + b], batch)

    # both conversions share the re-share round and the multiplication round
    cat = (pos_slice & ones) | ((geq1_slice & ones) << batch)
    converted = convert_bits_to_ring(sess, cat, 2 * batch)
    pos_vec = converted[:batch]
    geq_vec = converted[batch:]

    one_minus_geq = (params.dtype(1) - geq_vec) if sess.is_alice else np.negative(geq_vec)
    r = (geq_vec * params.dtype(params.scale)) + batch_mul(sess, one_minus_geq, shifted)
    return batch_mul(sess, pos_vec, r)


def activate(sess: Session, z: int) -> int:
    """Single-value activation (batch of one)."""
    out = batch_activate(sess, np.array([z], dtype=sess.params.dtype))
    return int(out[0])
