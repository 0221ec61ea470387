"""Bit decomposition, logarithmic OR, and Z_2 -> ring share conversion.

Two decomposition routes are kept deliberately: a ripple-carry reference with
linear round count, and the optimized route that evaluates the carry-prefix
network in ceil(log2(p-1)) + 1 rounds.  The optimized route works internally
on vertical bit slices, one packed integer per bit position holding that bit
of every batched element, so each network layer is a single exchange no
matter how many values are being decomposed at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Session, batch_bit_mul, convert_bits_to_ring
from .prefixnet import cached_plan
from .sharing import BitShare, BitVectorShare, RingShare


@dataclass(frozen=True)
class CarrySignalPair:
    """Shares of one position's (propagate, generate) carry signals."""

    p: BitShare
    g: BitShare


def _own_operand_bits(sess: Session, value: int, width: int):
    """Protocol-2 style operand shares: Alice's share string is secret `a`,
    Bob's is secret `b`; the missing half of each sharing is zero."""
    mask = (1 << width) - 1
    own = value & mask
    if sess.is_alice:
        return own, 0
    return 0, own


def _const_flip(sess: Session, bits: int, width: int) -> int:
    """Add the public constant 1 in Z_2 (logical NOT): role A flips."""
    if sess.is_alice:
        return bits ^ ((1 << width) - 1)
    return bits


def decompose_ripple(sess: Session, x_share: int) -> BitVectorShare:
    """Reference bit decomposition via the ripple-carry adder circuit.

    Emits bits LSB first; round count is linear in the ring width.
    """
    lam = sess.params.ring_bits
    a_sh, b_sh = _own_operand_bits(sess, x_share, lam)
    y = (x_share & sess.params.mask)  # own share IS this party's share of every y_i

    carry = batch_bit_mul(sess, a_sh & 1, b_sh & 1, 1)
    out = y & 1
    for i in range(2, lam + 1):
        ai = (a_sh >> (i - 1)) & 1
        bi = (b_sh >> (i - 1)) & 1
        yi = (y >> (i - 1)) & 1
        # d_i = NOT(a_i b_i) and e_i = NOT(y_i c_{i-1}) ride one batched call
        prods = batch_bit_mul(sess, ai | (yi << 1), bi | (carry << 1), 2)
        d = _const_flip(sess, prods & 1, 1)
        e = _const_flip(sess, (prods >> 1) & 1, 1)
        out |= (yi ^ carry) << (i - 1)
        carry = _const_flip(sess, batch_bit_mul(sess, e, d, 1), 1)
    return BitVectorShare(out, lam, sess.role)


def compose_carry(sess: Session, left: CarrySignalPair, right: CarrySignalPair) -> CarrySignalPair:
    """Compose two carry-signal matrices; both products share one round.

    Output propagate is p_L*p_R; output generate is (p_L*g_R) XOR g_L, the OR
    collapsing to XOR because propagate and generate are never both set.
    """
    xs = left.p.bit | (left.p.bit << 1)
    ys = right.p.bit | (right.g.bit << 1)
    prods = batch_bit_mul(sess, xs, ys, 2)
    p_out = prods & 1
    g_out = ((prods >> 1) & 1) ^ left.g.bit
    return CarrySignalPair(BitShare(p_out, sess.role), BitShare(g_out, sess.role))


# ---------------------------------------------------------------------------
# Bit-sliced batched decomposition through the carry-prefix network
# ---------------------------------------------------------------------------


def _to_slices(values: np.ndarray, width: int) -> list:
    """Transpose a batch of ring shares into per-bit-position slices."""
    u = np.ascontiguousarray(values).astype(np.uint64)
    out = []
    for j in range(width):
        bits = ((u >> np.uint64(j)) & np.uint64(1)).astype(np.uint8)
        out.append(int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little"))
    return out


def _from_slices(slices: list, batch: int) -> np.ndarray:
    acc = np.zeros(batch, dtype=np.uint64)
    nbytes = (batch + 7) // 8
    for j, s in enumerate(slices):
        raw = (s & ((1 << batch) - 1)).to_bytes(nbytes, "little")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=batch, bitorder="little")
        acc |= bits.astype(np.uint64) << np.uint64(j)
    return acc


def _concat_slices(slices: list, batch: int) -> int:
    acc = 0
    for i, s in enumerate(slices):
        acc |= (s & ((1 << batch) - 1)) << (i * batch)
    return acc


def _split_slices(cat: int, count: int, batch: int) -> list:
    mask = (1 << batch) - 1
    return [(cat >> (i * batch)) & mask for i in range(count)]


def decompose_batch_slices(sess: Session, shares: np.ndarray, width: int,
                           collect_nodes: dict | None = None) -> list:
    """Decompose the low `width` bits of a batch of shared values.

    Returns `width` sum-bit slices (LSB first), each a packed integer with one
    bit per batch element.  `collect_nodes`, when given, receives this party's
    (p, g) slice shares for every network node, keyed by node, for oracle-mode
    inspection.
    """
    if width > sess.params.ring_bits:
        raise ValueError(f"cannot decompose {width} bits of a {sess.params.ring_bits}-bit ring")
    if width < 2:
        raise ValueError("bit width must be >= 2")
    shares = np.atleast_1d(np.asarray(shares, dtype=sess.params.dtype))
    batch = shares.size
    plan = cached_plan(width)
    block = sess.randomness.take_prefix_block(width, batch)

    own_slices = _to_slices(shares, width)
    total = width * batch
    a_cat = _concat_slices(own_slices, batch) if sess.is_alice else 0
    b_cat = 0 if sess.is_alice else _concat_slices(own_slices, batch)

    # Setup round: every position's generate bit in one batched multiplication.
    d = a_cat ^ block.setup_u
    e = b_cat ^ block.setup_v
    d_open, e_open = sess.open_bit_strings([(d, total), (e, total)])
    g_cat = block.setup_w ^ (e_open & block.setup_u) ^ (d_open & block.setup_v)
    if sess.is_alice:
        g_cat ^= d_open & e_open
    sess.transcript.bit_mults += total
    sess.transcript.mask_bits_sent += 2 * total
    g_slices = _split_slices(g_cat, width, batch)

    nodes = {}
    for s in range(1, width + 1):
        nodes[(s, s)] = (own_slices[s - 1], g_slices[s - 1])

    published = {}
    comp_index = 0
    ones = (1 << batch) - 1
    for layer_no in range(1, plan.depth + 1):
        pubs = plan.publish_at.get(layer_no, [])
        comps = plan.layers[layer_no - 1]
        if not pubs and not comps:
            continue
        cat = 0
        for i, node in enumerate(pubs):
            idx = plan.mask_index(node)
            p_sl, g_sl = nodes[node]
            cat |= ((p_sl ^ block.mask_p[idx]) & ones) << (2 * i * batch)
            cat |= ((g_sl ^ block.mask_g[idx]) & ones) << ((2 * i + 1) * batch)
        (opened,) = sess.open_bit_strings([(cat, 2 * batch * len(pubs))])
        sess.transcript.mask_bits_sent += 2 * batch * len(pubs)
        for i, node in enumerate(pubs):
            published[node] = (
                (opened >> (2 * i * batch)) & ones,
                (opened >> ((2 * i + 1) * batch)) & ones,
            )
        for comp in comps:
            # comp.left covers the lower positions, comp.right the higher;
            # the higher run is the left factor of the matrix composition
            dp_lo, dg_lo = published[comp.left]
            dp_hi, _ = published[comp.right]
            lo = plan.mask_index(comp.left)
            hi = plan.mask_index(comp.right)
            p_out = (block.prod_pp[comp_index]
                     ^ (dp_hi & block.mask_p[lo])
                     ^ (dp_lo & block.mask_p[hi]))
            g_out = (block.prod_pg[comp_index]
                     ^ (dp_hi & block.mask_g[lo])
                     ^ (dg_lo & block.mask_p[hi]))
            if sess.is_alice:
                p_out ^= dp_hi & dp_lo
                g_out ^= dp_hi & dg_lo
            g_out ^= nodes[comp.right][1]
            nodes[comp.out] = (p_out, g_out)
            comp_index += 1
        sess.transcript.bit_mults += 2 * batch * len(comps)

    if collect_nodes is not None:
        collect_nodes.update(nodes)
        collect_nodes["__plan__"] = plan

    sum_slices = [own_slices[0]]
    for j in range(2, width + 1):
        carry = nodes[(1, j - 1)][1]
        sum_slices.append(own_slices[j - 1] ^ carry)
    return sum_slices


def decompose_opt(sess: Session, x_share: int, width: int | None = None) -> BitVectorShare:
    """Optimized decomposition of one shared value (low `width` bits)."""
    width = sess.params.ring_bits if width is None else width
    slices = decompose_batch_slices(sess, np.array([x_share], dtype=sess.params.dtype), width)
    bits = 0
    for j, s in enumerate(slices):
        bits |= (s & 1) << j
    return BitVectorShare(bits, width, sess.role)


def batch_decompose(sess: Session, shares: np.ndarray, width: int | None = None) -> list:
    """Decompose a whole vector of shared values; rounds do not grow with the
    batch size, data transfer does."""
    width = sess.params.ring_bits if width is None else width
    shares = np.atleast_1d(np.asarray(shares, dtype=sess.params.dtype))
    slices = decompose_batch_slices(sess, shares, width)
    packed = _from_slices(slices, shares.size)
    return [BitVectorShare(int(v), width, sess.role) for v in packed]


# ---------------------------------------------------------------------------
# Logarithmic OR and share conversion
# ---------------------------------------------------------------------------


def or_tree_slices(sess: Session, slices: list, batch: int) -> int:
    """OR over the slice list, elementwise across the batch.

    NOT(AND(NOT ...)) evaluated as a balanced tree; one batched Z_2
    multiplication per level, ceil(log2(k)) rounds in total.
    """
    if not slices:
        raise ValueError("or_tree needs at least one bit")
    cur = [_const_flip(sess, s, batch) for s in slices]
    while len(cur) > 1:
        pairs = len(cur) // 2
        xs = _concat_slices(cur[0::2][:pairs], batch)
        ys = _concat_slices(cur[1::2][:pairs], batch)
        prod = batch_bit_mul(sess, xs, ys, pairs * batch)
        nxt = _split_slices(prod, pairs, batch)
        if len(cur) % 2:
            nxt.append(cur[-1])
        cur = nxt
    return _const_flip(sess, cur[0], batch)


def or_tree(sess: Session, bits: BitVectorShare) -> BitShare:
    """OR of the k secret bits inside one bit-vector share."""
    slices = [(bits.bits >> i) & 1 for i in range(bits.n)]
    return BitShare(or_tree_slices(sess, slices, 1), sess.role)


def convert_bit_to_ring(sess: Session, x: BitShare) -> RingShare:
    """Z_2 share to Z_{2^ring} share: re-share both bits, one multiplication."""
    vec = convert_bits_to_ring(sess, x.bit & 1, 1)
    return RingShare(int(vec[0]), sess.role)
