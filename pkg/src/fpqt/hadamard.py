"""Hadamard transforms for activation outlier suppression.

An order-n Hadamard matrix is factored as H_n = H_p (x) H_q, where p is the
largest power of two such that q = n / p has an embedded base matrix
(q in {1, 2, 4, 12, 20, 28}; 12, 20, 28 are Paley constructions stored as
static data).  Entries are normalized by 1/sqrt(n) so the realized matrix
is orthogonal, and an optional seeded random +-1 diagonal D can be folded
in on the right (default D = I).

apply_right computes x @ H via the fast path: a butterfly network over the
power-of-two factor plus one small dense stage for the base factor.  For an
m x n input that costs m*n*log2(p) + m*n*(q-1) additions and m*n + m*n*q
multiplications (the dense stage disappears when q = 1, leaving only the
m*n normalization multiplies; the sign diagonal folds into normalization
and adds nothing).  An orthogonal transform spreads any single-channel
energy spike uniformly across all channels, which is what crushes
channel-wise outliers before quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ShapeError
from .tensors import WORKING_DTYPE

# Paley-type base Hadamard matrices.  Verified H @ H.T == n I by the tests;
# any +-1 matrix with that property works, the particular construction is
# immaterial.
_BASE_ROWS = {
    1: ("+",),
    2: ("++", "+-"),
    4: ("++++", "+-+-", "++--", "+--+"),
    12: (
        "++++++++++++",
        "-+-+---+++-+",
        "-++-+---+++-",
        "--++-+---+++",
        "-+-++-+---++",
        "-++-++-+---+",
        "-+++-++-+---",
        "--+++-++-+--",
        "---+++-++-+-",
        "----+++-++-+",
        "-+---+++-++-",
        "--+---+++-++",
    ),
    20: (
        "++++++++++++++++++++",
        "-+-++----+-+-++++--+",
        "-++-++----+-+-++++--",
        "--++-++----+-+-++++-",
        "---++-++----+-+-++++",
        "-+--++-++----+-+-+++",
        "-++--++-++----+-+-++",
        "-+++--++-++----+-+-+",
        "-++++--++-++----+-+-",
        "--++++--++-++----+-+",
        "-+-++++--++-++----+-",
        "--+-++++--++-++----+",
        "-+-+-++++--++-++----",
        "--+-+-++++--++-++---",
        "---+-+-++++--++-++--",
        "----+-+-++++--++-++-",
        "-----+-+-++++--++-++",
        "-+----+-+-++++--++-+",
        "-++----+-+-++++--++-",
        "--++----+-+-++++--++",
    ),
    28: (
        "++++++++++++++++++++++++++++",
        "-+-+--++-+-++---+--+---+++++",
        "-++-+--++-+-+----+--+-+-++++",
        "--++-+--++++------+--+++-+++",
        "-+-++-+--++---++---++++---++",
        "-++-++-+---+-+-+---+++-+-+-+",
        "--++-++-+---+++----+++--+++-",
        "---++-++-+---+---++-++++++--",
        "-+--++-++-----+-+-++-++++-+-",
        "--+--++-++-----+++-++-+++--+",
        "-+---++++++-+--++-+-++---+--",
        "--+-+-++++++-+--++-+-+----+-",
        "---+++-+++-++-+--++++------+",
        "-++++---+++-++-+--++---++---",
        "-+++-+-+-+++-++-+---+-+-+---",
        "-+++--+++--++-++-+---+++----",
        "--++++++----++-++-+---+---++",
        "-+-++++-+-+--++-++-----+-+-+",
        "-++-+++--+-+--++-++-----+++-",
        "--++---+--+---++++++-+--++-+",
        "-+-+----+--+-+-++++++-+--++-",
        "-++------+--+++-+++-++-+--++",
        "-+---++---++++---+++-++-+--+",
        "--+-+-+---+++-+-+-+++-++-+--",
        "---+++----+++--+++--++-++-+-",
        "----+---++-++++++----++-++-+",
        "-----+-+-++-++++-+-+--++-++-",
        "------+++-++-+++--+-+--++-++",
    ),
}

BASE_ORDERS = tuple(sorted(_BASE_ROWS))


def base_matrix(q: int) -> np.ndarray:
    """The unnormalized +-1 base matrix of a supported order."""
    if q not in _BASE_ROWS:
        raise ValueError(f"no base Hadamard matrix of order {q}; have {BASE_ORDERS}")
    rows = _BASE_ROWS[q]
    return np.array(
        [[1.0 if c == "+" else -1.0 for c in row] for row in rows], dtype=WORKING_DTYPE
    )


def factorize(n: int) -> tuple[int, int]:
    """Split n = p * q with p the largest usable power of two.

    q = 1 whenever n is itself a power of two; otherwise the odd part of n
    must be 3, 5, or 7 with at least two factors of two to spare, giving
    q in {12, 20, 28}.  Anything else has no constructible order here.
    """
    if n < 1:
        raise ValueError(f"transform order must be positive, got {n}")
    odd = n
    while odd % 2 == 0:
        odd //= 2
    if odd == 1:
        return n, 1
    if odd in (3, 5, 7) and n % (4 * odd) == 0:
        return n // (4 * odd), 4 * odd
    raise ValueError(
        f"order {n} = 2^k * {odd} is not constructible: odd part must be 1, 3, 5, or 7 "
        f"with q = 4 * odd dividing n"
    )


@dataclass(frozen=True)
class HadamardSpec:
    """A realized-on-demand orthogonal transform: (H_p (x) H_q) / sqrt(n),
    optionally right-multiplied by a seeded random sign diagonal."""

    dim: int
    p: int
    q: int
    seed: int | None = None

    @property
    def log2_p(self) -> int:
        return self.p.bit_length() - 1


def build(dim: int, seed: int | None = None) -> HadamardSpec:
    """Validate and factorize an order; seed=None means no sign diagonal."""
    p, q = factorize(dim)
    return HadamardSpec(dim=dim, p=p, q=q, seed=seed)


def sign_diagonal(spec: HadamardSpec) -> np.ndarray | None:
    """The +-1 diagonal for a seeded spec, None when seed is None."""
    if spec.seed is None:
        return None
    rng = np.random.default_rng(spec.seed)
    return rng.integers(0, 2, size=spec.dim).astype(WORKING_DTYPE) * 2.0 - 1.0


def realize(spec: HadamardSpec) -> np.ndarray:
    """Dense orthogonal matrix; for tests and offline weight fusion."""
    h = np.kron(scipy.linalg.hadamard(spec.p, dtype=WORKING_DTYPE), base_matrix(spec.q))
    h /= math.sqrt(spec.dim)
    d = sign_diagonal(spec)
    if d is not None:
        h = h * d[np.newaxis, :]
    return h


class OpCounter:
    """Tallies the additions and multiplications a transform actually performs."""

    def __init__(self):
        self.adds = 0
        self.muls = 0


def apply_right(x: np.ndarray, spec: HadamardSpec, counter: OpCounter | None = None) -> np.ndarray:
    """Compute x @ H for an (m, dim) batch via the fast factored path.

    Butterfly stages over the power-of-two factor, one dense multiply for
    the base factor, then a single normalization (and sign) multiply.
    """
    x = np.asarray(x, dtype=WORKING_DTYPE)
    if x.ndim != 2 or x.shape[1] != spec.dim:
        raise ShapeError(f"expected (m, {spec.dim}) input, got {x.shape}")
    m = x.shape[0]
    y = x.reshape(m, spec.p, spec.q)

    half = 1
    while half < spec.p:
        y = y.reshape(m, -1, 2, half, spec.q)
        a = y[:, :, 0]
        b = y[:, :, 1]
        y = np.stack((a + b, a - b), axis=2)
        if counter is not None:
            counter.adds += a.size + b.size
        half *= 2

    y = y.reshape(m, spec.p, spec.q)
    if spec.q > 1:
        y = y @ base_matrix(spec.q)
        if counter is not None:
            counter.muls += m * spec.p * spec.q * spec.q
            counter.adds += m * spec.p * spec.q * (spec.q - 1)

    y = y.reshape(m, spec.dim)
    scale = np.full(spec.dim, 1.0 / math.sqrt(spec.dim), dtype=WORKING_DTYPE)
    d = sign_diagonal(spec)
    if d is not None:
        scale = scale * d
    if counter is not None:
        counter.muls += y.size
    return y * scale


def op_count(m: int, spec: HadamardSpec) -> dict[str, int]:
    """Exact operation counts of apply_right on an (m, dim) input.

    adds = m*n*log2(p) + m*n*(q-1), muls = m*n + (m*n*q if q > 1 else 0);
    the same tallies an OpCounter accumulates on a real call.
    """
    if m < 0:
        raise ValueError(f"row count must be nonnegative, got {m}")
    n = spec.dim
    adds = m * n * spec.log2_p + m * n * (spec.q - 1)
    muls = m * n + (m * n * spec.q if spec.q > 1 else 0)
    return {"adds": adds, "muls": muls}
