"""Exact algebra of phased Pauli strings on spin-1/2 chains.

An operator is stored as ``i**phase_exp * prod_j X_j**x_j * Z_j**z_j`` with
``x``, ``z`` packed into integer bitmasks (bit ``j`` = site ``j``, site 0 is
the leftmost spin). The phase exponent lives in Z_4, so products, commutation
signs and Hermiticity are all exact integer bookkeeping.

A site carrying both an X and a Z bit is the letter Y up to phase: Y = i*X*Z.
String literals follow the convention ``[+|-][i]P0 P1 ... P(N-1)`` with
letters I, X, Y, Z, e.g. ``"ZXIXZ"`` or ``"-iXY"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce

import numpy as np

# Beyond this many sites a dense 2^n x 2^n matrix is refused by default.
DEFAULT_DENSE_CAP = 20

_PHASE_VALUES = (1, 1j, -1, -1j)

_LABEL_RE = re.compile(r"^([+-]?)(i?)([IXYZ]+)$")

_DENSE_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DenseCapError(ValueError):
    """Raised when a dense realization would exceed the configured site cap."""


@dataclass(frozen=True)
class PauliOperator:
    """Phased Pauli string on ``n_sites`` qubits.

    Attributes
    ----------
    n_sites : int
        Chain length.
    x_mask, z_mask : int
        Bitmasks of the X / Z content; bit ``j`` refers to site ``j``.
    phase_exp : int
        Exponent ``k`` of the global phase ``i**k``, reduced mod 4.
    """

    n_sites: int
    x_mask: int = 0
    z_mask: int = 0
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_sites < 0:
            raise ValueError("n_sites must be nonnegative")
        full = (1 << self.n_sites) - 1
        if (self.x_mask & ~full) or (self.z_mask & ~full):
            raise ValueError("mask exceeds n_sites")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def identity(n_sites: int) -> "PauliOperator":
        return PauliOperator(n_sites)

    @staticmethod
    def from_label(label: str, n_sites: int | None = None) -> "PauliOperator":
        """Parse a string literal like ``"ZXIXZ"`` or ``"-iXY"``."""
        m = _LABEL_RE.match(label.strip())
        if not m:
            raise ValueError(f"malformed Pauli literal: {label!r}")
        sign, imag, letters = m.groups()
        if n_sites is None:
            n_sites = len(letters)
        elif n_sites != len(letters):
            raise ValueError(f"literal {label!r} has {len(letters)} sites, expected {n_sites}")
        x = z = 0
        n_y = 0
        for j, c in enumerate(letters):
            if c in "XY":
                x |= 1 << j
            if c in "ZY":
                z |= 1 << j
            if c == "Y":
                n_y += 1
        k = n_y + (1 if imag else 0) + (2 if sign == "-" else 0)
        return PauliOperator(n_sites, x, z, k)

    @staticmethod
    def single(n_sites: int, site: int, letter: str) -> "PauliOperator":
        """One Pauli letter at ``site``, identity elsewhere."""
        if not 0 <= site < n_sites:
            raise ValueError("site out of range")
        x = 1 << site if letter in "XY" else 0
        z = 1 << site if letter in "ZY" else 0
        if letter not in "IXYZ":
            raise ValueError(f"unknown letter {letter!r}")
        return PauliOperator(n_sites, x, z, 1 if letter == "Y" else 0)

    # -- basic queries -----------------------------------------------------

    @property
    def y_count(self) -> int:
        return (self.x_mask & self.z_mask).bit_count()

    @property
    def phase(self) -> complex:
        return _PHASE_VALUES[self.phase_exp]

    @property
    def residual_exp(self) -> int:
        """Phase exponent relative to the letter form (0 means leading '+')."""
        return (self.phase_exp - self.y_count) % 4

    def is_identity_string(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def is_hermitian(self) -> bool:
        return self.residual_exp % 2 == 0

    def support(self) -> tuple[int, ...]:
        mask = self.x_mask | self.z_mask
        return tuple(j for j in range(self.n_sites) if mask >> j & 1)

    def label(self) -> str:
        prefix = ("", "i", "-", "-i")[self.residual_exp]
        letters = []
        for j in range(self.n_sites):
            xb = self.x_mask >> j & 1
            zb = self.z_mask >> j & 1
            letters.append("IXZY"[xb + 2 * zb] if xb + 2 * zb != 3 else "Y")
        return prefix + "".join(letters)

    def __str__(self) -> str:
        return self.label()

    # -- algebra -----------------------------------------------------------

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        return multiply(self, other)

    def __neg__(self) -> "PauliOperator":
        return PauliOperator(self.n_sites, self.x_mask, self.z_mask, self.phase_exp + 2)

    def scaled(self, phase_exp_delta: int) -> "PauliOperator":
        return PauliOperator(self.n_sites, self.x_mask, self.z_mask, self.phase_exp + phase_exp_delta)

    def dagger(self) -> "PauliOperator":
        k = (-self.phase_exp + 2 * (self.x_mask & self.z_mask).bit_count()) % 4
        return PauliOperator(self.n_sites, self.x_mask, self.z_mask, k)

    def same_string(self, other: "PauliOperator") -> bool:
        """True if the two operators agree up to phase."""
        return (self.n_sites, self.x_mask, self.z_mask) == (other.n_sites, other.x_mask, other.z_mask)

    def phase_ratio(self, other: "PauliOperator") -> complex:
        """Phase c with self == c * other; requires equal strings."""
        if not self.same_string(other):
            raise ValueError("operators differ beyond a phase")
        return _PHASE_VALUES[(self.phase_exp - other.phase_exp) % 4]


def multiply(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """Exact product ``a*b`` via symplectic bookkeeping."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"size mismatch: {a.n_sites} vs {b.n_sites}")
    k = a.phase_exp + b.phase_exp + 2 * (a.z_mask & b.x_mask).bit_count()
    return PauliOperator(a.n_sites, a.x_mask ^ b.x_mask, a.z_mask ^ b.z_mask, k)


def multiply_all(ops, n_sites: int | None = None) -> PauliOperator:
    """Ordered product of an iterable of operators (left to right)."""
    ops = list(ops)
    if not ops:
        if n_sites is None:
            raise ValueError("empty product needs n_sites")
        return PauliOperator.identity(n_sites)
    return reduce(multiply, ops)


def commutation_sign(a: PauliOperator, b: PauliOperator) -> int:
    """0 if ab = ba, 1 if ab = -ba.

    Pauli strings always commute or anticommute, so this is total.
    """
    if a.n_sites != b.n_sites:
        raise ValueError(f"size mismatch: {a.n_sites} vs {b.n_sites}")
    return ((a.x_mask & b.z_mask).bit_count() + (a.z_mask & b.x_mask).bit_count()) % 2


def hermitian_gauge(p: PauliOperator) -> PauliOperator:
    """Phase-adjust ``p`` so that it is Hermitian and squares to +I.

    Operators that are already Hermitian (residual phase +-1) are returned
    unchanged; anti-Hermitian inputs are normalized to the canonical '+'
    letter form. Idempotent.
    """
    if p.is_hermitian():
        return p
    return PauliOperator(p.n_sites, p.x_mask, p.z_mask, p.y_count)


def embed(p: PauliOperator, n_sites: int, offset: int) -> PauliOperator:
    """Place a local operator into a chain of ``n_sites`` starting at ``offset``."""
    if offset < 0 or offset + p.n_sites > n_sites:
        raise ValueError("embedding exceeds chain")
    return PauliOperator(n_sites, p.x_mask << offset, p.z_mask << offset, p.phase_exp)


def restrict(p: PauliOperator, start: int, stop: int) -> PauliOperator:
    """Restrict to sites [start, stop); support outside the window must be empty."""
    window = ((1 << (stop - start)) - 1) << start
    if (p.x_mask | p.z_mask) & ~window:
        raise ValueError("support escapes the window")
    return PauliOperator(stop - start, p.x_mask >> start, p.z_mask >> start, p.phase_exp)


# -- dense realization -----------------------------------------------------


def to_dense(p: PauliOperator, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense 2^n x 2^n matrix; site 0 is the leftmost (most significant) factor."""
    if p.n_sites > cap:
        raise DenseCapError(f"{p.n_sites} sites exceeds dense cap {cap}")
    label = p.label()
    residual = 1j ** p.residual_exp
    mat = np.array([[residual]], dtype=complex)
    for c in label.lstrip("+-i"):
        mat = np.kron(mat, _DENSE_1Q[c])
    return mat


def _index_mask(site_mask: int, n_sites: int) -> int:
    """Map a site bitmask to basis-index bit positions (site 0 = MSB)."""
    out = 0
    for j in range(n_sites):
        if site_mask >> j & 1:
            out |= 1 << (n_sites - 1 - j)
    return out


class PauliAction:
    """Precompiled action of a PauliOperator on dense state vectors.

    Caches the index permutation and sign vector so that repeated
    applications (e.g. inside a shot loop) cost two vector operations.
    """

    def __init__(self, p: PauliOperator, cap: int = DEFAULT_DENSE_CAP):
        if p.n_sites > cap:
            raise DenseCapError(f"{p.n_sites} sites exceeds dense cap {cap}")
        self.op = p
        n = p.n_sites
        dim = 1 << n
        idx = np.arange(dim, dtype=np.int64)
        xbits = _index_mask(p.x_mask, n)
        zbits = _index_mask(p.z_mask, n)
        self._perm = (idx ^ xbits).astype(np.int32) if xbits else None
        if zbits:
            parity = np.bitwise_count(idx & zbits).astype(np.int8) & 1
            self._signs = (1 - 2 * parity).astype(np.int8)
        else:
            self._signs = None
        self._phase = complex(p.phase)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        w = psi if self._signs is None else psi * self._signs
        out = w if self._perm is None else w[self._perm]
        if self._phase != 1:
            out = out * self._phase
        return out

    def expectation(self, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi, self(psi)))


def apply_to_state(p: PauliOperator, psi: np.ndarray) -> np.ndarray:
    """Apply ``p`` to a dense state vector of length 2^n_sites."""
    if psi.shape[0] != 1 << p.n_sites:
        raise ValueError("state dimension does not match operator")
    return PauliAction(p)(psi)


def expectation(p: PauliOperator, psi: np.ndarray) -> complex:
    """Return <psi| p |psi>."""
    return complex(np.vdot(psi, apply_to_state(p, psi)))


def exp_apply(p: PauliOperator, theta: float, psi: np.ndarray, action: PauliAction | None = None) -> np.ndarray:
    """Apply exp(i*theta*p) to a state; requires p*p = +I (Hermitian gauge)."""
    if not p.is_hermitian():
        raise ValueError("rotation generator must be Hermitian")
    ppsi = action(psi) if action is not None else apply_to_state(p, psi)
    return np.cos(theta) * psi + 1j * np.sin(theta) * ppsi


# -- site partitions -------------------------------------------------------


@dataclass(frozen=True)
class SitePartition:
    """Ordered contiguous blocks covering sites 0..N-1.

    Block 0 is the left boundary, blocks 1..n the bulk, block n+1 the right
    boundary.
    """

    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pos = 0
        for start, stop in self.blocks:
            if start != pos or stop <= start:
                raise ValueError("blocks must be contiguous, nonempty and ordered")
            pos = stop
        if len(self.blocks) < 2:
            raise ValueError("need at least the two boundary blocks")

    @staticmethod
    def from_sizes(sizes) -> "SitePartition":
        blocks = []
        pos = 0
        for s in sizes:
            blocks.append((pos, pos + s))
            pos += s
        return SitePartition(tuple(blocks))

    @property
    def n_sites(self) -> int:
        return self.blocks[-1][1]

    @property
    def n_bulk(self) -> int:
        """Number of bulk blocks (total blocks minus the two boundaries)."""
        return len(self.blocks) - 2

    def size(self, i: int) -> int:
        start, stop = self.blocks[i]
        return stop - start

    def offset(self, i: int) -> int:
        return self.blocks[i][0]

    def block_of_site(self, site: int) -> int:
        for i, (start, stop) in enumerate(self.blocks):
            if start <= site < stop:
                return i
        raise ValueError("site out of range")

    def block_range(self, p: PauliOperator) -> tuple[int, int] | None:
        """Smallest and largest block index touched by the support of p."""
        sup = p.support()
        if not sup:
            return None
        return self.block_of_site(sup[0]), self.block_of_site(sup[-1])

    def embed_block(self, p_local: PauliOperator, i: int) -> PauliOperator:
        """Lift a block-local operator onto the full chain."""
        if p_local.n_sites != self.size(i):
            raise ValueError(f"operator has {p_local.n_sites} sites, block {i} has {self.size(i)}")
        return embed(p_local, self.n_sites, self.offset(i))
