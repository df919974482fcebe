"""(Z2)^m symmetry schemes on blocked spin chains.

A scheme carries the block structure of the chain and block-local Pauli
images of the symmetry generators: a linear representation ``u`` on blocks
0..n, projective representations ``vL`` on blocks 1..n+1 and ``vR0`` on
block 0. ``validate`` checks the mutual consistency conditions of these
images, derives the dependent data (bulk ``vR``, the commutation matrix
``kappa``, the initialization subgroup ``H``, the per-block axis groups
``G_i``) and returns an immutable :class:`ValidatedScheme` from which the
global operators U, T, L_k, R_k are assembled.

Group elements are bitmasks over the m generators. Images of composite
elements are products of generator images in ascending generator order,
Hermitian-gauged per element; all phases are tracked exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .pauli import (
    PauliOperator,
    SitePartition,
    commutation_sign,
    hermitian_gauge,
    multiply,
    multiply_all,
)

_DATA_DIR = os.path.join(os.path.dirname(__file__), "schemes_data")


@dataclass
class Violation:
    """One failed consistency equation."""

    equation: str
    block: int | None = None
    pair: tuple[str, str] | None = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "equation": self.equation,
            "block": self.block,
            "pair": list(self.pair) if self.pair else None,
            "detail": self.detail,
        }


class SchemeValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(
            f"[{v.equation}] block={v.block} pair={v.pair} {v.detail}" for v in violations
        )
        super().__init__(f"scheme validation failed: {lines}")


def span(elements, m: int) -> tuple[int, ...]:
    """Subgroup of (Z2)^m generated by the given element masks."""
    out = {0}
    for g in elements:
        out |= {g ^ h for h in out}
    return tuple(sorted(out))


def iter_subgroups(m: int):
    """All subgroups of (Z2)^m (as sorted element tuples)."""
    nonzero = range(1, 1 << m)
    seen = set()
    seen.add(span([], m))
    for r in range(1, m + 1):
        for gens in combinations(nonzero, r):
            seen.add(span(gens, m))
    return sorted(seen, key=lambda s: (len(s), s))


class SymmetryScheme:
    """Raw scheme data: block structure plus generator images.

    Parameters
    ----------
    name : str
    gen_names : sequence of str
        Names of the m generators; generator a corresponds to mask ``1<<a``.
    partition : SitePartition
    u : mapping ``{block: {gen_index: PauliOperator}}`` for blocks 0..n
    vL : mapping for blocks 1..n+1
    vR0 : mapping ``{gen_index: PauliOperator}`` for block 0
    declared_H, declared_Hprime : optional sequences of element masks that
        generate the subgroup choice.
    chi_target : optional ``{gen_index: 0|1}`` expected symmetry character.
    """

    def __init__(self, name, gen_names, partition, u, vL, vR0,
                 declared_H=None, declared_Hprime=None, chi_target=None):
        self.name = name
        self.gen_names = tuple(gen_names)
        self.m = len(self.gen_names)
        self.partition = partition
        n = partition.n_bulk
        self.u = {i: {a: hermitian_gauge(op) for a, op in u[i].items()} for i in range(0, n + 1)}
        self.vL = {i: {a: hermitian_gauge(op) for a, op in vL[i].items()} for i in range(1, n + 2)}
        self.vR0 = {a: hermitian_gauge(op) for a, op in vR0.items()}
        self.declared_H = tuple(declared_H) if declared_H else None
        self.declared_Hprime = tuple(declared_Hprime) if declared_Hprime else None
        self.chi_target = dict(chi_target) if chi_target else None
        self._check_shapes()

    def _check_shapes(self):
        part = self.partition
        n = part.n_bulk
        gens = range(self.m)
        for i in range(0, n + 1):
            for a in gens:
                if self.u[i][a].n_sites != part.size(i):
                    raise ValueError(f"u image at block {i} has wrong size")
        for i in range(1, n + 2):
            for a in gens:
                if self.vL[i][a].n_sites != part.size(i):
                    raise ValueError(f"vL image at block {i} has wrong size")
        for a in gens:
            if self.vR0[a].n_sites != part.size(0):
                raise ValueError("vR0 image has wrong size")

    # -- group bookkeeping ---------------------------------------------

    @property
    def n_bulk(self) -> int:
        return self.partition.n_bulk

    @property
    def n_elements(self) -> int:
        return 1 << self.m

    def elements(self) -> range:
        return range(self.n_elements)

    def element_label(self, g: int) -> str:
        if g == 0:
            return "e"
        return "*".join(self.gen_names[a] for a in range(self.m) if g >> a & 1)

    def parse_element(self, token: str) -> int:
        """Parse 'e', a generator name, or a '*'- joined product of names."""
        token = token.strip()
        if token in ("e", "0", ""):
            return 0
        g = 0
        for part in token.split("*"):
            part = part.strip()
            if part not in self.gen_names:
                raise ValueError(f"unknown generator {part!r} in {token!r}")
            g ^= 1 << self.gen_names.index(part)
        return g


def _element_image(gen_images: dict[int, PauliOperator], g: int, m: int,
                   n_sites: int) -> PauliOperator:
    """Hermitian-gauged product of generator images, ascending generator order."""
    factors = [gen_images[a] for a in range(m) if g >> a & 1]
    return hermitian_gauge(multiply_all(factors, n_sites=n_sites))


class ValidatedScheme:
    """A scheme together with its derived, consistency-checked constituents.

    Immutable after construction; safe for shared concurrent reads. All
    image accessors accept arbitrary group-element masks and return exact
    Hermitian-gauged block-local PauliOperators.
    """

    def __init__(self, scheme: SymmetryScheme, kappa: np.ndarray, H: tuple[int, ...],
                 H_candidates: list[tuple[int, ...]], Hprime: tuple[int, ...],
                 Gi: dict[int, tuple[int, ...]], vR: dict[int, dict[int, PauliOperator]]):
        self.scheme = scheme
        self.kappa = kappa
        self.H = H
        self.H_candidates = H_candidates
        self.Hprime = Hprime
        self.Gi = Gi
        self.vR_bulk = vR
        self._cache: dict = {}

    # -- delegation ------------------------------------------------------

    @property
    def m(self) -> int:
        return self.scheme.m

    @property
    def partition(self) -> SitePartition:
        return self.scheme.partition

    @property
    def n_bulk(self) -> int:
        return self.scheme.n_bulk

    @property
    def n_sites(self) -> int:
        return self.partition.n_sites

    def elements(self) -> range:
        return self.scheme.elements()

    def element_label(self, g: int) -> str:
        return self.scheme.element_label(g)

    def parse_element(self, token: str) -> int:
        return self.scheme.parse_element(token)

    @property
    def gen_names(self):
        return self.scheme.gen_names

    # -- derived images ----------------------------------------------------

    def kappa_of(self, g: int, gp: int) -> int:
        """Bilinear extension of the generator kappa matrix."""
        bits_g = [a for a in range(self.m) if g >> a & 1]
        bits_gp = [b for b in range(self.m) if gp >> b & 1]
        return sum(self.kappa[a, b] for a in bits_g for b in bits_gp) % 2

    def _elem(self, kind: str, block: int, g: int) -> PauliOperator:
        key = (kind, block, g)
        if key not in self._cache:
            if kind == "u":
                gen_images = self.scheme.u.get(block)
            elif kind == "vL":
                gen_images = self.scheme.vL.get(block)
            elif kind == "vR":
                gen_images = self.scheme.vR0 if block == 0 else self.vR_bulk.get(block)
            else:
                raise ValueError(f"unknown representation {kind!r}")
            if gen_images is None:
                raise KeyError(f"{kind} not defined on block {block}")
            size = self.partition.size(block)
            self._cache[key] = _element_image(gen_images, g, self.m, size)
        return self._cache[key]

    def u_local(self, i: int, g: int) -> PauliOperator:
        return self._elem("u", i, g)

    def vL_local(self, i: int, g: int) -> PauliOperator:
        return self._elem("vL", i, g)

    def vR_local(self, i: int, g: int) -> PauliOperator:
        return self._elem("vR", i, g)

    def boundary_image(self, g: int) -> PauliOperator:
        """Right-boundary image vL_{n+1}(g); the logical operator algebra."""
        return self.vL_local(self.n_bulk + 1, g)

    @property
    def boundary_dim(self) -> int:
        return 1 << self.partition.size(self.n_bulk + 1)

    def chi_of(self, chi_gen: dict[int, int], g: int) -> int:
        """Additive extension of a per-generator character to element g."""
        return sum(chi_gen[a] for a in range(self.m) if g >> a & 1) % 2

    # -- global operators ----------------------------------------------------

    def assemble(self, kind: str, g: int, k: int | None = None) -> PauliOperator:
        """Global Hermitian Pauli string U(g), T(g), L_k(g) or R_k(g)."""
        n = self.n_bulk
        part = self.partition
        if kind in ("L", "R"):
            if k is None or not 1 <= k <= n:
                raise ValueError("L/R require a bulk block index k")
            if g not in self.Gi[k]:
                raise ValueError(
                    f"{self.element_label(g)} is not an admissible axis at block {k}"
                )
        key = ("asm", kind, g, k)
        if key in self._cache:
            return self._cache[key]
        if kind == "U":
            # U is the linear representation: composite elements are products
            # of the global generator strings, never re-gauged blockwise.
            gen_strings = []
            for a in range(self.m):
                if not g >> a & 1:
                    continue
                mask = 1 << a
                factors = [part.embed_block(self.vR_local(0, mask), 0)]
                factors += [part.embed_block(self.u_local(i, mask), i) for i in range(1, n + 1)]
                factors += [part.embed_block(self.boundary_image(mask), n + 1)]
                gen_strings.append(multiply_all(factors, n_sites=part.n_sites))
            op = multiply_all(gen_strings, n_sites=part.n_sites)
            self._cache[key] = op
            return op
        if kind == "T":
            factors = [part.embed_block(self.u_local(i, g), i) for i in range(0, n + 1)]
            factors += [part.embed_block(self.boundary_image(g), n + 1)]
        elif kind == "L":
            factors = [part.embed_block(self.u_local(i, g), i) for i in range(0, k)]
            factors += [part.embed_block(self.vL_local(k, g), k)]
        elif kind == "R":
            factors = [part.embed_block(self.vR_local(k, g), k)]
            factors += [part.embed_block(self.u_local(j, g), j) for j in range(k + 1, n + 1)]
            factors += [part.embed_block(self.boundary_image(g), n + 1)]
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
        op = multiply_all(factors, n_sites=part.n_sites)
        self._cache[key] = op
        return op

    def rotation_sign(self, k: int, g: int) -> int:
        """Sign s with L_k(g) R_k(g) = s T(g); +-1 by the commutation structure."""
        prod = multiply(self.assemble("L", g, k), self.assemble("R", g, k))
        ratio = prod.phase_ratio(self.assemble("T", g))
        if ratio == 1:
            return 1
        if ratio == -1:
            return -1
        raise AssertionError("L*R differs from T by an imaginary phase")

    # -- reporting -------------------------------------------------------

    def describe(self) -> dict:
        """Machine-readable summary: kappa, H, H', per-block axis groups."""
        return {
            "name": self.scheme.name,
            "n_sites": self.n_sites,
            "n_bulk": self.n_bulk,
            "generators": list(self.gen_names),
            "kappa": self.kappa.tolist(),
            "H": [self.element_label(h) for h in self.H],
            "H_candidates": [[self.element_label(h) for h in cand] for cand in self.H_candidates],
            "Hprime": [self.element_label(h) for h in self.Hprime],
            "Gi": {str(i): [self.element_label(g) for g in gi] for i, gi in self.Gi.items()},
        }


def derive_vR(scheme: SymmetryScheme) -> dict[int, dict[int, PauliOperator]]:
    """Bulk right projective images: vR_i(g) = vL_i(g)^-1 u_i(g), per generator.

    Raises if the product is not Hermitian (i.e. vL and u fail to commute at
    some generator, which makes a simultaneous Hermitian gauge impossible).
    """
    out: dict[int, dict[int, PauliOperator]] = {}
    for i in range(1, scheme.n_bulk + 1):
        out[i] = {}
        for a in range(scheme.m):
            vl, u = scheme.vL[i][a], scheme.u[i][a]
            if commutation_sign(vl, u) != 0:
                raise SchemeValidationError([Violation(
                    "url", block=i, pair=(scheme.gen_names[a], scheme.gen_names[a]),
                    detail=f"vL={vl} and u={u} anticommute; no Hermitian vR exists",
                )])
            vr = multiply(vl, u)  # vL is involutive, so vL^-1 = vL
            out[i][a] = vr
    return out


def compute_Gi(validated_or_parts, i: int) -> tuple[int, ...]:
    """Unique maximal axis subgroup at bulk block i.

    Membership of g' requires, for every g in G: the vR commutation sign
    equals kappa(g, g'), and vL_i(g) commutes with vR_i(g').
    """
    v = validated_or_parts
    members = []
    for gp in v.elements():
        vr_gp = v.vR_local(i, gp)
        ok = True
        for g in v.elements():
            if commutation_sign(v.vR_local(i, g), vr_gp) != v.kappa_of(g, gp):
                ok = False
                break
            if commutation_sign(v.vL_local(i, g), vr_gp) != 0:
                ok = False
                break
        if ok:
            members.append(gp)
    return tuple(sorted(members))


def validate(scheme: SymmetryScheme) -> ValidatedScheme:
    """Check all scheme consistency equations; raise SchemeValidationError on failure."""
    violations: list[Violation] = []
    m = scheme.m
    n = scheme.n_bulk
    names = scheme.gen_names

    # u images pairwise commute, per block (linear rep of an abelian group)
    for i in range(0, n + 1):
        for a, b in combinations(range(m), 2):
            if commutation_sign(scheme.u[i][a], scheme.u[i][b]) != 0:
                violations.append(Violation(
                    "u-abelian", block=i, pair=(names[a], names[b]),
                    detail=f"{scheme.u[i][a]} vs {scheme.u[i][b]}"))

    # kappa is defined by the right-boundary projective representation
    kappa = np.zeros((m, m), dtype=np.uint8)
    vl_right = scheme.vL[n + 1]
    for a in range(m):
        for b in range(m):
            kappa[a, b] = commutation_sign(vl_right[a], vl_right[b])

    # vR0 must reproduce kappa
    for a, b in combinations(range(m), 2):
        if commutation_sign(scheme.vR0[a], scheme.vR0[b]) != kappa[a, b]:
            violations.append(Violation(
                "KappaR0", block=0, pair=(names[a], names[b]),
                detail=f"{scheme.vR0[a]} vs {scheme.vR0[b]} disagrees with kappa={kappa[a, b]}"))

    # bulk vR derivation (also enforces the Hermitian-gauge compatibility of url)
    try:
        vR = derive_vR(scheme)
    except SchemeValidationError as err:
        violations.extend(err.violations)
        raise SchemeValidationError(violations) from None

    if violations:
        raise SchemeValidationError(violations)

    pre = ValidatedScheme(scheme, kappa, (0,), [], (0,), {}, vR)

    # exact url check at element level is definitional for generators; verify
    for i in range(1, n + 1):
        for a in range(m):
            if multiply(scheme.vL[i][a], vR[i][a]) != scheme.u[i][a]:
                violations.append(Violation(
                    "url", block=i, pair=(names[a], names[a]),
                    detail="vL*vR does not reproduce u exactly"))

    # initialization subgroup H: among the maximal subgroups with commuting
    # vR0 images, those on which u0 = vR0 holds exactly
    abelian = [
        sub for sub in iter_subgroups(m)
        if all(commutation_sign(pre.vR_local(0, g), pre.vR_local(0, gp)) == 0
               for g, gp in combinations(sub, 2))
    ]
    maximal_abelian = [s for s in abelian if not any(set(s) < set(t) for t in abelian)]
    maximal = [
        s for s in maximal_abelian
        if all(pre.u_local(0, h) == pre.vR_local(0, h) for h in s)
    ]
    if not maximal:
        violations.append(Violation(
            "H_spec", block=0,
            detail=f"u0 differs from vR0 on every maximal commuting candidate "
                   f"({len(maximal_abelian)} candidates)"))
        raise SchemeValidationError(violations)
    if scheme.declared_H is not None:
        H = span(scheme.declared_H, m)
        if H not in maximal:
            violations.append(Violation(
                "H_spec", block=0,
                detail=f"declared H={[scheme.element_label(h) for h in H]} is not a maximal valid choice"))
    elif len(maximal) > 1:
        violations.append(Violation(
            "H-ambiguous", block=0,
            detail=f"{len(maximal)} maximal subgroups satisfy the H conditions; declare one"))
        H = maximal[0]
    else:
        H = maximal[0]

    # readout subgroup H': defaults to H; right-boundary images must commute
    if scheme.declared_Hprime is not None:
        Hprime = span(scheme.declared_Hprime, m)
    else:
        Hprime = H
    for g, gp in combinations(Hprime, 2):
        if commutation_sign(pre.boundary_image(g), pre.boundary_image(gp)) != 0:
            violations.append(Violation(
                "Hprime-abelian", block=n + 1,
                pair=(scheme.element_label(g), scheme.element_label(gp)),
                detail="right-boundary images of H' do not commute"))

    # per-block axis groups, checked to be subgroups (Lemma-level guarantee)
    Gi = {}
    for i in range(1, n + 1):
        gi = compute_Gi(pre, i)
        Gi[i] = gi
        members = set(gi)
        if 0 not in members or any((a ^ b) not in members for a in gi for b in gi):
            violations.append(Violation(
                "Gi-subgroup", block=i,
                detail=f"axis set {[scheme.element_label(g) for g in gi]} is not a subgroup"))

    result = ValidatedScheme(scheme, kappa, H, maximal, Hprime, Gi, vR)

    # global U must be a linear representation with exactly trivial phases
    for g in result.elements():
        for gp in result.elements():
            lhs = multiply(result.assemble("U", g), result.assemble("U", gp))
            rhs = result.assemble("U", g ^ gp)
            if lhs != rhs:
                violations.append(Violation(
                    "Udef-linearity",
                    pair=(scheme.element_label(g), scheme.element_label(gp)),
                    detail=f"U(g)U(g') = {lhs}, U(g+g') = {rhs}"))

    if violations:
        raise SchemeValidationError(violations)
    return result


def check_algebra(v: ValidatedScheme) -> list[Violation]:
    """Exhaustively verify the derived commutation relations.

    For all bulk blocks k, g in G and g' in G_k: R_k(g') commutes with U(g)
    and with T(g); L_k(g') and T(g) commute up to (-1)^kappa(g,g'); and the
    T(g) pairwise commute up to the same sign. Violations indicate a
    validator bug, not bad input.
    """
    failures: list[Violation] = []
    n = v.n_bulk
    T = {g: v.assemble("T", g) for g in v.elements()}
    U = {g: v.assemble("U", g) for g in v.elements()}
    for g in v.elements():
        for gp in v.elements():
            lhs = multiply(T[g], T[gp])
            rhs = multiply(T[gp], T[g]).scaled(2 * v.kappa_of(g, gp))
            if lhs != rhs:
                failures.append(Violation(
                    "TTcomm", pair=(v.element_label(g), v.element_label(gp))))
    for k in range(1, n + 1):
        for gp in v.Gi[k]:
            R = v.assemble("R", gp, k)
            L = v.assemble("L", gp, k)
            for g in v.elements():
                if multiply(R, U[g]) != multiply(U[g], R):
                    failures.append(Violation(
                        "RUcomm", block=k, pair=(v.element_label(gp), v.element_label(g))))
                if multiply(R, T[g]) != multiply(T[g], R):
                    failures.append(Violation(
                        "RTcomm", block=k, pair=(v.element_label(gp), v.element_label(g))))
                lhs = multiply(L, T[g])
                rhs = multiply(T[g], L).scaled(2 * v.kappa_of(g, gp))
                if lhs != rhs:
                    failures.append(Violation(
                        "LTcomm", block=k, pair=(v.element_label(gp), v.element_label(g))))
    return failures


# -- scheme files ------------------------------------------------------------


def _parse_images(table: dict, gen_names, n_sites: int) -> dict[int, PauliOperator]:
    out = {}
    for a, name in enumerate(gen_names):
        if name not in table:
            raise ValueError(f"missing image for generator {name!r}")
        out[a] = PauliOperator.from_label(table[name], n_sites)
    return out


def load_scheme(path_or_dict, n_sites: int, name: str | None = None) -> SymmetryScheme:
    """Instantiate a scheme file at a concrete chain length.

    The file fixes block sizes and a periodic bulk pattern; ``n_sites``
    determines the number of bulk blocks. Modulus constraints declared in
    the file are enforced.
    """
    if isinstance(path_or_dict, dict):
        data = path_or_dict
    else:
        with open(path_or_dict, "rb") as fh:
            data = tomllib.load(fh)
    gen_names = data["generators"]
    blocks = data["blocks"]
    left, right = blocks["left_size"], blocks["right_size"]
    bulk_size, period = blocks["bulk_size"], blocks.get("bulk_period", 1)
    rem = n_sites - left - right
    if rem <= 0 or rem % bulk_size != 0:
        raise ValueError(f"N={n_sites} incompatible with block sizes {left}+k*{bulk_size}+{right}")
    n = rem // bulk_size
    r, mod = blocks.get("n_bulk_mod", [n % 1, 1])
    if n % mod != r % mod:
        raise ValueError(f"N={n_sites} gives n_bulk={n}, need n_bulk = {r} mod {mod}")
    r, mod = blocks.get("n_sites_mod", [n_sites % 1, 1])
    if n_sites % mod != r % mod:
        raise ValueError(f"need N = {r} mod {mod}, got N={n_sites}")

    partition = SitePartition.from_sizes([left] + [bulk_size] * n + [right])
    bulk_entries = data["bulk"]
    if len(bulk_entries) != period:
        raise ValueError("bulk pattern length must equal bulk_period")
    u = {0: _parse_images(data["left"]["u0"], gen_names, left)}
    vL = {}
    for i in range(1, n + 1):
        entry = bulk_entries[(i - 1) % period]
        u[i] = _parse_images(entry["u"], gen_names, bulk_size)
        vL[i] = _parse_images(entry["vL"], gen_names, bulk_size)
    vL[n + 1] = _parse_images(data["right"]["vL"], gen_names, right)
    vR0 = _parse_images(data["left"]["vR0"], gen_names, left)

    scheme = SymmetryScheme(
        name or data.get("name", "scheme"),
        gen_names, partition, u, vL, vR0,
    )
    options = data.get("options", {})
    if "H" in options:
        scheme.declared_H = tuple(scheme.parse_element(t) for t in options["H"])
    if "Hprime" in options:
        scheme.declared_Hprime = tuple(scheme.parse_element(t) for t in options["Hprime"])
    if "chi" in options:
        scheme.chi_target = {
            scheme.gen_names.index(k): int(vv) for k, vv in options["chi"].items()
        }
    return scheme


BUILTIN_SCHEMES = (
    "cluster_block2",
    "cluster_site_local",
    "kitaev_gamma_block2",
    "qca_block6",
    "qca_site_local",
    "ising",
)


def builtin_scheme_path(name: str) -> str:
    if name not in BUILTIN_SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {BUILTIN_SCHEMES}")
    return os.path.join(_DATA_DIR, name + ".toml")


def builtin_scheme(name: str, n_sites: int) -> SymmetryScheme:
    """Load one of the bundled schemes at chain length ``n_sites``."""
    return load_scheme(builtin_scheme_path(name), n_sites, name=name)
