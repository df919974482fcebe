"""Resource-state construction: circuits, Hamiltonian ground states, symmetry
certificates and entanglement-range estimates.

Circuit states are built gate-by-gate on dense vectors; for Clifford-only
circuits the stabilizer group and the exact entanglement range are computed
by symbolic conjugation. Ground states come from a dense eigensolver at
small size or a matrix-free restarted Krylov solver, with degenerate ground
manifolds projected onto definite symmetry sectors.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh

from .pauli import PauliAction, PauliOperator, SitePartition, multiply
from .schemes import ValidatedScheme

DENSE_SOLVER_CAP = 12
ITERATIVE_SOLVER_CAP = 20
DEGENERACY_TOL = 1e-7
SYMMETRY_TOL = 1e-8
RESIDUAL_TOL = 1e-8
MAX_MATVECS = 5000


class SolverError(RuntimeError):
    pass


# -- gates and circuits ------------------------------------------------------

_SQ2 = 1.0 / np.sqrt(2.0)
_H_MATRIX = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)

_CLIFFORD_1Q = {"H": _H_MATRIX}


@dataclass(frozen=True)
class Gate:
    name: str
    sites: tuple[int, ...]
    param: float | None = None

    def is_clifford(self) -> bool:
        return self.name in ("H", "CZ")


@dataclass(frozen=True)
class CircuitSpec:
    """Ordered gate list acting on ``n_sites`` spins.

    ``initial`` selects the reference product state: 'zeros' or 'plus'.
    """

    n_sites: int
    gates: tuple[Gate, ...]
    initial: str = "zeros"

    def __post_init__(self):
        for g in self.gates:
            if any(not 0 <= s < self.n_sites for s in g.sites):
                raise ValueError(f"gate {g} acts outside the chain")

    def is_clifford(self) -> bool:
        return all(g.is_clifford() for g in self.gates)

    def describe(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "initial": self.initial,
            "gates": [[g.name, list(g.sites)] + ([g.param] if g.param is not None else [])
                      for g in self.gates],
        }


def cluster_circuit(n_sites: int) -> CircuitSpec:
    """One automaton round: H on every site, then CZ on every edge."""
    return qca_circuit(n_sites, rounds=1)


def qca_circuit(n_sites: int, rounds: int) -> CircuitSpec:
    gates = []
    for _ in range(rounds):
        gates += [Gate("H", (i,)) for i in range(n_sites)]
        gates += [Gate("CZ", (i, i + 1)) for i in range(n_sites - 1)]
    return CircuitSpec(n_sites, tuple(gates), initial="zeros")


def _apply_1q(psi: np.ndarray, mat: np.ndarray, site: int, n: int) -> np.ndarray:
    # site 0 is the most significant index bit
    pre, post = 1 << site, 1 << (n - 1 - site)
    v = psi.reshape(pre, 2, post)
    out = np.einsum("ab,ibj->iaj", mat, v)
    return np.ascontiguousarray(out).reshape(-1)


def _apply_cz(psi: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    idx = np.arange(psi.shape[0])
    bi = (idx >> (n - 1 - i)) & 1
    bj = (idx >> (n - 1 - j)) & 1
    out = psi.copy()
    out[(bi & bj).astype(bool)] *= -1
    return out


def apply_gate(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if gate.name == "H":
        return _apply_1q(psi, _H_MATRIX, gate.sites[0], n)
    if gate.name == "CZ":
        return _apply_cz(psi, gate.sites[0], gate.sites[1], n)
    if gate.name in ("RZ", "RX"):
        t = gate.param / 2.0
        pauli = np.array([[1, 0], [0, -1]], dtype=complex) if gate.name == "RZ" \
            else np.array([[0, 1], [1, 0]], dtype=complex)
        mat = np.cos(t) * np.eye(2) - 1j * np.sin(t) * pauli
        return _apply_1q(psi, mat, gate.sites[0], n)
    raise ValueError(f"unknown gate {gate.name!r}")


def run_circuit(spec: CircuitSpec) -> np.ndarray:
    dim = 1 << spec.n_sites
    if spec.initial == "zeros":
        psi = np.zeros(dim, dtype=complex)
        psi[0] = 1.0
    elif spec.initial == "plus":
        psi = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    else:
        raise ValueError(f"unknown initial state {spec.initial!r}")
    for gate in spec.gates:
        psi = apply_gate(psi, gate, spec.n_sites)
    return psi


# -- symbolic Clifford conjugation -------------------------------------------

_CONJ_TABLES: dict = {}


def _build_conj_table(mat: np.ndarray, key) -> dict:
    """Map each local canonical Pauli to (image masks, sign) under U . U^dag."""
    from .pauli import to_dense

    def canonical(k, x, z):
        # positive letter form: i^{y_count} X^x Z^z
        return PauliOperator(k, x, z, bin(x & z).count("1"))

    k = int(np.log2(mat.shape[0]))
    table = {}
    for x in range(1 << k):
        for z in range(1 << k):
            p = canonical(k, x, z)
            m = mat @ to_dense(p) @ mat.conj().T
            found = None
            for x2 in range(1 << k):
                for z2 in range(1 << k):
                    q = canonical(k, x2, z2)
                    qd = to_dense(q)
                    for sign in (1, -1):
                        if np.allclose(m, sign * qd, atol=1e-12):
                            found = (x2, z2, sign)
                            break
                    if found:
                        break
                if found:
                    break
            if found is None:
                raise ValueError("matrix is not Clifford")
            table[(x, z)] = found
    _CONJ_TABLES[key] = table
    return table


def _conj_table(name_or_mat) -> dict:
    if isinstance(name_or_mat, str):
        key = name_or_mat
        if key in _CONJ_TABLES:
            return _CONJ_TABLES[key]
        if key == "H":
            return _build_conj_table(_H_MATRIX, key)
        if key == "CZ":
            cz = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
            return _build_conj_table(cz, key)
        raise ValueError(f"no Clifford table for {key!r}")
    mat, key = name_or_mat
    if key in _CONJ_TABLES:
        return _CONJ_TABLES[key]
    return _build_conj_table(mat, key)


def conjugate_pauli(p: PauliOperator, table: dict, sites: tuple[int, ...]) -> PauliOperator:
    """Return U p U^dag for the Clifford U described by ``table`` at ``sites``."""
    k = len(sites)
    x_loc = z_loc = 0
    for a, s in enumerate(sites):
        x_loc |= (p.x_mask >> s & 1) << a
        z_loc |= (p.z_mask >> s & 1) << a
    x2, z2, sign = table[(x_loc, z_loc)]
    old_y = bin(x_loc & z_loc).count("1")
    new_y = bin(x2 & z2).count("1")
    x_mask, z_mask = p.x_mask, p.z_mask
    for a, s in enumerate(sites):
        x_mask = (x_mask & ~(1 << s)) | ((x2 >> a & 1) << s)
        z_mask = (z_mask & ~(1 << s)) | ((z2 >> a & 1) << s)
    k_new = p.phase_exp - old_y + new_y + (0 if sign == 1 else 2)
    return PauliOperator(p.n_sites, x_mask, z_mask, k_new)


def conjugate_through(p: PauliOperator, spec: CircuitSpec, dagger: bool = False) -> PauliOperator:
    """W p W^dag (or W^dag p W with ``dagger``) for a Clifford circuit W."""
    gates = spec.gates[::-1] if dagger else spec.gates
    for g in gates:
        if not g.is_clifford():
            raise ValueError("symbolic conjugation requires a Clifford circuit")
        p = conjugate_pauli(p, _conj_table(g.name), g.sites)
    return p


def circuit_stabilizers(spec: CircuitSpec) -> list[PauliOperator]:
    """Stabilizer generators of the circuit output state."""
    letter = "Z" if spec.initial == "zeros" else "X"
    return [
        conjugate_through(PauliOperator.single(spec.n_sites, s, letter), spec)
        for s in range(spec.n_sites)
    ]


def entanglement_range(spec: CircuitSpec, partition: SitePartition,
                       mode: str = "exact") -> int:
    """Entanglement range of the circuit with respect to a block partition.

    Exact mode conjugates every single-site generator through the circuit
    and measures the worst block-index overflow; it requires a Clifford
    circuit. Lightcone mode only uses gate geometry and upper-bounds the
    exact value.
    """
    if partition.n_sites != spec.n_sites:
        raise ValueError("partition does not match circuit size")
    n = spec.n_sites
    if mode == "exact":
        if not spec.is_clifford():
            raise ValueError("exact mode requires a Clifford circuit")
        delta = 0
        for s in range(n):
            b = partition.block_of_site(s)
            for letter in "XZ":
                q = conjugate_through(PauliOperator.single(n, s, letter), spec, dagger=True)
                rng = partition.block_range(q)
                if rng is None:
                    continue
                lo, hi = rng
                delta = max(delta, hi - b, b - lo)
        return delta
    if mode == "lightcone":
        delta = 0
        for s in range(n):
            reach = {s}
            for g in spec.gates[::-1]:
                if set(g.sites) & reach:
                    reach |= set(g.sites)
            b = partition.block_of_site(s)
            blocks = [partition.block_of_site(t) for t in reach]
            delta = max(delta, max(blocks) - b, b - min(blocks))
        return delta
    raise ValueError(f"unknown mode {mode!r}")


# -- resource states ----------------------------------------------------------


@dataclass(frozen=True)
class ResourceState:
    """Dense state vector with provenance and symmetry certificate.

    ``chi`` maps generator index to the measured symmetry eigenvalue bit; it
    is None until the state is certified. ``failed_generators`` lists
    generators on which the state is not a symmetry eigenstate.
    """

    n_sites: int
    amplitudes: np.ndarray
    provenance: dict = field(default_factory=dict)
    chi: dict | None = None
    delta: int | None = None
    failed_generators: tuple[str, ...] = ()

    def __post_init__(self):
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm} deviates from 1")
        self.amplitudes.setflags(write=False)

    @property
    def is_symmetric(self) -> bool:
        return self.chi is not None and not self.failed_generators

    def expectation(self, op: PauliOperator) -> complex:
        return PauliAction(op).expectation(self.amplitudes)

    def overlap(self, other: "ResourceState") -> complex:
        return complex(np.vdot(other.amplitudes, self.amplitudes))


def _fix_global_phase(psi: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(psi)))
    phase = psi[k] / abs(psi[k])
    return psi / phase


def build_circuit_state(spec: CircuitSpec, partition: SitePartition | None = None) -> ResourceState:
    """Run the circuit and attach an exact or lightcone entanglement range."""
    psi = _fix_global_phase(run_circuit(spec))
    delta = None
    if partition is not None:
        mode = "exact" if spec.is_clifford() else "lightcone"
        delta = entanglement_range(spec, partition, mode=mode)
    return ResourceState(
        spec.n_sites, psi,
        provenance={"kind": "circuit", **spec.describe()},
        delta=delta,
    )


# -- Hamiltonian families ------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianSpec:
    family: str
    n_sites: int
    params: tuple  # sorted (key, value) pairs

    @staticmethod
    def make(family: str, n_sites: int, **params) -> "HamiltonianSpec":
        return HamiltonianSpec(family, n_sites, tuple(sorted(params.items())))

    def param(self, key, default=None):
        return dict(self.params).get(key, default)

    def describe(self) -> dict:
        return {"kind": "hamiltonian", "family": self.family,
                "n_sites": self.n_sites, "params": dict(self.params)}


def _P(label: str) -> PauliOperator:
    return PauliOperator.from_label(label)


def _string(n: int, letters: dict[int, str]) -> PauliOperator:
    """Pauli string with given letters at given (0-based) sites."""
    p = PauliOperator.identity(n)
    for site, letter in letters.items():
        p = multiply(p, PauliOperator.single(n, site, letter))
    return p


def cluster_stabilizers(n: int) -> list[PauliOperator]:
    """Z X Z bulk terms plus the two boundary stabilizers, 0-based."""
    ops = [_string(n, {0: "X", 1: "Z"})]
    ops += [_string(n, {i - 1: "Z", i: "X", i + 1: "Z"}) for i in range(1, n - 1)]
    ops += [_string(n, {n - 2: "Z", n - 1: "X"})]
    return ops


def qca_stabilizers(n: int) -> list[PauliOperator]:
    """Five-letter Z X Z X Z bulk terms plus the four boundary stabilizers."""
    ops = [
        _string(n, {1: "X", 2: "Z"}),
        _string(n, {0: "X", 1: "Z", 2: "X", 3: "Z"}),
    ]
    ops += [
        _string(n, {i - 2: "Z", i - 1: "X", i: "Z", i + 1: "X", i + 2: "Z"})
        for i in range(2, n - 2)
    ]
    ops += [
        _string(n, {n - 4: "Z", n - 3: "X", n - 2: "Z", n - 1: "X"}),
        _string(n, {n - 3: "Z", n - 2: "X"}),
    ]
    return ops


_KG_U6_AXES = [
    None,
    (np.array([0, 1.0, -1.0]) / np.sqrt(2), np.pi),
    (np.array([1.0, 1.0, 1.0]) / np.sqrt(3), 2 * np.pi / 3),
    (np.array([-1.0, 1.0, 0]) / np.sqrt(2), np.pi),
    (np.array([1.0, 1.0, 1.0]) / np.sqrt(3), -2 * np.pi / 3),
    (np.array([1.0, 0, -1.0]) / np.sqrt(2), np.pi),
]

_SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def u6_site_matrix(idx: int) -> np.ndarray:
    """Single-site rotation of the six-site-periodic frame change."""
    if _KG_U6_AXES[idx] is None:
        return np.eye(2, dtype=complex)
    axis, angle = _KG_U6_AXES[idx]
    ns = axis[0] * _SIGMA["x"] + axis[1] * _SIGMA["y"] + axis[2] * _SIGMA["z"]
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * ns


def apply_u6_state(psi: np.ndarray, n: int, direction: int = +1, offset: int = 0) -> np.ndarray:
    """Apply the six-site-periodic rotation (or its inverse) to a state."""
    if n % 6 != 0:
        raise ValueError("six-site rotation needs N divisible by 6")
    for s in range(n):
        mat = u6_site_matrix((s + offset) % 6)
        if direction < 0:
            mat = mat.conj().T
        psi = _apply_1q(psi, mat, s, n)
    return psi


def apply_u6_pauli(p: PauliOperator, direction: int = +1, offset: int = 0) -> PauliOperator:
    """Conjugate a Pauli string by the six-site-periodic rotation."""
    if p.n_sites % 6 != 0:
        raise ValueError("six-site rotation needs N divisible by 6")
    for s in range(p.n_sites):
        idx = (s + offset) % 6
        mat = u6_site_matrix(idx)
        key = ("U6", idx, direction)
        if direction < 0:
            mat = mat.conj().T
        p = conjugate_pauli(p, _conj_table((mat, key)), (s,))
    return p


def apply_u6_terms(terms, n: int, direction: int = +1, offset: int = 0):
    return [(c, apply_u6_pauli(p, direction, offset)) for c, p in terms]


_KG_RIGHT_HANDED = {"x": ("y", "z"), "y": ("z", "x"), "z": ("x", "y")}


def _kg_bond_types(n: int, end: str):
    """Unrotated bond directions: bonds alternate x/y, the last bond names the chain."""
    first = "x" if end == "x_end" else "y"
    second = "y" if end == "x_end" else "x"
    return [first if i % 2 == 1 else second for i in range(1, n)]  # bond i joins sites i, i+1


def hamiltonian_terms(spec: HamiltonianSpec) -> list[tuple[float, PauliOperator]]:
    """Term list (coefficient, Hermitian Pauli string) for the family."""
    n = spec.n_sites
    fam = spec.family
    if fam == "cluster_field":
        if n % 2 == 0:
            raise ValueError("cluster chain length must be odd")
        alpha = spec.param("alpha")
        terms = [(-np.cos(alpha), k) for k in cluster_stabilizers(n)]
        terms += [(-np.sin(alpha), _string(n, {i: "X"})) for i in range(1, n - 1)]
        return terms
    if fam == "qca_field":
        if n % 6 != 4:
            raise ValueError("two-round automaton chain length must be 4 mod 6")
        alpha = spec.param("alpha")
        terms = [(-np.cos(alpha), k) for k in qca_stabilizers(n)]
        terms += [(-np.sin(alpha), _string(n, {i: "X"})) for i in range(2, n - 2)]
        return terms
    if fam == "ising_transverse":
        alpha = spec.param("alpha")
        g = spec.param("coupling", 1.0)
        terms = [(-g * np.cos(alpha), _string(n, {i: "Z", i + 1: "Z"})) for i in range(n - 1)]
        terms += [(-g * np.sin(alpha), _string(n, {i: "X"})) for i in range(n)]
        return terms
    if fam == "kitaev_gamma":
        return _kitaev_gamma_terms(spec)
    raise ValueError(f"unknown family {fam!r}")


def _kitaev_gamma_terms(spec: HamiltonianSpec) -> list[tuple[float, PauliOperator]]:
    n = spec.n_sites
    if n % 2 != 0:
        raise ValueError("bond-alternating chain length must be even")
    phi = spec.param("phi")
    g = spec.param("g")
    frame = spec.param("frame", "rotated")
    end = spec.param("end", "x_end")
    if end not in ("x_end", "y_end"):
        raise ValueError("end must be x_end or y_end")
    kk, gamma = np.sin(phi), np.cos(phi)
    gx, gy = 1.0, float(g)
    bond_types = _kg_bond_types(n, end)
    terms = []
    for b, btype in enumerate(bond_types, start=1):
        i, j = b - 1, b  # 0-based sites of bond b
        strength = gx if btype == "x" else gy
        if frame == "unrotated":
            a1, a2 = _KG_RIGHT_HANDED[btype]
            terms.append((strength * kk / 4, _string(n, {i: btype.upper(), j: btype.upper()})))
            terms.append((strength * gamma / 4, _string(n, {i: a1.upper(), j: a2.upper()})))
            terms.append((strength * gamma / 4, _string(n, {i: a2.upper(), j: a1.upper()})))
        elif frame == "rotated":
            pattern = ["x", "z", "y"] if end == "x_end" else ["z", "y", "x"]
            gdir = pattern[(b - 1) % 3]
            a1, a2 = _KG_RIGHT_HANDED[gdir]
            terms.append((-strength * kk / 4, _string(n, {i: gdir.upper(), j: gdir.upper()})))
            terms.append((-strength * gamma / 4, _string(n, {i: a1.upper(), j: a1.upper()})))
            terms.append((-strength * gamma / 4, _string(n, {i: a2.upper(), j: a2.upper()})))
        else:
            raise ValueError("frame must be rotated or unrotated")
    return terms


def family_symmetry_strings(spec: HamiltonianSpec) -> dict[str, PauliOperator]:
    """Global symmetry generators of the family, as Pauli strings."""
    n = spec.n_sites
    fam = spec.family
    if fam == "cluster_field":
        g01 = _string(n, {0: "Z", n - 1: "Z", **{i: "X" for i in range(1, n - 1, 2)}})
        g10 = _string(n, {i: "X" for i in range(0, n, 2)})
        return {"g01": g01, "g10": g10}
    if fam == "qca_field":
        from .schemes import builtin_scheme, validate

        v = validate(builtin_scheme("qca_block6", n))
        return {name: v.assemble("U", 1 << a) for a, name in enumerate(v.gen_names)}
    if fam == "ising_transverse":
        return {"g1": _string(n, {i: "X" for i in range(n)})}
    if fam == "kitaev_gamma":
        gx = _string(n, {i: "X" for i in range(n)})
        gz = _string(n, {i: "Z" for i in range(n)})
        if spec.param("frame", "rotated") == "unrotated":
            offset = 0 if spec.param("end", "x_end") == "x_end" else 1
            gx = apply_u6_pauli(gx, direction=-1, offset=offset)
            gz = apply_u6_pauli(gz, direction=-1, offset=offset)
        return {"gx": gx, "gz": gz}
    raise ValueError(f"unknown family {fam!r}")


# -- eigensolvers --------------------------------------------------------------


class TermMatvec:
    """Matrix-free application of a Pauli-term Hamiltonian."""

    def __init__(self, terms, n: int):
        self.n = n
        self.dim = 1 << n
        self._compiled = [(complex(c), PauliAction(p, cap=ITERATIVE_SOLVER_CAP))
                          for c, p in terms]

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi, dtype=complex)
        for c, act in self._compiled:
            out += c * act(psi)
        return out

    def dense(self) -> np.ndarray:
        from .pauli import to_dense

        h = np.zeros((self.dim, self.dim), dtype=complex)
        for c, act in self._compiled:
            h += c * to_dense(act.op)
        return h


def _resolve_sectors(vectors: np.ndarray, sym_actions, tol: float = 1e-5):
    """Split a degenerate manifold into joint symmetry eigensectors.

    Returns {chi_bits: orthonormal basis}, one bit per symmetry operator in
    the given order.
    """
    blocks = [((), vectors)]
    for act in sym_actions:
        new_blocks = []
        for bits, basis in blocks:
            img = np.column_stack([act(basis[:, j]) for j in range(basis.shape[1])])
            m = basis.conj().T @ img
            m = 0.5 * (m + m.conj().T)
            w, vv = eigh(m)
            if np.any(np.abs(np.abs(w) - 1.0) > tol):
                raise SolverError(
                    "ground manifold is not invariant under the symmetry "
                    f"(eigenvalues {w}); increase the solver subspace")
            for val, bit in ((1.0, 0), (-1.0, 1)):
                cols = np.abs(w - val) < 0.5
                if np.any(cols):
                    new_blocks.append((bits + (bit,), basis @ vv[:, cols]))
        blocks = new_blocks
    return {bits: basis for bits, basis in blocks}


def ground_state(spec: HamiltonianSpec, sector: dict | None = None,
                 k: int = 16, seed: int = 11) -> ResourceState:
    """Lowest-eigenvalue eigenvector of the family Hamiltonian.

    For a degenerate ground manifold the state is projected onto joint
    eigensectors of the family symmetry strings and the requested sector is
    returned (default: the all-zeros character). ``sector`` maps generator
    name to the desired eigenvalue bit.
    """
    n = spec.n_sites
    if n > ITERATIVE_SOLVER_CAP:
        raise SolverError(f"N={n} exceeds the iterative solver cap {ITERATIVE_SOLVER_CAP}")
    terms = hamiltonian_terms(spec)
    mv = TermMatvec(terms, n)
    dim = mv.dim

    if n <= 10:
        h = mv.dense()
        vals, vecs = eigh(h)
    else:
        kk = min(max(k, 16), dim - 2)
        rng = np.random.default_rng(seed)
        v0 = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        op = LinearOperator((dim, dim), matvec=mv, dtype=complex)
        vals, vecs = eigsh(op, k=kk, which="SA", v0=v0, maxiter=MAX_MATVECS)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    e0 = vals[0]
    manifold = np.abs(vals - e0) < DEGENERACY_TOL
    if n > 10 and bool(manifold.all()):
        raise SolverError("degenerate manifold may exceed the Krylov subspace; raise k")
    basis = vecs[:, manifold]

    sym = family_symmetry_strings(spec)
    sym_names = list(sym)
    if basis.shape[1] == 1 and sector is None:
        psi = basis[:, 0]
    else:
        actions = [PauliAction(sym[name]) for name in sym_names]
        sectors = _resolve_sectors(basis, actions)
        if sector is None:
            want = tuple(0 for _ in sym_names)
        else:
            want = tuple(int(sector.get(name, 0)) for name in sym_names)
        if want not in sectors:
            have = sorted(sectors)
            raise SolverError(
                f"requested symmetry sector {want} empty in ground manifold; "
                f"available sectors: {have}")
        sec = sectors[want]
        psi = sec[:, 0]
        psi = psi / np.linalg.norm(psi)

    psi = _fix_global_phase(psi)
    res = np.linalg.norm(mv(psi) - e0 * psi)
    if res > RESIDUAL_TOL * max(1.0, abs(e0)):
        raise SolverError(f"eigenvector residual {res:.3e} too large")
    return ResourceState(
        n, psi,
        provenance={**spec.describe(), "energy": float(e0),
                    "degeneracy": int(manifold.sum()),
                    "sector": dict(sector) if sector else None},
    )


def ground_energy_dense(spec: HamiltonianSpec) -> float:
    """Independent dense route to the ground energy (small chains only)."""
    mv = TermMatvec(hamiltonian_terms(spec), spec.n_sites)
    return float(np.linalg.eigvalsh(mv.dense())[0])


# -- certification --------------------------------------------------------------


def certify_symmetry(state: ResourceState, scheme: ValidatedScheme,
                     tol: float = SYMMETRY_TOL) -> ResourceState:
    """Measure the symmetry character of the state under the scheme.

    Returns a new ResourceState carrying the chi certificate; generators on
    which the state is not a (-1)^chi eigenstate are recorded as failures.
    """
    if state.n_sites != scheme.n_sites:
        raise ValueError("scheme and state sizes differ")
    chi = {}
    failed = []
    psi = state.amplitudes
    for a, name in enumerate(scheme.gen_names):
        img = PauliAction(scheme.assemble("U", 1 << a))(psi)
        if np.linalg.norm(img - psi) <= tol:
            chi[a] = 0
        elif np.linalg.norm(img + psi) <= tol:
            chi[a] = 1
        else:
            failed.append(name)
    if failed:
        return replace(state, chi=None, failed_generators=tuple(failed))
    target = scheme.scheme.chi_target
    if target is not None and any(chi[a] != bit for a, bit in target.items()):
        raise ValueError(f"measured character {chi} differs from the declared target {target}")
    return replace(state, chi=chi, failed_generators=())


# -- state cache -----------------------------------------------------------------

_CACHE_MAGIC = b"MBQC1D-STATE v1\n"


def provenance_key(provenance: dict) -> str:
    blob = json.dumps(provenance, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def save_state(state: ResourceState, path: str) -> None:
    """Binary dump: magic line, JSON header line, little-endian complex128 pairs."""
    header = {
        "n_sites": state.n_sites,
        "provenance": state.provenance,
        "chi": state.chi,
        "delta": state.delta,
        "failed_generators": list(state.failed_generators),
        "dtype": "complex128-le",
        "count": int(state.amplitudes.shape[0]),
    }
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(state.amplitudes.astype("<c16").tobytes())


def load_state(path: str) -> ResourceState:
    with open(path, "rb") as fh:
        if fh.read(len(_CACHE_MAGIC)) != _CACHE_MAGIC:
            raise ValueError(f"{path} is not a state cache file")
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.shape[0] != header["count"]:
        raise ValueError("truncated state cache")
    chi = header["chi"]
    if chi is not None:
        chi = {int(k): int(v) for k, v in chi.items()}
    return ResourceState(
        header["n_sites"], data.astype(complex),
        provenance=header["provenance"], chi=chi, delta=header["delta"],
        failed_generators=tuple(header["failed_generators"]),
    )


def cached_ground_state(spec: HamiltonianSpec, cache_dir: str | None = None,
                        sector: dict | None = None, **kwargs) -> ResourceState:
    """Ground state with an optional on-disk cache keyed by the spec hash."""
    if cache_dir is None:
        return ground_state(spec, sector=sector, **kwargs)
    prov = {**spec.describe(), "sector": dict(sector) if sector else None}
    path = os.path.join(cache_dir, provenance_key(prov) + ".state")
    if os.path.exists(path):
        return load_state(path)
    state = ground_state(spec, sector=sector, **kwargs)
    os.makedirs(cache_dir, exist_ok=True)
    save_state(state, path)
    return state
