"""Circuit-model oracle for the logical layer of MBQC.

The logical algebra lives on the right-boundary block: each group element g
is represented by the canonical boundary image W(g), a Hermitian Pauli on
d = 2^(boundary sites) dimensions, whose multiplication phases coincide with
those of the encoded logical operators. The oracle provides the logical
initial state fixed by (H, chi), the angle-and-string-order CPTP maps, their
|G|-dimensional transfer-matrix form, gate-splitting error metrics via Choi
states, and the Lie closure of the realizable rotation generators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import multiply, to_dense
from .schemes import ValidatedScheme

PSD_TOL = 1e-10
DUAL_TOL = 1e-12


class OracleError(ValueError):
    pass


# -- superoperator helpers (row-major vec convention) -------------------------


def unitary_super(v: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> V rho V^dag for row-major vec(rho)."""
    return np.kron(v, v.conj())


def super_to_choi(s: np.ndarray, d: int) -> np.ndarray:
    """Normalized Choi state (trace 1) of a superoperator."""
    j = s.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    return j / d


def trace_norm(m: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


def choi_is_cptp(s: np.ndarray, d: int, tol: float = PSD_TOL) -> bool:
    j = super_to_choi(s, d)
    if np.linalg.eigvalsh(j).min() < -tol:
        return False
    # trace over the output factor must give the maximally mixed input
    jt = j.reshape(d, d, d, d)
    partial = np.einsum("acad->cd", jt)
    return bool(np.allclose(partial, np.eye(d) / d, atol=1e-10))


# -- logical space ------------------------------------------------------------


class LogicalSpace:
    """Dense boundary representation of the logical operator algebra."""

    def __init__(self, scheme: ValidatedScheme):
        self.scheme = scheme
        self.d = scheme.boundary_dim
        self._dense = {g: to_dense(scheme.boundary_image(g)) for g in scheme.elements()}

    def w(self, g: int) -> np.ndarray:
        return self._dense[g]

    def product_phase(self, g: int, gp: int) -> complex:
        """Phase c with W(g) W(g') = c W(g+g')."""
        prod = multiply(self.scheme.boundary_image(g), self.scheme.boundary_image(gp))
        return prod.phase_ratio(self.scheme.boundary_image(g ^ gp))

    def rotation_generator(self, k: int, g: int) -> np.ndarray:
        """Generator of the logical rotation driven by block k with axis g."""
        return self.scheme.rotation_sign(k, g) * self.w(g)


@dataclass
class LogicalState:
    """Boundary-block density operator plus the group-indexed expectations."""

    rho: np.ndarray
    tvec: dict

    def check(self, space: LogicalSpace, tol: float = PSD_TOL) -> None:
        rho = self.rho
        if not np.allclose(rho, rho.conj().T, atol=tol):
            raise OracleError("rho is not Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-10:
            raise OracleError("rho is not normalized")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
            raise OracleError("rho is not positive semidefinite")
        for g, val in self.tvec.items():
            direct = np.trace(space.w(g) @ rho)
            if abs(direct - val) > 1e-10:
                raise OracleError(f"tvec entry {g} inconsistent with rho")


@dataclass(frozen=True)
class LogicalChannel:
    """One tilted block measurement as a logical CPTP map.

    Mixture of the +-angle rotations about the block's logical axis with
    weights (1 +- sigma)/2; ``sign`` is the recorded phase relating the
    block's gate generator to the logical observable.
    """

    block: int
    axis: int
    angle: float
    sigma: float
    sign: int

    def __post_init__(self):
        if abs(self.sigma) > 1.0 + 1e-12:
            raise OracleError(f"|sigma| = {abs(self.sigma)} exceeds 1")


def make_channel(scheme: ValidatedScheme, k: int, g: int, angle: float,
                 sigma: float) -> LogicalChannel:
    if g not in scheme.Gi[k]:
        raise OracleError(f"axis {scheme.element_label(g)} not admissible at block {k}")
    return LogicalChannel(k, g, float(angle), float(sigma), scheme.rotation_sign(k, g))


def channel_unitaries(space: LogicalSpace, ch: LogicalChannel) -> tuple[np.ndarray, np.ndarray]:
    gen = ch.sign * space.w(ch.axis)
    half = ch.angle / 2.0
    v = np.cos(half) * np.eye(space.d) - 1j * np.sin(half) * gen
    return v, v.conj().T


def channel_super(space: LogicalSpace, ch: LogicalChannel) -> np.ndarray:
    v, vdag = channel_unitaries(space, ch)
    wp, wm = (1.0 + ch.sigma) / 2.0, (1.0 - ch.sigma) / 2.0
    return wp * unitary_super(v) + wm * unitary_super(vdag)


def init_logical(scheme: ValidatedScheme, chi: dict) -> LogicalState:
    """Logical initial state fixed by the subgroup H and the character chi.

    rho = (1/d) sum_{h in H} (-1)^chi(h) W(h); expectation +-1 on H and 0 on
    the complement. A non-positive rho signals inconsistent chi/H input.
    """
    space = LogicalSpace(scheme)
    d = space.d
    rho = np.zeros((d, d), dtype=complex)
    for h in scheme.H:
        rho += (-1) ** scheme.chi_of(chi, h) * space.w(h)
    rho /= d
    state = LogicalState(rho, tvec_from_rho(space, rho))
    state.check(space)
    return state


def tvec_from_rho(space: LogicalSpace, rho: np.ndarray) -> dict:
    out = {}
    for g in space.scheme.elements():
        val = np.trace(space.w(g) @ rho)
        if abs(val.imag) > 1e-10:
            raise OracleError(f"complex logical expectation for element {g}")
        out[g] = float(val.real)
    return out


def apply_channel(space: LogicalSpace, ls: LogicalState, ch: LogicalChannel) -> LogicalState:
    v, vdag = channel_unitaries(space, ch)
    wp, wm = (1.0 + ch.sigma) / 2.0, (1.0 - ch.sigma) / 2.0
    rho = wp * (v @ ls.rho @ vdag) + wm * (vdag @ ls.rho @ v)
    return LogicalState(rho, tvec_from_rho(space, rho))


def transfer_matrix_row(space: LogicalSpace, ch: LogicalChannel, g: int):
    """Coefficients of the tvec update for element g: (self, partner, coeff)."""
    scheme = space.scheme
    if scheme.kappa_of(g, ch.axis) == 0:
        return (1.0, None, 0.0)
    c = space.product_phase(g, ch.axis)
    m = -1j * ch.sign * c
    if abs(m.imag) > 1e-12 or abs(abs(m.real) - 1.0) > 1e-12:
        raise OracleError("cross coefficient is not a real sign")
    coeff = float(m.real) * ch.sigma * np.sin(ch.angle)
    return (float(np.cos(ch.angle)), g ^ ch.axis, coeff)


def evolve_tvec(space: LogicalSpace, tvec: dict, ch: LogicalChannel) -> dict:
    """Transfer-matrix update of the group-indexed expectations."""
    out = {}
    for g in space.scheme.elements():
        diag, partner, coeff = transfer_matrix_row(space, ch, g)
        out[g] = diag * tvec[g] + (coeff * tvec[partner] if partner is not None else 0.0)
    return out


def transfer_matrix(space: LogicalSpace, ch: LogicalChannel) -> np.ndarray:
    """|G| x |G| matrix form of the tvec update, in element-mask order."""
    n = space.scheme.scheme.n_elements
    m = np.zeros((n, n))
    for g in space.scheme.elements():
        diag, partner, coeff = transfer_matrix_row(space, ch, g)
        m[g, g] = diag
        if partner is not None:
            m[g, partner] = coeff
    return m


def predict(scheme: ValidatedScheme, chi: dict, moves, readout=None,
            check_dual: bool = True) -> dict:
    """Expected logical readout after a sequence of tilted block measurements.

    ``moves`` is an iterable of (block, axis, angle, sigma); ``readout``
    defaults to the scheme's H'. Both the density-matrix route and the
    transfer-matrix route are evaluated and must agree to 1e-12.
    """
    space = LogicalSpace(scheme)
    state = init_logical(scheme, chi)
    tvec = dict(state.tvec)
    for k, g, angle, sigma in moves:
        ch = make_channel(scheme, k, g, angle, sigma)
        state = apply_channel(space, state, ch)
        tvec = evolve_tvec(space, tvec, ch)
    if check_dual:
        for g in scheme.elements():
            if abs(tvec[g] - state.tvec[g]) > DUAL_TOL:
                raise OracleError(
                    f"transfer-matrix and density routes disagree at {g}: "
                    f"{tvec[g]} vs {state.tvec[g]}")
    readout = scheme.Hprime if readout is None else readout
    return {h: state.tvec[h] for h in readout}


# -- gate splitting ------------------------------------------------------------


@dataclass(frozen=True)
class SplitReport:
    angle: float
    sigma: float
    n_steps: int
    choi_lower: float
    choi_upper: float
    bound: float

    def as_dict(self) -> dict:
        return {
            "angle": self.angle, "sigma": self.sigma, "n_steps": self.n_steps,
            "choi_lower": self.choi_lower, "choi_upper": self.choi_upper,
            "bound": self.bound,
        }


def split_rotation(generator: np.ndarray, angle: float, sigma: float,
                   n_steps: int) -> SplitReport:
    """Approximate the unitary rotation by n_steps noisy rotations.

    Composes the mixture channel with per-step angle ``angle/(sigma*n_steps)``
    and compares against the target conjugation via Choi states: the trace
    norm of the Choi difference lower-bounds the stabilized-norm error, d
    times it upper-bounds it. ``bound`` is the angle^2/N * (1-sigma^2)/sigma^2
    budget the splitting must respect.
    """
    if sigma == 0.0:
        raise OracleError("sigma = 0 admits no net rotation; the bound is undefined")
    if n_steps < 1:
        raise OracleError("need at least one step")
    d = generator.shape[0]
    target = unitary_super(_rot(generator, angle))
    step_angle = angle / (sigma * n_steps)
    v = _rot(generator, step_angle)
    wp, wm = (1.0 + sigma) / 2.0, (1.0 - sigma) / 2.0
    step = wp * unitary_super(v) + wm * unitary_super(v.conj().T)
    total = np.linalg.matrix_power(step, n_steps)
    lower = trace_norm(super_to_choi(total, d) - super_to_choi(target, d))
    bound = angle ** 2 / n_steps * (1.0 - sigma ** 2) / sigma ** 2
    return SplitReport(angle, sigma, n_steps, lower, d * lower, bound)


def _rot(generator: np.ndarray, angle: float) -> np.ndarray:
    d = generator.shape[0]
    return np.cos(angle / 2.0) * np.eye(d) - 1j * np.sin(angle / 2.0) * generator


def split_sweep(generator: np.ndarray, angles, sigmas, steps) -> list[SplitReport]:
    return [split_rotation(generator, a, s, n)
            for a in angles for s in sigmas for n in steps]


# -- Lie closure ----------------------------------------------------------------


def lie_closure(scheme: ValidatedScheme, tol: float = 1e-10) -> tuple[int, list[str]]:
    """Real dimension of the Lie algebra generated by the logical rotations.

    Starts from the boundary images of all admissible axes and closes under
    commutator/i and real linear span. The boundary dimension is capped at 16.
    """
    space = LogicalSpace(scheme)
    if space.d > 16:
        raise OracleError("boundary block too large for the dense Lie closure")
    axes = sorted({g for k in range(1, scheme.n_bulk + 1) for g in scheme.Gi[k] if g})
    labels = [scheme.element_label(g) for g in axes]
    mats = [space.w(g) for g in axes]

    basis: list[np.ndarray] = []

    def add(m: np.ndarray) -> bool:
        v = m.copy()
        for b in basis:
            v -= np.trace(b.conj().T @ v).real * b
        norm = float(np.sqrt(np.trace(v.conj().T @ v).real))
        if norm < tol:
            return False
        basis.append(v / norm)
        return True

    for m in mats:
        add(m)
    frontier = list(basis)
    while frontier:
        new = []
        for f in frontier:
            for b in list(basis):
                comm = (f @ b - b @ f) / 1j
                if np.abs(comm).max() < tol:
                    continue
                if add(comm):
                    new.append(basis[-1])
        frontier = new
    return len(basis), labels
