"""Shot-by-shot execution of measurement patterns on resource states.

A pattern fixes, per bulk block, a rotation axis from the block's admissible
group and an angle; measurements run left to right with the right boundary
measured in the first round. Within a block the commuting observables are
realized by rotating into the tilted frame, measuring the linear images
projectively in ascending generator order, and rotating back. The classical
side processing (adjustment bits, output bits, prefix eigenvalues) follows
the additive relations on the measurement record.

Outcome randomness is counter-based per (seed, shot, block), so shots are
reproducible and order-independent.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .oracle import predict
from .pauli import PauliAction, exp_apply, multiply_all
from .schemes import ValidatedScheme, span
from .states import ResourceState
from .strings import sigma as string_sigma

NULL_BRANCH_TOL = 1e-14


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementPattern:
    """Axes and angles per bulk block, plus the readout subgroup choice."""

    axes: dict = field(default_factory=dict)     # block -> element mask
    angles: dict = field(default_factory=dict)   # block -> angle
    hprime_gens: tuple | None = None             # generating masks; None = scheme H'
    spacing_override: bool = False

    def rotation_blocks(self):
        return sorted(k for k, a in self.angles.items()
                      if abs(a) > 0 and self.axes.get(k, 0) != 0)


def subgroup_basis(elements) -> tuple[int, ...]:
    """Deterministic minimal generating set of a (Z2)^m subgroup."""
    basis: list[int] = []
    for g in sorted(e for e in elements if e):
        r = g
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
            basis.sort()
    return tuple(basis)


def decompose(h: int, gens: tuple[int, ...]) -> tuple[int, ...] | None:
    """Coefficients of h over the generating set, or None if outside the span."""
    for bits in range(1 << len(gens)):
        acc = 0
        for j, g in enumerate(gens):
            if bits >> j & 1:
                acc ^= g
        if acc == h:
            return tuple(bits >> j & 1 for j in range(len(gens)))
    return None


def validate_pattern(scheme: ValidatedScheme, pattern: MeasurementPattern,
                     delta: int | None) -> tuple[int, ...]:
    """Check axes, angles and block spacing; return the H' generating set."""
    n = scheme.n_bulk
    for k, g in pattern.axes.items():
        if not 1 <= k <= n:
            raise PatternError(f"block {k} outside the bulk")
        if g not in scheme.Gi[k]:
            raise PatternError(
                f"axis {scheme.element_label(g)} not admissible at block {k}")
    for k, a in pattern.angles.items():
        if not -math.pi <= a <= math.pi:
            raise PatternError(f"angle {a} at block {k} outside [-pi, pi]")
        if abs(a) > 0 and pattern.axes.get(k, 0) == 0:
            raise PatternError(f"block {k} has an angle but no axis")
    rot = pattern.rotation_blocks()
    if rot and not pattern.spacing_override:
        if delta is None:
            raise PatternError(
                "state has no entanglement range; declare one or set spacing_override")
        for a, b in zip(rot, rot[1:]):
            if b - a < 2 * delta:
                raise PatternError(
                    f"rotation blocks {a} and {b} closer than 2*Delta = {2 * delta}")
    if pattern.hprime_gens is not None:
        hp = span(pattern.hprime_gens, scheme.m)
        from .pauli import commutation_sign

        for g in hp:
            for gp in hp:
                if commutation_sign(scheme.boundary_image(g), scheme.boundary_image(gp)):
                    raise PatternError("H' images do not commute on the right boundary")
        return tuple(pattern.hprime_gens)
    return subgroup_basis(scheme.Hprime)


@dataclass
class OutcomeRecord:
    """Raw bits and derived side-processing data of one shot."""

    s: dict           # (block 0..n, generator index) -> bit
    s_right: dict     # H'-generator position -> bit
    q: dict           # rotation block -> adjustment bit
    o: dict           # element of H' (nonzero) -> output bit
    lam: dict         # (prefix block, element) -> +-1
    resamples: int = 0

    def s_element(self, block: int, g: int, m: int) -> int:
        return sum(self.s[(block, a)] for a in range(m) if g >> a & 1) % 2


class ShotEngine:
    """Precompiled measurement machinery for one (state, scheme, pattern)."""

    def __init__(self, state: ResourceState, scheme: ValidatedScheme,
                 pattern: MeasurementPattern, delta: int | None = None):
        if not state.is_symmetric:
            raise PatternError("state must be certified symmetric under the scheme")
        if state.n_sites != scheme.n_sites:
            raise PatternError("state and scheme sizes differ")
        self.state = state
        self.scheme = scheme
        self.pattern = pattern
        self.delta = state.delta if delta is None else delta
        self.hprime_gens = validate_pattern(scheme, pattern, self.delta)
        self.hprime = span(self.hprime_gens, scheme.m)

        part = scheme.partition
        n = scheme.n_bulk
        self.n = n
        self.m = scheme.m
        self._u_actions = {}
        for i in range(0, n + 1):
            for a in range(self.m):
                op = part.embed_block(scheme.u_local(i, 1 << a), i)
                self._u_actions[(i, a)] = None if op.is_identity_string() else PauliAction(op)
        self._axis_ops = {}
        for k in pattern.rotation_blocks():
            vl = part.embed_block(scheme.vL_local(k, pattern.axes[k]), k)
            self._axis_ops[k] = (vl, PauliAction(vl))
        self._right_actions = [
            PauliAction(part.embed_block(scheme.boundary_image(h), n + 1))
            for h in self.hprime_gens
        ]
        self._hprime_coeffs = {
            h: decompose(h, self.hprime_gens) for h in self.hprime if h
        }

    # -- single shot -------------------------------------------------------

    def _rng(self, seed: int, shot: int, block: int) -> np.random.Generator:
        key = np.array([int(seed) % (1 << 64), ((int(shot) << 20) ^ (block + 1)) % (1 << 64)],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def run_shot(self, seed: int, shot: int) -> OutcomeRecord:
        psi = self.state.amplitudes.copy()
        n, m = self.n, self.m
        s = {}
        resamples = 0

        def measure(action, rng):
            nonlocal psi, resamples
            if action is None:
                return 0
            ppsi = action(psi)
            exp = float(np.vdot(psi, ppsi).real)
            outcome = 0 if rng.random() < 0.5 * (1.0 + exp) else 1
            sign = 1 - 2 * outcome
            prob = 0.5 * (1.0 + sign * exp)
            if prob < NULL_BRANCH_TOL:
                resamples += 1
                outcome ^= 1
                sign = -sign
                prob = 0.5 * (1.0 + sign * exp)
            psi = (psi + sign * ppsi) / (2.0 * math.sqrt(prob))
            return outcome

        # round one: left boundary, then the non-adaptive right boundary
        rng = self._rng(seed, shot, 0)
        for a in range(m):
            s[(0, a)] = measure(self._u_actions[(0, a)], rng)
        rng = self._rng(seed, shot, n + 1)
        s_right = {j: measure(act, rng) for j, act in enumerate(self._right_actions)}

        # bulk sweep with adaptive tilt
        q = {}
        for k in range(1, n + 1):
            rng = self._rng(seed, shot, k)
            rotated = k in self._axis_ops
            if rotated:
                axis = self.pattern.axes[k]
                qk = sum(
                    sum(s[(i, a)] for a in range(m) if axis >> a & 1)
                    for i in range(0, k)
                ) % 2
                q[k] = qk
                phi = (-1) ** qk * self.pattern.angles[k] / 2.0
                vl, act = self._axis_ops[k]
                psi = exp_apply(vl, -phi, psi, act)
            for a in range(m):
                s[(k, a)] = measure(self._u_actions[(k, a)], rng)
            if rotated:
                psi = exp_apply(vl, phi, psi, act)

        record = OutcomeRecord(s, s_right, q, {}, {}, resamples)
        for h in self.hprime:
            if h == 0:
                continue
            bits = sum(record.s_element(i, h, m) for i in range(0, n + 1))
            coeffs = self._hprime_coeffs[h]
            bits += sum(c * s_right[j] for j, c in enumerate(coeffs))
            record.o[h] = bits % 2
        for k in range(0, n + 1):
            for g in self.scheme.elements():
                tot = sum(record.s_element(i, g, m) for i in range(0, k + 1))
                record.lam[(k, g)] = (-1) ** (tot % 2)
        return record


def _chunk_worker(args):
    state, scheme, pattern, delta, seed, shots_range = args
    engine = ShotEngine(state, scheme, pattern, delta)
    return [engine.run_shot(seed, s) for s in shots_range]


def run_shots(state: ResourceState, scheme: ValidatedScheme, pattern: MeasurementPattern,
              shots: int, seed: int, delta: int | None = None,
              threads: int = 1) -> list[OutcomeRecord]:
    """All shot records; identical output for any thread count."""
    if threads <= 1:
        engine = ShotEngine(state, scheme, pattern, delta)
        return [engine.run_shot(seed, s) for s in range(shots)]
    chunks = np.array_split(np.arange(shots), threads)
    args = [(state, scheme, pattern, delta, seed, list(c)) for c in chunks if len(c)]
    out: list[OutcomeRecord] = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for part in pool.map(_chunk_worker, args):
            out.extend(part)
    return out


def estimate_T(state: ResourceState, scheme: ValidatedScheme, pattern: MeasurementPattern,
               shots: int, seed: int, delta: int | None = None,
               threads: int = 1) -> dict:
    """Monte-Carlo estimate of the logical readout expectations.

    Returns {element: (mean of (-1)^o, standard error, shots)} for the
    nonzero elements of H'.
    """
    if shots < 1:
        raise PatternError("need at least one shot")
    records = run_shots(state, scheme, pattern, shots, seed, delta, threads)
    hprime = span(validate_pattern(scheme, pattern, state.delta if delta is None else delta),
                  scheme.m)
    out = {}
    for h in hprime:
        if h == 0:
            continue
        vals = np.array([1 - 2 * r.o[h] for r in records], dtype=float)
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(shots)) if shots > 1 else 0.0
        out[h] = (mean, stderr, shots)
    return out


# -- operator-level replay -----------------------------------------------------


def verify_recursion(state: ResourceState, scheme: ValidatedScheme,
                     pattern: MeasurementPattern, record: OutcomeRecord,
                     tol: float = 1e-8, delta: int | None = None) -> list[dict]:
    """Replay a shot and check the prefix bookkeeping at the operator level.

    Rebuilds the post-measurement state by forcing the recorded outcomes and
    compares, for every prefix block k and group element g, the recorded
    prefix eigenvalue with the expectation of the Heisenberg-evolved
    aggregated observable (the ideal-angle conjugation of the u-string by the
    gate unitaries). Returns a list of mismatches; empty means consistent.
    """
    engine = ShotEngine(state, scheme, pattern, state.delta if delta is None else delta)
    part = scheme.partition
    n, m = engine.n, engine.m
    psi = state.amplitudes.copy()
    mismatches = []

    def force(action, outcome, where):
        nonlocal psi
        if action is None:
            if outcome != 0:
                mismatches.append({"at": where, "reason": "identity observable with outcome 1"})
            return
        ppsi = action(psi)
        sign = 1 - 2 * outcome
        prob = 0.5 * (1.0 + sign * float(np.vdot(psi, ppsi).real))
        if prob < 1e-12:
            mismatches.append({"at": where, "reason": "recorded outcome has zero probability"})
            psi = psi  # keep the state; later prefixes will also flag
            return
        psi = (psi + sign * ppsi) / (2.0 * math.sqrt(prob))

    for a in range(m):
        force(engine._u_actions[(0, a)], record.s[(0, a)], (0, a))
    for j, act in enumerate(engine._right_actions):
        force(act, record.s_right[j], (n + 1, j))

    # gate unitaries with ideal angles, applied in block order
    l_ops = []
    for k in sorted(engine._axis_ops):
        g = pattern.axes[k]
        l_ops.append((k, scheme.assemble("L", g, k), pattern.angles[k]))

    u_strings = {
        (k, g): multiply_all(
            [part.embed_block(scheme.u_local(i, g), i) for i in range(0, k + 1)],
            n_sites=part.n_sites)
        for k in range(0, n + 1) for g in scheme.elements()
    }

    def prefix_check(k):
        phi = psi.copy()
        for kk, lop, angle in l_ops:
            if kk <= k:
                phi = exp_apply(lop, -angle / 2.0, phi)
        for g in scheme.elements():
            val = PauliAction(u_strings[(k, g)]).expectation(phi).real
            if abs(val - record.lam[(k, g)]) > tol:
                mismatches.append({
                    "at": ("prefix", k, scheme.element_label(g)),
                    "reason": f"operator eigenvalue {val:+.6f} vs recorded {record.lam[(k, g)]:+d}",
                })

    prefix_check(0)
    for k in range(1, n + 1):
        if k in engine._axis_ops:
            qk = sum(record.s_element(i, pattern.axes[k], m) for i in range(0, k)) % 2
            if qk != record.q.get(k):
                mismatches.append({"at": ("q", k), "reason": "adjustment bit mismatch"})
            phi_angle = (-1) ** qk * pattern.angles[k] / 2.0
            vl, act = engine._axis_ops[k]
            psi = exp_apply(vl, -phi_angle, psi, act)
        for a in range(m):
            force(engine._u_actions[(k, a)], record.s[(k, a)], (k, a))
        if k in engine._axis_ops:
            psi = exp_apply(vl, phi_angle, psi, act)
        prefix_check(k)
    return mismatches


# -- oracle comparison ----------------------------------------------------------


def hprime_sign(scheme: ValidatedScheme, gens: tuple[int, ...], h: int) -> int:
    """Sign relating the product of generator images to the canonical image."""
    coeffs = decompose(h, gens)
    factors = [scheme.boundary_image(g) for g, c in zip(gens, coeffs) if c]
    prod = multiply_all(factors, n_sites=scheme.partition.size(scheme.n_bulk + 1))
    ratio = prod.phase_ratio(scheme.boundary_image(h))
    if ratio == 1:
        return 1
    if ratio == -1:
        return -1
    raise PatternError("H' generator product differs from canonical image by +-i")


def oracle_prediction(state: ResourceState, scheme: ValidatedScheme,
                      pattern: MeasurementPattern, delta: int | None = None) -> dict:
    """Logical-channel prediction for the pattern on this state.

    String order parameters are measured on the state at each rotation
    block; the channel sequence then evolves the initial state fixed by the
    certificate. Values follow the same generator-product convention as the
    runtime estimates.
    """
    gens = validate_pattern(scheme, pattern, state.delta if delta is None else delta)
    hprime = span(gens, scheme.m)
    moves = []
    for k in pattern.rotation_blocks():
        g = pattern.axes[k]
        moves.append((k, g, pattern.angles[k], string_sigma(state, scheme, k, g)))
    vals = predict(scheme, state.chi, moves, readout=[h for h in hprime if h])
    return {h: hprime_sign(scheme, gens, h) * v for h, v in vals.items()}


def compare_to_oracle(state: ResourceState, scheme: ValidatedScheme,
                      pattern: MeasurementPattern, shots: int, seed: int,
                      delta: int | None = None, threads: int = 1) -> dict:
    """Per-element comparison of sampled estimates against the oracle."""
    est = estimate_T(state, scheme, pattern, shots, seed, delta, threads)
    pred = oracle_prediction(state, scheme, pattern, delta)
    report = {}
    for h, (mean, stderr, nn) in est.items():
        p = pred[h]
        z = abs(mean - p) / stderr if stderr > 0 else (0.0 if abs(mean - p) < 1e-9 else math.inf)
        report[h] = {
            "label": scheme.element_label(h),
            "mbqc_mean": mean, "mbqc_stderr": stderr, "shots": nn,
            "prediction": p, "z": z,
        }
    return report


# -- pattern files ----------------------------------------------------------------


def load_pattern(path: str) -> dict:
    """Read a pattern file into a plain config dict (axes still as labels)."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    axes, angles = {}, {}
    for rot in data.get("rotation", []):
        axes[int(rot["block"])] = rot["axis"]
        angles[int(rot["block"])] = float(rot["angle"])
    return {
        "scheme_name": data["scheme"],
        "n_sites": int(data["n_sites"]),
        "shots": int(data.get("shots", 1000)),
        "seed": int(data.get("seed", 0)),
        "axes": axes,
        "angles": angles,
        "hprime": data.get("Hprime"),
        "spacing_override": bool(data.get("spacing_override", False)),
    }


def pattern_from_config(scheme: ValidatedScheme, cfg: dict) -> MeasurementPattern:
    axes = {k: scheme.parse_element(v) if isinstance(v, str) else int(v)
            for k, v in cfg["axes"].items()}
    hp = cfg.get("hprime")
    return MeasurementPattern(
        axes=axes,
        angles={int(k): float(v) for k, v in cfg["angles"].items()},
        hprime_gens=tuple(scheme.parse_element(t) for t in hp) if hp else None,
        spacing_override=bool(cfg.get("spacing_override", False)),
    )
