"""Two-qubit generators, global pair-sum operators, and exact gate application.

A global operator at displacement d sums one fixed 4x4 matrix M over all
ordered site pairs (p, q) with p - q = d, weighted by the layout's pair
weights.  Hermitian generators H give the executable gate set
exp(-i t H^(d)); instruction lists are stored in application order (the
first instruction hits the state first).

Named Hermitian generators, with B_delta = |1 delta><0 delta|:

* ``addressing``          A = |11><11| (diagonal, exactly exponentiable)
* ``rot_real_<delta>``    i (B_delta^T - B_delta) so exp(-i t .) = exp(-t (B - B^T))
* ``rot_imag_<delta>``    B_delta + B_delta^T so exp(-i t .) = exp(-i t (B + B^T))

The rot_* sign convention makes both rotation families read
exp(-i T gen^(p,q)) with the same parameter T the compiler targets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import Layout, Site, site_from_json, site_to_json
from .statevec import PureState

DEFAULT_GATE_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PHASE_QUARTER = (np.eye(2) + 1j * SIGMA_Z) / np.sqrt(2.0)


class OperatorError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Series exponential failed to reach the requested tolerance."""


def _ket_bra(i: int, j: int, dim: int = 4) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[i, j] = 1.0
    return m


def hop_matrix(delta: int) -> np.ndarray:
    """B_delta = |1 delta><0 delta| in the |a_p a_q> basis (not Hermitian)."""
    return _ket_bra(2 | delta, 0 | delta)


def addressing_matrix() -> np.ndarray:
    """A = |11><11|."""
    return _ket_bra(3, 3)


def rot_real_matrix(delta: int) -> np.ndarray:
    """i (B^T - B); generates exp(-t (B - B^T)) under exp(-i t .)."""
    b = hop_matrix(delta)
    return 1j * (b.conj().T - b)


def rot_imag_matrix(delta: int) -> np.ndarray:
    """B + B^T; generates exp(-i t (B + B^T))."""
    b = hop_matrix(delta)
    return b + b.conj().T


NAMED_GENERATORS = {
    "addressing": addressing_matrix(),
    "rot_real_0": rot_real_matrix(0),
    "rot_real_1": rot_real_matrix(1),
    "rot_imag_0": rot_imag_matrix(0),
    "rot_imag_1": rot_imag_matrix(1),
}


def generator_matrix(name_or_matrix) -> tuple[str | None, np.ndarray]:
    if isinstance(name_or_matrix, str):
        if name_or_matrix not in NAMED_GENERATORS:
            raise OperatorError(f"unknown generator {name_or_matrix!r}; "
                                f"options: {sorted(NAMED_GENERATORS)}")
        return name_or_matrix, NAMED_GENERATORS[name_or_matrix]
    mat = np.asarray(name_or_matrix, dtype=np.complex128)
    if mat.shape != (4, 4):
        raise OperatorError("two-qubit generator must be a 4x4 matrix")
    return None, mat


@dataclass
class TwoQubitHermitian:
    """Named or explicit 4x4 Hermitian generator, checked to 1e-14."""

    matrix: np.ndarray
    name: str | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        if self.matrix.shape != (4, 4):
            raise OperatorError("generator must be 4x4")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-14:
            raise OperatorError("generator is not Hermitian to 1e-14")

    @classmethod
    def named(cls, name: str) -> "TwoQubitHermitian":
        name, mat = generator_matrix(name)
        return cls(mat, name)


class GlobalOperator:
    """Weighted sum of one 4x4 matrix over all pairs at displacement d.

    The matrix need not be Hermitian (verification uses the bare hop
    operators); use :class:`GlobalHamiltonian` for gate generators.
    """

    def __init__(self, matrix, d: Site, layout: Layout):
        self.name, self.matrix = generator_matrix(matrix)
        if layout.group.is_zero(d):
            raise OperatorError("displacement d must be nonzero")
        self.d = d % layout.group.n if layout.group.kind == "cyclic" else tuple(d)
        self.layout = layout
        self._ip, self._iq, self._w = kernels.pair_arrays(layout, self.d)
        self._nz = kernels.matrix_nonzeros(self.matrix)
        self._terms = kernels.flatten_terms(self._ip, self._iq, self._w, self._nz)
        offdiag = self.matrix - np.diag(np.diag(self.matrix))
        self.is_diagonal = bool(np.max(np.abs(offdiag)) < 1e-15
                                and np.max(np.abs(np.diag(self.matrix).imag)) < 1e-15)
        self._diag_cache: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return 1 << self.layout.n

    def pair_count(self) -> int:
        return len(self._ip)

    def norm_bound(self) -> float:
        """sum |W| * ||M||_2 over contributing pairs; upper bounds the operator norm."""
        spectral = float(np.linalg.norm(self.matrix, ord=2))
        return float(np.sum(np.abs(self._w))) * spectral

    def diagonal(self) -> np.ndarray:
        if not self.is_diagonal:
            raise OperatorError("operator is not diagonal")
        if self._diag_cache is None:
            self._diag_cache = kernels.pairsum_diagonal(
                self._ip, self._iq, self._w, np.diag(self.matrix), self.dim)
        return self._diag_cache

    def apply(self, amps: np.ndarray) -> np.ndarray:
        """Linear action on amplitude columns; never materializes the matrix."""
        if self.is_diagonal:
            diag = self.diagonal()
            return amps * (diag[:, None] if amps.ndim == 2 else diag)
        return kernels.pairsum_apply(self._terms, amps)

    def apply_generic(self, amps: np.ndarray) -> np.ndarray:
        """Same action through the general pair-term kernel, bypassing the
        diagonal shortcut; used to cross-check the two routes."""
        return kernels.pairsum_apply(self._terms, amps)

    def adjoint(self) -> "GlobalOperator":
        """Pair sum of M^dagger at the same displacement (weights are real)."""
        return GlobalOperator(self.matrix.conj().T, self.d, self.layout)

    def dense(self, cap: int = 14) -> np.ndarray:
        if self.layout.n > cap:
            raise OperatorError(f"dense assembly capped at {cap} sites")
        return self.apply(np.eye(self.dim, dtype=np.complex128))


class GlobalHamiltonian(GlobalOperator):
    """Hermitian global generator; the gate it generates is exp(-i t H^(d))."""

    def __init__(self, matrix, d: Site, layout: Layout):
        super().__init__(matrix, d, layout)
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-14:
            raise OperatorError("global Hamiltonian needs a Hermitian generator")


class EmbeddedTwoQubit:
    """A single 4x4 matrix acting on the ordered site pair (p, q), matrix-free."""

    def __init__(self, matrix, p: Site, q: Site, layout: Layout):
        if p == q:
            raise OperatorError("embedding needs two distinct sites")
        if p not in layout.site_index or q not in layout.site_index:
            raise OperatorError(f"sites ({p!r}, {q!r}) must lie in D")
        self.name, self.matrix = generator_matrix(matrix)
        self.p, self.q, self.layout = p, q, layout
        ip = np.array([layout.site_index[p]], dtype=np.int64)
        iq = np.array([layout.site_index[q]], dtype=np.int64)
        w = np.ones(1, dtype=np.float64)
        self._terms = kernels.flatten_terms(ip, iq, w, kernels.matrix_nonzeros(self.matrix))

    def apply(self, amps: np.ndarray) -> np.ndarray:
        return kernels.pairsum_apply(self._terms, amps)

    def adjoint(self) -> "EmbeddedTwoQubit":
        return EmbeddedTwoQubit(self.matrix.conj().T, self.p, self.q, self.layout)

    def dense(self, cap: int = 14) -> np.ndarray:
        if self.layout.n > cap:
            raise OperatorError(f"dense assembly capped at {cap} sites")
        return self.apply(np.eye(1 << self.layout.n, dtype=np.complex128))


def embed_two_qubit(matrix, p: Site, q: Site, layout: Layout) -> EmbeddedTwoQubit:
    """Matrix-free action of one two-qubit matrix at the ordered pair (p, q)."""
    return EmbeddedTwoQubit(matrix, p, q, layout)


def apply_global_hamiltonian(state: PureState, gh: GlobalOperator) -> PureState:
    """Linear (not unitary) action of the pair sum on a state."""
    return PureState(gh.apply(state.amps), state.layout)


def _expm_multiply_taylor(gh: GlobalOperator, t: float, amps: np.ndarray,
                          tol: float, max_terms: int = 96,
                          scratch: tuple[np.ndarray, np.ndarray] | None = None
                          ) -> np.ndarray:
    """exp(-i t H) amps via scaled truncated series, tail-bounded to tol.

    Substep count comes from the conservative norm bound so each series
    argument has norm <= ~1; within a substep, terms are added until the
    measured term norm times the rigorous remaining-ratio bound
    theta/(j+2) / (1 - theta/(j+2)) drops below the per-substep share of
    tol.  Scale and accumulate are fused into the pair-sum kernel.
    """
    bound = gh.norm_bound()
    theta = abs(t) * bound
    steps = max(1, int(math.ceil(theta)))
    sub_tol = tol / steps
    coef = -1j * t / steps
    flat = amps.ndim == 1
    out = np.ascontiguousarray(amps.reshape(amps.shape[0], -1), dtype=np.complex128).copy()
    if scratch is None:
        term = np.empty_like(out)
        nxt = np.empty_like(out)
    else:
        term, nxt = scratch
    scale = float(np.max(np.linalg.norm(out, axis=0)))
    if scale == 0.0:
        return out[:, 0] if flat else out
    theta_s = theta / steps
    for _ in range(steps):
        np.copyto(term, out)
        for j in range(1, max_terms + 1):
            # nxt = (coef/j) * H term;  out += nxt
            kernels.pairsum_apply_fused(gh._terms, term, coef / j, nxt, out)
            term, nxt = nxt, term
            tnorm = float(np.max(np.linalg.norm(term, axis=0)))
            ratio = theta_s / (j + 2)
            if tnorm * ratio / (1.0 - ratio) <= sub_tol * scale:
                break
        else:
            raise ConvergenceError(
                f"series exponential did not reach tol={tol:g} within "
                f"{max_terms} terms (argument norm bound {theta_s:.3g})")
    return out[:, 0] if flat else out


def apply_global_gate(state: PureState, gh: GlobalHamiltonian, t: float,
                      tol: float = DEFAULT_GATE_TOL,
                      force_generic: bool = False) -> PureState:
    """Unitary gate exp(-i t H^(d)) applied to a state.

    Diagonal generators take the exact per-basis phase path; everything
    else goes through the truncated-series exponential with error <= tol.
    The result's norm is checked against the input's.
    """
    if tol <= 0:
        raise OperatorError("tol must be positive")
    if t == 0.0:
        return state.copy()
    if gh.is_diagonal and not force_generic:
        phases = np.exp(-1j * t * gh.diagonal())
        out = state.amps * phases
    else:
        out = _expm_multiply_taylor(gh, t, state.amps, tol)
    _check_norm(state.amps, out, tol)
    return PureState(out, state.layout)


def _check_norm(before: np.ndarray, after: np.ndarray, tol: float) -> None:
    b = float(np.linalg.norm(before))
    a = float(np.linalg.norm(after))
    if b > 0 and abs(a - b) > max(1e-10, 10 * tol) * b:
        raise OperatorError(f"gate application drifted the norm: {b:.15g} -> {a:.15g}")


def apply_global_one_qubit(state: PureState, u: np.ndarray,
                           tol: float = 1e-10) -> PureState:
    """Product over all sites of the same one-qubit unitary."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise OperatorError("one-qubit gate must be 2x2")
    if np.max(np.abs(u.conj().T @ u - np.eye(2))) > tol:
        raise OperatorError("one-qubit gate is not unitary")
    out = kernels.apply_one_qubit_all_sites(u, state.amps, state.layout.n)
    return PureState(out, state.layout)


def conjugated_hamiltonian(u: np.ndarray, gh: GlobalHamiltonian) -> GlobalHamiltonian:
    """Generator (u x u) H (u x u)^dagger at the same displacement.

    Exponentials of the result equal the one-qubit-conjugated exponentials
    of the original: u_global exp(-i t H^(d)) u_global^dagger.
    """
    u = np.asarray(u, dtype=np.complex128)
    uu = np.kron(u, u)
    return GlobalHamiltonian(uu @ gh.matrix @ uu.conj().T, gh.d, gh.layout)


# ---------------------------------------------------------------------------
# Instructions and sequences
# ---------------------------------------------------------------------------

@dataclass
class TwoQubitInstruction:
    """Gate exp(-i t generator^(d)); ``generator`` is a name or 4x4 matrix."""

    generator: str | np.ndarray
    d: Site
    t: float

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise OperatorError("instruction duration must be finite")
        _, mat = generator_matrix(self.generator)
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
            raise OperatorError("instruction generator must be Hermitian")

    def inverse(self) -> "TwoQubitInstruction":
        return TwoQubitInstruction(self.generator, self.d, -self.t)

    def to_dict(self) -> dict:
        gen = self.generator if isinstance(self.generator, str) else \
            {"matrix": _matrix_to_json(np.asarray(self.generator))}
        return {"type": "two_qubit", "generator": gen,
                "d": site_to_json(self.d), "t": self.t}


@dataclass
class OneQubitInstruction:
    """Global one-qubit gate: the same 2x2 unitary on every site."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.complex128)
        if self.u.shape != (2, 2):
            raise OperatorError("one-qubit instruction needs a 2x2 matrix")
        if np.max(np.abs(self.u.conj().T @ self.u - np.eye(2))) > 1e-12:
            raise OperatorError("one-qubit instruction must be unitary to 1e-12")

    def inverse(self) -> "OneQubitInstruction":
        return OneQubitInstruction(self.u.conj().T)

    def to_dict(self) -> dict:
        return {"type": "one_qubit", "u": _matrix_to_json(self.u)}


Instruction = TwoQubitInstruction | OneQubitInstruction


@dataclass
class GlobalGateSequence:
    """Ordered instruction list (application order) plus compile metadata."""

    instructions: list[Instruction]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.instructions)

    def inverted(self) -> "GlobalGateSequence":
        """Exact adjoint: reversed order, every instruction inverted."""
        return GlobalGateSequence([ins.inverse() for ins in reversed(self.instructions)],
                                  {"inverse_of": self.metadata} if self.metadata else {})

    def extend(self, other: "GlobalGateSequence") -> None:
        self.instructions.extend(other.instructions)

    def to_dict(self, layout: Layout | None = None) -> dict:
        from . import __version__
        from .lattice import layout_to_dict

        doc = {"tool": "globalgates", "version": __version__,
               "metadata": self.metadata,
               "instructions": [ins.to_dict() for ins in self.instructions]}
        if layout is not None:
            doc["layout"] = layout_to_dict(layout)
        return doc

    def save(self, path, layout: Layout | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(layout), fh, indent=2)
            fh.write("\n")


def _matrix_to_json(mat: np.ndarray) -> list[list[float]]:
    return [[float(x.real), float(x.imag)] for x in mat.reshape(-1)]


def _matrix_from_json(raw, shape: tuple[int, int]) -> np.ndarray:
    flat = np.array([complex(re, im) for re, im in raw], dtype=np.complex128)
    if flat.size != shape[0] * shape[1]:
        raise OperatorError(f"matrix entry count {flat.size} does not match {shape}")
    return flat.reshape(shape)


def sequence_from_dict(doc: dict, layout: Layout) -> GlobalGateSequence:
    if not isinstance(doc, dict) or "instructions" not in doc:
        raise OperatorError("sequence file must be an object with 'instructions'")
    instructions: list[Instruction] = []
    for i, rec in enumerate(doc["instructions"]):
        try:
            kind = rec["type"]
            if kind == "two_qubit":
                gen = rec["generator"]
                if isinstance(gen, dict):
                    gen = _matrix_from_json(gen["matrix"], (4, 4))
                d = site_from_json(rec["d"], layout.group)
                instructions.append(TwoQubitInstruction(gen, d, float(rec["t"])))
            elif kind == "one_qubit":
                instructions.append(OneQubitInstruction(_matrix_from_json(rec["u"], (2, 2))))
            else:
                raise OperatorError(f"unknown instruction type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise OperatorError(f"bad instruction record #{i}: {exc}") from exc
    return GlobalGateSequence(instructions, doc.get("metadata", {}))


def load_sequence(path, layout: Layout) -> GlobalGateSequence:
    with open(path) as fh:
        return sequence_from_dict(json.load(fh), layout)


# ---------------------------------------------------------------------------
# Sequence execution
# ---------------------------------------------------------------------------

class SequenceRunner:
    """Applies instruction streams to amplitude columns, caching operators.

    Consecutive diagonal two-qubit gates are fused into a single phase
    multiply (exact; diagonal phases commute).  Phase vectors, fused
    phase products, and pair data are cached per (generator, d, t) since
    compiled sequences reuse a handful of durations thousands of times.

    Norm preservation is asserted every ``norm_check_interval``
    non-diagonal instructions against the cumulative drift budget;
    ``debug`` checks after every instruction.
    """

    def __init__(self, layout: Layout, tol: float = DEFAULT_GATE_TOL,
                 fuse_diagonal: bool = True, norm_check_interval: int = 64,
                 debug: bool = False):
        self.layout = layout
        self.tol = tol
        self.fuse_diagonal = fuse_diagonal
        self.norm_check_interval = 1 if debug else max(1, norm_check_interval)
        self._ops: dict = {}
        self._phase: dict = {}
        self._fused: dict = {}
        self._scratch: tuple[np.ndarray, np.ndarray] | None = None

    def _operator(self, generator, d) -> tuple:
        name, mat = generator_matrix(generator)
        key = (name or mat.tobytes(), d if isinstance(d, int) else tuple(d))
        if key not in self._ops:
            self._ops[key] = GlobalOperator(mat, d, self.layout)
        return key, self._ops[key]

    def _phases(self, op: GlobalOperator, key, t: float) -> np.ndarray:
        pkey = (key, t)
        if pkey not in self._phase:
            self._phase[pkey] = np.exp(-1j * t * op.diagonal())
        return self._phase[pkey]

    def _fused_phases(self, keys: tuple) -> np.ndarray:
        if keys not in self._fused:
            product = self._phase[keys[0]].copy()
            for k in keys[1:]:
                product *= self._phase[k]
            self._fused[keys] = product
        return self._fused[keys]

    def run(self, amps: np.ndarray, instructions) -> np.ndarray:
        squeeze = amps.ndim == 1
        cur = np.ascontiguousarray(amps.reshape(amps.shape[0], -1),
                                   dtype=np.complex128).copy()
        if self._scratch is None or self._scratch[0].shape != cur.shape:
            self._scratch = (np.empty_like(cur), np.empty_like(cur))
        pending: list = []  # phase-cache keys of queued diagonal gates
        norm_ref = float(np.linalg.norm(cur))
        budget = max(1e-10, 10 * self.tol)
        since_check = 0

        def flush():
            nonlocal pending
            if pending:
                kernels.phase_multiply(self._fused_phases(tuple(pending)), cur)
                pending = []

        def check(force=False):
            nonlocal since_check
            since_check += 1
            if force or since_check >= self.norm_check_interval:
                drift_allow = budget * max(since_check, 1)
                now = float(np.linalg.norm(cur))
                if norm_ref > 0 and abs(now - norm_ref) > drift_allow * norm_ref:
                    raise OperatorError(
                        f"norm drift {norm_ref:.15g} -> {now:.15g} over "
                        f"{since_check} instructions")
                since_check = 0

        for ins in instructions:
            if isinstance(ins, TwoQubitInstruction):
                key, op = self._operator(ins.generator, ins.d)
                if op.is_diagonal:
                    ph_key = (key, ins.t)
                    if ph_key not in self._phase:
                        self._phases(op, key, ins.t)
                    if self.fuse_diagonal:
                        pending.append(ph_key)
                    else:
                        kernels.phase_multiply(self._phase[ph_key], cur)
                    continue
                flush()
                cur = _expm_multiply_taylor(op, ins.t, cur, self.tol,
                                            scratch=self._scratch)
                check()
            elif isinstance(ins, OneQubitInstruction):
                flush()
                cur = np.ascontiguousarray(
                    kernels.apply_one_qubit_all_sites(ins.u, cur, self.layout.n))
                check()
            else:
                raise OperatorError(f"unknown instruction {ins!r}")
        flush()
        if squeeze:
            return cur[:, 0]
        return cur


def run_sequence(state: PureState, sequence: GlobalGateSequence,
                 tol: float = DEFAULT_GATE_TOL, fuse_diagonal: bool = True,
                 debug: bool = False) -> PureState:
    runner = SequenceRunner(state.layout, tol=tol, fuse_diagonal=fuse_diagonal,
                            debug=debug)
    return PureState(runner.run(state.amps, sequence.instructions), state.layout)
