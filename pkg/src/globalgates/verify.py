"""Identity checks and end-to-end fidelity measurement.

Each check compares an operator-machinery route (pair-sum applications to
targeted basis vectors; 2^n x 2^n matrices are never materialized)
against a closed-form prediction, and reports the maximum deviation with
a witness when it exceeds the check's tolerance.  The commutator checks
exploit that the addressing operators are diagonal: for diagonal D,
[D, |a><b|] = (D_aa - D_bb) |a><b|, so a nested commutator against an
arbitrary operator X collapses columnwise to

    [D1, [D2, X]] e_b = (d1 - d1[b]) * (d2 - d2[b]) * (X e_b)

with elementwise products over the output index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compiler import (
    CompilationBudget,
    LogicalCircuit,
    LogicalGate,
    group_commutator_schedule,
)
from .lattice import Layout, Site, site_to_json
from .operators import (
    GlobalGateSequence,
    GlobalOperator,
    SequenceRunner,
    embed_two_qubit,
    generator_matrix,
    hop_matrix,
    rot_imag_matrix,
    rot_real_matrix,
)
from .statevec import admissible_indices, encode_logical

DEFAULT_CHECK_TOL = 1e-12


@dataclass
class CheckReport:
    check: str
    instance: str
    max_deviation: float
    tolerance: float
    passed: bool
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, check: str, instance: str, deviation: float, tol: float,
              witness: dict | None = None, **details) -> "CheckReport":
        passed = deviation <= tol
        return cls(check, instance, float(deviation), tol, passed,
                   witness if not passed else None, dict(details))

    def to_dict(self) -> dict:
        doc = {"check": self.check, "instance": self.instance,
               "max_deviation": self.max_deviation, "tolerance": self.tolerance,
               "passed": self.passed}
        if self.witness is not None:
            doc["witness"] = self.witness
        if self.details:
            doc["details"] = self.details
        return doc


def _bits_of(index: int, n: int) -> str:
    return "".join("1" if (index >> i) & 1 else "0" for i in range(n))


def _basis_column(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


# ---------------------------------------------------------------------------
# Diagonal formula
# ---------------------------------------------------------------------------

def check_diagonal_formula(layout: Layout, d: Site,
                           tol: float = DEFAULT_CHECK_TOL) -> CheckReport:
    """<a| A^(d) |a> from generic operator application vs the 1-1 pair-weight sum."""
    if layout.n > 12:
        raise ValueError("diagonal formula check is capped at 12 sites")
    op = GlobalOperator("addressing", d, layout)
    dim = 1 << layout.n
    diag_route = np.empty(dim, dtype=np.float64)
    chunk = 512
    for lo in range(0, dim, chunk):
        hi = min(lo + chunk, dim)
        cols = np.zeros((dim, hi - lo), dtype=np.complex128)
        cols[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
        image = op.apply_generic(cols)
        diag_route[lo:hi] = np.real(image[np.arange(lo, hi), np.arange(hi - lo)])

    pairs = layout.pairs_at(d)
    pair_bits = [(layout.site_index[p], layout.site_index[q], layout.weight(p, q))
                 for p, q in pairs]
    idx = np.arange(dim, dtype=np.int64)
    formula = np.zeros(dim, dtype=np.float64)
    for bp, bq, w in pair_bits:
        formula += w * (((idx >> bp) & 1) * ((idx >> bq) & 1))

    dev = np.abs(diag_route - formula)
    worst = int(np.argmax(dev))
    return CheckReport.build(
        "diagonal_formula", f"d={site_to_json(d)}", float(dev[worst]), tol,
        witness={"basis": _bits_of(worst, layout.n)},
        pair_count=len(pairs))


# ---------------------------------------------------------------------------
# Addressing lemma
# ---------------------------------------------------------------------------

def _diag_entries_generic(layout: Layout, d: Site, indices: list[int]) -> dict[int, float]:
    """Diagonal entries of A^(d) at given basis indices via generic application."""
    op = GlobalOperator("addressing", d, layout)
    dim = 1 << layout.n
    uniq = sorted(set(indices))
    cols = np.zeros((dim, len(uniq)), dtype=np.complex128)
    cols[uniq, np.arange(len(uniq))] = 1.0
    image = op.apply_generic(cols)
    return {a: float(image[a, j].real) for j, a in enumerate(uniq)}


def mirror_site(layout: Layout, p: Site) -> Site | None:
    """r + r' - p when it lands inside D (always, on wrapped groups).

    The nested addressing commutator has a second active address there:
    the positions q* + (p - r) = r' and q* + (p - r') = r make both
    commutator levels fire off the always-set reference bits, a case the
    difference-uniqueness constraints do not exclude.  On the box
    families the mirror falls outside D and the effect disappears.
    """
    g = layout.group
    q_star = g.diff(g.add(layout.r, layout.r_prime), p)
    if q_star in layout.site_index:
        return q_star
    return None


def addressing_cases(layout: Layout) -> list[tuple[int, int, Site, str]]:
    """(a, b=del_q(a), q, case) instances for both assertions of the lemma."""
    cases = []
    code = set(layout.P) | {layout.r, layout.r_prime}
    for b_log in range(1 << layout.k):
        a = encode_logical(b_log, layout)
        ones = [layout.D[i] for i in range(layout.n) if (a >> i) & 1]
        for q in ones:
            b = a & ~(1 << layout.site_index[q])
            cases.append((a, b, q, "admissible"))
        for q in layout.D:
            if q in code:
                continue
            a_sp = a | (1 << layout.site_index[q])
            cases.append((a_sp, a, q, "spurious"))
    return cases


def check_addressing_lemma(layout: Layout,
                           tol: float = DEFAULT_CHECK_TOL) -> CheckReport:
    """The nested addressing commutator fires on exactly two addresses.

    For every elementary |a><del_q(a)| with a or del_q(a) admissible, the
    coefficient under [A^(p-r), [A^(p-r'), . ]] must be W(p,r) W(p,r')
    when q = p (and a_p = 1), W(r,q*) W(r',q*) at the mirror site
    q* = r + r' - p when that site exists in D, and zero everywhere else.
    Coefficients come from diagonal entries obtained by applying the
    operators to the two basis vectors.

    The pass verdict is against this exact two-address form.  The
    single-address form (mirror coefficient replaced by zero) is reported
    alongside as ``single_address_max_deviation`` with its witness; it
    fails precisely on wrapped groups, where the mirror site exists.
    """
    g = layout.group
    cases = addressing_cases(layout)
    indices = sorted({a for a, _, _, _ in cases} | {b for _, b, _, _ in cases})

    worst = 0.0
    witness = None
    worst_single = 0.0
    witness_single = None
    checked = 0
    for p in layout.P:
        d1 = g.diff(p, layout.r)
        d2 = g.diff(p, layout.r_prime)
        e1 = _diag_entries_generic(layout, d1, indices)
        e2 = _diag_entries_generic(layout, d2, indices)
        wpr = layout.weight(p, layout.r) * layout.weight(p, layout.r_prime)
        q_star = mirror_site(layout, p)
        w_mirror = 0.0
        if q_star is not None:
            w_mirror = layout.weight(layout.r, q_star) * layout.weight(layout.r_prime, q_star)
        for a, b, q, case in cases:
            coeff = (e1[a] - e1[b]) * (e2[a] - e2[b])
            expected_single = wpr if (case == "admissible" and q == p) else 0.0
            expected = expected_single
            if case == "spurious" and q_star is not None and q == q_star:
                expected = w_mirror
            checked += 1
            dev = abs(coeff - expected)
            if dev > worst:
                worst = dev
                witness = {"a": _bits_of(a, layout.n), "q": site_to_json(q),
                           "p": site_to_json(p), "case": case,
                           "coefficient": coeff, "expected": expected}
            dev_single = abs(coeff - expected_single)
            if dev_single > worst_single:
                worst_single = dev_single
                witness_single = {"a": _bits_of(a, layout.n), "q": site_to_json(q),
                                  "p": site_to_json(p), "case": case,
                                  "coefficient": coeff,
                                  "expected": expected_single}
    details = {"cases": checked,
               "single_address_max_deviation": worst_single}
    if worst_single > tol:
        details["single_address_witness"] = witness_single
    return CheckReport.build("addressing_lemma", f"n={layout.n}, k={layout.k}",
                             worst, tol, witness=witness, **details)


# ---------------------------------------------------------------------------
# Block structure of the nested commutator
# ---------------------------------------------------------------------------

_FAMILY_MATRICES = {
    "hop": hop_matrix,
    "real": lambda delta: -1j * rot_real_matrix(delta),
    "imag": lambda delta: -1j * rot_imag_matrix(delta),
}


def check_block_structure(layout: Layout, p: Site, q: Site, delta: int,
                          family: str = "imag",
                          tol: float = DEFAULT_CHECK_TOL) -> CheckReport:
    """Code-space reduction of [-iA^(p-r), [-iA^(p-r'), X^(p-q)]].

    For the bare hop X = B_delta the plain double commutator, on every
    entry with a or b admissible, equals

        W(p,q) W(p,r) W(p,r') X^(p,q)
          + W(q*,c) W(r,q*) W(r',q*) X^(q*,c)

    where q* = r + r' - p is the mirror address and c = q* - (p - q) its
    partner, the second term present only when both sites exist in D.
    For the two anti-Hermitian rotation families the overall sign is
    opposite.  Rows and columns are assembled by vector application.

    The mirror term acts entirely outside the code space, so the
    code-to-code block always reduces to the local gate; but on wrapped
    groups it couples admissible states to spurious ones whenever the
    condition bit at c matches delta, which is the leakage floor the
    compiler's family restrictions must respect.  The reported
    ``local_form_max_deviation`` is against the mirror-free form.
    """
    if family not in _FAMILY_MATRICES:
        raise ValueError(f"family must be one of {sorted(_FAMILY_MATRICES)}")
    if p == q or p not in set(layout.P) or q not in set(layout.P):
        raise ValueError("need two distinct logical sites")
    g = layout.group
    mat = _FAMILY_MATRICES[family](delta)
    glob = GlobalOperator(mat, g.diff(p, q), layout)
    local = embed_two_qubit(mat, p, q, layout)
    d1 = GlobalOperator("addressing", g.diff(p, layout.r), layout).diagonal()
    d2 = GlobalOperator("addressing", g.diff(p, layout.r_prime), layout).diagonal()
    sign = 1.0 if family == "hop" else -1.0  # two -i prefactors flip the sign
    scalar = sign * layout.weight(p, q) * layout.weight(p, layout.r) \
        * layout.weight(p, layout.r_prime)

    mirror = None
    mirror_scalar = 0.0
    q_star = mirror_site(layout, p)
    if q_star is not None:
        cond = g.diff(q_star, g.diff(p, q))
        if cond in layout.site_index and cond != q_star:
            mirror = embed_two_qubit(mat, q_star, cond, layout)
            mirror_scalar = sign * layout.weight(q_star, cond) \
                * layout.weight(layout.r, q_star) * layout.weight(layout.r_prime, q_star)

    dim = 1 << layout.n
    adm = admissible_indices(layout)
    mask = np.zeros(dim, dtype=bool)
    mask[adm] = True

    def nested_column(op: GlobalOperator, b: int) -> np.ndarray:
        x = op.apply(_basis_column(dim, b))
        return sign * (d1 - d1[b]) * (d2 - d2[b]) * x

    def expected_column(loc, mir, b: int, conj: bool) -> tuple[np.ndarray, np.ndarray]:
        e = _basis_column(dim, b)
        main = scalar * loc.apply(e)
        full = main if mir is None else main + mirror_scalar * mir.apply(e)
        if conj:
            return np.conj(full), np.conj(main)
        return full, main

    worst = 0.0
    witness = None
    worst_local = 0.0
    code_block_worst = 0.0
    for b in adm:
        got = nested_column(glob, int(b))
        want, want_local = expected_column(local, mirror, int(b), conj=False)
        dev = np.abs(got - want)
        w = int(np.argmax(dev))
        if dev[w] > worst:
            worst = float(dev[w])
            witness = {"a": _bits_of(w, layout.n), "b": _bits_of(int(b), layout.n),
                       "side": "column"}
        worst_local = max(worst_local, float(np.max(np.abs(got - want_local))))
        code_block_worst = max(code_block_worst,
                               float(np.max(np.abs((got - want_local)[mask]))))

    glob_adj = glob.adjoint()
    local_adj = local.adjoint()
    mirror_adj = mirror.adjoint() if mirror is not None else None
    for a in adm:
        got = np.conj(nested_column(glob_adj, int(a)))
        want, want_local = expected_column(local_adj, mirror_adj, int(a), conj=True)
        dev = np.abs(got - want)
        w = int(np.argmax(dev))
        if dev[w] > worst:
            worst = float(dev[w])
            witness = {"a": _bits_of(int(a), layout.n), "b": _bits_of(w, layout.n),
                       "side": "row"}
        worst_local = max(worst_local, float(np.max(np.abs(got - want_local))))
        code_block_worst = max(code_block_worst,
                               float(np.max(np.abs((got - want_local)[mask]))))

    return CheckReport.build(
        "block_structure", f"p={site_to_json(p)}, q={site_to_json(q)}, "
        f"delta={delta}, family={family}", worst, tol, witness=witness,
        scalar=scalar, mirror_scalar=mirror_scalar,
        mirror=None if mirror is None else
        {"q_star": site_to_json(mirror.p), "condition_site": site_to_json(mirror.q)},
        local_form_max_deviation=worst_local,
        code_block_max_deviation=code_block_worst)


# ---------------------------------------------------------------------------
# Logical references and end-to-end measurement
# ---------------------------------------------------------------------------

def dense_embed_pair(mat4: np.ndarray, bit_i: int, bit_j: int, nbits: int) -> np.ndarray:
    """Dense embedding of a 4x4 matrix at two bit positions of an nbits register."""
    dim = 1 << nbits
    out = np.zeros((dim, dim), dtype=np.complex128)
    for col in range(dim):
        bi, bj = (col >> bit_i) & 1, (col >> bit_j) & 1
        for ri in range(2):
            for rj in range(2):
                v = mat4[2 * ri + rj, 2 * bi + bj]
                if v != 0.0:
                    row = col
                    if ri != bi:
                        row ^= 1 << bit_i
                    if rj != bj:
                        row ^= 1 << bit_j
                    out[row, col] += v
    return out


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t h) for Hermitian h via eigendecomposition."""
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * t * vals)) @ vecs.conj().T


def gate_unitary(gate: LogicalGate) -> np.ndarray:
    """Exact 4x4 unitary of one logical gate."""
    _, gen = generator_matrix(gate.generator_name)
    return _expm_hermitian(gen, gate.T)


def reference_logical_unitary(circuit: LogicalCircuit) -> np.ndarray:
    """Exact product of the circuit's local gates on k logical qubits."""
    layout = circuit.layout
    if layout.k > 10:
        raise ValueError("reference unitary capped at k = 10 logical qubits")
    k = layout.k
    pos = {p: i for i, p in enumerate(layout.P)}
    u = np.eye(1 << k, dtype=np.complex128)
    for gate in circuit.gates:
        ug = dense_embed_pair(gate_unitary(gate), pos[gate.p], pos[gate.q], k)
        u = ug @ u
    return u


def aligned_block_distance(block: np.ndarray, reference: np.ndarray) -> float:
    """Operator-norm distance after optimal global-phase alignment.

    The phase is chosen analytically from the trace overlap:
    phi = arg tr(R^dagger B) maximizes Re e^{-i phi} tr(R^dagger B), the
    exact minimizer of the Frobenius distance and the standard proxy for
    the operator-norm one.
    """
    overlap = np.trace(reference.conj().T @ block)
    phi = float(np.angle(overlap)) if overlap != 0 else 0.0
    return float(np.linalg.norm(block - np.exp(1j * phi) * reference, 2))


def run_admissible_block(layout: Layout, sequence: GlobalGateSequence,
                         tol: float = 1e-9,
                         checkpoints: list[int] | None = None
                         ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Evolve all admissible basis states through the sequence at once.

    Returns (block, leakage-per-input) at each checkpoint instruction
    index (default: only at the end).  block[b', b] is the amplitude of
    admissible state b' given admissible input b.
    """
    dim = 1 << layout.n
    adm = admissible_indices(layout)
    cols = np.zeros((dim, len(adm)), dtype=np.complex128)
    cols[adm, np.arange(len(adm))] = 1.0
    runner = SequenceRunner(layout, tol=tol)
    marks = sorted(set(checkpoints or [len(sequence.instructions)]))
    out = []
    prev = 0
    for mark in marks:
        cols = runner.run(cols, sequence.instructions[prev:mark])
        prev = mark
        block = cols[adm, :]
        rest = cols.copy()
        rest[adm, :] = 0.0
        leak = np.linalg.norm(rest, axis=0)  # summed off the code space directly
        out.append((block.copy(), leak))
    return out


def end_to_end_error(layout: Layout, circuit: LogicalCircuit,
                     sequence: GlobalGateSequence,
                     tol: float = 1e-9) -> tuple[float, float]:
    """Operator-norm error of the code-space block against the exact circuit,
    plus the worst leakage over admissible inputs."""
    reference = reference_logical_unitary(circuit)
    (block, leak), = run_admissible_block(layout, sequence, tol=tol)
    return aligned_block_distance(block, reference), float(np.max(leak, initial=0.0))


def measure_gate_error(layout: Layout, gate: LogicalGate, n1: int, n2: int,
                       tol: float = 1e-9) -> tuple[float, float]:
    """Compile one gate at fixed block counts and measure its code-space error."""
    from .compiler import compile_local_gate

    budget = CompilationBudget(eps_total=0.999, mode="fixed", N1=n1, N2=n2)
    seq = compile_local_gate(layout, gate, budget)
    circuit = LogicalCircuit([gate], layout)
    return end_to_end_error(layout, circuit, seq, tol=tol)


# ---------------------------------------------------------------------------
# Error-scaling experiments
# ---------------------------------------------------------------------------

def _random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (m + m.conj().T) / 2.0
    return h / np.linalg.norm(h, 2)


def dense_commutator_product(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Dense realization of the N-block commutator schedule for small matrices."""
    t = 1.0 / math.sqrt(n)
    eu = _expm_hermitian(u, t)
    ev = _expm_hermitian(v, t)
    block = eu.conj().T @ ev.conj().T @ eu @ ev
    return np.linalg.matrix_power(block, n)


def commutator_target(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """exp([-iU, -iV]) via dense eigendecomposition of the anti-Hermitian log."""
    k = -(u @ v - v @ u)  # [-iU, -iV]
    h = 1j * k            # Hermitian
    return _expm_hermitian(h, 1.0)


@dataclass
class ScalingRow:
    N: int
    error: float
    bound: float


@dataclass
class ScalingResult:
    rows: list[ScalingRow]
    slope: float
    fitted_c: float
    M: float

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [(r.N, r.error, r.bound) for r in self.rows]


def lemma_error_sweep(N_list: list[int], dim: int = 4, trials: int = 1,
                      seed: int = 0) -> ScalingResult:
    """Measured error of the commutator schedule vs N for random Hermitian pairs.

    Uses dense exponentials as the oracle.  The envelope constant c is the
    max of error * sqrt(N) / M^3 over all measurements, so every row
    satisfies error <= c M^3 / sqrt(N) by construction; the log-log slope
    is fit separately with both parameters free.
    """
    rng = np.random.default_rng(seed)
    errors = np.zeros(len(N_list), dtype=np.float64)
    m_val = 0.0
    for _ in range(trials):
        u = _random_hermitian(rng, dim)
        v = _random_hermitian(rng, dim)
        m_val = max(m_val, np.linalg.norm(u, 2), np.linalg.norm(v, 2), 1.0)
        target = commutator_target(u, v)
        for i, n in enumerate(N_list):
            realized = dense_commutator_product(u, v, n)
            errors[i] = max(errors[i], float(np.linalg.norm(realized - target, 2)))
    fitted_c = float(np.max(errors * np.sqrt(N_list) / m_val ** 3))
    slope = fit_loglog_slope(N_list, errors)
    rows = [ScalingRow(int(n), float(e), fitted_c * m_val ** 3 / math.sqrt(n))
            for n, e in zip(N_list, errors)]
    return ScalingResult(rows, slope, fitted_c, m_val)


def compiled_error_sweep(layout: Layout, gate: LogicalGate, N2_list: list[int],
                         n1: int = 64, tol: float = 1e-9) -> ScalingResult:
    """Code-space error of the compiled gate vs the outer block count N2,
    at fixed inner accuracy."""
    errors = []
    for n2 in N2_list:
        err, _ = measure_gate_error(layout, gate, n1, n2, tol=tol)
        errors.append(err)
    errors = np.array(errors)
    fitted_c = float(np.max(errors * np.sqrt(N2_list)))
    slope = fit_loglog_slope(N2_list, errors)
    rows = [ScalingRow(int(n), float(e), fitted_c / math.sqrt(n))
            for n, e in zip(N2_list, errors)]
    return ScalingResult(rows, slope, fitted_c, 1.0)


def fit_loglog_slope(ns, errors) -> float:
    """Least-squares slope of log(error) against log(N)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(errors, dtype=np.float64), 1e-300))
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

def suite_reports(layout: Layout, suite: str = "all",
                  tol: float = DEFAULT_CHECK_TOL,
                  seed: int = 0) -> list[CheckReport]:
    """Run the named identity suite on one layout.

    ``diagonal`` checks the pair-weight diagonal formula (small n only),
    ``addressing`` the nested-commutator addressing lemma, ``blocks`` the
    code-space reduction for every family on the first logical pair, and
    ``scaling`` a short compiled error sweep.  Checks whose preconditions
    the layout cannot meet (diagonal at n > 12, blocks at k < 2) are
    skipped with a note rather than failed.
    """
    known = ("all", "diagonal", "addressing", "blocks", "scaling")
    if suite not in known:
        raise ValueError(f"suite must be one of {known}")
    reports: list[CheckReport] = []
    g = layout.group

    if suite in ("all", "diagonal") and layout.n <= 12:
        seen = set()
        for p in layout.P or [layout.r]:
            for other in (layout.r, layout.r_prime):
                d = g.diff(p, other)
                if not g.is_zero(d) and d not in seen:
                    seen.add(d)
                    reports.append(check_diagonal_formula(layout, d, tol))

    if suite in ("all", "addressing"):
        reports.append(check_addressing_lemma(layout, tol))

    if suite in ("all", "blocks") and layout.k >= 2:
        p, q = layout.P[0], layout.P[1]
        for family in ("hop", "real", "imag"):
            for delta in (0, 1):
                reports.append(check_block_structure(layout, p, q, delta, family, tol))

    if suite in ("all", "scaling") and layout.k >= 2 and layout.n <= 12:
        gate = LogicalGate("imag_rot", 1, 0.3927, layout.P[0], layout.P[1])
        result = compiled_error_sweep(layout, gate, [8, 16, 32, 64], n1=32)
        dev = 0.0 if -0.65 <= result.slope <= -0.35 else abs(result.slope + 0.5)
        reports.append(CheckReport.build(
            "compiled_scaling", f"slope={result.slope:.3f}", dev, 0.15,
            witness={"slope": result.slope},
            rows=[(r.N, r.error) for r in result.rows]))
    return reports
