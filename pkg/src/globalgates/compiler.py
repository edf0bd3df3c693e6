"""Lowering of logical two-qubit gates into global-gate sequences.

A logical rotation exp(-i T gen^(p,q)) on two logical sites is produced
by a nested group-commutator construction.  The inner level approximates
exp(-i s V), V = -i [A^(p-r')/W(p,r'), -T gen^(p-q)/W(p,q)], by N1
four-gate blocks; the outer level commutates that virtual generator
against A^(p-r)/W(p,r) in N2 blocks.  On the admissible subspace the
ideal double commutator reduces to exactly -i T gen^(p,q), so all
scalars (weights, the overall sign of the reduction) are absorbed into
instruction durations and the compiled product targets the logical gate
with parameter exactly T.

Sequences list instructions in application order.  A four-gate block
approximating exp([-iU, -iV]) is emitted as

    exp(-itV), exp(-itU), exp(+itV), exp(+itU)      (t = 1/sqrt(N))

so that the realized operator product reads exp(+itU) exp(+itV)
exp(-itU) exp(-itV) with the inverses leftmost.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .lattice import Layout, Site, site_from_json, site_to_json, validate_layout, weight_ratio
from .operators import (
    GlobalGateSequence,
    Instruction,
    TwoQubitInstruction,
)

GATE_KINDS = ("real_rot", "imag_rot")

# Empirical envelope constant for the commutator-approximation bound
# c * M^3 / sqrt(N); fitted on random Hermitian pairs with M <= 1.
DEFAULT_COMMUTATOR_C = 2.0


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class LogicalGate:
    """One logical rotation exp(-i T gen_delta^(p,q)) between sites of P."""

    kind: str
    delta: int
    T: float
    p: Site
    q: Site

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CompileError(f"gate kind must be one of {GATE_KINDS}, got {self.kind!r}")
        if self.delta not in (0, 1):
            raise CompileError(f"delta must be 0 or 1, got {self.delta!r}")
        if not math.isfinite(self.T):
            raise CompileError("gate parameter T must be finite")
        if self.p == self.q:
            raise CompileError("gate sites p and q must be distinct")

    @property
    def generator_name(self) -> str:
        prefix = "rot_real" if self.kind == "real_rot" else "rot_imag"
        return f"{prefix}_{self.delta}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "delta": self.delta, "T": self.T,
                "p": site_to_json(self.p), "q": site_to_json(self.q)}


@dataclass
class LogicalCircuit:
    """Ordered logical gates over one layout."""

    gates: list[LogicalGate]
    layout: Layout

    def __post_init__(self):
        pset = set(self.layout.P)
        for g in self.gates:
            if g.p not in pset or g.q not in pset:
                raise CompileError(
                    f"gate sites ({g.p!r}, {g.q!r}) are not logical sites of the layout")

    def __len__(self) -> int:
        return len(self.gates)


def circuit_from_dict(data: dict, layout: Layout) -> LogicalCircuit:
    if not isinstance(data, dict) or "gates" not in data:
        raise CompileError("circuit file must be an object with a 'gates' list")
    extra = set(data) - {"gates"}
    if extra:
        raise CompileError(f"unknown circuit fields: {sorted(extra)}")
    gates = []
    for i, raw in enumerate(data["gates"]):
        try:
            extra = set(raw) - {"kind", "delta", "T", "p", "q"}
            if extra:
                raise CompileError(f"unknown gate fields: {sorted(extra)}")
            gates.append(LogicalGate(
                raw["kind"], int(raw["delta"]), float(raw["T"]),
                site_from_json(raw["p"], layout.group),
                site_from_json(raw["q"], layout.group)))
        except (KeyError, TypeError, ValueError) as exc:
            raise CompileError(f"bad gate record #{i}: {exc}") from exc
    return LogicalCircuit(gates, layout)


def load_circuit(path, layout: Layout) -> LogicalCircuit:
    with open(path) as fh:
        return circuit_from_dict(json.load(fh), layout)


@dataclass
class CompilationBudget:
    """Error budget and block-count policy for compilation.

    ``mode`` is one of ``paper_bound`` (the proof's astronomically
    conservative block counts, for bound tracing), ``fixed`` (explicit
    N1, N2), or ``calibrated`` (search block counts by simulating and
    measuring, see :func:`calibrate_N`).
    """

    eps_total: float
    mode: str = "calibrated"
    N1: int | None = None
    N2: int | None = None
    max_instructions: int = 2_000_000
    calibration_layout: Layout | None = None
    verify_on_target: bool = True
    caps: "CalibrationCaps | None" = None
    sim_tol: float = 1e-9

    def __post_init__(self):
        if not (0 < self.eps_total < 1):
            raise CompileError("eps_total must lie in (0, 1)")
        if self.mode not in ("paper_bound", "fixed", "calibrated"):
            raise CompileError(f"unknown budget mode {self.mode!r}")
        if self.mode == "fixed" and (not self.N1 or not self.N2):
            raise CompileError("fixed mode needs explicit N1 and N2")


@dataclass
class CalibrationCaps:
    max_n1: int = 256
    max_n2: int = 1024
    max_product: int = 16384
    max_probes: int = 64


@dataclass
class CalibrationResult:
    N1: int
    N2: int
    error: float
    leakage: float
    met: bool
    probes: list[tuple[int, int, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Group-commutator schedule
# ---------------------------------------------------------------------------

def group_commutator_schedule(N: int) -> list[tuple[str, float]]:
    """Application-order schedule whose product approximates exp([-iU, -iV]).

    Each of the N blocks is [(V, +t), (U, +t), (V, -t), (U, -t)] with
    t = 1/sqrt(N); read right-to-left this is the inverse-first product
    exp(+itU) exp(+itV) exp(-itU) exp(-itV).
    """
    if N < 1:
        raise CompileError("block count N must be at least 1")
    t = 1.0 / math.sqrt(N)
    block = [("V", t), ("U", t), ("V", -t), ("U", -t)]
    return block * N


def group_commutator_sequence(recipe_u: Callable[[float], list[Instruction]],
                              recipe_v: Callable[[float], list[Instruction]],
                              N: int,
                              norm_u: float = 1.0,
                              norm_v: float = 1.0,
                              c: float = DEFAULT_COMMUTATOR_C) -> GlobalGateSequence:
    """Expand the schedule through instruction recipes.

    ``recipe_u(s)`` must emit instructions realizing exp(-i s U); same
    for V.  The attached predicted bound is c * M^3 / sqrt(N) with
    M = max(norm_u, norm_v, 1); N <= M^2 is outside the validity range
    of that bound and is flagged, not rejected.
    """
    M = max(norm_u, norm_v, 1.0)
    outside = N <= M * M
    if outside:
        warnings.warn(f"N={N} <= M^2={M * M:.3g}: commutator error bound "
                      "not guaranteed", stacklevel=2)
    instructions: list[Instruction] = []
    for which, s in group_commutator_schedule(N):
        instructions.extend(recipe_u(s) if which == "U" else recipe_v(s))
    meta = {"kind": "group_commutator", "N": N,
            "predicted_bound": c * M ** 3 / math.sqrt(N),
            "outside_lemma_range": outside}
    return GlobalGateSequence(instructions, meta)


# ---------------------------------------------------------------------------
# Local-gate compilation
# ---------------------------------------------------------------------------

def _resolve_gate_weights(layout: Layout, gate: LogicalGate) -> tuple[float, float, float]:
    if layout.k < 2:
        raise CompileError(f"compiling a two-site logical gate needs |P| >= 2, "
                           f"this layout has |P| = {layout.k}")
    pset = set(layout.P)
    if gate.p not in pset or gate.q not in pset:
        raise CompileError(f"gate sites ({gate.p!r}, {gate.q!r}) must be logical sites")
    wq = layout.weight(gate.p, gate.q)
    wr = layout.weight(gate.p, layout.r)
    wrp = layout.weight(gate.p, layout.r_prime)
    for name, w in (("W(p,q)", wq), ("W(p,r)", wr), ("W(p,r')", wrp)):
        if w == 0.0:
            raise CompileError(f"{name} vanishes; the construction needs it nonzero")
    return wq, wr, wrp


def _inner_block_instructions(layout: Layout, gate: LogicalGate, N1: int,
                              t2: float, wq: float, wrp: float) -> list[Instruction]:
    """N1 blocks approximating exp(-i t2 V); T's sign flip rides on the
    rotation-generator durations."""
    g = layout.group
    d_g = g.diff(gate.p, gate.q)
    d_rp = g.diff(gate.p, layout.r_prime)
    t1 = 1.0 / math.sqrt(N1)
    st2 = math.sqrt(t2)
    t_gate = -gate.T * t1 * st2 / wq
    t_addr = t1 * st2 / wrp
    gen = gate.generator_name
    block = [
        TwoQubitInstruction(gen, d_g, t_gate),
        TwoQubitInstruction("addressing", d_rp, t_addr),
        TwoQubitInstruction(gen, d_g, -t_gate),
        TwoQubitInstruction("addressing", d_rp, -t_addr),
    ]
    return block * N1


def predicted_error_bound(layout: Layout, gate: LogicalGate, N1: int, N2: int,
                          c: float = DEFAULT_COMMUTATOR_C) -> float:
    """Conservative full-space bound: outer lemma term plus 2 N2 inner terms.

    Uses worst-case operator-norm bounds, so it is loose by many orders of
    magnitude compared to measured code-space errors; kept for tracing the
    proof's bookkeeping, not for sizing real runs.
    """
    wq, wr, wrp = _resolve_gate_weights(layout, gate)
    g = layout.group
    n_a_r = len(layout.pairs_at(g.diff(gate.p, layout.r))) / abs(wr)
    n_a_rp = len(layout.pairs_at(g.diff(gate.p, layout.r_prime))) / abs(wrp)
    n_gate = 2.0 * len(layout.pairs_at(g.diff(gate.p, gate.q))) * abs(gate.T) / abs(wq)
    norm_v = 2.0 * n_a_rp * n_gate
    m_outer = max(n_a_r, norm_v, 1.0)
    t2 = 1.0 / math.sqrt(N2)
    m_inner = max(math.sqrt(t2) * n_a_rp, math.sqrt(t2) * n_gate, 1.0)
    outer = c * m_outer ** 3 / math.sqrt(N2)
    inner_each = c * m_inner ** 3 / math.sqrt(N1)
    return outer + 2 * N2 * inner_each


def compile_local_gate(layout: Layout, gate: LogicalGate,
                       budget: CompilationBudget) -> GlobalGateSequence:
    """Lower one logical gate to executable global-gate instructions."""
    report = validate_layout(layout)
    if not report.valid:
        raise CompileError(f"layout fails validation: {report.violations[:3]}")
    if abs(gate.T) > 1.0:
        raise CompileError("|T| <= 1 required per gate; split larger rotations "
                           "at the circuit level")
    wq, wr, wrp = _resolve_gate_weights(layout, gate)

    if gate.T == 0.0:
        return GlobalGateSequence([], {"target": gate.to_dict(), "mode": budget.mode,
                                       "N1": 0, "N2": 0, "predicted_bound": 0.0,
                                       "measured_error": 0.0})

    measured = None
    measured_leak = None
    calibration_note = None
    if budget.mode == "paper_bound":
        n1, n2 = paper_bound_N(weight_ratio(layout), layout.n, budget.eps_total)
    elif budget.mode == "fixed":
        n1, n2 = budget.N1, budget.N2
    else:
        cal_layout = budget.calibration_layout or layout
        result = calibrate_N(cal_layout, _transplant_gate(cal_layout, gate),
                             budget.eps_total, budget.caps or CalibrationCaps(),
                             sim_tol=budget.sim_tol)
        n1, n2 = result.N1, result.N2
        measured, measured_leak = result.error, result.leakage
        if not result.met:
            raise CompileError(
                f"calibration exhausted its caps at error {result.error:.3g} "
                f"> target {budget.eps_total:.3g}")
        if budget.calibration_layout is not None and budget.calibration_layout is not layout:
            calibration_note = "calibrated on proxy layout"
            if budget.verify_on_target:
                n1, n2, measured, measured_leak = _escalate_on_target(
                    layout, gate, budget, n1, n2)

    count = (8 * n1 + 2) * n2
    if count > budget.max_instructions:
        raise CompileError(
            f"(N1, N2) = ({n1}, {n2}) needs {count} instructions, over the "
            f"cap of {budget.max_instructions}; the paper_bound mode in "
            "particular is for bound tracing, not execution")

    seq = _assemble_gate_sequence(layout, gate, n1, n2, wq, wr, wrp)
    seq.metadata.update({
        "target": gate.to_dict(),
        "mode": budget.mode,
        "N1": n1, "N2": n2,
        "predicted_bound": predicted_error_bound(layout, gate, n1, n2),
        "measured_error": measured,
        "measured_leakage": measured_leak,
    })
    if calibration_note:
        seq.metadata["calibration_note"] = calibration_note
    return seq


def _assemble_gate_sequence(layout: Layout, gate: LogicalGate, n1: int, n2: int,
                            wq: float, wr: float, wrp: float) -> GlobalGateSequence:
    g = layout.group
    d_r = g.diff(gate.p, layout.r)
    t2 = 1.0 / math.sqrt(n2)
    v_plus = _inner_block_instructions(layout, gate, n1, t2, wq, wrp)
    v_minus = [ins.inverse() for ins in reversed(v_plus)]
    outer = (v_plus
             + [TwoQubitInstruction("addressing", d_r, t2 / wr)]
             + v_minus
             + [TwoQubitInstruction("addressing", d_r, -t2 / wr)])
    return GlobalGateSequence(list(outer) * n2, {})


def _transplant_gate(layout: Layout, gate: LogicalGate) -> LogicalGate:
    """Same gate shape on another layout's first two logical sites."""
    if gate.p in set(layout.P) and gate.q in set(layout.P):
        return gate
    if layout.k < 2:
        raise CompileError("calibration layout needs |P| >= 2")
    return replace(gate, p=layout.P[0], q=layout.P[1])


def _escalate_on_target(layout: Layout, gate: LogicalGate, budget: CompilationBudget,
                        n1: int, n2: int) -> tuple[int, int, float, float]:
    """Measure proxy-calibrated block counts on the target; double N2 then N1
    until the budget is met or caps run out."""
    from .verify import measure_gate_error

    caps = budget.caps or CalibrationCaps()
    while True:
        err, leak = measure_gate_error(layout, gate, n1, n2, tol=budget.sim_tol)
        if err <= budget.eps_total:
            return n1, n2, err, leak
        if 2 * n2 <= caps.max_n2 and n1 * 2 * n2 <= caps.max_product:
            n2 *= 2
        elif 2 * n1 <= caps.max_n1 and 2 * n1 * n2 <= caps.max_product:
            n1 *= 2
        else:
            raise CompileError(
                f"target-layout error {err:.3g} > {budget.eps_total:.3g} and "
                "calibration caps are exhausted")


def compile_circuit(layout: Layout, circuit: LogicalCircuit,
                    budget: CompilationBudget) -> GlobalGateSequence:
    """Concatenate per-gate compilations, each at eps_total / (gate count).

    Rotations with |T| > 1 are first split into ceil(|T|) equal chunks.
    The error-additivity bound for unitary products makes the per-gate
    budgets sum to at most eps_total.
    """
    pieces: list[LogicalGate] = []
    for g in circuit.gates:
        chunks = max(1, math.ceil(abs(g.T)))
        pieces.extend(replace(g, T=g.T / chunks) for _ in range(chunks))

    if not pieces:
        return GlobalGateSequence([], {"target": "empty circuit", "mode": budget.mode,
                                       "gate_boundaries": [], "predicted_bound": 0.0})

    per_gate = replace_budget_eps(budget, budget.eps_total / len(pieces))
    out = GlobalGateSequence([], {"target": "circuit", "mode": budget.mode,
                                  "eps_total": budget.eps_total,
                                  "per_gate_eps": per_gate.eps_total,
                                  "gates": [g.to_dict() for g in pieces]})
    boundaries = []
    bounds = []
    measured = []
    cache: dict = {}
    for g in pieces:
        key = (g.kind, g.delta, round(g.T, 15), g.p, g.q)
        if key in cache:
            seq = cache[key]
        else:
            seq = compile_local_gate(layout, g, per_gate)
            cache[key] = seq
        out.instructions.extend(seq.instructions)
        boundaries.append(len(out.instructions))
        bounds.append(seq.metadata.get("predicted_bound", 0.0))
        measured.append(seq.metadata.get("measured_error"))
    out.metadata["gate_boundaries"] = boundaries
    out.metadata["per_gate_predicted_bound"] = bounds
    out.metadata["predicted_bound"] = float(sum(bounds))
    out.metadata["per_gate_measured_error"] = measured
    if all(m is not None for m in measured):
        out.metadata["measured_error_bound"] = float(sum(measured))
    return out


def replace_budget_eps(budget: CompilationBudget, eps: float) -> CompilationBudget:
    return replace(budget, eps_total=eps)


# ---------------------------------------------------------------------------
# Block-count policies
# ---------------------------------------------------------------------------

def paper_bound_N(w: float, n: int, eps: float) -> tuple[int, int]:
    """The proof's block-count orders with unit constants, exactly.

    N2 = ceil(w^12 n^12 / eps^2) and N1 = ceil(w^12 n^12 / eps^3),
    evaluated in exact rational arithmetic (these overflow floats fast).
    Astronomically conservative; kept for tracing the complexity claim.
    """
    if w < 1 or n < 1 or not (0 < eps < 1):
        raise CompileError("paper_bound_N needs w >= 1, n >= 1, 0 < eps < 1")
    base = Fraction(str(w)) ** 12 * Fraction(n) ** 12
    e = Fraction(str(eps))
    n2 = math.ceil(base / e ** 2)
    n1 = math.ceil(base / e ** 3)
    return n1, n2


def calibrate_N(layout: Layout, gate: LogicalGate, target_eps: float,
                caps: CalibrationCaps | None = None,
                sim_tol: float = 1e-9) -> CalibrationResult:
    """Search a doubling (N1, N2) grid for the cheapest pair meeting target_eps.

    Cost is the instruction count, i.e. ascending N1*N2 with the larger-N2
    member of each tie probed first (outer blocks buy more accuracy than
    inner ones empirically).  A failed probe prunes every candidate that
    is weaker in both coordinates.  Deterministic throughout.
    """
    from .verify import measure_gate_error

    caps = caps or CalibrationCaps()
    candidates = []
    n1 = 1
    while n1 <= caps.max_n1:
        n2 = 1
        while n2 <= caps.max_n2:
            if n1 * n2 <= caps.max_product:
                candidates.append((n1, n2))
            n2 *= 2
        n1 *= 2
    candidates.sort(key=lambda c: (c[0] * c[1], c[0]))

    probes: list[tuple[int, int, float]] = []
    failed: list[tuple[int, int]] = []
    best: tuple[float, float, int, int] | None = None
    for n1, n2 in candidates:
        if len(probes) >= caps.max_probes:
            break
        if any(n1 <= f1 and n2 <= f2 for f1, f2 in failed):
            continue
        err, leak = measure_gate_error(layout, gate, n1, n2, tol=sim_tol)
        probes.append((n1, n2, err))
        if best is None or err < best[0]:
            best = (err, leak, n1, n2)
        if err <= target_eps:
            return CalibrationResult(n1, n2, err, leak, True, probes)
        failed.append((n1, n2))

    err, leak, n1, n2 = best
    return CalibrationResult(n1, n2, err, leak, False, probes)
