"""Exact pure states over the lattice and the admissible-subspace code.

Basis states are indexed by bit assignments a: D -> {0,1}; bit i of the
integer index is the value at site D[i].  A basis state is *admissible*
when both reference sites carry 1, the logical sites carry arbitrary
bits, and everything else carries 0.  The admissible states span the
2^k-dimensional code space; logical bit j lives at the j-th logical site
in ascending site order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lattice import Layout

MAX_QUBITS = 24


class StateError(ValueError):
    pass


def _check_dim(layout: Layout, cap: int = MAX_QUBITS) -> int:
    if layout.n > cap:
        raise StateError(f"{layout.n} sites exceed the dense state cap of {cap} qubits")
    return 1 << layout.n


@dataclass
class PureState:
    """Dense complex amplitude vector over the 2^n computational basis."""

    amps: np.ndarray
    layout: Layout

    def __post_init__(self):
        dim = _check_dim(self.layout)
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (dim,):
            raise StateError(f"amplitude vector must have shape ({dim},)")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "PureState":
        return PureState(self.amps.copy(), self.layout)


def encode_logical(bits, layout: Layout) -> int:
    """Basis index of the admissible state whose logical bits are ``bits``.

    ``bits`` is either an integer in [0, 2^k) with bit j addressing the
    j-th logical site in site order, or a string of '0'/'1' read
    left-to-right in the same order.
    """
    k = layout.k
    if isinstance(bits, str):
        if len(bits) != k or any(c not in "01" for c in bits):
            raise StateError(f"logical bit string must have length {k}, got {bits!r}")
        value = sum(1 << j for j, c in enumerate(bits) if c == "1")
    else:
        value = int(bits)
        if not (0 <= value < (1 << k)):
            raise StateError(f"logical index {value} out of range for k={k}")
    index = (1 << layout.site_index[layout.r]) | (1 << layout.site_index[layout.r_prime])
    for j, p in enumerate(layout.P):
        if (value >> j) & 1:
            index |= 1 << layout.site_index[p]
    return index


def admissible_indices(layout: Layout) -> np.ndarray:
    """Basis indices of all 2^k admissible states, by ascending logical value."""
    return np.array([encode_logical(b, layout) for b in range(1 << layout.k)],
                    dtype=np.int64)


def is_admissible(index: int, layout: Layout) -> bool:
    ones = {layout.D[i] for i in range(layout.n) if (index >> i) & 1}
    refs = {layout.r, layout.r_prime}
    return refs <= ones and ones - refs <= set(layout.P)


def prepare_initial(layout: Layout) -> PureState:
    """All-zero logical state: 1s on the references, 0 elsewhere."""
    dim = _check_dim(layout)
    amps = np.zeros(dim, dtype=np.complex128)
    amps[encode_logical(0, layout)] = 1.0
    return PureState(amps, layout)


def project_admissible(state: PureState) -> tuple[np.ndarray, float]:
    """Logical amplitude vector and the norm of everything off the code space.

    The leakage is summed directly over the complement of the code space
    rather than by subtracting near-equal norms, so an exactly supported
    state reports exactly zero.
    """
    adm = admissible_indices(state.layout)
    logical = state.amps[adm].copy()
    rest = state.amps.copy()
    rest[adm] = 0.0
    return logical, float(np.linalg.norm(rest))


def restrict_operator(op, layout: Layout, max_k: int = 12) -> np.ndarray:
    """Assemble the 2^k x 2^k code-space block of an operator.

    ``op`` is a callable acting on amplitude arrays of shape (2^n,) or
    (2^n, m), or a dense square matrix.  Entry (b, b') is the amplitude of
    the b-th admissible state in op applied to the b'-th one.
    """
    if layout.k > max_k:
        raise StateError(f"k={layout.k} exceeds the restrict cap of {max_k}")
    dim = _check_dim(layout)
    adm = admissible_indices(layout)
    basis = np.zeros((dim, len(adm)), dtype=np.complex128)
    basis[adm, np.arange(len(adm))] = 1.0
    if callable(op):
        image = op(basis)
    else:
        image = np.asarray(op) @ basis
    return np.ascontiguousarray(image[adm, :])


def dump_state(state: PureState, amp_min: float = 1e-12) -> list[list]:
    """Amplitudes above threshold as (site-order bit string, re, im) rows.

    Character i of the bit string is the bit at site D[i]; this is site
    order, not binary positional notation.
    """
    rows = []
    n = state.layout.n
    for idx in np.flatnonzero(np.abs(state.amps) >= amp_min):
        bits = "".join("1" if (int(idx) >> i) & 1 else "0" for i in range(n))
        a = state.amps[idx]
        rows.append([bits, float(a.real), float(a.imag)])
    return rows


def save_state_dump(state: PureState, path, amp_min: float = 1e-12,
                    extra: dict | None = None) -> dict:
    from . import __version__

    logical, leakage = project_admissible(state)
    doc = {
        "tool": "globalgates",
        "version": __version__,
        "amp_min": amp_min,
        "amplitudes": dump_state(state, amp_min),
        "logical": [[float(a.real), float(a.imag)] for a in logical],
        "leakage": leakage,
    }
    if extra:
        doc.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return doc
