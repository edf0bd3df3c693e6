"""Dense small-dimension operator algebra: commutators, norms, Lie closures,
and the translation-sector universality experiment.

Lie closures are computed over the reals: anti-Hermitian matrices are
flattened to real vectors (real parts stacked on imaginary parts) and
new bracket directions are admitted by modified Gram-Schmidt against the
orthonormal basis so far, under the trace inner product.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z


class AlgebraError(ValueError):
    pass


def commutator(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """[X, Y] = XY - YX."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise AlgebraError(f"commutator needs equal square shapes, got {x.shape} {y.shape}")
    return x @ y - y @ x


def operator_norm(x=None, tol: float = 1e-9, matvec=None, rmatvec=None,
                  dim: int | None = None, max_iter: int = 10_000) -> float:
    """Largest singular value to relative tolerance ``tol``.

    Dense inputs of dimension <= 256 go through a full SVD; larger ones
    use power iteration on X^dagger X from the deterministic start vector
    (1, 1/2, 1/3, ...).  Matrix-free callers pass ``matvec`` (and
    ``rmatvec`` for the adjoint action unless the operator is self-adjoint)
    together with ``dim``.
    """
    if matvec is None:
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise AlgebraError("operator_norm needs a square matrix")
        dim = x.shape[0]
        if dim <= 256:
            return float(np.linalg.svd(x, compute_uv=False)[0])
        mat = x
        matvec = mat.__matmul__
        rmatvec = mat.conj().T.__matmul__
    elif dim is None:
        raise AlgebraError("matrix-free operator_norm needs dim")
    if rmatvec is None:
        rmatvec = matvec  # self-adjoint action

    v = 1.0 / np.arange(1, dim + 1, dtype=np.float64)
    v = v.astype(np.complex128) / np.linalg.norm(v)
    last = 0.0
    for _ in range(max_iter):
        w = rmatvec(matvec(v))
        gram = float(np.linalg.norm(w))  # estimates sigma_max^2
        if gram == 0.0:
            return 0.0
        est = math.sqrt(gram)
        v = w / gram
        if abs(est - last) <= tol * max(est, 1e-300):
            return est
        last = est
    raise AlgebraError(f"operator norm power iteration did not converge in {max_iter} steps")


@dataclass
class DenseOperator:
    """Square matrix with a provenance label for reports."""

    label: str
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise AlgebraError("DenseOperator must be square")
        if not np.all(np.isfinite(self.matrix)):
            raise AlgebraError("DenseOperator entries must be finite")


@dataclass
class LieClosureResult:
    dimension: int
    basis: list[np.ndarray]
    saturated: bool
    sweeps: int
    contains_identity_direction: bool = False


def _vec(m: np.ndarray) -> np.ndarray:
    flat = m.reshape(-1)
    return np.concatenate([flat.real, flat.imag])


def lie_closure(generators, tol: float = 1e-8, max_dim: int | None = None,
                max_sweeps: int = 64) -> LieClosureResult:
    """Real Lie algebra spanned by anti-Hermitian generators under brackets.

    Sweeps bracket every basis pair, orthogonalizing candidates against the
    current span; a direction counts as new when its residual exceeds
    ``tol`` relative to the candidate norm.  Saturation means a full sweep
    added nothing.
    """
    mats = [np.asarray(g.matrix if isinstance(g, DenseOperator) else g,
                       dtype=np.complex128) for g in generators]
    if not mats:
        raise AlgebraError("lie_closure needs at least one generator")
    d = mats[0].shape[0]
    for m in mats:
        if m.shape != (d, d):
            raise AlgebraError("generators must share one square shape")
        if np.max(np.abs(m + m.conj().T)) > 1e-10:
            raise AlgebraError("generators must be anti-Hermitian to 1e-10")
    cap = max_dim if max_dim is not None else d * d
    if cap > 4096:
        raise AlgebraError(f"closure dimension cap {cap} exceeds the workload limit")

    basis: list[np.ndarray] = []
    vecs = np.zeros((0, 2 * d * d), dtype=np.float64)

    def admit(candidate: np.ndarray) -> bool:
        nonlocal vecs
        v = _vec(candidate)
        scale = np.linalg.norm(v)
        if scale <= 1e-300:
            return False
        v = v / scale
        for _ in range(2):  # twice-is-enough re-orthogonalization
            if len(basis):
                v = v - vecs.T @ (vecs @ v)
        resid = np.linalg.norm(v)
        if resid <= tol:
            return False
        v = v / resid
        basis.append(candidate / np.linalg.norm(_vec(candidate)))
        vecs = np.vstack([vecs, v])
        return True

    for m in mats:
        admit(m)

    sweeps = 0
    saturated = False
    frontier = list(range(len(basis)))
    while not saturated and sweeps < max_sweeps and len(basis) < cap:
        sweeps += 1
        added = []
        current = len(basis)
        # bracket new directions against everything seen so far
        for i in frontier:
            for j in range(current):
                if len(basis) >= cap:
                    break
                c = commutator(basis[i], basis[j])
                if admit(c):
                    added.append(len(basis) - 1)
        if not added:
            saturated = True
        frontier = added

    eye_dir = _vec(1j * np.eye(d))
    eye_dir = eye_dir / np.linalg.norm(eye_dir)
    has_identity = bool(np.linalg.norm(vecs @ eye_dir) > 1.0 - 1e-6) if len(basis) else False
    return LieClosureResult(len(basis), basis, saturated, sweeps, has_identity)


# ---------------------------------------------------------------------------
# Cyclic-shift symmetric sector
# ---------------------------------------------------------------------------

def necklace_count(n: int) -> int:
    """Number of binary necklaces: (1/n) sum over d | n of phi(d) 2^(n/d)."""
    def phi(k):
        out = k
        x = 2
        while x * x <= k:
            if k % x == 0:
                out -= out // x
                while k % x == 0:
                    k //= x
            x += 1
        if k > 1:
            out -= out // k
        return out

    return sum(phi(d) * (1 << (n // d)) for d in range(1, n + 1) if n % d == 0) // n


def shift_orbit(index: int, n: int) -> list[int]:
    """Orbit of a basis bitmask under cyclic bit rotation."""
    orbit = []
    cur = index
    mask = (1 << n) - 1
    while True:
        orbit.append(cur)
        cur = ((cur << 1) & mask) | (cur >> (n - 1))
        if cur == index:
            return orbit


def shift_eigenspace_basis(n: int) -> np.ndarray:
    """Isometry onto the eigenvalue-1 sector of the cyclic qubit shift.

    Basis states in one shift orbit average to a fixed vector; orbits are
    disjoint, so the normalized averages are orthonormal.  Columns are
    ordered by each orbit's smallest bitmask.
    """
    if not (1 <= n <= 12):
        raise AlgebraError("shift eigenspace construction is capped at 1 <= n <= 12")
    dim = 1 << n
    seen = np.zeros(dim, dtype=bool)
    columns = []
    for index in range(dim):
        if seen[index]:
            continue
        orbit = shift_orbit(index, n)
        for j in orbit:
            seen[j] = True
        col = np.zeros(dim, dtype=np.complex128)
        for j in orbit:
            col[j] += 1.0
        columns.append(col / np.linalg.norm(col))
    v = np.stack(columns, axis=1)
    assert v.shape[1] == necklace_count(n)
    return v


def shift_matrix(n: int) -> np.ndarray:
    """Permutation matrix of the cyclic shift on basis bitmasks."""
    dim = 1 << n
    mask = dim - 1
    s = np.zeros((dim, dim), dtype=np.complex128)
    for j in range(dim):
        s[((j << 1) & mask) | (j >> (n - 1)), j] = 1.0
    return s


def _site_sum_one_qubit(sigma: np.ndarray, n: int) -> np.ndarray:
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(n):
        for col in range(dim):
            b = (col >> i) & 1
            for row_bit in range(2):
                v = sigma[row_bit, b]
                if v != 0.0:
                    row = col if row_bit == b else col ^ (1 << i)
                    h[row, col] += v
    return h


def _circle_pair_sum(mat4: np.ndarray, n: int, distance: int) -> np.ndarray:
    """sum over p of mat4 embedded at (p, p - distance) on an n-circle, unit weights."""
    from .verify import dense_embed_pair

    dim = 1 << n
    h = np.zeros((dim, dim), dtype=np.complex128)
    for p in range(n):
        q = (p - distance) % n
        h += dense_embed_pair(mat4, p, q, n)
    return h


@dataclass
class UniversalityResult:
    n: int
    eigenspace_dim: int
    closure_dim: int
    target_dim_u: int
    target_dim_su: int
    universal: bool
    which: str  # "u", "su", or "none"
    generator: str
    elapsed: float
    saturated: bool


def universality_check(n: int, two_qubit_generator: str | np.ndarray = "addressing",
                       distance: int = 1, tol: float = 1e-8) -> UniversalityResult:
    """Do global gates act universally on the shift-invariant sector?

    Projects the three site-summed Pauli generators plus one global
    two-qubit Hamiltonian at the given circle distance into the
    eigenvalue-1 shift sector, multiplies by i, and closes under brackets.
    Universal means the closure reaches u(dim) or su(dim); which one is
    reported since the identity direction may or may not be generated.
    """
    from .operators import generator_matrix

    start = time.perf_counter()
    v = shift_eigenspace_basis(n)
    dim_e = v.shape[1]
    name, mat4 = generator_matrix(two_qubit_generator)
    gens = []
    for label, h in (("sum_sigma_x", _site_sum_one_qubit(SIGMA_X, n)),
                     ("sum_sigma_y", _site_sum_one_qubit(SIGMA_Y, n)),
                     ("sum_sigma_z", _site_sum_one_qubit(SIGMA_Z, n)),
                     (name or "two_qubit", _circle_pair_sum(mat4, n, distance))):
        proj = v.conj().T @ h @ v
        gens.append(DenseOperator(label, 1j * proj))
    closure = lie_closure(gens, tol=tol)
    du, dsu = dim_e * dim_e, dim_e * dim_e - 1
    if closure.dimension == du:
        which = "u"
    elif closure.dimension == dsu:
        which = "su"
    else:
        which = "none"
    return UniversalityResult(
        n=n, eigenspace_dim=dim_e, closure_dim=closure.dimension,
        target_dim_u=du, target_dim_su=dsu, universal=which != "none",
        which=which, generator=name or "custom", elapsed=time.perf_counter() - start,
        saturated=closure.saturated)


# ---------------------------------------------------------------------------
# The six-generator universal set on two qubits
# ---------------------------------------------------------------------------

def _kb(i: int, j: int) -> np.ndarray:
    m = np.zeros((4, 4), dtype=np.complex128)
    m[i, j] = 1.0
    return m


def universal_set_generators() -> dict[str, np.ndarray]:
    """Six anti-Hermitian two-qubit generators whose closure is su(4).

    U, Y act on the first qubit conditioned on |1> at the second; V, Z
    condition on |0>; T, X are U, Y with the qubits exchanged.
    """
    b1 = _kb(3, 1)  # |11><01|
    b0 = _kb(2, 0)  # |10><00|
    swapped = _kb(3, 2)  # |11><10|
    return {
        "U": b1 - b1.conj().T,
        "Y": 1j * b1 + 1j * b1.conj().T,
        "T": swapped - swapped.conj().T,
        "X": 1j * swapped + 1j * swapped.conj().T,
        "V": b0 - b0.conj().T,
        "Z": 1j * b0 + 1j * b0.conj().T,
    }


def universal_set_bracket_table() -> list[tuple[str, np.ndarray, np.ndarray]]:
    """The nine bracket identities completing the su(4) basis.

    Each row is (label, bracket expression value, stated closed form).
    """
    g = universal_set_generators()
    u, y, t, x, v, z = g["U"], g["Y"], g["T"], g["X"], g["V"], g["Z"]
    rows = [
        ("[V,T]", commutator(v, t), _kb(0, 3) - _kb(3, 0)),
        ("[T,Z]", commutator(t, z), 1j * _kb(0, 3) + 1j * _kb(3, 0)),
        ("[T,U]", commutator(t, u), _kb(1, 2) - _kb(2, 1)),
        ("[Y,T]", commutator(y, t), 1j * _kb(1, 2) + 1j * _kb(2, 1)),
        ("[[V,T],U]", commutator(commutator(v, t), u), _kb(0, 1) - _kb(1, 0)),
        ("[[T,Z],U]", commutator(commutator(t, z), u), 1j * _kb(0, 1) + 1j * _kb(1, 0)),
        ("[U,Y]", commutator(u, y), 2j * (_kb(3, 3) - _kb(1, 1))),
        ("[T,X]", commutator(t, x), 2j * (_kb(3, 3) - _kb(2, 2))),
        ("[V,Z]", commutator(v, z), 2j * (_kb(2, 2) - _kb(0, 0))),
    ]
    return rows
