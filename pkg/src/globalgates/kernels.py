"""Low-level state-vector kernels for global pair-sum operators.

A global operator at displacement d is a weighted sum of one fixed 4x4
two-qubit matrix embedded at every site pair (p, q) with p - q = d.  The
kernels here never materialize 2^n x 2^n matrices: they act on amplitude
arrays of shape (2^n, m) given the bit positions of the contributing
pairs.  Amplitude index bit i corresponds to site D[i]; within a pair the
two-qubit basis is |a_p a_q> with a_p the high bit.

The (pair, matrix-entry) double loop is flattened into per-term arrays:
a 4-bit row mask saying which two-bit output patterns the term touches,
an xor mask mapping output to source index, and the coefficient
weight * entry (entries sharing flip mask and coefficient merge into one
term, which halves the work for the symmetric hop generators).

All kernels produce bit-identical results regardless of thread count:
each output amplitude is accumulated by exactly one thread in a fixed
term order.  When numba is unavailable the numpy fallbacks compute the
same sums in the same order.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

    prange = range


def set_threads(count: int | None) -> int:
    """Pin the kernel thread pool; returns the effective count."""
    if not HAVE_NUMBA:
        return 1
    if count is None or count <= 0:
        count = numba.config.NUMBA_NUM_THREADS
    count = min(count, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(count)
    return count


def pair_arrays(layout, d) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bit positions (ip, iq) and weights for the ordered pairs at displacement d."""
    pairs = layout.pairs_at(d)
    ip = np.array([layout.site_index[p] for p, _ in pairs], dtype=np.int64)
    iq = np.array([layout.site_index[q] for _, q in pairs], dtype=np.int64)
    w = np.array([layout.weight(p, q) for p, q in pairs], dtype=np.float64)
    return ip, iq, w


def matrix_nonzeros(mat: np.ndarray, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row/column two-bit patterns and values of the nonzero 4x4 entries."""
    rows, cols, vals = [], [], []
    for rpat in range(4):
        for cpat in range(4):
            v = complex(mat[rpat, cpat])
            if abs(v) > tol:
                rows.append(rpat)
                cols.append(cpat)
                vals.append(v)
    return (np.array(rows, dtype=np.int64),
            np.array(cols, dtype=np.int64),
            np.array(vals, dtype=np.complex128))


def flatten_terms(ip, iq, w, nz):
    """Merge pair/entry combinations into (maskp, maskq, rowmask, flip, coeff) terms."""
    rows, cols, vals = nz
    merged: dict[tuple, list] = {}
    order: list[tuple] = []
    for k in range(ip.shape[0]):
        bp = np.int64(1) << ip[k]
        bq = np.int64(1) << iq[k]
        for e in range(rows.shape[0]):
            flip = np.int64(0)
            if (int(cols[e]) >> 1) != (int(rows[e]) >> 1):
                flip |= bp
            if (int(cols[e]) & 1) != (int(rows[e]) & 1):
                flip |= bq
            coeff = complex(w[k] * vals[e])
            key = (int(bp), int(bq), int(flip), coeff)
            if key not in merged:
                merged[key] = [int(bp), int(bq), 0, int(flip), coeff]
                order.append(key)
            merged[key][2] |= 1 << int(rows[e])
    terms = [merged[k] for k in order]
    return (np.array([t[0] for t in terms], dtype=np.int64),
            np.array([t[1] for t in terms], dtype=np.int64),
            np.array([t[2] for t in terms], dtype=np.int64),
            np.array([t[3] for t in terms], dtype=np.int64),
            np.array([t[4] for t in terms], dtype=np.complex128))


# ---------------------------------------------------------------------------
# Diagonal assembly: diag[j] = sum_pairs w * md[2*bit_ip(j) + bit_iq(j)]
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _diag_numba(ip, iq, w, md, out):  # pragma: no cover - compiled
    npairs = ip.shape[0]
    for j in prange(out.shape[0]):
        acc = 0.0
        for k in range(npairs):
            pat = (((j >> ip[k]) & 1) << 1) | ((j >> iq[k]) & 1)
            acc += w[k] * md[pat]
        out[j] = acc


def _diag_numpy(ip, iq, w, md, out):
    idx = np.arange(out.shape[0], dtype=np.int64)
    out[:] = 0.0
    for k in range(ip.shape[0]):
        pat = (((idx >> ip[k]) & 1) << 1) | ((idx >> iq[k]) & 1)
        out += w[k] * md[pat]


def pairsum_diagonal(ip, iq, w, mdiag4: np.ndarray, dim: int) -> np.ndarray:
    """Diagonal of the pair sum of a diagonal 4x4 matrix, as a real vector."""
    md = np.real(mdiag4).astype(np.float64)
    out = np.empty(dim, dtype=np.float64)
    if HAVE_NUMBA:
        _diag_numba(ip, iq, w, md, out)
    else:
        _diag_numpy(ip, iq, w, md, out)
    return out


# ---------------------------------------------------------------------------
# Pair-sum application, optionally fused with scale and accumulate:
#   term[j, c] = scale * sum_t [term t hits j] coeff_t v[j ^ flip_t, c]
#   acc[j, c] += term[j, c]
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True, fastmath=True)
def _apply_cols4(maskp, maskq, rowmask, flip, coeff, scale, v, term, acc):  # pragma: no cover
    nterms = rowmask.shape[0]
    for j in prange(v.shape[0]):
        s0 = 0.0 + 0.0j
        s1 = 0.0 + 0.0j
        s2 = 0.0 + 0.0j
        s3 = 0.0 + 0.0j
        for t in range(nterms):
            rpat = 0
            if j & maskp[t]:
                rpat += 2
            if j & maskq[t]:
                rpat += 1
            if (rowmask[t] >> rpat) & 1:
                src = j ^ flip[t]
                cf = coeff[t]
                s0 += cf * v[src, 0]
                s1 += cf * v[src, 1]
                s2 += cf * v[src, 2]
                s3 += cf * v[src, 3]
        term[j, 0] = scale * s0
        term[j, 1] = scale * s1
        term[j, 2] = scale * s2
        term[j, 3] = scale * s3
        acc[j, 0] += term[j, 0]
        acc[j, 1] += term[j, 1]
        acc[j, 2] += term[j, 2]
        acc[j, 3] += term[j, 3]


@njit(cache=True, parallel=True, fastmath=True)
def _apply_generic(maskp, maskq, rowmask, flip, coeff, scale, v, term, acc):  # pragma: no cover
    nterms = rowmask.shape[0]
    ncols = v.shape[1]
    for j in prange(v.shape[0]):
        for c in range(ncols):
            term[j, c] = 0.0 + 0.0j
        for t in range(nterms):
            rpat = 0
            if j & maskp[t]:
                rpat += 2
            if j & maskq[t]:
                rpat += 1
            if (rowmask[t] >> rpat) & 1:
                src = j ^ flip[t]
                cf = coeff[t]
                for c in range(ncols):
                    term[j, c] += cf * v[src, c]
        for c in range(ncols):
            term[j, c] *= scale
            acc[j, c] += term[j, c]


def _apply_numpy(maskp, maskq, rowmask, flip, coeff, scale, v, term, acc):
    idx = np.arange(v.shape[0], dtype=np.int64)
    term[:] = 0.0
    for t in range(rowmask.shape[0]):
        rpat = (((idx & maskp[t]) != 0).astype(np.int64) << 1) | ((idx & maskq[t]) != 0)
        sel = idx[(rowmask[t] >> rpat) & 1 == 1]
        term[sel] += coeff[t] * v[sel ^ flip[t]]
    term *= scale
    acc += term


def pairsum_apply_fused(terms, v: np.ndarray, scale: complex,
                        term_out: np.ndarray, acc: np.ndarray) -> None:
    """term_out = scale * (pair sum applied to v); acc += term_out.  All 2D."""
    if HAVE_NUMBA:
        if v.shape[1] == 4:
            _apply_cols4(*terms, scale, v, term_out, acc)
        else:
            _apply_generic(*terms, scale, v, term_out, acc)
    else:
        _apply_numpy(*terms, scale, v, term_out, acc)


def pairsum_apply(terms, v: np.ndarray) -> np.ndarray:
    """y = pair sum applied to v, for v of shape (2^n,) or (2^n, m)."""
    squeeze = v.ndim == 1
    v2 = np.ascontiguousarray(v.reshape(v.shape[0], -1), dtype=np.complex128)
    y = np.empty_like(v2)
    sink = np.zeros((1, 1), dtype=np.complex128)  # discarded accumulator
    if HAVE_NUMBA:
        acc = np.zeros_like(v2)
        if v2.shape[1] == 4:
            _apply_cols4(*terms, 1.0 + 0.0j, v2, y, acc)
        else:
            _apply_generic(*terms, 1.0 + 0.0j, v2, y, acc)
    else:
        acc = np.zeros_like(v2)
        _apply_numpy(*terms, 1.0 + 0.0j, v2, y, acc)
    del sink, acc
    return y[:, 0] if squeeze else y


# ---------------------------------------------------------------------------
# Elementwise phase multiply (diagonal gates), in place
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _phase_numba(phase, v):  # pragma: no cover - compiled
    ncols = v.shape[1]
    for j in prange(v.shape[0]):
        p = phase[j]
        for c in range(ncols):
            v[j, c] *= p


def phase_multiply(phase: np.ndarray, v: np.ndarray) -> None:
    """v *= phase[:, None] in place."""
    if HAVE_NUMBA:
        _phase_numba(phase, v)
    else:
        v *= phase[:, None]


# ---------------------------------------------------------------------------
# Single-site tensor application: y = (u on site bit i) v for all sites
# ---------------------------------------------------------------------------

def apply_one_qubit_all_sites(u: np.ndarray, v: np.ndarray, nbits: int) -> np.ndarray:
    """Apply the same 2x2 matrix to every site: (u tensor ... tensor u) v."""
    squeeze = v.ndim == 1
    v2 = v.reshape(v.shape[0], -1).astype(np.complex128, copy=True)
    ncols = v2.shape[1]
    for i in range(nbits):
        t = v2.reshape(-1, 2 << i, ncols)
        half = 1 << i
        a = t[:, :half, :].copy()
        b = t[:, half:, :].copy()
        t[:, :half, :] = u[0, 0] * a + u[0, 1] * b
        t[:, half:, :] = u[1, 0] * a + u[1, 1] * b
    return v2[:, 0] if squeeze else v2
