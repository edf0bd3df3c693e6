import warnings

import numpy as np
import pytest

from globalgates import kernels

warnings.filterwarnings("ignore", message=".*TBB.*")

kernels.set_threads(2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_unitary(rng, dim):
    """Haar-ish unitary from the QR of a complex Gaussian matrix."""
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def dense_embed_oracle(mat4, site_p, site_q, layout):
    """Independent dense embedding of a 4x4 at two sites, by explicit kron.

    Builds |a_p a_q> <b_p b_q| factors site by site, so it shares no code
    with the package's bit-mask kernels.
    """
    n = layout.n
    ip, iq = layout.site_index[site_p], layout.site_index[site_q]
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    eye = np.eye(2)
    for rp in range(2):
        for rq in range(2):
            for cp in range(2):
                for cq in range(2):
                    coeff = mat4[2 * rp + rq, 2 * cp + cq]
                    if coeff == 0:
                        continue
                    factor = np.array([[1.0]])
                    for bit in range(n):
                        if bit == ip:
                            f = np.zeros((2, 2))
                            f[rp, cp] = 1.0
                        elif bit == iq:
                            f = np.zeros((2, 2))
                            f[rq, cq] = 1.0
                        else:
                            f = eye
                        factor = np.kron(f, factor)  # bit 0 is least significant
                    out = out + coeff * factor
    return out


def dense_global_oracle(mat4, d, layout):
    """Weighted pair sum at displacement d, via the kron oracle."""
    dim = 1 << layout.n
    out = np.zeros((dim, dim), dtype=complex)
    for p, q in layout.pairs_at(d):
        out = out + layout.weight(p, q) * dense_embed_oracle(mat4, p, q, layout)
    return out
