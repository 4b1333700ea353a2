"""Number-theoretic transform kernels for negacyclic rings.

All transforms here are length-N, natural order in and out, over Z_p for an
odd prime p with p = 1 (mod 2N).  The negacyclic twist by a primitive 2N-th
root psi is applied by the callers through the precomputed tables, so that a
pointwise product in the transformed domain is a product in Z_p[X]/(X^N+1).

Two execution paths: a numba kernel for stacked int64 rows (the RNS hot
path), and a generic numpy path that also works on object arrays holding
Python ints (used by the slot encoder, whose modulus exceeds 31 bits).
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def is_probable_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24 (covers all moduli used here)."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_primitive_2n_root(modulus: int, n: int) -> int:
    """Smallest psi with psi^(2N) = 1 and psi^N = -1 mod modulus."""
    order = 2 * n
    if (modulus - 1) % order != 0:
        raise ValueError(f"{modulus} is not 1 mod {order}")
    cofactor = (modulus - 1) // order
    for base in range(2, modulus):
        cand = pow(base, cofactor, modulus)
        if pow(cand, n, modulus) == modulus - 1:
            return cand
    raise ValueError(f"no primitive {order}-th root mod {modulus}")


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def stage_packed_twiddles(omega: int, n: int, modulus: int) -> list:
    """tw[m + j] = (omega^(n/(2m)))^j for each stage size m = 1, 2, ..., n/2."""
    tw = [0] * n
    tw[0] = 1
    m = 1
    while m < n:
        w_m = pow(omega, n // (2 * m), modulus)
        acc = 1
        for j in range(m):
            tw[m + j] = acc
            acc = acc * w_m % modulus
        m *= 2
    return tw


class NttPlan:
    """Tables for one modulus: twist vectors and stage-packed twiddles.

    The inverse twist has n^-1 folded in, so intt + untwist is exact.
    """

    def __init__(self, modulus: int, n: int, psi: int | None = None):
        self.modulus = modulus
        self.n = n
        if psi is None:
            psi = find_primitive_2n_root(modulus, n)
        if pow(psi, n, modulus) != modulus - 1:
            raise ValueError("psi is not a primitive 2N-th root")
        self.psi = psi
        omega = psi * psi % modulus
        psi_inv = pow(psi, modulus - 2, modulus)
        n_inv = pow(n, modulus - 2, modulus)
        self.psi_pows = [pow(psi, j, modulus) for j in range(n)]
        self.ipsi_pows = [pow(psi_inv, j, modulus) * n_inv % modulus for j in range(n)]
        self.tw = stage_packed_twiddles(omega, n, modulus)
        self.itw = stage_packed_twiddles(pow(omega, modulus - 2, modulus), n, modulus)


if _HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _transform_rows_i64(a, mods, tw, rev):  # pragma: no cover - jitted
        rows, n = a.shape
        for r in range(rows):
            p = mods[r]
            for i in range(n):
                j = rev[i]
                if j > i:
                    tmp = a[r, i]
                    a[r, i] = a[r, j]
                    a[r, j] = tmp
            m = 1
            while m < n:
                for k in range(0, n, 2 * m):
                    for j in range(m):
                        w = tw[r, m + j]
                        t = (w * a[r, k + j + m]) % p
                        u = a[r, k + j]
                        x = u + t
                        if x >= p:
                            x -= p
                        a[r, k + j] = x
                        y = u - t
                        if y < 0:
                            y += p
                        a[r, k + j + m] = y
                m <<= 1


def _transform_rows_numpy(a, mods, tw, rev):
    rows, n = a.shape
    a[:] = a[:, rev]
    modcol = mods.reshape(rows, 1, 1)
    m = 1
    while m < n:
        view = a.reshape(rows, n // (2 * m), 2 * m)
        twid = tw[:, m : 2 * m].reshape(rows, 1, m)
        t = (view[:, :, m:] * twid) % modcol
        u = view[:, :, :m].copy()
        view[:, :, :m] = (u + t) % modcol
        view[:, :, m:] = (u - t) % modcol
        m *= 2


def transform_rows(a: np.ndarray, mods: np.ndarray, tw: np.ndarray, rev: np.ndarray) -> None:
    """In-place cyclic NTT of each row of `a` (row r modulo mods[r])."""
    if _HAVE_NUMBA and a.dtype == np.int64:
        _transform_rows_i64(a, mods, tw, rev)
    else:
        _transform_rows_numpy(a, mods, tw, rev)
