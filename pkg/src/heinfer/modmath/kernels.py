"""Compiled word-level kernels.

Every routine here works on unsigned 64-bit words only.  A 128-bit quantity
is a ``(lo, hi)`` pair of words, mirroring the ``z[0]``/``z[1]`` convention of
the reduction routines.  Array kernels take a ``(polys, limbs, n)`` residue
block plus per-limb constant vectors, never mutate their inputs, and release
the GIL so the graph executor can run them from worker threads.
"""

import numba as nb
import numpy as np

U64 = np.uint64
MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)
ONE = np.uint64(1)
ZERO = np.uint64(0)
TWO32 = np.uint64(1 << 32)

_jit = nb.njit(cache=True, nogil=True)
_inline = nb.njit(cache=True, nogil=True, inline="always")


@_inline
def mul_wide(a, b):
    """Full 64x64 -> 128 product as (lo, hi)."""
    al = a & MASK32
    ah = a >> SHIFT32
    bl = b & MASK32
    bh = b >> SHIFT32
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    hh = ah * bh
    mid = (ll >> SHIFT32) + (lh & MASK32) + (hl & MASK32)
    lo = (ll & MASK32) | (mid << SHIFT32)
    hi = hh + (lh >> SHIFT32) + (hl >> SHIFT32) + (mid >> SHIFT32)
    return lo, hi


@_inline
def mult_hw64(a, b):
    return mul_wide(a, b)[1]


@_inline
def add64(a, b):
    """Sum modulo 2^64 and the carry bit."""
    s = a + b
    if s < a:
        return s, ONE
    return s, ZERO


@_inline
def barrett128(z0, z1, q, r0, r1):
    # 5 multiplications (three of them wide), one conditional subtraction
    carry = mult_hw64(z0, r0)
    t0, t1 = mul_wide(z0, r1)
    tmp1, c = add64(t0, carry)
    tmp3 = t1 + c
    t0, t1 = mul_wide(z1, r0)
    tmp1, c = add64(tmp1, t0)
    carry = t1 + c
    tmp1 = z1 * r1 + tmp3 + carry
    tmp3 = z0 - tmp1 * q
    if tmp3 >= q:
        return tmp3 - q
    return tmp3


@_inline
def barrett64(z, q, r):
    carry = mult_hw64(z, r)
    carry = z - carry * q
    if carry >= q:
        return carry - q
    return carry


@_inline
def addmod(a, b, q):
    s = a + b
    if s >= q:
        return s - q
    return s


@_inline
def submod(a, b, q):
    if a >= b:
        return a - b
    return a + (q - b)


@_inline
def mulmod(a, b, q, r0, r1, r64):
    if q < TWO32:
        return barrett64(a * b, q, r64)
    lo, hi = mul_wide(a, b)
    return barrett128(lo, hi, q, r0, r1)


@_inline
def mulmod_shoup(a, w, w_shoup, q):
    # w_shoup = floor(w * 2^64 / q); a < q
    qhat = mult_hw64(a, w_shoup)
    r = a * w - qhat * q
    if r >= q:
        return r - q
    return r


# ---------------------------------------------------------------- scalar-ish


@_jit
def barrett128_array(z_lo, z_hi, q, r0, r1):
    out = np.empty_like(z_lo)
    for i in range(z_lo.shape[0]):
        out[i] = barrett128(z_lo[i], z_hi[i], q, r0, r1)
    return out


@_jit
def barrett64_array(z, q, r):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        out[i] = barrett64(z[i], q, r)
    return out


@_jit
def mul_wide_array(a, b):
    lo = np.empty_like(a)
    hi = np.empty_like(a)
    for i in range(a.shape[0]):
        lo[i], hi[i] = mul_wide(a[i], b[i])
    return lo, hi


# ---------------------------------------------------------------- elementwise


@_jit
def add_blocks(x, y, qs):
    out = np.empty_like(x)
    for p in range(x.shape[0]):
        for l in range(x.shape[1]):
            q = qs[l]
            for n in range(x.shape[2]):
                out[p, l, n] = addmod(x[p, l, n], y[p, l, n], q)
    return out


@_jit
def sub_blocks(x, y, qs):
    out = np.empty_like(x)
    for p in range(x.shape[0]):
        for l in range(x.shape[1]):
            q = qs[l]
            for n in range(x.shape[2]):
                out[p, l, n] = submod(x[p, l, n], y[p, l, n], q)
    return out


@_jit
def neg_blocks(x, qs):
    out = np.empty_like(x)
    for p in range(x.shape[0]):
        for l in range(x.shape[1]):
            q = qs[l]
            for n in range(x.shape[2]):
                v = x[p, l, n]
                out[p, l, n] = ZERO if v == ZERO else q - v
    return out


@_jit
def add_plain_vector(ct, pt, qs):
    """ct[l][n] + pt[l][n] mod p_l on one polynomial."""
    out = np.empty_like(ct)
    for l in range(ct.shape[0]):
        q = qs[l]
        for n in range(ct.shape[1]):
            out[l, n] = addmod(ct[l, n], pt[l, n], q)
    return out


@_jit
def add_plain_scalar(ct, pt, qs):
    """ct[l][n] + pt[l] mod p_l, the plaintext word hoisted per limb."""
    out = np.empty_like(ct)
    for l in range(ct.shape[0]):
        q = qs[l]
        tmp = pt[l]
        for n in range(ct.shape[1]):
            out[l, n] = addmod(ct[l, n], tmp, q)
    return out


@_jit
def sub_plain_scalar(ct, pt, qs):
    out = np.empty_like(ct)
    for l in range(ct.shape[0]):
        q = qs[l]
        tmp = pt[l]
        for n in range(ct.shape[1]):
            out[l, n] = submod(ct[l, n], tmp, q)
    return out


@_jit
def mul_plain_vector(ct, pt, qs, r0s, r1s):
    """Every polynomial of ``ct`` times ``pt``, always via the 128-bit reduction."""
    out = np.empty_like(ct)
    for p in range(ct.shape[0]):
        for l in range(ct.shape[1]):
            q = qs[l]
            r0 = r0s[l]
            r1 = r1s[l]
            for n in range(ct.shape[2]):
                lo, hi = mul_wide(ct[p, l, n], pt[l, n])
                out[p, l, n] = barrett128(lo, hi, q, r0, r1)
    return out


@_jit
def mul_plain_scalar(ct, pt, qs, r0s, r1s, r64s):
    """Every polynomial of ``ct`` times the per-limb word ``pt[l]``.

    Limbs whose modulus fits in 32 bits take the single-word reduction; wider
    limbs fall back to the 128-bit one.
    """
    out = np.empty_like(ct)
    for p in range(ct.shape[0]):
        for l in range(ct.shape[1]):
            q = qs[l]
            tmp = pt[l]
            if q < TWO32:
                r = r64s[l]
                for n in range(ct.shape[2]):
                    out[p, l, n] = barrett64(ct[p, l, n] * tmp, q, r)
            else:
                r0 = r0s[l]
                r1 = r1s[l]
                for n in range(ct.shape[2]):
                    lo, hi = mul_wide(ct[p, l, n], tmp)
                    out[p, l, n] = barrett128(lo, hi, q, r0, r1)
    return out


@_jit
def mul_plain_scalar_shoup(ct, pt, pt_shoup, qs, r64s):
    """Scalar product with a per-limb precomputed quotient for wide limbs.

    A constant multiplier admits ``floor(w * 2^64 / q)``, which replaces the
    128-bit Barrett reduction by one high multiply.  Narrow limbs keep the
    one-word Barrett path.  Results are the canonical residues either way.
    """
    out = np.empty_like(ct)
    for p in range(ct.shape[0]):
        for l in range(ct.shape[1]):
            q = qs[l]
            tmp = pt[l]
            if q < TWO32:
                r = r64s[l]
                for n in range(ct.shape[2]):
                    out[p, l, n] = barrett64(ct[p, l, n] * tmp, q, r)
            else:
                sh = pt_shoup[l]
                for n in range(ct.shape[2]):
                    out[p, l, n] = mulmod_shoup(ct[p, l, n], tmp, sh, q)
    return out


@_jit
def mul_pointwise(x, y, qs, r0s, r1s, r64s):
    """Limb-wise product of two (limbs, n) blocks."""
    out = np.empty_like(x)
    for l in range(x.shape[0]):
        q = qs[l]
        r0 = r0s[l]
        r1 = r1s[l]
        r64 = r64s[l]
        for n in range(x.shape[1]):
            out[l, n] = mulmod(x[l, n], y[l, n], q, r0, r1, r64)
    return out


@_jit
def mul_acc_pointwise(acc, x, y, qs, r0s, r1s, r64s):
    """acc += x * y, in place on the caller-owned ``acc``."""
    for l in range(x.shape[0]):
        q = qs[l]
        r0 = r0s[l]
        r1 = r1s[l]
        r64 = r64s[l]
        for n in range(x.shape[1]):
            acc[l, n] = addmod(acc[l, n], mulmod(x[l, n], y[l, n], q, r0, r1, r64), q)


@_jit
def tensor_product(a, b, qs, r0s, r1s, r64s):
    """(a0 b0, a0 b1 + a1 b0, a1 b1) for two size-2 blocks."""
    L = a.shape[1]
    N = a.shape[2]
    out = np.empty((3, L, N), dtype=a.dtype)
    for l in range(L):
        q = qs[l]
        r0 = r0s[l]
        r1 = r1s[l]
        r64 = r64s[l]
        for n in range(N):
            a0 = a[0, l, n]
            a1 = a[1, l, n]
            b0 = b[0, l, n]
            b1 = b[1, l, n]
            out[0, l, n] = mulmod(a0, b0, q, r0, r1, r64)
            out[1, l, n] = addmod(
                mulmod(a0, b1, q, r0, r1, r64), mulmod(a1, b0, q, r0, r1, r64), q
            )
            out[2, l, n] = mulmod(a1, b1, q, r0, r1, r64)
    return out


@_jit
def tensor_square(a, qs, r0s, r1s, r64s):
    L = a.shape[1]
    N = a.shape[2]
    out = np.empty((3, L, N), dtype=a.dtype)
    for l in range(L):
        q = qs[l]
        r0 = r0s[l]
        r1 = r1s[l]
        r64 = r64s[l]
        for n in range(N):
            a0 = a[0, l, n]
            a1 = a[1, l, n]
            out[0, l, n] = mulmod(a0, a0, q, r0, r1, r64)
            c = mulmod(a0, a1, q, r0, r1, r64)
            out[1, l, n] = addmod(c, c, q)
            out[2, l, n] = mulmod(a1, a1, q, r0, r1, r64)
    return out


# ---------------------------------------------------------------- NTT


@_jit
def ntt_forward_inplace(a, psi, psi_shoup, q):
    """Negacyclic Cooley-Tukey NTT; natural-order input, bit-reversed output."""
    N = a.shape[0]
    t = N
    m = 1
    while m < N:
        t >>= 1
        for i in range(m):
            j1 = 2 * i * t
            s = psi[m + i]
            s_sh = psi_shoup[m + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = mulmod_shoup(a[j + t], s, s_sh, q)
                a[j] = addmod(u, v, q)
                a[j + t] = submod(u, v, q)
        m <<= 1


@_jit
def ntt_inverse_inplace(a, ipsi, ipsi_shoup, ninv, ninv_shoup, q):
    """Gentleman-Sande inverse of :func:`ntt_forward_inplace`."""
    N = a.shape[0]
    t = 1
    m = N
    while m > 1:
        j1 = 0
        h = m >> 1
        for i in range(h):
            s = ipsi[h + i]
            s_sh = ipsi_shoup[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                a[j] = addmod(u, v, q)
                a[j + t] = mulmod_shoup(submod(u, v, q), s, s_sh, q)
            j1 += 2 * t
        t <<= 1
        m >>= 1
    for j in range(N):
        a[j] = mulmod_shoup(a[j], ninv, ninv_shoup, q)


@_jit
def ntt_forward_block(x, psi, psi_shoup, qs):
    """Forward NTT of every limb of a (limbs, n) block, out of place."""
    out = x.copy()
    for l in range(x.shape[0]):
        ntt_forward_inplace(out[l], psi[l], psi_shoup[l], qs[l])
    return out


@_jit
def ntt_inverse_block(x, ipsi, ipsi_shoup, ninv, ninv_shoup, qs):
    out = x.copy()
    for l in range(x.shape[0]):
        ntt_inverse_inplace(out[l], ipsi[l], ipsi_shoup[l], ninv[l], ninv_shoup[l], qs[l])
    return out


# ---------------------------------------------------------------- basis change


@_jit
def lift_centered(x, p, q):
    """Reduce residues mod ``p`` (read as centered integers) into [0, q)."""
    out = np.empty_like(x)
    half = p >> ONE
    for n in range(x.shape[0]):
        v = x[n]
        if v <= half:
            out[n] = v % q
        else:
            r = (p - v) % q
            out[n] = ZERO if r == ZERO else q - r
    return out


@_jit
def reduce_unsigned(x, q):
    out = np.empty_like(x)
    for n in range(x.shape[0]):
        out[n] = x[n] % q
    return out


@_jit
def sub_mul_scalar(x, y, s, q, r0, r1, r64):
    """(x - y) * s mod q for one limb."""
    out = np.empty_like(x)
    for n in range(x.shape[0]):
        out[n] = mulmod(submod(x[n], y[n], q), s, q, r0, r1, r64)
    return out


@_jit
def sub_mul_block(x, y, s, qs, r0s, r1s, r64s):
    """(x - y) * s[l] mod q_l over (polys, limbs, N) against (polys, limbs, N)."""
    out = np.empty_like(x)
    for p in range(x.shape[0]):
        for l in range(x.shape[1]):
            q = qs[l]
            for n in range(x.shape[2]):
                out[p, l, n] = mulmod(submod(x[p, l, n], y[p, l, n], q), s[l], q, r0s[l], r1s[l], r64s[l])
    return out


@_jit
def lift_rows(x, p, qs):
    """Lift each row of ``x`` (residues mod ``p``, centered) into every modulus in ``qs``."""
    out = np.empty((x.shape[0], qs.shape[0], x.shape[1]), dtype=np.uint64)
    for r in range(x.shape[0]):
        for l in range(qs.shape[0]):
            out[r, l] = lift_centered(x[r], p, qs[l])
    return out


# ---------------------------------------------------------------- tensor layers


@_jit
def gather_mac(x, idx, w, qs, r0s, r1s, r64s):
    """out[m] = sum_t x[idx[m, t]] * w[m, t] with scalar weights.

    ``x`` is (elements, polys, limbs, N); ``idx`` is (M, T) with -1 marking an
    absent tap; ``w`` is (M, T, limbs).  Taps are accumulated in ascending
    ``t`` order.
    """
    M = idx.shape[0]
    P = x.shape[1]
    L = x.shape[2]
    N = x.shape[3]
    out = np.zeros((M, P, L, N), dtype=np.uint64)
    for m in range(M):
        for t in range(idx.shape[1]):
            e = idx[m, t]
            if e < 0:
                continue
            for l in range(L):
                q = qs[l]
                r0 = r0s[l]
                r1 = r1s[l]
                r64 = r64s[l]
                wt = w[m, t, l]
                for p in range(P):
                    for n in range(N):
                        out[m, p, l, n] = addmod(out[m, p, l, n], mulmod(x[e, p, l, n], wt, q, r0, r1, r64), q)
    return out


@_jit
def gather_mul(x, idx, w, qs, r0s, r1s, r64s):
    """Products x[idx[t]] * w[t] kept separate: (T, polys, limbs, N)."""
    T = idx.shape[0]
    P = x.shape[1]
    L = x.shape[2]
    N = x.shape[3]
    out = np.empty((T, P, L, N), dtype=np.uint64)
    for t in range(T):
        e = idx[t]
        for l in range(L):
            q = qs[l]
            for p in range(P):
                for n in range(N):
                    out[t, p, l, n] = mulmod(x[e, p, l, n], w[t, l], q, r0s[l], r1s[l], r64s[l])
    return out


@_jit
def sum_blocks(x, qs):
    """Sum over the leading axis of (T, polys, limbs, N), in order."""
    out = np.zeros(x.shape[1:], dtype=np.uint64)
    for t in range(x.shape[0]):
        for p in range(x.shape[1]):
            for l in range(x.shape[2]):
                q = qs[l]
                for n in range(x.shape[3]):
                    out[p, l, n] = addmod(out[p, l, n], x[t, p, l, n], q)
    return out


@_jit
def mul_scalar_rows(x, w, qs, r0s, r1s, r64s):
    """Element e of (E, polys, limbs, N) times its own scalar plaintext w[e]."""
    out = np.empty_like(x)
    for e in range(x.shape[0]):
        for p in range(x.shape[1]):
            for l in range(x.shape[2]):
                q = qs[l]
                for n in range(x.shape[3]):
                    out[e, p, l, n] = mulmod(x[e, p, l, n], w[e, l], q, r0s[l], r1s[l], r64s[l])
    return out


@_jit
def add_scalar_rows_complex(x, b, unit, qs, r0s, r1s, r64s):
    """Add b[e] * (1 + i) to c0 of element e, ``unit`` being the NTT image of i.

    Under complex packing a broadcast real constant has to reach both the
    real and the imaginary half of every slot.
    """
    out = x.copy()
    for e in range(x.shape[0]):
        for l in range(x.shape[2]):
            q = qs[l]
            tmp = b[e, l]
            for n in range(x.shape[3]):
                v = addmod(x[e, 0, l, n], tmp, q)
                out[e, 0, l, n] = addmod(v, mulmod(tmp, unit[l, n], q, r0s[l], r1s[l], r64s[l]), q)
    return out


@_jit
def add_scalar_rows(x, b, qs):
    """Add scalar plaintext b[e] to c0 of element e; other polys are copied."""
    out = x.copy()
    for e in range(x.shape[0]):
        for l in range(x.shape[2]):
            q = qs[l]
            tmp = b[e, l]
            for n in range(x.shape[3]):
                out[e, 0, l, n] = addmod(x[e, 0, l, n], tmp, q)
    return out
