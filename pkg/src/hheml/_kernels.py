"""Numba kernels for word-sized RNS arithmetic.

Residues are int64 values in ``[0, q)`` with every modulus below ``2**50``.
Products are reduced with a floating-point quotient estimate followed by an
exact correction in wrapping 64-bit integer arithmetic, so no 128-bit type is
needed.  Every kernel addresses its modulus through a table index (``tix``)
into stacked per-prime tables, which lets one call mix limbs of several bases.
"""

import numpy as np
from numba import njit

MAX_MODULUS_BITS = 50


@njit(inline="always")
def _reduce_once(r, q):
    # r in [-q, 2q) -> [0, q)
    r += q & (r >> 63)
    r -= q
    r += q & (r >> 63)
    return r


@njit(inline="always")
def _fold(x, q):
    # x in [0, 2q) -> [0, q); every modulus lies in (2**49, 2**50)
    x -= q
    x += q & (x >> 63)
    return x


@njit(inline="always")
def mulmod(a, b, q, qf):
    e = np.int64(np.float64(a) * np.float64(b) * qf)
    return _reduce_once(a * b - e * q, q)


@njit(inline="always")
def mulmod_pre(a, w, wf, q):
    # wf = w / q precomputed
    e = np.int64(np.float64(a) * wf)
    return _reduce_once(a * w - e * q, q)


@njit(inline="always")
def _ct_block(top, bot, w, wf, q):
    for j in range(top.shape[0]):
        u = top[j]
        v = mulmod_pre(bot[j], w, wf, q)
        s = u + v - q
        s += q & (s >> 63)
        d = u - v
        d += q & (d >> 63)
        top[j] = s
        bot[j] = d


@njit(inline="always")
def _gs_block(top, bot, w, wf, q):
    for j in range(top.shape[0]):
        u = top[j]
        v = bot[j]
        s = u + v - q
        s += q & (s >> 63)
        d = u - v
        d += q & (d >> 63)
        top[j] = s
        bot[j] = mulmod_pre(d, w, wf, q)


@njit(cache=True, boundscheck=False)
def ntt_forward(a, tix, qs, psi, psif):
    """In-place negacyclic NTT of every row; output in bit-reversed order."""
    k, n = a.shape
    for r in range(k):
        ti = tix[r]
        q = qs[ti]
        row = a[r]
        t = n
        m = 1
        while m < n:
            t >>= 1
            if t >= 16:
                for i in range(m):
                    j1 = 2 * i * t
                    _ct_block(row[j1:j1 + t], row[j1 + t:j1 + 2 * t],
                              psi[ti, m + i], psif[ti, m + i], q)
            else:
                for i in range(m):
                    j1 = 2 * i * t
                    w = psi[ti, m + i]
                    wf = psif[ti, m + i]
                    for j in range(j1, j1 + t):
                        u = row[j]
                        v = mulmod_pre(row[j + t], w, wf, q)
                        s = u + v - q
                        s += q & (s >> 63)
                        d = u - v
                        d += q & (d >> 63)
                        row[j] = s
                        row[j + t] = d
            m <<= 1


@njit(cache=True, boundscheck=False)
def ntt_inverse(a, tix, qs, ipsi, ipsif, ninv, ninvf):
    """In-place inverse of :func:`ntt_forward` (bit-reversed in, natural out)."""
    k, n = a.shape
    for r in range(k):
        ti = tix[r]
        q = qs[ti]
        row = a[r]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            j1 = 0
            if t >= 16:
                for i in range(h):
                    _gs_block(row[j1:j1 + t], row[j1 + t:j1 + 2 * t],
                              ipsi[ti, h + i], ipsif[ti, h + i], q)
                    j1 += 2 * t
            else:
                for i in range(h):
                    w = ipsi[ti, h + i]
                    wf = ipsif[ti, h + i]
                    for j in range(j1, j1 + t):
                        u = row[j]
                        v = row[j + t]
                        s = u + v - q
                        s += q & (s >> 63)
                        d = u - v
                        d += q & (d >> 63)
                        row[j] = s
                        row[j + t] = mulmod_pre(d, w, wf, q)
                    j1 += 2 * t
            t <<= 1
            m = h
        w = ninv[ti]
        wf = ninvf[ti]
        for j in range(n):
            row[j] = mulmod_pre(row[j], w, wf, q)


@njit(cache=True, boundscheck=False)
def mul_rows(a, b, tix, qs, qf):
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        q = qs[tix[r]]
        f = qf[tix[r]]
        for j in range(n):
            out[r, j] = mulmod(a[r, j], b[r, j], q, f)
    return out


@njit(cache=True, boundscheck=False)
def mul_rows_acc(acc, a, b, tix, qs, qf):
    """acc += a * b (row-wise, in place)."""
    k, n = a.shape
    for r in range(k):
        q = qs[tix[r]]
        f = qf[tix[r]]
        for j in range(n):
            s = acc[r, j] + mulmod(a[r, j], b[r, j], q, f) - q
            s += q & (s >> 63)
            acc[r, j] = s


@njit(cache=True, boundscheck=False)
def add_rows(a, b, tix, qs):
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        q = qs[tix[r]]
        for j in range(n):
            s = a[r, j] + b[r, j] - q
            s += q & (s >> 63)
            out[r, j] = s
    return out


@njit(cache=True, boundscheck=False)
def sub_rows(a, b, tix, qs):
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        q = qs[tix[r]]
        for j in range(n):
            d = a[r, j] - b[r, j]
            d += q & (d >> 63)
            out[r, j] = d
    return out


@njit(cache=True, boundscheck=False)
def neg_rows(a, tix, qs):
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        q = qs[tix[r]]
        for j in range(n):
            v = a[r, j]
            out[r, j] = q - v if v != 0 else 0
    return out


@njit(cache=True, boundscheck=False)
def scalar_mul_rows(a, s, tix, qs, qf):
    """Row r multiplied by the scalar s[r] (already reduced mod its prime)."""
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        q = qs[tix[r]]
        w = s[r]
        wf = np.float64(w) / np.float64(q)
        for j in range(n):
            out[r, j] = mulmod_pre(a[r, j], w, wf, q)
    return out


@njit(cache=True, boundscheck=False)
def signed_to_rows(v, tix, qs):
    """Reduce a signed integer vector (|v| < 2**62) into every row's modulus."""
    k = tix.shape[0]
    n = v.shape[0]
    out = np.empty((k, n), dtype=np.int64)
    for r in range(k):
        q = qs[tix[r]]
        for j in range(n):
            x = v[j] % q
            out[r, j] = x
    return out


@njit(cache=True, boundscheck=False)
def gather_rows(a, idx):
    k, n = a.shape
    out = np.empty((k, idx.shape[0]), dtype=np.int64)
    for r in range(k):
        for j in range(idx.shape[0]):
            out[r, j] = a[r, idx[j]]
    return out


@njit(cache=True, boundscheck=False)
def decompose_digits(coef, ntt_in, tix_q, tix_ext, qs):
    """Digit decomposition for hybrid key switching (one digit per limb).

    ``coef`` holds the input in coefficient form (limbs of Q), ``ntt_in`` the
    same polynomial in NTT form.  Returns array (digits, ext_limbs, N) whose
    row ``e`` of digit ``i`` is ``[coef_i]`` reduced mod ``qs[tix_ext[e]]``; the
    caller NTTs every row except the digit's own limb, which is copied from
    ``ntt_in`` and flagged in the returned mask.
    """
    d, n = coef.shape
    ke = tix_ext.shape[0]
    out = np.empty((d, ke, n), dtype=np.int64)
    for i in range(d):
        qi = qs[tix_q[i]]
        for e in range(ke):
            q = qs[tix_ext[e]]
            if e == i:
                for j in range(n):
                    out[i, e, j] = ntt_in[i, j]
            elif q >= qi:
                for j in range(n):
                    out[i, e, j] = coef[i, j]
            else:
                for j in range(n):
                    x = coef[i, j]
                    out[i, e, j] = x - q if x >= q else x
    return out


@njit(cache=True, boundscheck=False)
def ntt_forward_skip_diag(a3, tix_ext, qs, psi, psif):
    """NTT every (digit, limb) row of a 3-d digit array except limb == digit."""
    d, ke, n = a3.shape
    one = np.empty(1, dtype=np.int64)
    for i in range(d):
        for e in range(ke):
            if e == i:
                continue
            one[0] = tix_ext[e]
            ntt_forward(a3[i, e:e + 1], one, qs, psi, psif)


@njit(cache=True, boundscheck=False)
def keyswitch_mac(digits, key, tix_ext, kmap, qs, qf):
    """Inner product of digits with key material.

    digits: (d, ke, N); key: (D, 2, KL, N) with KL key limbs; ``kmap[e]``
    gives the key limb holding extended limb ``e``.  Returns (2, ke, N).
    """
    d, ke, n = digits.shape
    out = np.zeros((2, ke, n), dtype=np.int64)
    for c in range(2):
        for e in range(ke):
            q = qs[tix_ext[e]]
            f = qf[tix_ext[e]]
            kl = kmap[e]
            for i in range(d):
                for j in range(n):
                    s = out[c, e, j] + mulmod(digits[i, e, j], key[i, c, kl, j], q, f) - q
                    s += q & (s >> 63)
                    out[c, e, j] = s
    return out


@njit(cache=True, boundscheck=False)
def divide_round_last(a_ntt, last_coef_ntt, tix, qs, qf, inv_last):
    """Exact rounded division by the dropped modulus.

    ``a_ntt`` rows are the kept limbs (NTT form), ``last_coef_ntt`` rows are the
    centred dropped-limb residue re-reduced into each kept limb and NTT'd.
    Returns (a - last) * inv_last per kept limb.
    """
    k, n = a_ntt.shape
    out = np.empty_like(a_ntt)
    for r in range(k):
        q = qs[tix[r]]
        w = inv_last[r]
        wf = np.float64(w) / np.float64(q)
        for j in range(n):
            d = a_ntt[r, j] - last_coef_ntt[r, j]
            d += q & (d >> 63)
            out[r, j] = mulmod_pre(d, w, wf, q)
    return out


@njit(cache=True, boundscheck=False)
def lift_centered_rows(x, p_last, tix, qs):
    """Centre x in (-p_last/2, p_last/2] and reduce it into each row modulus.

    The half of ``p_last`` is added beforehand by the caller when rounding is
    wanted, which turns floor division into rounded division.
    """
    n = x.shape[0]
    k = tix.shape[0]
    half = p_last >> 1
    out = np.empty((k, n), dtype=np.int64)
    for r in range(k):
        q = qs[tix[r]]
        for j in range(n):
            v = x[j]
            if v > half:
                v = v - p_last
            v = v % q
            out[r, j] = v
    return out


@njit(cache=True, boundscheck=False)
def add_scalar_row(x, c, q):
    n = x.shape[0]
    out = np.empty_like(x)
    for j in range(n):
        s = x[j] + c - q
        s += q & (s >> 63)
        out[j] = s
    return out


@njit(cache=True, boundscheck=False)
def base_convert_exact(x, tix_src, tix_dst, qs, qf, qhat_inv, qhat_mod_dst, Q_mod_dst):
    """Centred exact fast base conversion from a source to a target basis.

    x: (ks, N) coefficient residues in the source basis.
    qhat_inv[i] = (Q/q_i)^-1 mod q_i, qhat_mod_dst[i, j] = (Q/q_i) mod b_j,
    Q_mod_dst[j] = Q mod b_j.  The overflow count is recovered with a
    floating-point sum so the centred representative is converted.
    """
    ks, n = x.shape
    kd = tix_dst.shape[0]
    out = np.empty((kd, n), dtype=np.int64)
    y = np.empty(ks, dtype=np.int64)
    for j in range(n):
        frac = 0.0
        for i in range(ks):
            q = qs[tix_src[i]]
            yi = mulmod(x[i, j], qhat_inv[i], q, qf[tix_src[i]])
            y[i] = yi
            frac += np.float64(yi) / np.float64(q)
        v = np.int64(np.floor(frac + 0.5))
        for t in range(kd):
            b = qs[tix_dst[t]]
            bf = qf[tix_dst[t]]
            acc = 0
            for i in range(ks):
                s = acc + mulmod(_fold(y[i], b), qhat_mod_dst[i, t], b, bf) - b
                s += b & (s >> 63)
                acc = s
            corr = mulmod(v % b, Q_mod_dst[t], b, bf)
            d = acc - corr
            d += b & (d >> 63)
            out[t, j] = d
    return out


@njit(cache=True, boundscheck=False)
def scale_round_to_aux(xq, xb, tix_q, tix_b, qs, qf, dhat_inv_q, dhat_inv_b,
                       omega, theta, own_b):
    """round(t * x / Q) in the auxiliary basis B, from x given over Q and B.

    With D = Q*B and y_r = [x_r * (D/r)^-1]_r:
      t*x/Q = sum_{r in Q} y_r * t*B/r + sum_{r in B} y_r * t*B/r - v*t*B
    omega[i, j] = floor(t*B/q_i) mod b_j, theta[i] = frac(t*B/q_i),
    own_b[j] = t*B/b_j mod b_j.
    """
    kq, n = xq.shape
    kb = xb.shape[0]
    out = np.empty((kb, n), dtype=np.int64)
    y = np.empty(kq, dtype=np.int64)
    for j in range(n):
        frac = 0.0
        for i in range(kq):
            q = qs[tix_q[i]]
            yi = mulmod(xq[i, j], dhat_inv_q[i], q, qf[tix_q[i]])
            y[i] = yi
            frac += np.float64(yi) * theta[i]
        rnd = np.int64(np.floor(frac + 0.5))
        for t in range(kb):
            b = qs[tix_b[t]]
            bf = qf[tix_b[t]]
            yb = mulmod(xb[t, j], dhat_inv_b[t], b, bf)
            acc = mulmod(yb, own_b[t], b, bf)
            for i in range(kq):
                s = acc + mulmod(_fold(y[i], b), omega[i, t], b, bf) - b
                s += b & (s >> 63)
                acc = s
            s = acc + rnd % b - b
            s += b & (s >> 63)
            out[t, j] = s
    return out


@njit(cache=True, boundscheck=False)
def scale_round_to_plain(x, tix, qs, qf, qhat_inv, t_over_q, t):
    """round(t * x / Q) mod t for x given over Q (decryption).

    Also returns the largest distance of t*x/Q to its nearest integer, a
    floating-point proxy for the invariant noise (0.5 means exhausted).
    """
    k, n = x.shape
    out = np.empty(n, dtype=np.int64)
    worst = 0.0
    for j in range(n):
        acc = 0.0
        for i in range(k):
            q = qs[tix[i]]
            yi = mulmod(x[i, j], qhat_inv[i], q, qf[tix[i]])
            acc += np.float64(yi) * t_over_q[i]
        r = np.floor(acc + 0.5)
        dist = abs(acc - r)
        if dist > worst:
            worst = dist
        out[j] = np.int64(r) % t
    return out, worst
