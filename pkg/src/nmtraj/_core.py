"""Compiled inner loops of the memory-window engine.

State layout shared by every routine (``R = M + 1`` ring slots, ``S = 2**max_in``):

``buf[E, i % R]``
    Survival amplitude at grid step ``i`` for the history in which exactly the
    in-window detections in bit set ``E`` have been accounted for (emitted
    before the boundary or inside the window before ``i``). ``buf[E, B]`` are
    the boundary branch states; ``buf[D, k]`` with ``D`` the full set is the
    unnormalised survival state at the current step ``k``.
``zbuf[n, E, i % R]``
    The same, with one extra emission destined for a candidate detection in
    channel ``n`` at step ``k``.
``meta``
    int64 ``[k, B, N, n_renorm, n_shortened, n_excess]``.
``dk, dn, dl``
    Step index, channel and usable kernel length of each in-window detection,
    oldest first.

Status codes: 0 ok, 1 window overflow, 2 probability budget exceeded,
3 survival norm vanished.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OK, OVERFLOW, STEP_SIZE, ZERO_NORM = 0, 1, 2, 3
RENORM_LOW = 1e-150
RENORM_HIGH = 1e150


@njit(cache=True)
def _mv(U, x0, x1):
    return U[0, 0] * x0 + U[0, 1] * x1, U[1, 0] * x0 + U[1, 1] * x1


@njit(cache=True)
def _kernel_len(meta, M, shorten_above, short_len):
    if shorten_above >= 0 and meta[2] >= shorten_above:
        return short_len
    return M


@njit(cache=True)
def amplitudes(U, sg, W, dt, buf, zbuf, amp, probs, dk, dn, dl, meta, shorten_above, short_len):
    """Fill ``amp[n]`` and ``probs[n]`` for a detection at the current step.

    Returns the squared norm of the current survival state.
    """
    k = meta[0]
    B = meta[1]
    N = meta[2]
    nch, M = W.shape
    R = buf.shape[1]
    nsub = 1 << N
    D = nsub - 1
    sk = k % R
    g0 = buf[D, sk, 0]
    g1 = buf[D, sk, 1]
    norm = g0.real * g0.real + g0.imag * g0.imag + g1.real * g1.real + g1.imag * g1.imag
    jlen = _kernel_len(meta, M, shorten_above, short_len)
    sB = B % R
    for n in range(nch):
        for E in range(nsub):
            zbuf[n, E, sB, 0] = 0.0
            zbuf[n, E, sB, 1] = 0.0
        for i in range(B, k):
            s = i % R
            s1 = (i + 1) % R
            d0 = k - i
            for E in range(nsub):
                x0 = zbuf[n, E, s, 0]
                x1 = zbuf[n, E, s, 1]
                if d0 < jlen:
                    x0 += sg * W[n, d0] * buf[E, s, 1]
                for j in range(N):
                    if (E >> j) & 1:
                        d = dk[j] - i
                        if d >= 0 and d < dl[j]:
                            x0 += sg * W[dn[j], d] * zbuf[n, E ^ (1 << j), s, 1]
                y0, y1 = _mv(U, x0, x1)
                zbuf[n, E, s1, 0] = y0
                zbuf[n, E, s1, 1] = y1
        a0 = zbuf[n, D, sk, 0]
        a1 = zbuf[n, D, sk, 1]
        if jlen > 0:
            a0 += sg * W[n, 0] * g1
        amp[n, 0] = a0
        amp[n, 1] = a1
        if norm > 0.0:
            probs[n] = dt * (abs(a0) ** 2 + abs(a1) ** 2) / norm
        else:
            probs[n] = 0.0
    return norm


@njit(cache=True)
def choose(probs, u):
    """Inverse-CDF channel choice; ``-1`` when ``u`` falls in the no-detection mass."""
    c = 0.0
    for n in range(probs.shape[0]):
        c += probs[n]
        if u < c:
            return n
    return -1


@njit(cache=True)
def commit(U, sg, W, buf, zbuf, dk, dn, dl, meta, lognorm, det, shorten_above, short_len, max_in):
    """Apply the outcome ``det`` of the current step and advance to ``k + 1``.

    ``amplitudes`` must have been called at this step (``zbuf`` is consumed).
    """
    k = meta[0]
    B = meta[1]
    N = meta[2]
    M = W.shape[1]
    R = buf.shape[1]
    if det >= 0:
        if N >= max_in:
            return OVERFLOW
        jlen = _kernel_len(meta, M, shorten_above, short_len)
        if jlen < M:
            meta[4] += 1
        m = N
        dk[m] = k
        dn[m] = det
        dl[m] = jlen
        bit = 1 << m
        for i in range(B, k + 1):
            s = i % R
            for E in range(bit):
                buf[E | bit, s, 0] = zbuf[det, E, s, 0]
                buf[E | bit, s, 1] = zbuf[det, E, s, 1]
        N += 1
        meta[2] = N
    # propagate every history to k + 1; a detection made at k may emit at k
    s = k % R
    s1 = (k + 1) % R
    for F in range(1 << N):
        x0 = buf[F, s, 0]
        x1 = buf[F, s, 1]
        for j in range(N):
            if (F >> j) & 1:
                d = dk[j] - k
                if d >= 0 and d < dl[j]:
                    x0 += sg * W[dn[j], d] * buf[F ^ (1 << j), s, 1]
        y0, y1 = _mv(U, x0, x1)
        buf[F, s1, 0] = y0
        buf[F, s1, 1] = y1
    # advance the boundary; detections now older than it are attributed to
    # pre-boundary emission, so only histories that contain them survive
    nB = k - M + 2
    if nB > B:
        B = nB
        meta[1] = B
        while N > 0 and dk[0] < B:
            for E in range(1 << (N - 1)):
                old = (E << 1) | 1
                for i in range(B, k + 2):
                    si = i % R
                    buf[E, si, 0] = buf[old, si, 0]
                    buf[E, si, 1] = buf[old, si, 1]
            for j in range(N - 1):
                dk[j] = dk[j + 1]
                dn[j] = dn[j + 1]
                dl[j] = dl[j + 1]
            N -= 1
        meta[2] = N
    meta[0] = k + 1
    D = (1 << N) - 1
    g0 = buf[D, s1, 0]
    g1 = buf[D, s1, 1]
    nn = abs(g0) ** 2 + abs(g1) ** 2
    if nn == 0.0 or not np.isfinite(nn):
        return ZERO_NORM
    if nn < RENORM_LOW or nn > RENORM_HIGH:
        f = 1.0 / np.sqrt(nn)
        for E in range(1 << N):
            for i in range(B, k + 2):
                si = i % R
                buf[E, si, 0] *= f
                buf[E, si, 1] *= f
        lognorm[0] += np.log(nn)
        meta[3] += 1
    return OK


@njit(cache=True)
def boundary_bloch(buf, meta, out):
    """Bloch vector of the weighted branch mixture at the boundary."""
    B = meta[1]
    N = meta[2]
    R = buf.shape[1]
    sB = B % R
    rgg = 0.0
    ree = 0.0
    rge = 0.0 + 0.0j
    for E in range(1 << N):
        a = buf[E, sB, 0]
        b = buf[E, sB, 1]
        rgg += abs(a) ** 2
        ree += abs(b) ** 2
        rge += a * np.conj(b)
    tr = rgg + ree
    if tr > 0.0:
        out[0] = 2.0 * rge.real / tr
        out[1] = 2.0 * rge.imag / tr
        out[2] = (ree - rgg) / tr
    else:
        out[0] = np.nan
        out[1] = np.nan
        out[2] = np.nan


@njit(cache=True)
def run_chunk(U, sg, W, dt, buf, zbuf, amp, probs, dk, dn, dl, meta, lognorm,
              shorten_above, short_len, max_in, uniforms, det_limit, stride,
              out_k, out_n, tr_k, tr_b, tr_bloch, tr_p, rescale_excess):
    """Step once per entry of ``uniforms`` or until ``det_limit`` detections.

    With ``rescale_excess`` a step whose probabilities sum above one has them
    divided by the sum (a detection is then certain) and ``meta[5]`` counts
    the event; otherwise the step stops with ``STEP_SIZE``.

    Returns ``(status, steps_done, n_detections, n_trace)``.
    """
    nd = 0
    nt = 0
    bl = np.empty(3)
    n_steps = uniforms.shape[0]
    for it in range(n_steps):
        ptot = 0.0
        norm = amplitudes(U, sg, W, dt, buf, zbuf, amp, probs, dk, dn, dl, meta,
                          shorten_above, short_len)
        if norm == 0.0:
            return ZERO_NORM, it, nd, nt
        for n in range(probs.shape[0]):
            ptot += probs[n]
        if ptot > 1.0:
            if not rescale_excess:
                return STEP_SIZE, it, nd, nt
            for n in range(probs.shape[0]):
                probs[n] /= ptot
            meta[5] += 1
        k = meta[0]
        if k % stride == 0:
            boundary_bloch(buf, meta, bl)
            tr_k[nt] = k
            tr_b[nt] = meta[1]
            tr_bloch[nt, 0] = bl[0]
            tr_bloch[nt, 1] = bl[1]
            tr_bloch[nt, 2] = bl[2]
            for n in range(probs.shape[0]):
                tr_p[nt, n] = probs[n]
            nt += 1
        det = choose(probs, uniforms[it])
        st = commit(U, sg, W, buf, zbuf, dk, dn, dl, meta, lognorm, det,
                    shorten_above, short_len, max_in)
        if st != OK:
            return st, it, nd, nt
        if det >= 0:
            out_k[nd] = k
            out_n[nd] = det
            nd += 1
            if nd >= det_limit:
                return OK, it + 1, nd, nt
    return OK, n_steps, nd, nt
