"""Inner loops for the ket and density-matrix solvers.

A propagation problem is described by

* ``node_t`` (2S+1,)       node times; step s spans nodes 2s, 2s+1 (midpoint), 2s+2
* ``Hn``     (2S+1, d, d)  effective Hamiltonian H - i/2 sum_k r_k O_k^+ O_k at the nodes
* ``Rn``     (2S+1, K)     collapse rates at the nodes
* ``ops``    (K, d, d)     collapse operators (rate excluded)
* ``M``      (S, m, m)     the one-step map of each step (:func:`rk4_maps` for kets,
                           :func:`magnus4_maps` for density matrices)

followed by ``n_tail`` steps of length ``tail_dt`` under a constant
generator, propagated exactly.

The equations are linear, so one step is a fixed matrix.  Building those
matrices once turns every full step into a small matrix-vector product.
Ket maps (rebuilt per trajectory when a HOM phase is drawn) are classical
RK4; density-matrix maps are fourth-order Magnus exponentials, which stay
exact when the generator only changes through commuting parts such as a
fast time-dependent detuning.  Partial steps (inside a jump bisection) fall back to
RK4 with linearly interpolated node data.

Everything here compiles under numba.  With numba disabled the small
helpers are swapped for numpy calls and the two density-matrix kernels for
vectorised numpy formulations (see the end of this module).
"""
import numpy as np
from scipy import linalg

from ._accel import HAS_NUMBA, jit

OK = 0
OUT_OF_UNIFORMS = 1
TOO_MANY_JUMPS = 2
NORM_FAULT = 3

NORM_GROWTH_TOL = 1e-10
BISECT_RESOLUTION = 0.1  # fraction of a step


def rk4_maps(Ln: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One-step RK4 maps for x' = L(t) x with L sampled at start, middle and end of each step.

    Ln has shape (2S+1, m, m), h shape (S,).  Plain numpy, batched over steps.
    """
    L0 = Ln[0:-1:2]
    L1 = Ln[1::2]
    L2 = Ln[2::2]
    hh = h[:, None, None]
    m = Ln.shape[1]
    eye = np.broadcast_to(np.eye(m, dtype=Ln.dtype), L0.shape)
    L1L0 = L1 @ L0
    L1L1 = L1 @ L1
    L1L1L0 = L1 @ L1L0
    k1 = L0
    k2 = L1 + 0.5 * hh * L1L0
    k3 = L1 + 0.5 * hh * L1L1 + 0.25 * hh**2 * L1L1L0
    k4 = L2 + hh * (L2 @ L1) + 0.5 * hh**2 * (L2 @ L1L1) + 0.25 * hh**3 * (L2 @ L1L1L0)
    return np.ascontiguousarray(eye + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


MAGNUS_CHUNK = 65536


def magnus4_maps(Ln: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Fourth-order Magnus maps exp(Omega) from the same start/middle/end samples.

    Omega = h B0 + h^2/12 [L2 - L0, B0] with B0 = (L0 + 4 L1 + L2) / 6
    (Simpson moments of the generator).  Built in chunks to bound memory.
    """
    S = len(h)
    m = Ln.shape[1]
    out = np.empty((S, m, m), dtype=complex)
    for a in range(0, S, MAGNUS_CHUNK):
        b = min(S, a + MAGNUS_CHUNK)
        L0 = Ln[2 * a : 2 * b : 2]
        L1 = Ln[2 * a + 1 : 2 * b + 1 : 2]
        L2 = Ln[2 * a + 2 : 2 * b + 2 : 2]
        hh = h[a:b, None, None]
        B0 = (L0 + 4.0 * L1 + L2) / 6.0
        D = L2 - L0
        out[a:b] = linalg.expm(hh * B0 + hh**2 / 12.0 * (D @ B0 - B0 @ D))
    return out


@jit
def _apply(M, x, out):
    m = x.shape[0]
    for i in range(m):
        s = 0j
        for j in range(m):
            s += M[i, j] * x[j]
        out[i] = s


@jit
def _norm2(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i].real * x[i].real + x[i].imag * x[i].imag
    return s


@jit
def _interp(A, s, f):
    """Node data at fraction f of step s (piecewise linear through the midpoint)."""
    if f <= 0.5:
        w = 2.0 * f
        return (1.0 - w) * A[2 * s] + w * A[2 * s + 1]
    w = 2.0 * f - 1.0
    return (1.0 - w) * A[2 * s + 1] + w * A[2 * s + 2]


@jit
def _deriv(H, x):
    d = x.shape[0]
    out = np.zeros(d, dtype=np.complex128)
    for i in range(d):
        s = 0j
        for j in range(d):
            s += H[i, j] * x[j]
        out[i] = -1j * s
    return out


@jit
def _ket_partial(psi, node_t, Hn, s, fa, fb):
    """RK4 from fraction fa to fb of fine step s."""
    dt = (node_t[2 * s + 2] - node_t[2 * s]) * (fb - fa)
    H0 = _interp(Hn, s, fa)
    H1 = _interp(Hn, s, 0.5 * (fa + fb))
    H2 = _interp(Hn, s, fb)
    k1 = _deriv(H0, psi)
    k2 = _deriv(H1, psi + 0.5 * dt * k1)
    k3 = _deriv(H1, psi + 0.5 * dt * k2)
    k4 = _deriv(H2, psi + dt * k3)
    return psi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@jit
def _ket_tail(psi, lam, V, Vinv, tau):
    d = psi.shape[0]
    y = np.zeros(d, dtype=np.complex128)
    _apply(Vinv, psi, y)
    for i in range(d):
        y[i] *= np.exp(-1j * lam[i] * tau)
    out = np.zeros(d, dtype=np.complex128)
    _apply(V, y, out)
    return out


@jit
def _advance(psi, step, S, fa, fb, node_t, Hn, Mk, lam, V, Vinv, tail_dt, out):
    if step < S:
        if fa == 0.0 and fb == 1.0:
            _apply(Mk[step], psi, out)
        else:
            out[:] = _ket_partial(psi, node_t, Hn, step, fa, fb)
    else:
        out[:] = _ket_tail(psi, lam, V, Vinv, (fb - fa) * tail_dt)


@jit
def run_trajectory_kernel(
    node_t, Hn, Rn, ops, Mk,
    tail_dt, n_tail, tail_lam, tail_V, tail_Vinv, tail_rates,
    psi0, uniforms, max_jumps, rec_steps, obs,
):
    """One quantum-jump trajectory (norm-threshold protocol).

    Returns (status, n_jumps, jump_t, jump_k, n_uniforms_used, recorded, final_norm).
    ``recorded[i]`` is <psi|obs|psi>/<psi|psi> at the start of global step
    rec_steps[i] (the total step count means the final state).
    """
    S = (node_t.shape[0] - 1) // 2
    K = ops.shape[0]
    d = psi0.shape[0]
    total = S + n_tail
    t_tail0 = node_t[node_t.shape[0] - 1]
    psi = psi0.astype(np.complex128).copy()
    buf = np.zeros(d, dtype=np.complex128)
    tmp = np.zeros(d, dtype=np.complex128)
    jump_t = np.zeros(max_jumps)
    jump_k = np.zeros(max_jumps, dtype=np.int64)
    recorded = np.zeros(rec_steps.shape[0])
    w = np.zeros(K)
    nj = 0
    ui = 0
    ri = 0
    nu = uniforms.shape[0]
    if nu == 0:
        return OUT_OF_UNIFORMS, nj, jump_t, jump_k, ui, recorded, 0.0
    r = uniforms[ui]
    ui += 1
    norm_ref = _norm2(psi)
    for step in range(total + 1):
        while ri < rec_steps.shape[0] and rec_steps[ri] == step:
            _apply(obs, psi, tmp)
            num = 0.0
            for i in range(d):
                num += (np.conj(psi[i]) * tmp[i]).real
            recorded[ri] = num / _norm2(psi)
            ri += 1
        if step == total:
            break
        fa = 0.0
        while True:
            _advance(psi, step, S, fa, 1.0, node_t, Hn, Mk, tail_lam, tail_V, tail_Vinv, tail_dt, buf)
            n_end = _norm2(buf)
            if n_end > norm_ref * (1.0 + NORM_GROWTH_TOL):
                return NORM_FAULT, nj, jump_t, jump_k, ui, recorded, n_end
            if n_end >= r:
                psi[:] = buf
                norm_ref = n_end
                break
            # the norm crosses r inside this step: bisect the crossing
            lo = fa
            hi = 1.0
            while hi - lo > BISECT_RESOLUTION:
                mid = 0.5 * (lo + hi)
                _advance(psi, step, S, fa, mid, node_t, Hn, Mk, tail_lam, tail_V, tail_Vinv, tail_dt, buf)
                if _norm2(buf) < r:
                    hi = mid
                else:
                    lo = mid
            _advance(psi, step, S, fa, hi, node_t, Hn, Mk, tail_lam, tail_V, tail_Vinv, tail_dt, buf)
            if step < S:
                t0 = node_t[2 * step]
                tj = t0 + hi * (node_t[2 * step + 2] - t0)
                rates = _interp(Rn, step, hi)
            else:
                tj = t_tail0 + (step - S + hi) * tail_dt
                rates = tail_rates
            wsum = 0.0
            for k in range(K):
                w[k] = 0.0
                if rates[k] > 0.0:
                    _apply(ops[k], buf, tmp)
                    w[k] = rates[k] * _norm2(tmp)
                    wsum += w[k]
            if ui >= nu:
                return OUT_OF_UNIFORMS, nj, jump_t, jump_k, ui, recorded, _norm2(buf)
            u2 = uniforms[ui] * wsum
            ui += 1
            kk = -1
            acc = 0.0
            for k in range(K):
                acc += w[k]
                if w[k] > 0.0 and u2 < acc:
                    kk = k
                    break
            if kk < 0:
                # u2 landed on the rounding edge: take the last channel with weight
                for k in range(K):
                    if w[k] > 0.0:
                        kk = k
            if nj >= max_jumps:
                return TOO_MANY_JUMPS, nj, jump_t, jump_k, ui, recorded, _norm2(buf)
            jump_t[nj] = tj
            jump_k[nj] = kk
            nj += 1
            _apply(ops[kk], buf, psi)
            nn = np.sqrt(_norm2(psi))
            for i in range(d):
                psi[i] /= nn
            norm_ref = 1.0
            if ui >= nu:
                return OUT_OF_UNIFORMS, nj, jump_t, jump_k, ui, recorded, 1.0
            r = uniforms[ui]
            ui += 1
            fa = hi
    return OK, nj, jump_t, jump_k, ui, recorded, _norm2(psi)


# ------------------------------------------------------------ density matrix
# density matrices and regression operators travel as row-major vectors


@jit
def evolve_vec_kernel(M, n_tail, tail_P, x0):
    """State vector at every step boundary, shape (S + n_tail + 1, m)."""
    S = M.shape[0]
    m = x0.shape[0]
    out = np.zeros((S + n_tail + 1, m), dtype=np.complex128)
    out[0] = x0
    for s in range(S):
        _apply(M[s], out[s], out[s + 1])
    for s in range(n_tail):
        _apply(tail_P, out[S + s], out[S + s + 1])
    return out


@jit
def regression_kernel(M, n_tail, tail_P, rhos, times, slice_steps, store, lower, raise_, proj):
    """Two-time correlations by the quantum regression theorem.

    For every slice step j (time t) propagates X = rho(t) sigma+ and
    Y = sigma- rho(t) sigma+ to all later steps t' and evaluates

        G1(t, t') = Tr[sigma- X(t')]          = <sigma+(t) sigma-(t')>
        G2(t, t') = Tr[sigma+sigma- Y(t')]    = <sigma+(t) sigma+(t') sigma-(t') sigma-(t)>

    ``rhos`` are row-major vectorised density matrices.  Returns the
    t'-integrals (t' >= t, trapezoid on the full step grid) of |G1|^2 and G2
    for every slice.  Both functions are kept on the slices with
    ``store[a] >= 0`` (row/column ``store[a]`` of the returned grids).

    The loop runs over steps, advancing every slice already started, so each
    step map is loaded once.
    """
    S = M.shape[0]
    total = S + n_tail
    ns = slice_steps.shape[0]
    m = rhos.shape[1]
    d = lower.shape[0]
    nst = 0
    for a in range(ns):
        if store[a] >= 0:
            nst += 1
    G1 = np.zeros((nst, nst), dtype=np.complex128)
    G2 = np.zeros((nst, nst))
    int_g1sq = np.zeros(ns)
    int_g2 = np.zeros(ns)
    prev1 = np.zeros(ns)
    prev2 = np.zeros(ns)
    X = np.zeros((ns, m), dtype=np.complex128)
    Y = np.zeros((ns, m), dtype=np.complex128)
    g1s = np.zeros(ns, dtype=np.complex128)
    c2s = np.zeros(ns)
    xn = np.zeros(m, dtype=np.complex128)
    yn = np.zeros(m, dtype=np.complex128)
    n_act = 0
    for k in range(total + 1):
        start = n_act
        while n_act < ns and slice_steps[n_act] == k:
            a = n_act
            j = slice_steps[a]
            for p in range(d):
                for q in range(d):
                    sx = 0j
                    sy = 0j
                    for l in range(d):
                        sx += rhos[j, p * d + l] * raise_[l, q]
                        for n in range(d):
                            sy += lower[p, l] * rhos[j, l * d + n] * raise_[n, q]
                    X[a, p * d + q] = sx
                    Y[a, p * d + q] = sy
            n_act += 1
        h = 0.0
        if k > 0:
            h = times[k] - times[k - 1]
        for a in range(n_act):
            if a < start:
                if k - 1 < S:
                    _apply(M[k - 1], X[a], xn)
                    _apply(M[k - 1], Y[a], yn)
                else:
                    _apply(tail_P, X[a], xn)
                    _apply(tail_P, Y[a], yn)
                X[a, :] = xn
                Y[a, :] = yn
            g1 = 0j
            g2 = 0j
            for p in range(d):
                for l in range(d):
                    g1 += lower[p, l] * X[a, l * d + p]
                    g2 += proj[p, l] * Y[a, l * d + p]
            c1 = g1.real * g1.real + g1.imag * g1.imag
            c2 = g2.real
            if a < start:
                int_g1sq[a] += 0.5 * h * (prev1[a] + c1)
                int_g2[a] += 0.5 * h * (prev2[a] + c2)
            prev1[a] = c1
            prev2[a] = c2
            g1s[a] = g1
            c2s[a] = c2
        for b in range(start, n_act):
            if store[b] >= 0:
                for a in range(b + 1):
                    if store[a] >= 0:
                        G1[store[a], store[b]] = g1s[a]
                        G2[store[a], store[b]] = c2s[a]
    return int_g1sq, int_g2, G1, G2


# ------------------------------------------------------------ numpy fallback


def _apply_np(M, x, out):
    np.dot(M, x, out=out)


def _norm2_np(x):
    return float(np.vdot(x, x).real)


def _deriv_np(H, x):
    return -1j * (H @ x)


def _ket_tail_np(psi, lam, V, Vinv, tau):
    return V @ (np.exp(-1j * lam * tau) * (Vinv @ psi))


def evolve_vec_numpy(M, n_tail, tail_P, x0):
    S = M.shape[0]
    out = np.empty((S + n_tail + 1, x0.shape[0]), dtype=np.complex128)
    out[0] = x0
    for s in range(S):
        np.dot(M[s], out[s], out=out[s + 1])
    for s in range(n_tail):
        np.dot(tail_P, out[S + s], out=out[S + s + 1])
    return out


def regression_numpy(M, n_tail, tail_P, rhos, times, slice_steps, store, lower, raise_, proj):
    """Same contract as :func:`regression_kernel`, sweeping all slices together.

    One pass over the steps; at step k every slice that has started is
    advanced with a single batched matrix product.
    """
    S = M.shape[0]
    total = S + n_tail
    ns = slice_steps.shape[0]
    d = lower.shape[0]
    nst = int((store >= 0).sum())
    G1 = np.zeros((nst, nst), dtype=np.complex128)
    G2 = np.zeros((nst, nst))
    R = rhos[slice_steps].reshape(ns, d, d)
    X = (R @ raise_).reshape(ns, d * d)
    Y = (lower @ R @ raise_).reshape(ns, d * d)
    # Tr[A Z] on a row-major vec(Z) is a dot product with vec(A^T)
    a1 = lower.T.reshape(-1)
    a2 = proj.T.reshape(-1).astype(np.complex128)
    int1 = np.zeros(ns)
    int2 = np.zeros(ns)
    prev1 = np.zeros(ns)
    prev2 = np.zeros(ns)
    stored = np.nonzero(store >= 0)[0]
    n_act = 0
    for k in range(total + 1):
        start = n_act
        while n_act < ns and slice_steps[n_act] == k:
            n_act += 1
        old = slice(0, start)
        if k > 0 and start > 0:
            P = M[k - 1] if k - 1 < S else tail_P
            X[old] = X[old] @ P.T
            Y[old] = Y[old] @ P.T
        act = slice(0, n_act)
        g1 = X[act] @ a1
        c1 = g1.real**2 + g1.imag**2
        c2 = (Y[act] @ a2).real
        if start > 0 and k > 0:
            h = times[k] - times[k - 1]
            int1[old] += 0.5 * h * (prev1[old] + c1[:start])
            int2[old] += 0.5 * h * (prev2[old] + c2[:start])
        prev1[act] = c1
        prev2[act] = c2
        # fill the stored columns whose slice sits at this step
        cols = stored[(slice_steps[stored] == k)]
        if cols.size:
            rows = stored[stored < n_act]
            for b in cols:
                G1[store[rows], store[b]] = g1[rows]
                G2[store[rows], store[b]] = c2[rows]
    return int1, int2, G1, G2


if not HAS_NUMBA:
    _apply = _apply_np  # noqa: F811
    _norm2 = _norm2_np  # noqa: F811
    _deriv = _deriv_np  # noqa: F811
    _ket_tail = _ket_tail_np  # noqa: F811
    evolve_vec_kernel = evolve_vec_numpy  # noqa: F811
    regression_kernel = regression_numpy  # noqa: F811
