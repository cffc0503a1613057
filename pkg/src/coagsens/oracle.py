"""Deterministic reference integrators.

Two systems are integrated with classic fixed-step RK4 on a size grid
truncated at ``x_max``:

* the plain pairwise-merge population balance (gain by convolution of
  the density with itself, loss against all tracked sizes; pairs whose
  sum exceeds the truncation contribute loss only), and
* the three-class limit system for the double-coupled pair process,
  tracking (common, plus-only, minus-only) densities.

Everything is dense float64 indexed by integer size; index 0 is unused
and kept at zero so convolutions line up with sizes directly.

For sum kernels a(x+y) every pairwise gain collapses onto a single
self-convolution and, less obviously, the three-body reduction of the
coupled channel collapses too: the two competing one-sided rates have a
partner-independent ratio, so the pointwise maximum over triples equals
the larger of the two collapsed pair fluxes.  The generic path keeps
the honest per-size triple reduction (rank-1 outer maxima) and is
intended for modest truncation bounds.
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import FactorizedMajorant, KernelSpec, build_majorant, kernel_pair

__all__ = [
    "OracleError",
    "monodisperse",
    "monodisperse_triple",
    "integrate_smoluchowski",
    "central_difference_ref",
    "integrate_coupled_limit",
    "canonical_triple",
]

NEG_TOL = -1e-12


class OracleError(RuntimeError):
    """Integration produced an invalid state (step size too coarse)."""


def _as_density(values, x_max: int) -> np.ndarray:
    """Coerce a dict {size: density} or array-like to the dense layout."""
    out = np.zeros(x_max + 1, dtype=np.float64)
    if isinstance(values, dict):
        for size, dens in values.items():
            size = int(size)
            if not 1 <= size <= x_max:
                raise ValueError(f"size {size} outside 1..{x_max}")
            out[size] = float(dens)
    else:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size > x_max + 1:
            raise ValueError("density array longer than x_max + 1")
        out[:arr.size] = arr
        out[0] = 0.0
    if np.any(out < 0.0):
        raise ValueError("negative initial density")
    return out


def monodisperse(x_max: int, size: int = 1, density: float = 1.0) -> np.ndarray:
    return _as_density({size: density}, x_max)


def monodisperse_triple(x_max: int, size: int = 1, density: float = 1.0):
    """All mass in the common class: the coupled start used throughout."""
    zero = np.zeros(x_max + 1, dtype=np.float64)
    return monodisperse(x_max, size, density), zero.copy(), zero.copy()


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if t[0] < 0.0 or np.any(np.diff(t) <= 0.0):
        raise ValueError("t_grid must be non-negative and strictly increasing")
    return t


def _grid_axes(x_max: int):
    # index 0 evaluates at a placeholder mass of 1 and is zeroed out below
    s = np.arange(x_max + 1, dtype=np.float64)
    s[0] = 1.0
    return s[:, None], s[None, :]


def _kernel_matrix(kernel: KernelSpec, x_max: int) -> np.ndarray:
    xg, yg = _grid_axes(x_max)
    mat = kernel.rate_grid(xg, yg)
    mat[0, :] = 0.0
    mat[:, 0] = 0.0
    return np.ascontiguousarray(mat)


def _majorant_matrix(majorant: FactorizedMajorant, x_max: int) -> np.ndarray:
    xg, yg = _grid_axes(x_max)
    mat = np.broadcast_to(majorant.value(xg, yg),
                          (x_max + 1, x_max + 1)).copy()
    mat[0, :] = 0.0
    mat[:, 0] = 0.0
    return np.ascontiguousarray(mat)


def _conv(u: np.ndarray, v: np.ndarray, x_max: int) -> np.ndarray:
    return np.convolve(u, v)[:x_max + 1]


# ---------------------------------------------------------------------------
# plain population balance


def _make_smol_rhs(kernel: KernelSpec, x_max: int):
    s = np.arange(x_max + 1, dtype=np.float64)
    if kernel.family == "additive":
        a = kernel.lam

        def rhs(mu: np.ndarray) -> np.ndarray:
            m0 = mu.sum()
            m1 = s @ mu
            gain = (0.5 * a) * s * _conv(mu, mu, x_max)
            loss = mu * (a * (s * m0 + m1))
            return gain - loss

        return rhs

    kmat = _kernel_matrix(kernel, x_max)
    idx = (np.arange(x_max + 1)[:, None] + np.arange(x_max + 1)[None, :]).ravel()

    def rhs(mu: np.ndarray) -> np.ndarray:
        w = kmat * np.outer(mu, mu)
        gain = 0.5 * np.bincount(idx, weights=w.ravel(),
                                 minlength=2 * x_max + 1)[:x_max + 1]
        loss = mu * (kmat @ mu)
        return gain - loss

    return rhs


def _rk4_march(rhs, state, t0: float, t1: float, h: float):
    n = max(1, math.ceil((t1 - t0) / h - 1e-9))
    dt = (t1 - t0) / n
    for _ in range(n):
        k1 = rhs(state)
        k2 = rhs(state + (0.5 * dt) * k1)
        k3 = rhs(state + (0.5 * dt) * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(state < NEG_TOL):
            worst = float(state.min())
            raise OracleError(
                f"density went negative ({worst:.3e}); reduce the step "
                f"size or increase x_max")
    return state


def integrate_smoluchowski(kernel: KernelSpec, mu0, t_grid, x_max: int = 1024,
                           h: float = 1e-3) -> np.ndarray:
    """Integrate the pairwise-merge population balance from t=0.

    Returns densities with shape (len(t_grid), x_max + 1); column index
    is the integer size, column 0 is identically zero.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    t = _check_grid(t_grid)
    mu = _as_density(mu0, x_max)
    rhs = _make_smol_rhs(kernel, x_max)
    out = np.empty((t.size, x_max + 1), dtype=np.float64)
    cur = 0.0
    for k, t_k in enumerate(t):
        if t_k > cur:
            mu = _rk4_march(rhs, mu, cur, float(t_k), h)
            cur = float(t_k)
        out[k] = mu
    return out


def central_difference_ref(family: str, lam: float, eps: float, mu0, t_grid,
                           x_max: int = 1024, h: float = 1e-3) -> np.ndarray:
    """Deterministic central-difference sensitivity per size and time."""
    if eps <= 0.0:
        raise ValueError("eps must be positive for a central difference")
    kplus, kminus = kernel_pair(family, lam, eps)
    hi = integrate_smoluchowski(kplus, mu0, t_grid, x_max, h)
    lo = integrate_smoluchowski(kminus, mu0, t_grid, x_max, h)
    return (hi - lo) / eps


# ---------------------------------------------------------------------------
# coupled three-class limit system


def _make_coupled_rhs(kplus: KernelSpec, kminus: KernelSpec,
                      majorant: FactorizedMajorant, x_max: int,
                      force_generic: bool = False):
    s = np.arange(x_max + 1, dtype=np.float64)
    if kplus.family == "additive" and not force_generic:
        ap = kplus.lam
        am = kminus.lam
        ah = float(majorant.value(1.0, 0.0))
        a0 = min(ap, am)
        adp = ap - a0
        adm = am - a0
        amax = max(ap, am)

        def rhs(c, p, m):
            c0 = c.sum(); c1 = s @ c
            p0 = p.sum(); p1 = s @ p
            m0 = m.sum(); m1 = s @ m
            conv_cc = _conv(c, c, x_max)
            conv_pc = _conv(p, c, x_max)
            conv_mc = _conv(m, c, x_max)
            conv_pp = _conv(p, p, x_max)
            conv_mm = _conv(m, m, x_max)
            sum_c = s * c0 + c1          # per-size partner sums against c
            # collapsed one-sided pair fluxes of the triple channel
            r_pl = ap * (s * p0 + p1)    # plus-side merge pressure on y
            q_mn = am * (s * m0 + m1)    # minus-side merge pressure on y
            # the cross-class channel needs a partner on the far side;
            # without one every triple sum (collapsed or not) is empty
            if p1 > 0.0 and m1 > 0.0:
                s_max = np.maximum(r_pl, q_mn)
                s_dp = np.maximum(r_pl - q_mn, 0.0)
                s_dm = np.maximum(q_mn - r_pl, 0.0)
                gate_p = gate_m = 1.0
            else:
                s_max = np.zeros_like(s)
                s_dp = s_max
                s_dm = s_max
                gate_p = 1.0 if m1 > 0.0 else 0.0
                gate_m = 1.0 if p1 > 0.0 else 0.0
            dc = 0.5 * a0 * s * conv_cc - c * (amax * sum_c) - c * s_max
            dp = (0.5 * adp * s * conv_cc + c * (adm * sum_c)
                  + gate_p * (ap * s * conv_pc - p * (ap * sum_c))
                  + c * s_dm
                  + 0.5 * ap * s * conv_pp - p * (ap * (s * p0 + p1)))
            dm = (0.5 * adm * s * conv_cc + c * (adp * sum_c)
                  + gate_m * (am * s * conv_mc - m * (am * sum_c))
                  + c * s_dp
                  + 0.5 * am * s * conv_mm - m * (am * (s * m0 + m1)))
            return dc, dp, dm

        return rhs

    kp = _kernel_matrix(kplus, x_max)
    km = _kernel_matrix(kminus, x_max)
    kh = _majorant_matrix(majorant, x_max)
    ks0 = np.minimum(kp, km)
    dsp = kp - ks0
    dsm = km - ks0
    kmax = np.maximum(kp, km)
    idx = (np.arange(x_max + 1)[:, None] + np.arange(x_max + 1)[None, :]).ravel()

    def pair_gain(w, u, v):
        prod = w * np.outer(u, v)
        return np.bincount(idx, weights=prod.ravel(),
                           minlength=2 * x_max + 1)[:x_max + 1]

    def rhs(c, p, m):
        tau_p = p @ kh
        tau_m = m @ kh
        r_pl = p @ kp                    # sum_x K+(x,y) p(x)
        q_mn = m @ km                    # sum_z K-(y,z) m(z)
        s_max = np.zeros(x_max + 1)
        s_dp = np.zeros(x_max + 1)
        s_dm = np.zeros(x_max + 1)
        live = (tau_p > 0.0) & (tau_m > 0.0)
        for y in np.nonzero(live)[0]:
            # both one-sided rates are rank-1 in (partner_x, partner_z)
            rp = np.outer(kp[:, y], kh[:, y]) / tau_m[y]
            rm = np.outer(kh[:, y], km[:, y]) / tau_p[y]
            big = np.maximum(rp, rm)
            s_max[y] = p @ big @ m
            s_dp[y] = p @ (big - rm) @ m
            s_dm[y] = p @ (big - rp) @ m
        # commons only react across classes where a far-side partner
        # exists (per-size guard; all-or-nothing for positive majorants)
        c_pl = np.where(tau_m > 0.0, c, 0.0)
        c_mn = np.where(tau_p > 0.0, c, 0.0)
        loss_c = kmax @ c
        dc = 0.5 * pair_gain(ks0, c, c) - c * loss_c - c * s_max
        dp = (0.5 * pair_gain(dsp, c, c) + c * (dsm @ c)
              + pair_gain(kp, p, c_pl) - p * (kp @ c_pl)
              + c * s_dm
              + 0.5 * pair_gain(kp, p, p) - p * (kp @ p))
        dm = (0.5 * pair_gain(dsm, c, c) + c * (dsp @ c)
              + pair_gain(km, m, c_mn) - m * (km @ c_mn)
              + c * s_dp
              + 0.5 * pair_gain(km, m, m) - m * (km @ m))
        return dc, dp, dm

    return rhs


def integrate_coupled_limit(kplus: KernelSpec, kminus: KernelSpec,
                            majorant: FactorizedMajorant, triple0, t_grid,
                            x_max: int = 1024, h: float = 2e-3):
    """Integrate the (common, plus-only, minus-only) limit densities.

    ``triple0`` is (common, plus, minus), each a dict or array.  Returns
    three arrays shaped (len(t_grid), x_max + 1) in the same order.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    t = _check_grid(t_grid)
    c = _as_density(triple0[0], x_max)
    p = _as_density(triple0[1], x_max)
    m = _as_density(triple0[2], x_max)
    rhs = _make_coupled_rhs(kplus, kminus, majorant, x_max)
    out_c = np.empty((t.size, x_max + 1))
    out_p = np.empty((t.size, x_max + 1))
    out_m = np.empty((t.size, x_max + 1))
    cur = 0.0
    for k, t_k in enumerate(t):
        span = float(t_k) - cur
        if span > 0.0:
            n = max(1, math.ceil(span / h - 1e-9))
            dt = span / n
            for _ in range(n):
                k1 = rhs(c, p, m)
                k2 = rhs(c + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1],
                         m + 0.5 * dt * k1[2])
                k3 = rhs(c + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1],
                         m + 0.5 * dt * k2[2])
                k4 = rhs(c + dt * k3[0], p + dt * k3[1], m + dt * k3[2])
                c = c + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                p = p + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                m = m + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
                for arr in (c, p, m):
                    if np.any(arr < NEG_TOL):
                        raise OracleError(
                            f"class density went negative "
                            f"({float(arr.min()):.3e}); reduce the step size")
            cur = float(t_k)
        out_c[k] = c
        out_p[k] = p
        out_m[k] = m
    return out_c, out_p, out_m


def canonical_triple(common: np.ndarray, plus: np.ndarray,
                     minus: np.ndarray):
    """Re-express a class triple with no overlap left outside the common
    class: per size, common carries min(plus system, minus system).

    The stochastic coupling maintains exactly this representation (the
    post-event sweep re-pairs any matched surplus), so simulated class
    densities should be compared against the canonical form of the
    integrated triple, whose raw split retains an O(eps) overlap.
    """
    tot_p = common + plus
    tot_m = common + minus
    new_c = np.minimum(tot_p, tot_m)
    return new_c, tot_p - new_c, tot_m - new_c
