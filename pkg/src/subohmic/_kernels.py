"""Numba kernels for the O(n_modes) inner loops.

Everything here operates on raw complex128/float64 arrays so the hot path is
a handful of fused loops with no Python-object traffic.  All mode sums are
sequential in mode order, which makes reruns bit-identical; do not add
``fastmath`` or ``parallel`` options, either would break that contract.

Layout of one RK4 step (``rk4_step``): each stage loop computes the stage
derivative on the fly, folds it into the Butcher accumulator, writes the next
stage state, and piggybacks the mode reductions that the *next* stage's scalar
coefficients need.  That keeps the working set to six arrays and one pass per
stage, which is what keeps per-step cost linear in n_modes from 2e3 to 2e4.

Notation used throughout (state (a, b, f, g), tunneling ``delta``):

    E    = sum_l [conj(f_l) g_l - (|f_l|^2 + |g_l|^2)/2],   z = exp(E)
    i df_l = lam_l/2 + om_l f_l + cf (f_l - g_l),   cf = (delta/2)(b/a) z
    i dg_l = -lam_l/2 + om_l g_l + cg (g_l - f_l),  cg = (delta/2)(a/b) conj(z)
    i da   = a sum_l lam_l Re f_l / 2 - a Re(cf S_f) - (delta/2) b z
    i db   = -b sum_l lam_l Re g_l / 2 - b Re(cg S_g) - (delta/2) a conj(z)

with S_f = sum_l (f_l - g_l) conj(f_l), S_g = sum_l (g_l - f_l) conj(g_l).
The amplitude ratios are regularized: 1/a -> conj(a)/max(|a|^2, eps^2), and a
stage reports a regularization event when the clamp is active AND can change
the derivative (delta != 0 and f != g; otherwise the clamped terms multiply
exact zeros).  See docs/equations_of_motion.md for the explicit-form
derivation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "rhs_kernel",
    "rk4_step",
    "state_reductions",
    "deviation_terms_kernel",
    "residual_norm_sq_on_shell",
]


@njit(cache=True)
def state_reductions(f, g, lam):
    """Mode sums needed by the scalar coefficients: (sum f*g, |f|^2, |g|^2,
    S_f, S_g, sum lam Re f, sum lam Re g)."""
    n = f.shape[0]
    sfg = 0j
    nf2 = 0.0
    ng2 = 0.0
    s_f = 0j
    s_g = 0j
    lrf = 0.0
    lrg = 0.0
    for l in range(n):
        fl = f[l]
        gl = g[l]
        sfg += np.conj(fl) * gl
        nf2 += fl.real * fl.real + fl.imag * fl.imag
        ng2 += gl.real * gl.real + gl.imag * gl.imag
        d = fl - gl
        s_f += d * np.conj(fl)
        s_g -= d * np.conj(gl)
        lrf += lam[l] * fl.real
        lrg += lam[l] * gl.real
    return sfg, nf2, ng2, s_f, s_g, lrf, lrg


@njit(cache=True)
def _scalar_rhs(a, b, sfg, nf2, ng2, s_f, s_g, lrf, lrg, delta, eps_sq):
    """Amplitude derivatives and displacement-coupling coefficients.

    Returns (cf, cg, da, db, regularized).
    """
    z = np.exp(sfg - 0.5 * (nf2 + ng2))
    aa = a.real * a.real + a.imag * a.imag
    bb = b.real * b.real + b.imag * b.imag
    # S_f + S_g = sum_l |f_l - g_l|^2: when the branch gap vanishes (or
    # delta = 0) the clamped ratio terms multiply exact zeros, so the clamp
    # cannot alter the derivative and no event is reported.
    gap = (s_f + s_g).real
    reg = (delta != 0.0) and gap > 0.0 and (aa < eps_sq or bb < eps_sq)
    cf = 0.5 * delta * (b * np.conj(a) / max(aa, eps_sq)) * z
    cg = 0.5 * delta * (a * np.conj(b) / max(bb, eps_sq)) * np.conj(z)
    da = -1j * (0.5 * a * lrf - a * (cf * s_f).real - 0.5 * delta * b * z)
    db = -1j * (-0.5 * b * lrg - b * (cg * s_g).real - 0.5 * delta * a * np.conj(z))
    return cf, cg, da, db, reg


@njit(cache=True)
def rhs_kernel(a, b, f, g, om, lam, delta, eps_sq, df, dg):
    """Full right-hand side at one state; writes df, dg, returns (da, db, reg)."""
    sfg, nf2, ng2, s_f, s_g, lrf, lrg = state_reductions(f, g, lam)
    cf, cg, da, db, reg = _scalar_rhs(a, b, sfg, nf2, ng2, s_f, s_g, lrf, lrg, delta, eps_sq)
    n = f.shape[0]
    for l in range(n):
        d = f[l] - g[l]
        df[l] = -1j * (0.5 * lam[l] + om[l] * f[l] + cf * d)
        dg[l] = -1j * (-0.5 * lam[l] + om[l] * g[l] - cg * d)
    return da, db, reg


@njit(cache=True)
def _stage_advance(fsrc, gsrc, fbase, gbase, om, lam, cf, cg, keep, w, c, fa, ga, fdst, gdst):
    """One fused RK4 stage.

    Derivative k is evaluated at (fsrc, gsrc); the accumulator is updated as
    fa <- keep*fa + w*k; the next stage state fdst <- fbase + c*k is written;
    and the mode reductions of the written state are returned so the caller
    can form the next stage's scalar coefficients without another pass.
    """
    n = fsrc.shape[0]
    sfg = 0j
    nf2 = 0.0
    ng2 = 0.0
    s_f = 0j
    s_g = 0j
    lrf = 0.0
    lrg = 0.0
    for l in range(n):
        d = fsrc[l] - gsrc[l]
        kf = -1j * (0.5 * lam[l] + om[l] * fsrc[l] + cf * d)
        kg = -1j * (-0.5 * lam[l] + om[l] * gsrc[l] - cg * d)
        fa[l] = keep * fa[l] + w * kf
        ga[l] = keep * ga[l] + w * kg
        fl = fbase[l] + c * kf
        gl = gbase[l] + c * kg
        fdst[l] = fl
        gdst[l] = gl
        sfg += np.conj(fl) * gl
        nf2 += fl.real * fl.real + fl.imag * fl.imag
        ng2 += gl.real * gl.real + gl.imag * gl.imag
        d2 = fl - gl
        s_f += d2 * np.conj(fl)
        s_g -= d2 * np.conj(gl)
        lrf += lam[l] * fl.real
        lrg += lam[l] * gl.real
    return sfg, nf2, ng2, s_f, s_g, lrf, lrg


@njit(cache=True)
def rk4_step(a, b, f, g, om, lam, delta, eps_sq, dt, fs, gs, fa, ga):
    """Advance (a, b, f, g) by one classical RK4 step of size dt.

    f and g are updated in place; the new amplitudes and the number of stages
    on which the amplitude regularization engaged are returned.  fs, gs, fa,
    ga are caller-provided scratch arrays (fa, ga must start finite).
    """
    half = 0.5 * dt
    red = state_reductions(f, g, lam)
    cf, cg, da1, db1, r1 = _scalar_rhs(a, b, red[0], red[1], red[2], red[3], red[4], red[5], red[6], delta, eps_sq)

    red = _stage_advance(f, g, f, g, om, lam, cf, cg, 0.0, 1.0, half, fa, ga, fs, gs)
    a2 = a + half * da1
    b2 = b + half * db1
    cf, cg, da2, db2, r2 = _scalar_rhs(a2, b2, red[0], red[1], red[2], red[3], red[4], red[5], red[6], delta, eps_sq)

    red = _stage_advance(fs, gs, f, g, om, lam, cf, cg, 1.0, 2.0, half, fa, ga, fs, gs)
    a3 = a + half * da2
    b3 = b + half * db2
    cf, cg, da3, db3, r3 = _scalar_rhs(a3, b3, red[0], red[1], red[2], red[3], red[4], red[5], red[6], delta, eps_sq)

    red = _stage_advance(fs, gs, f, g, om, lam, cf, cg, 1.0, 2.0, dt, fa, ga, fs, gs)
    a4 = a + dt * da3
    b4 = b + dt * db3
    cf, cg, da4, db4, r4 = _scalar_rhs(a4, b4, red[0], red[1], red[2], red[3], red[4], red[5], red[6], delta, eps_sq)

    sixth = dt / 6.0
    n = f.shape[0]
    for l in range(n):
        d = fs[l] - gs[l]
        kf = -1j * (0.5 * lam[l] + om[l] * fs[l] + cf * d)
        kg = -1j * (-0.5 * lam[l] + om[l] * gs[l] - cg * d)
        f[l] += sixth * (fa[l] + kf)
        g[l] += sixth * (ga[l] + kg)
    a_new = a + sixth * (da1 + 2.0 * da2 + 2.0 * da3 + da4)
    b_new = b + sixth * (db1 + 2.0 * db2 + 2.0 * db3 + db4)
    events = int(r1) + int(r2) + int(r3) + int(r4)
    return a_new, b_new, events


@njit(cache=True)
def residual_norm_sq_on_shell(a, b, f, g, lam, delta, eps_sq):
    """<delta|delta> for the derivative generated by the equations of motion.

    When df, dg, da, db are exactly the right-hand side, the residual vector
    collapses branch-wise to

        delta_+ = [-P S_f - (delta/2) B z + P sum_l (f_l-g_l) b_l^+] |f>
                  + (delta/2) B |g>,      P = A cf,

    (mirrored for the minus branch with Q = B cg), and its squared norm
    reduces to

        (delta^2/4)(|A|^2+|B|^2)(1 - |z|^2) + (|P|^2 + |Q|^2) D
        - delta D Re(B z conj(P) + A conj(z) conj(Q)),

    with D = sum_l |f_l - g_l|^2.  Every term carries delta^2 or D, so the
    exactly-solvable limits (decoupled spin, zero tunneling) give a hard
    floating-point zero instead of a roundoff residue; this is the form used
    for sigma(t) along trajectories.  docs/deviation_closed_form.md derives it.
    """
    sfg, nf2, ng2, s_f, s_g, lrf, lrg = state_reductions(f, g, lam)
    z = np.exp(sfg - 0.5 * (nf2 + ng2))
    aa = a.real * a.real + a.imag * a.imag
    bb = b.real * b.real + b.imag * b.imag
    cf = 0.5 * delta * (b * np.conj(a) / max(aa, eps_sq)) * z
    cg = 0.5 * delta * (a * np.conj(b) / max(bb, eps_sq)) * np.conj(z)
    p = a * cf
    q = b * cg
    # D = S_f + S_g is real analytically; take the real part explicitly.
    big_d = (s_f + s_g).real
    z2 = z.real * z.real + z.imag * z.imag
    p2 = p.real * p.real + p.imag * p.imag
    q2 = q.real * q.real + q.imag * q.imag
    value = (
        0.25 * delta * delta * (aa + bb) * (1.0 - z2)
        + (p2 + q2) * big_d
        - delta * big_d * (b * z * np.conj(p) + a * np.conj(z) * np.conj(q)).real
    )
    return max(value, 0.0)


@njit(cache=True)
def deviation_terms_kernel(a, b, f, g, da, db, df, dg, om, lam, delta):
    """Closed-form pieces of the Schroedinger-residual norm ||(i d/dt - H)|D>||^2.

    Returns (dd, hh, cross) = (<dD|dD>, <D|H^2|D>, 2 Im<D|H|dD>), each
    assembled from single-mode sums; see docs/deviation_closed_form.md.
    """
    n = f.shape[0]
    sfg = 0j
    nf2 = 0.0
    ng2 = 0.0
    wf = 0.0
    wg = 0.0
    vf = 0.0
    vg = 0.0
    nu_f = 0j
    nu_g = 0j
    mu_f = 0j
    mu_g = 0j
    kap_f = 0j
    kap_g = 0j
    tau_f = 0j
    tau_g = 0j
    ndf2 = 0.0
    ndg2 = 0.0
    q_f = 0.0
    q_g = 0.0
    r_fg = 0j
    for l in range(n):
        fl = f[l]
        gl = g[l]
        dfl = df[l]
        dgl = dg[l]
        w = om[l]
        lm = lam[l]
        cfl = np.conj(fl)
        cgl = np.conj(gl)
        f2 = fl.real * fl.real + fl.imag * fl.imag
        g2 = gl.real * gl.real + gl.imag * gl.imag
        sfg += cfl * gl
        nf2 += f2
        ng2 += g2
        wf += w * f2
        wg += w * g2
        vf += lm * fl.real
        vg += lm * gl.real
        nu_f += dfl * cfl
        nu_g += dgl * cgl
        mu_f += w * dfl * cfl
        mu_g += w * dgl * cgl
        kap_f += lm * dfl
        kap_g += lm * dgl
        tau_f += dfl * cgl
        tau_g += dgl * cfl
        ndf2 += dfl.real * dfl.real + dfl.imag * dfl.imag
        ndg2 += dgl.real * dgl.real + dgl.imag * dgl.imag
        uf = w * fl + 0.5 * lm
        ug = w * gl - 0.5 * lm
        q_f += uf.real * uf.real + uf.imag * uf.imag
        q_g += ug.real * ug.real + ug.imag * ug.imag
        r_fg += w * cfl * gl
    z = np.exp(sfg - 0.5 * (nf2 + ng2))
    aa = a.real * a.real + a.imag * a.imag
    bb = b.real * b.real + b.imag * b.imag
    # hf = <f|H_B + V/2|f>, hg = <g|H_B - V/2|g> (vf, vg hold sum lam Re f|g)
    hf = wf + vf
    hg = wg - vg
    atil = da + 1j * a * nu_f.imag
    btil = db + 1j * b * nu_g.imag
    c_f = da - a * nu_f.real
    c_g = db - b * nu_g.real
    dd = (
        atil.real * atil.real + atil.imag * atil.imag + aa * ndf2
        + btil.real * btil.real + btil.imag * btil.imag + bb * ndg2
    )
    hh = (
        aa * (hf * hf + q_f)
        + bb * (hg * hg + q_g)
        + 0.25 * delta * delta * (aa + bb)
        - 2.0 * delta * (np.conj(a) * b * z * r_fg).real
    )
    dhd = (
        np.conj(a) * atil * hf
        + aa * (mu_f + 0.5 * kap_f)
        + np.conj(b) * btil * hg
        + bb * (mu_g - 0.5 * kap_g)
        - 0.5 * delta * (np.conj(b) * (c_f + a * tau_f) * np.conj(z) + np.conj(a) * (c_g + b * tau_g) * z)
    )
    cross = 2.0 * dhd.imag
    return dd, hh, cross
