"""Pointwise flux map of the doubly regularized Beckmann problem.

All functions are vectorized: ``w`` has shape ``(...)`` and the vector
arguments ``p``, ``q``, ``z`` have shape ``(..., 2)``. With
``s = (|p| - w)_+ / epsilon`` and ``u = p / |p|``:

* ``F(p) = s**(alpha' - 1) * u`` is the inverse of ``q -> eps |q|^(alpha-2) q + w d|q|``,
* ``R(p) = delta * p / max(|p|, w)`` is the Huber term,
* ``G = F + R``, with antiderivative ``calG = calF + calR``,
* ``calG*`` is the Fenchel conjugate of ``calG`` in ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegParams:
    epsilon: float
    delta: float
    alpha: float = 2.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")

    @property
    def alpha_conj(self) -> float:
        return self.alpha / (self.alpha - 1.0)


def _norm(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.hypot(v[..., 0], v[..., 1])


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """``num / den`` with 0 wherever ``den == 0``."""
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _shrink(w, p, params: RegParams):
    """Return ``|p|`` and the scaled excess ``s = (|p| - w)_+ / epsilon``."""
    norm = _norm(p)
    s = np.maximum(norm - np.asarray(w, dtype=float), 0.0) / params.epsilon
    return norm, s


def eval_F(w, p, params: RegParams) -> np.ndarray:
    norm, s = _shrink(w, p, params)
    mag = np.where(s > 0, s ** (params.alpha_conj - 1.0), 0.0)
    return _safe_div(mag, norm)[..., None] * np.asarray(p, dtype=float)


def eval_R(w, p, delta: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    den = np.maximum(_norm(p), np.asarray(w, dtype=float))
    return (delta * _safe_div(np.ones_like(den), den))[..., None] * p


def eval_G(w, p, params: RegParams) -> np.ndarray:
    return eval_F(w, p, params) + eval_R(w, p, params.delta)


def jac_G(w, p, params: RegParams) -> np.ndarray:
    """Jacobian ``D_p G(w, p)``, shape ``(..., 2, 2)``.

    Outside the dead zone the Jacobian splits into a radial part
    ``(alpha' - 1) s**(alpha' - 2) / epsilon`` along ``u`` and a tangential part
    ``(delta + s**(alpha' - 1)) / |p|`` orthogonal to it. On ``|p| <= w`` (the
    kink included) it is ``(delta / w) I``.
    """
    p = np.asarray(p, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), p.shape[:-1])
    norm, s = _shrink(w, p, params)
    a = params.alpha_conj
    outside = s > 0

    s_out = np.where(outside, s, 1.0)
    n_out = np.where(outside, norm, 1.0)
    radial = np.where(outside, (a - 1.0) * s_out ** (a - 2.0) / params.epsilon, 0.0)
    tangential = np.where(outside, (params.delta + s_out ** (a - 1.0)) / n_out, 0.0)
    inside = np.where(outside, 0.0, _safe_div(np.full_like(w, params.delta), w))

    u = p / n_out[..., None]
    uu = u[..., :, None] * u[..., None, :]
    eye = np.eye(2)
    jac = tangential[..., None, None] * (eye - uu) + radial[..., None, None] * uu
    return jac + inside[..., None, None] * eye


def anti_F(w, p, params: RegParams) -> np.ndarray:
    _, s = _shrink(w, p, params)
    a = params.alpha_conj
    return params.epsilon / a * s**a


def anti_R(w, p, delta: float) -> np.ndarray:
    norm = _norm(p)
    w = np.asarray(w, dtype=float)
    return delta * np.maximum(norm, w) + 0.5 * delta * np.minimum(_safe_div(norm**2, w), w)


def anti_G(w, p, params: RegParams) -> np.ndarray:
    return anti_F(w, p, params) + anti_R(w, p, params.delta)


def conj_G(w, q, params: RegParams) -> np.ndarray:
    """Fenchel conjugate ``calG*(w, q)``; requires ``delta > 0``."""
    if not params.delta > 0:
        raise ValueError("the conjugate formula requires delta > 0")
    d = params.delta
    w = np.asarray(w, dtype=float)
    nq = _norm(q)
    inner = nq**2 * w / (2.0 * d) - d * w
    excess = np.maximum(nq - d, 0.0)
    outer = params.epsilon / params.alpha * excess**params.alpha - 1.5 * d * w + nq * w
    return np.where(nq <= d, inner, outer)


def inv_G(w, z, params: RegParams) -> np.ndarray:
    """Inverse of ``p -> G(w, p)``; requires ``delta > 0``."""
    if not params.delta > 0:
        raise ValueError("G is not invertible for delta = 0")
    d = params.delta
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    nz = _norm(z)
    excess = np.maximum(nz - d, 0.0)
    outer_mag = params.epsilon * excess ** (params.alpha - 1.0) + w
    scale = np.where(nz <= d, w / d, _safe_div(outer_mag, nz))
    return scale[..., None] * z


def anti_G_change(w, p, dp, params: RegParams) -> np.ndarray:
    """``calG(w, p + dp) - calG(w, p)`` without cancellation for small ``dp``.

    Where ``p`` and ``p + dp`` lie on the same side of ``|p| = w`` the
    difference is formed from ``|p + dp| - |p|`` computed as
    ``(2 p.dp + |dp|^2) / (|p + dp| + |p|)``; across the kink the plain
    difference is used.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), p.shape[:-1])
    p1 = p + dp
    n0, n1 = _norm(p), _norm(p1)
    quad = 2.0 * np.einsum("...d,...d->...", p, dp) + np.einsum("...d,...d->...", dp, dp)
    dn = _safe_div(quad, n0 + n1)
    delta, eps, a = params.delta, params.epsilon, params.alpha_conj

    plain = anti_G(w, p1, params) - anti_G(w, p, params)

    in0, in1 = n0 <= w, n1 <= w
    d_r = np.where(in0 & in1, 0.5 * delta * _safe_div(quad, w), delta * dn)
    s0 = np.maximum(n0 - w, 0.0) / eps
    pos = ~in0 & ~in1
    s0_safe = np.where(pos, s0, 1.0)
    ratio = np.where(pos, np.maximum(dn / eps / s0_safe, -1.0), 0.0)
    d_f = np.where(pos, eps / a * s0_safe**a * np.expm1(a * np.log1p(ratio)), 0.0)
    return np.where(in0 == in1, d_r + d_f, plain)
