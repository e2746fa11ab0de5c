"""Adaptive 2-D quadrature over rectangles, backed by scipy's cubature."""
from __future__ import annotations

import numpy as np
from scipy.integrate import cubature

from .errors import QuadratureFailure

#: relative error above which a quadrature result is rejected
FAIL_RTOL = 1e-8


def integrate_2d(f, lo, hi, *, rtol=1e-10, atol=1e-14, max_subdivisions=20000):
    """Integrate ``f(y1, y2)`` over the box ``[lo[0], hi[0]] x [lo[1], hi[1]]``.

    ``f`` receives two 1-D arrays of abscissae and returns either an array of
    the same length or an ``(npoints, k)`` array for a vector-valued integrand.
    Raises QuadratureFailure when the estimated error exceeds both ``atol`` and
    ``FAIL_RTOL`` times the total integrated magnitude. Callers integrate
    normalized densities, so ``atol`` is an absolute probability floor.
    """

    def g(pts):
        return np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)

    res = cubature(g, np.asarray(lo, float), np.asarray(hi, float), rtol=rtol, atol=atol,
                   max_subdivisions=max_subdivisions)
    est = np.asarray(res.estimate, dtype=float)
    err = np.asarray(res.error, dtype=float)
    scale = max(float(np.abs(est).sum()), np.finfo(float).tiny)
    if not np.all(np.isfinite(est)) or float(np.max(err)) > max(FAIL_RTOL * scale, atol):
        raise QuadratureFailure(
            f"2-D quadrature did not reach relative error {FAIL_RTOL:g} "
            f"(error {float(np.max(err)):.3g}, scale {scale:.3g}, status {res.status})"
        )
    return est, err
