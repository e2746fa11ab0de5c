"""Independent reference implementations used only by the tests.

Written directly from the packet formulas with cmath and plain numpy, sharing
no code with the package, so agreement is a genuine cross-check.
"""
import cmath
import math

import numpy as np
from numpy.polynomial.legendre import leggauss


def sigma_t(p, t):
    return p.sigma0 * (1 + 1j * p.hbar * t / (2 * p.mass * p.sigma0**2))


def slit(p, name, x, y, t):
    """Scalar packet; A/B on the right, Aprime/Bprime on the left."""
    s = 1.0 if name in ("A", "Aprime") else -1.0
    st = sigma_t(p, t)
    uy = p.hbar * p.ky / p.mass
    ex = 0.5 * p.mass * (p.hbar * p.kx / p.mass) ** 2
    xphase = p.kx * (x - p.slit_x) if name in ("A", "B") else -p.kx * (x + p.slit_x)
    g = cmath.exp(-((s * y - p.slit_y - uy * t) ** 2) / (4 * p.sigma0 * st))
    ph = cmath.exp(1j * (xphase + p.ky * (s * y - p.slit_y - uy * t / 2) - ex * t / p.hbar))
    return p.amp * (2 * math.pi * st**2) ** -0.25 * g * ph


def psi(p, x1, y1, x2, y2, t):
    pm = 1.0 if p.statistics.value == "bosonic" else -1.0
    return (slit(p, "A", x1, y1, t) * slit(p, "Bprime", x2, y2, t)
            + pm * slit(p, "A", x2, y2, t) * slit(p, "Bprime", x1, y1, t)
            + slit(p, "B", x1, y1, t) * slit(p, "Aprime", x2, y2, t)
            + pm * slit(p, "B", x2, y2, t) * slit(p, "Aprime", x1, y1, t))


def screen_x(p, t):
    x = p.slit_x + p.hbar * p.kx / p.mass * t
    return x, -x


def density_grid(p, t, y1, y2):
    """|psi|^2 on the outer product of two 1-D node arrays."""
    x1, x2 = screen_x(p, t)
    f = np.vectorize(lambda a, b: abs(psi(p, x1, a, x2, b, t)) ** 2)
    return f(y1[:, None], y2[None, :])


def gauss_box(p, t, lo1, hi1, lo2, hi2, n=80):
    """Tensor Gauss-Legendre integral of the unnormalized |psi|^2 over a box."""
    xg, wg = leggauss(n)
    y1 = 0.5 * (hi1 - lo1) * xg + 0.5 * (hi1 + lo1)
    y2 = 0.5 * (hi2 - lo2) * xg + 0.5 * (hi2 + lo2)
    w = np.outer(wg * 0.5 * (hi1 - lo1), wg * 0.5 * (hi2 - lo2))
    return float(np.sum(w * density_grid(p, t, y1, y2)))


def composite_gauss(p, t, lo, hi, pieces=30, n=20):
    """Slice mass over a square window by panels of Gauss-Legendre rules."""
    xg, wg = leggauss(n)
    edges = np.linspace(lo, hi, pieces + 1)
    nodes = np.concatenate([0.5 * (b - a) * xg + 0.5 * (b + a) for a, b in zip(edges[:-1], edges[1:])])
    weights = np.concatenate([0.5 * (b - a) * wg for a, b in zip(edges[:-1], edges[1:])])
    x1, x2 = screen_x(p, t)
    d = np.abs(_vec_psi(p, x1, nodes[:, None], x2, nodes[None, :], t)) ** 2
    return float(weights @ d @ weights)


def _vec_psi(p, x1, y1, x2, y2, t):
    return np.vectorize(lambda a, b: psi(p, x1, a, x2, b, t))(y1, y2)


def phase_gradient(p, x1, y1, x2, y2, t, h):
    """Fourth-order central difference of arg psi in y1 and y2, times hbar/m."""
    def d(f):
        return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)

    c = psi(p, x1, y1, x2, y2, t)
    a1 = d(lambda e: cmath.phase(psi(p, x1, y1 + e, x2, y2, t) / c))
    a2 = d(lambda e: cmath.phase(psi(p, x1, y1, x2, y2 + e, t) / c))
    return p.hbar / p.mass * a1, p.hbar / p.mass * a2
