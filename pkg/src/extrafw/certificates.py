"""Estimate-sequence bookkeeping and the stopping certificate.

The surrogate Phi_k is linear, Phi_k(x) = V_k + <g_k, x>, so its minimum
over the feasible set is V_k + <g_k, v_k> with v_k the LMO output for g_k.
Since Phi_k(x*) <= (1 - lam_k) f* + lam_k f(x_0), the quantity

    (f(x_k) - Phi_k^* - lam_k (f(x_k) - f(x_0))) / (1 - lam_k)

upper-bounds f(x_k) - f* for every k >= 1.
"""
from dataclasses import dataclass, replace
import math

from .problem import inner


@dataclass(frozen=True)
class Certificate:
    lam: float
    V: float
    phi_star: float
    f0: float
    bound: float = math.inf


def cert_init(f0):
    f0 = float(f0)
    return Certificate(lam=1.0, V=f0, phi_star=f0, f0=f0, bound=math.inf)


def cert_update(cert, delta, f_point, grad_point, point, g, v, f_iterate=None):
    """Advance (lam, V, Phi^*) by one step.

    ``point`` is where the newest supporting hyperplane was taken (x_{k+1}
    for ExtraFW) and ``g``/``v`` are the averaged gradient and its LMO
    output.  ``f_iterate`` is f(x_{k+1}) for the bound, defaulting to
    ``f_point``.
    """
    V = (1.0 - delta) * cert.V + delta * (f_point - inner(grad_point, point))
    lam = (1.0 - delta) * cert.lam
    new = Certificate(lam=lam, V=V, phi_star=V + inner(g, v), f0=cert.f0)
    fx = f_point if f_iterate is None else f_iterate
    return replace(new, bound=gap_bound(new, fx))


def gap_bound(cert, f_xk):
    if cert.lam >= 1.0:
        return math.inf
    lam = cert.lam
    return (f_xk - cert.phi_star - lam * (f_xk - cert.f0)) / (1.0 - lam)


def fw_duality_gap(grad, x, v):
    """<grad f(x), x - v>, an upper bound on f(x) - f* when v is the LMO output."""
    return inner(grad, x) - inner(grad, v)


def xi_update(xi, delta, L, D):
    """xi_{k+1} = (1 - delta_k) xi_k + (3 L D^2 / 2) delta_k^2."""
    return (1.0 - delta) * xi + 1.5 * L * D * D * delta * delta


def lam_closed_form(k):
    """lam_k for delta_k = 2/(k+3)."""
    return 2.0 / ((k + 1) * (k + 2))
