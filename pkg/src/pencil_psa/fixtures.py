"""Small bundled models used by tests, demos and the manifest templates."""

import numpy as np

from .model import DaeModel, SmallSignalModel


def scalar_test(lam) -> SmallSignalModel:
    """Test equation ``x' = lam x`` with no algebraic variables.

    A complex ``lam`` is realified into the 2x2 block ``[[a, -b], [b, a]]`` whose
    eigenvalues are ``lam`` and its conjugate.
    """
    lam = complex(lam)
    if lam.imag == 0.0:
        fx = np.array([[lam.real]])
    else:
        a, b = lam.real, lam.imag
        fx = np.array([[a, -b], [b, a]])
    n = fx.shape[0]
    return SmallSignalModel(fx, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0)))


def scalar_dae(a=-2.0, b=1.0, c=1.0, d=-1.0) -> SmallSignalModel:
    """``x' = a x + b y``, ``0 = c x + d y``; reduced eigenvalue ``a - b c / d``."""
    return SmallSignalModel([[a]], [[b]], [[c]], [[d]])


def diagonal(lams) -> SmallSignalModel:
    fx = np.diag(np.asarray(lams, dtype=float))
    n = fx.shape[0]
    return SmallSignalModel(fx, np.zeros((n, 0)), np.zeros((0, n)), np.zeros((0, 0)))


def quadratic_model() -> DaeModel:
    """``x' = -x + y**2``, ``0 = y - 1``; equilibrium (1, 1)."""

    def jac(x, y):
        return [[-1.0]], [[2.0 * y[0]]], [[0.0]], [[1.0]]

    return DaeModel(
        nu=1,
        mu=1,
        f=lambda x, y: -x + y**2,
        g=lambda x, y: y - 1.0,
        jacobians=jac,
        name="quadratic",
    )


def classical_machine(
    H=3.5, D=2.0, xd=1.8, xdp=0.3, Tdo=8.0, xl=0.4, V=1.0, Vinf=1.0, Pm=0.8, Efd=2.0, wb=2 * np.pi * 60
) -> DaeModel:
    """One-axis machine behind a line to an infinite bus.

    States are rotor angle, speed (pu) and q-axis transient voltage; the single
    algebraic variable is the angle of the machine terminal bus, whose voltage
    magnitude is held at ``V``. The algebraic equation is the active-power balance
    at that bus.
    """

    def f(x, y):
        delta, w, eq = x
        theta = y[0]
        pe = eq * V * np.sin(delta - theta) / xdp
        return np.array(
            [
                wb * (w - 1.0),
                (Pm - pe - D * (w - 1.0)) / (2.0 * H),
                (Efd - eq * xd / xdp + (xd - xdp) / xdp * V * np.cos(delta - theta)) / Tdo,
            ]
        )

    def g(x, y):
        delta, _, eq = x
        theta = y[0]
        return np.array([eq * V * np.sin(delta - theta) / xdp - V * Vinf * np.sin(theta) / xl])

    def jac(x, y):
        delta, _, eq = x
        theta = y[0]
        s, c = np.sin(delta - theta), np.cos(delta - theta)
        fx = np.array(
            [
                [0.0, wb, 0.0],
                [-eq * V * c / xdp / (2 * H), -D / (2 * H), -V * s / xdp / (2 * H)],
                [-(xd - xdp) / xdp * V * s / Tdo, 0.0, -xd / xdp / Tdo],
            ]
        )
        fy = np.array([[0.0], [eq * V * c / xdp / (2 * H)], [(xd - xdp) / xdp * V * s / Tdo]])
        gx = np.array([[eq * V * c / xdp, 0.0, V * s / xdp]])
        gy = np.array([[-eq * V * c / xdp - V * Vinf * np.cos(theta) / xl]])
        return fx, fy, gx, gy

    return DaeModel(nu=3, mu=1, f=f, g=g, jacobians=jac, name="classical_machine")


CLASSICAL_MACHINE_GUESS = (np.array([0.6, 1.0, 1.0]), np.array([0.3]))


def random_linear_dae(rng, nu=None, mu=None, max_cond=1e3, scale=1.0):
    """Random small-signal model with a stable reduced state matrix and well-conditioned g_y.

    ``rng`` is a :class:`numpy.random.Generator`. Draws are rejected until
    ``cond(g_y) < max_cond`` and every eigenvalue of ``A_s`` lies in the open left
    half-plane.
    """
    nu = int(rng.integers(1, 6)) if nu is None else nu
    mu = int(rng.integers(1, 6)) if mu is None else mu
    while True:
        fx = rng.normal(size=(nu, nu)) * scale
        fy = rng.normal(size=(nu, mu)) * scale
        gx = rng.normal(size=(mu, nu)) * scale
        gy = rng.normal(size=(mu, mu)) * scale + 2.0 * scale * np.eye(mu)
        if mu and np.linalg.cond(gy) >= max_cond:
            continue
        As = fx - fy @ np.linalg.solve(gy, gx) if mu else fx
        shift = np.max(np.linalg.eigvals(As).real)
        if shift >= -0.1 * scale:
            fx = fx - (shift + 0.5 * scale) * np.eye(nu)
        return SmallSignalModel(fx, fy, gx, gy)
