"""Nonlinear DAE models, equilibria and small-signal Jacobian blocks.

A model is the semi-explicit system

    x' = f(x, y)
    0  = g(x, y)

with ``nu`` states and ``mu`` algebraic variables. Linearizing at an
equilibrium yields the four blocks ``fx, fy, gx, gy`` held by
:class:`SmallSignalModel`.
"""

import json
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.linalg

from ._linalg import RCOND_CAP, checked_lu, frozen, rcond
from .errors import (
    DimensionError,
    NonConvergence,
    NonFiniteJacobian,
    SingularAlgebraicJacobian,
    SingularJacobian,
)

JacobianFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class DaeModel:
    """Semi-explicit DAE ``x' = f(x, y), 0 = g(x, y)``.

    ``jacobians``, when given, maps ``(x, y)`` to the tuple ``(fx, fy, gx, gy)``.
    Without it, Jacobians are taken by central differences.
    """

    nu: int
    mu: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobians: Optional[JacobianFn] = None
    name: str = "dae"

    def split(self, x, y):
        x = np.asarray(x, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.size != self.nu or y.size != self.mu:
            raise DimensionError(
                f"{self.name}: expected x of length {self.nu} and y of length {self.mu}, "
                f"got {x.size} and {y.size}"
            )
        return x, y

    def eval_f(self, x, y):
        return np.asarray(self.f(x, y), dtype=float).reshape(self.nu)

    def eval_g(self, x, y):
        return np.asarray(self.g(x, y), dtype=float).reshape(self.mu)

    def jacobian_blocks(self, x, y, fd_step=None):
        """Return ``(fx, fy, gx, gy)`` at ``(x, y)``; analytic if available."""
        x, y = self.split(x, y)
        if self.jacobians is not None:
            fx, fy, gx, gy = self.jacobians(x, y)
            return _shape_blocks(fx, fy, gx, gy, self.nu, self.mu)
        return central_difference_blocks(self, x, y, fd_step)

    @classmethod
    def from_linear(cls, ssm: "SmallSignalModel", name="linear"):
        """Affine model whose Jacobian blocks are the blocks of ``ssm`` everywhere."""
        fx, fy, gx, gy = ssm.fx, ssm.fy, ssm.gx, ssm.gy
        return cls(
            nu=ssm.nu,
            mu=ssm.mu,
            f=lambda x, y: fx @ x + fy @ y,
            g=lambda x, y: gx @ x + gy @ y,
            jacobians=lambda x, y: (fx, fy, gx, gy),
            name=name,
        )


@dataclass(frozen=True)
class Equilibrium:
    x0: np.ndarray
    y0: np.ndarray
    residual_norm: float
    iterations: int = 0


@dataclass(frozen=True)
class SmallSignalModel:
    """Jacobian blocks of a DAE at an equilibrium."""

    fx: np.ndarray
    fy: np.ndarray
    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        fx, fy, gx, gy = (np.asarray(m, dtype=float) for m in (self.fx, self.fy, self.gx, self.gy))
        nu = int(round(np.sqrt(fx.size)))
        mu = int(round(np.sqrt(gy.size)))
        fx, fy, gx, gy = _shape_blocks(fx, fy, gx, gy, nu, mu)
        for name, m in zip(("fx", "fy", "gx", "gy"), (fx, fy, gx, gy)):
            if not np.all(np.isfinite(m)):
                raise NonFiniteJacobian(f"block {name} has non-finite entries")
            object.__setattr__(self, name, frozen(m))

    @property
    def nu(self):
        return self.fx.shape[0]

    @property
    def mu(self):
        return self.gy.shape[0]

    @property
    def E(self):
        """Singular descriptor matrix ``diag(I_nu, 0_mu)``."""
        n = self.nu + self.mu
        e = np.zeros((n, n))
        e[: self.nu, : self.nu] = np.eye(self.nu)
        return e

    @property
    def A(self):
        """Full Jacobian ``[[fx, fy], [gx, gy]]``."""
        return np.block([[self.fx, self.fy], [self.gx, self.gy]])

    def to_dict(self):
        return {
            "nu": self.nu,
            "mu": self.mu,
            "blocks": {k: getattr(self, k).tolist() for k in ("fx", "fy", "gx", "gy")},
        }

    @classmethod
    def from_dict(cls, data, base_dir=None):
        nu, mu = int(data["nu"]), int(data["mu"])
        has_inline = "blocks" in data
        has_mm = "matrix_market" in data
        if has_inline == has_mm:
            raise ValueError("model must give exactly one of 'blocks' or 'matrix_market'")
        if has_inline:
            raw = data["blocks"]
            blocks = [np.array(raw[k], dtype=float) for k in ("fx", "fy", "gx", "gy")]
        else:
            paths = data["matrix_market"]
            blocks = []
            for k in ("fx", "fy", "gx", "gy"):
                p = paths[k]
                if base_dir is not None and not os.path.isabs(p):
                    p = os.path.join(base_dir, p)
                m = scipy.io.mmread(p)
                blocks.append(m.toarray() if hasattr(m, "toarray") else np.asarray(m, dtype=float))
        return cls(*_shape_blocks(*blocks, nu, mu))


def _shape_blocks(fx, fy, gx, gy, nu, mu):
    shapes = {"fx": (nu, nu), "fy": (nu, mu), "gx": (mu, nu), "gy": (mu, mu)}
    out = []
    for name, m in zip(shapes, (fx, fy, gx, gy)):
        m = np.asarray(m, dtype=float)
        want = shapes[name]
        if m.size == 0 and 0 in want:
            m = np.zeros(want)
        elif m.shape != want:
            if m.size == want[0] * want[1] and m.ndim < 2:
                m = m.reshape(want)
            else:
                raise DimensionError(f"block {name} has shape {m.shape}, expected {want}")
        out.append(m)
    return tuple(out)


def load_model(path):
    """Read a pre-linearized model from JSON (inline blocks or Matrix Market paths)."""
    with open(path) as fh:
        data = json.load(fh)
    return SmallSignalModel.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def save_model(ssm, path):
    with open(path, "w") as fh:
        json.dump(ssm.to_dict(), fh, indent=1)


def _residual(model, x, y):
    return np.concatenate([model.eval_f(x, y), model.eval_g(x, y)])


def _stacked_jacobian(model, x, y, fd_step=None):
    fx, fy, gx, gy = model.jacobian_blocks(x, y, fd_step)
    return np.block([[fx, fy], [gx, gy]])


def find_equilibrium(model: DaeModel, guess, tol=1e-10, max_iter=50) -> Equilibrium:
    """Full-step Newton on the stacked residual ``[f; g]``.

    Parameters
    ----------
    guess : tuple of array_like
        ``(x, y)`` starting point.
    tol : float
        Bound on ``max(|f|_inf, |g|_inf)`` at the returned point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x, y = model.split(*guess)
    nu = model.nu
    for it in range(max_iter + 1):
        res = _residual(model, x, y)
        norm = float(np.max(np.abs(res))) if res.size else 0.0
        if norm <= tol:
            return Equilibrium(frozen(x), frozen(y), norm, it)
        if it == max_iter:
            break
        J = _stacked_jacobian(model, x, y)
        lu = checked_lu(J, RCOND_CAP, SingularJacobian, "stacked Jacobian")
        dz = scipy.linalg.lu_solve(lu, -res)
        x = x + dz[:nu]
        y = y + dz[nu:]
    raise NonConvergence(
        f"equilibrium search did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {norm:.3e})",
        iterations=max_iter,
    )


def central_difference_blocks(model: DaeModel, x, y, fd_step=None):
    """Central-difference Jacobian blocks at ``(x, y)``.

    With ``fd_step=None`` each column uses ``1e-6 * (1 + |component|)``;
    a scalar ``fd_step`` is used as an absolute step for every column.
    """
    x, y = model.split(x, y)
    z = np.concatenate([x, y])
    nu, n = model.nu, model.nu + model.mu
    J = np.empty((n, n))
    for j in range(n):
        step = 1e-6 * (1.0 + abs(z[j])) if fd_step is None else float(fd_step)
        zp = z.copy()
        zm = z.copy()
        zp[j] += step
        zm[j] -= step
        rp = _residual(model, zp[:nu], zp[nu:])
        rm = _residual(model, zm[:nu], zm[nu:])
        J[:, j] = (rp - rm) / (zp[j] - zm[j])
    return J[:nu, :nu], J[:nu, nu:], J[nu:, :nu], J[nu:, nu:]


def linearize(model: DaeModel, eq: Equilibrium, mode="analytic", fd_step=None) -> SmallSignalModel:
    """Jacobian blocks of ``model`` at ``eq``.

    ``mode`` is ``"analytic"`` (falls back to differences when the model has
    no Jacobian callback) or ``"central-difference"``.
    """
    if mode not in ("analytic", "central-difference"):
        raise ValueError(f"unknown linearization mode {mode!r}")
    if fd_step is not None and fd_step <= 0:
        raise ValueError("fd_step must be positive")
    x, y = model.split(eq.x0, eq.y0)
    if mode == "analytic" and model.jacobians is not None:
        blocks = _shape_blocks(*model.jacobians(x, y), model.nu, model.mu)
    else:
        blocks = central_difference_blocks(model, x, y, fd_step)
    for name, m in zip(("fx", "fy", "gx", "gy"), blocks):
        if not np.all(np.isfinite(m)):
            raise NonFiniteJacobian(f"block {name} has non-finite entries at the equilibrium")
    return SmallSignalModel(*blocks)


def state_matrix(ssm: SmallSignalModel, rcond_cap=RCOND_CAP) -> np.ndarray:
    """Reduced state matrix ``fx - fy gy^{-1} gx`` (solve, never invert)."""
    if ssm.mu == 0:
        return np.array(ssm.fx)
    lu = checked_lu(ssm.gy, rcond_cap, SingularAlgebraicJacobian, "g_y")
    W = scipy.linalg.lu_solve(lu, ssm.gx)
    return ssm.fx - ssm.fy @ W


def algebraic_gain(ssm: SmallSignalModel, rcond_cap=RCOND_CAP) -> np.ndarray:
    """``gy^{-1} gx``, the map from state to algebraic perturbations (with a minus sign)."""
    if ssm.mu == 0:
        return np.zeros((0, ssm.nu))
    lu = checked_lu(ssm.gy, rcond_cap, SingularAlgebraicJacobian, "g_y")
    return scipy.linalg.lu_solve(lu, ssm.gx)


def gy_rcond(ssm: SmallSignalModel) -> float:
    return rcond(ssm.gy)
