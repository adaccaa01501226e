"""Fixed-step time-domain integrators for semi-explicit DAEs.

The partitioned (PSA) integrators advance the states with an explicit
predictor and ``r`` corrector passes, then solve ``g(x, y) = 0`` for the
algebraic variables. The simultaneous trapezoidal solver is the accuracy
reference. On linear models one PSA step reproduces the pencil step maps
exactly, which makes these routines a brute-force check on the pencils.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from ._linalg import RCOND_CAP, checked_lu
from .errors import (
    InterfaceNonConvergence,
    NonConvergence,
    SingularAlgebraicJacobian,
    SingularJacobian,
)
from .model import DaeModel
from .pencils import EXTRAPOLATION, PERFECT, PcScheme
from .spectra import fmt


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``method`` is ``"fem"``, ``"heun"``, ``"adams"`` or ``"tm"``; ``scheme``
    carries ``r``, the interfacing and the Adams coefficients. ``jacobian_reuse``
    refactors the trapezoidal Newton matrix every that many steps (1 = honest
    Newton).
    """

    h: float
    t_end: float
    method: str = "heun"
    scheme: PcScheme = field(default_factory=PcScheme)
    interface_tol: float = 1e-10
    interface_max_iter: int = 50
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    jacobian_reuse: int = 1

    def __post_init__(self):
        if not (0 < self.h <= self.t_end):
            raise ValueError("need 0 < h <= t_end")
        if min(self.interface_tol, self.newton_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("fem", "heun", "adams", "tm"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.jacobian_reuse < 1:
            raise ValueError("jacobian_reuse must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.h))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    algebraics: np.ndarray
    newton_iterations: List[int] = field(default_factory=list)
    interface_iterations: List[int] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def x(self):
        return self.states

    @property
    def y(self):
        return self.algebraics

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        nu, mu = self.states.shape[1], self.algebraics.shape[1]
        w.writerow(["t"] + [f"x_{i}" for i in range(nu)] + [f"y_{i}" for i in range(mu)])
        for t, x, y in zip(self.times, self.states, self.algebraics):
            w.writerow([fmt(t)] + [fmt(v) for v in x] + [fmt(v) for v in y])
        return buf.getvalue()

    def diagnostics_json(self):
        return json.dumps(
            {
                "newton_iterations": self.newton_iterations,
                "interface_iterations": self.interface_iterations,
                "notes": self.notes,
            },
            sort_keys=True,
        )


def solve_algebraic(model: DaeModel, x, y_guess, tol=1e-12, max_iter=50):
    """Newton iterations on ``g(x, y) = 0`` for fixed states.

    The step-size factor multiplying ``g`` in a PSA step scales residual and
    Jacobian alike, so it is left out. Stops when ``max|g| <= tol`` or when the
    Newton update falls below ``tol`` relative to ``y``. Returns ``(y, iterations)``.
    """
    x, y = model.split(x, y_guess)
    if model.mu == 0:
        return y, 0
    for it in range(max_iter + 1):
        res = model.eval_g(x, y)
        if np.max(np.abs(res)) <= tol:
            return y, it
        if it == max_iter:
            break
        gy = model.jacobian_blocks(x, y)[3]
        lu = checked_lu(gy, RCOND_CAP, SingularAlgebraicJacobian, "g_y")
        dy = scipy.linalg.lu_solve(lu, res)
        y = y - dy
        # stagnation at roundoff counts as converged
        if np.max(np.abs(dy)) <= tol * max(1.0, np.max(np.abs(y))) and np.max(np.abs(res)) <= 1e3 * tol:
            return y, it + 1
    raise NonConvergence(
        f"algebraic Newton did not converge in {max_iter} iterations (|g|={np.max(np.abs(res)):.3e})",
        iterations=max_iter,
    )


class _Recorder:
    def __init__(self, model, cfg, x0, y0):
        n = cfg.n_steps
        self.x = np.empty((n + 1, model.nu))
        self.y = np.empty((n + 1, model.mu))
        self.x[0], self.y[0] = x0, y0
        self.traj_newton = []
        self.traj_iface = []
        self.notes = []
        self.h = cfg.h
        self.n = n

    def finish(self):
        times = np.arange(self.n + 1) * self.h
        return Trajectory(times, self.x, self.y, self.traj_newton, self.traj_iface, self.notes)


def _initial(model, x0, y0, cfg):
    x0, y0 = model.split(x0, y0)
    y0, _ = solve_algebraic(model, x0, y0, cfg.newton_tol, cfg.newton_max_iter)
    return x0, y0


def _algebraic_step(model, x, y_guess, cfg, n):
    try:
        return solve_algebraic(model, x, y_guess, cfg.newton_tol, cfg.newton_max_iter)
    except NonConvergence as exc:
        exc.step = n
        raise


def simulate_fem(model: DaeModel, x0, y0, cfg: SimConfig) -> Trajectory:
    """Partitioned forward Euler: ``x+ = x + h f(x, y)``, then ``g(x+, y+) = 0``."""
    x, y = _initial(model, x0, y0, cfg)
    rec = _Recorder(model, cfg, x, y)
    h = cfg.h
    for n in range(rec.n):
        x = x + h * model.eval_f(x, y)
        y, it = _algebraic_step(model, x, y, cfg, n)
        rec.x[n + 1], rec.y[n + 1] = x, y
        rec.traj_newton.append(it)
    return rec.finish()


def heun_step(model, x, y, cfg, n=0):
    """One partitioned Heun step; returns ``(x+, y+, newton_its, interface_its)``."""
    h, r = cfg.h, cfg.scheme.r
    fn = model.eval_f(x, y)
    y_int = y
    passes = 0
    while True:
        xi = x + h * fn
        for _ in range(r):
            xi = x + 0.5 * h * fn + 0.5 * h * model.eval_f(xi, y_int)
        y_new, its = _algebraic_step(model, xi, y_int, cfg, n)
        passes += 1
        if cfg.scheme.interfacing == EXTRAPOLATION or r == 0:
            return xi, y_new, its, passes
        if np.max(np.abs(y_new - y_int), initial=0.0) <= cfg.interface_tol:
            return xi, y_new, its, passes
        if passes > cfg.interface_max_iter:
            raise InterfaceNonConvergence(
                f"interface iteration did not converge at step {n}", iterations=passes, step=n
            )
        y_int = y_new


def simulate_psa_hm(model: DaeModel, x0, y0, cfg: SimConfig) -> Trajectory:
    """Partitioned Heun predictor-corrector.

    With extrapolation the corrector uses ``y_n``. With perfect interfacing the
    whole step is repeated with ``y_int`` set to the newly solved ``y_{n+1}``
    until the two agree within ``cfg.interface_tol`` (max norm).
    """
    x, y = _initial(model, x0, y0, cfg)
    rec = _Recorder(model, cfg, x, y)
    for n in range(rec.n):
        x, y, its, passes = heun_step(model, x, y, cfg, n)
        rec.x[n + 1], rec.y[n + 1] = x, y
        rec.traj_newton.append(its)
        rec.traj_iface.append(passes)
    return rec.finish()


def simulate_adams_pc(model: DaeModel, x0, y0, cfg: SimConfig) -> Trajectory:
    """Adams-Bashforth predictor with ``r`` Adams-Moulton corrector passes.

    The first ``k - 1`` steps have no full history and are taken with Heun at the
    same ``h`` (noted in ``Trajectory.notes``).
    """
    scheme = cfg.scheme if cfg.scheme.family == "adams-bashforth" else cfg.scheme.as_adams()
    k, r, h = scheme.k, scheme.r, cfg.h
    c, b = scheme.predictor_weights, scheme.b
    x, y = _initial(model, x0, y0, cfg)
    rec = _Recorder(model, cfg, x, y)
    F = [model.eval_f(x, y)]  # f at history points, oldest first
    for n in range(rec.n):
        if len(F) < k:
            x, y, its, passes = heun_step(model, x, y, cfg, n)
            rec.notes.append(f"step {n}: Heun bootstrap")
        else:
            pred = 0
            for j in range(k):
                pred = pred + c[j] * F[j]
            hist = 0
            for j in range(k):
                hist = hist + b[j] * F[j]
            y_int = y
            passes = 0
            while True:
                xi = x + h * pred
                for _ in range(r):
                    xi = x + h * hist + b[k] * h * model.eval_f(xi, y_int)
                y_new, its = _algebraic_step(model, xi, y_int, cfg, n)
                passes += 1
                if scheme.interfacing == EXTRAPOLATION or r == 0:
                    break
                if np.max(np.abs(y_new - y_int), initial=0.0) <= cfg.interface_tol:
                    break
                if passes > cfg.interface_max_iter:
                    raise InterfaceNonConvergence(
                        f"interface iteration did not converge at step {n}", iterations=passes, step=n
                    )
                y_int = y_new
            x, y = xi, y_new
        F.append(model.eval_f(x, y))
        if len(F) > k:
            F.pop(0)
        rec.x[n + 1], rec.y[n + 1] = x, y
        rec.traj_newton.append(its)
        rec.traj_iface.append(passes)
    return rec.finish()


def simulate_simultaneous_tm(model: DaeModel, x0, y0, cfg: SimConfig) -> Trajectory:
    """Simultaneous trapezoidal rule solved by Newton on the stacked residual.

    Iterates until both the state and algebraic increments fall below
    ``cfg.newton_tol``. With ``cfg.jacobian_reuse = m > 1`` the Newton matrix is
    refactored only every ``m`` steps.
    """
    x, y = _initial(model, x0, y0, cfg)
    rec = _Recorder(model, cfg, x, y)
    h, nu = cfg.h, model.nu
    lu = None
    for n in range(rec.n):
        fn = model.eval_f(x, y)
        xk, yk = x.copy(), y.copy()
        refresh = n % cfg.jacobian_reuse == 0
        for it in range(1, cfg.newton_max_iter + 1):
            res = np.concatenate(
                [xk - x - 0.5 * h * (fn + model.eval_f(xk, yk)), model.eval_g(xk, yk)]
            )
            if lu is None or refresh:
                fx, fy, gx, gy = model.jacobian_blocks(xk, yk)
                J = np.block([[np.eye(nu) - 0.5 * h * fx, -0.5 * h * fy], [gx, gy]])
                lu = checked_lu(J, RCOND_CAP, SingularJacobian, "trapezoidal Newton matrix")
                refresh = False
            dz = scipy.linalg.lu_solve(lu, -res)
            xk = xk + dz[:nu]
            yk = yk + dz[nu:]
            if np.max(np.abs(dz[:nu]), initial=0.0) < cfg.newton_tol and np.max(
                np.abs(dz[nu:]), initial=0.0
            ) < cfg.newton_tol:
                break
        else:
            raise NonConvergence(f"trapezoidal Newton did not converge at step {n}", step=n)
        x, y = xk, yk
        rec.x[n + 1], rec.y[n + 1] = x, y
        rec.traj_newton.append(it)
    return rec.finish()


def simulate(model: DaeModel, x0, y0, cfg: SimConfig) -> Trajectory:
    """Dispatch on ``cfg.method``."""
    return {
        "fem": simulate_fem,
        "heun": simulate_psa_hm,
        "adams": simulate_adams_pc,
        "tm": simulate_simultaneous_tm,
    }[cfg.method](model, x0, y0, cfg)


def fitted_amplification(traj: Trajectory, skip=0):
    """Per-step growth ratio of the state norm over the last steps of a run.

    Once the dominant mode has taken over, successive state vectors differ by
    the dominant eigenvalue's factor; the ratio of norms over the final step
    estimates its magnitude and, for a real dominant mode, its value.
    """
    xs = traj.states[skip:]
    num = np.dot(xs[-1], xs[-2])
    den = np.dot(xs[-2], xs[-2])
    return num / den
