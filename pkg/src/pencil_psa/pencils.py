"""Matrix pencils of a DAE and of its partitioned predictor-corrector discretizations.

Every constructor returns an immutable :class:`Pencil` ``(E, A)`` read as
``sE - A`` (continuous, S domain) or ``zE - A`` (one-step recursion, Z domain).
:func:`hm_step_map` builds the explicit one-step update of the linearized Heun
scheme by unrolling the corrector loop; it does not use the closed-form
``C_r`` polynomial and serves as an independent check of the pencils.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.special

from ._linalg import RCOND_CAP, checked_lu, frozen
from .errors import CoefficientMismatch, SingularAlgebraicJacobian, SingularMassMatrix
from .model import SmallSignalModel, algebraic_gain, state_matrix

EXTRAPOLATION = "extrapolation"
PERFECT = "perfect"
INTERFACINGS = (EXTRAPOLATION, PERFECT)

# Predictor coefficients of the k-step Adams-Bashforth formula in backward-difference
# form, and ordinate weights of the (k+1)-point Adams-Moulton corrector, oldest first,
# the last entry multiplying f at the new point.
AB_GAMMA = (1.0, 1.0 / 2.0, 5.0 / 12.0, 3.0 / 8.0)
AM_B = {
    1: (1.0 / 2.0, 1.0 / 2.0),
    2: (-1.0 / 12.0, 8.0 / 12.0, 5.0 / 12.0),
    3: (1.0 / 24.0, -5.0 / 24.0, 19.0 / 24.0, 9.0 / 24.0),
    4: (-19.0 / 720.0, 106.0 / 720.0, -264.0 / 720.0, 646.0 / 720.0, 251.0 / 720.0),
}


def _interfacing(name):
    aliases = {"ext": EXTRAPOLATION, "extrapolation": EXTRAPOLATION, "perfect": PERFECT}
    try:
        return aliases[name]
    except KeyError:
        raise ValueError(f"unknown interfacing {name!r}") from None


@dataclass(frozen=True)
class PcScheme:
    """Predictor-corrector scheme description.

    ``r = 0`` means no corrector pass (forward Euler predictor only for Heun).
    For Adams-Bashforth, ``gamma`` holds the ``k`` backward-difference predictor
    coefficients and ``b`` the ``k + 1`` corrector weights.
    """

    r: int = 1
    interfacing: str = EXTRAPOLATION
    family: str = "heun"
    k: int = 1
    gamma: tuple = (1.0,)
    b: tuple = (0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "interfacing", _interfacing(self.interfacing))
        if self.family not in ("heun", "adams-bashforth"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.r < 0:
            raise ValueError("r must be non-negative")
        if self.family == "heun":
            object.__setattr__(self, "k", 1)
            object.__setattr__(self, "gamma", (1.0,))
            object.__setattr__(self, "b", (0.5, 0.5))
        object.__setattr__(self, "gamma", tuple(float(v) for v in self.gamma))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if self.k < 1 or len(self.gamma) != self.k or len(self.b) != self.k + 1:
            raise CoefficientMismatch(
                f"k={self.k} needs {self.k} predictor and {self.k + 1} corrector coefficients, "
                f"got {len(self.gamma)} and {len(self.b)}"
            )

    @classmethod
    def heun(cls, r=1, interfacing=EXTRAPOLATION):
        return cls(r=r, interfacing=interfacing)

    @classmethod
    def adams(cls, k, r=1, interfacing=EXTRAPOLATION, gamma=None, b=None):
        """Adams-Bashforth predictor with Adams-Moulton corrector from the bundled tables."""
        if gamma is None:
            if k > len(AB_GAMMA):
                raise CoefficientMismatch(f"no bundled coefficients for k={k}")
            gamma = AB_GAMMA[:k]
        if b is None:
            if k not in AM_B:
                raise CoefficientMismatch(f"no bundled coefficients for k={k}")
            b = AM_B[k]
        return cls(r=r, interfacing=interfacing, family="adams-bashforth", k=k, gamma=gamma, b=b)

    def as_adams(self):
        """The same scheme expressed in the Adams-Bashforth family."""
        return PcScheme(self.r, self.interfacing, "adams-bashforth", self.k, self.gamma, self.b)

    @property
    def predictor_weights(self):
        """Ordinate weights ``c_j`` of the predictor, oldest history point first."""
        return predictor_ordinates(self.gamma)

    @property
    def label(self):
        tag = "ext" if self.interfacing == EXTRAPOLATION else "perfect"
        if self.family == "heun":
            return f"heun-r{self.r}-{tag}"
        return f"ab{self.k}-r{self.r}-{tag}"


def predictor_ordinates(gamma):
    """Expand ``sum_j gamma_j nabla^j f_n`` into weights on ``f_{n-k+1} .. f_n``."""
    k = len(gamma)
    c_back = np.zeros(k)  # c_back[m] multiplies f_{n-m}
    for j, g in enumerate(gamma):
        for m in range(j + 1):
            c_back[m] += g * (-1) ** m * scipy.special.comb(j, m, exact=True)
    return tuple(c_back[::-1])


@dataclass(frozen=True)
class Pencil:
    E: np.ndarray
    A: np.ndarray
    domain: str
    h: float = 0.0
    r: Optional[int] = None
    interfacing: Optional[str] = None
    form: str = "dense"
    kind: str = "dae"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        E, A = frozen(self.E), frozen(self.A)
        if E.shape != A.shape or E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise ValueError(f"pencil matrices must be square and equal-sized, got {E.shape}, {A.shape}")
        if self.domain not in ("S", "Z"):
            raise ValueError("domain must be 'S' or 'Z'")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)

    @property
    def size(self):
        return self.E.shape[0]

    def metadata(self):
        out = {"domain": self.domain, "h": self.h, "r": self.r, "interfacing": self.interfacing, "form": self.form}
        out["kind"] = self.kind
        out.update(self.meta)
        return out

    def to_dict(self):
        return {"metadata": self.metadata(), "E": self.E.tolist(), "A": self.A.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        md = dict(data["metadata"])
        kw = {k: md.pop(k) for k in ("domain", "h", "r", "interfacing", "form", "kind") if k in md}
        return cls(np.array(data["E"], dtype=float), np.array(data["A"], dtype=float), meta=md, **kw)


@dataclass(frozen=True)
class DelayPencil:
    """Characteristic matrix ``sE - A0 + A1 exp(-s h)``."""

    E: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    h: float
    form: str = "dense"

    def __post_init__(self):
        for name in ("E", "A0", "A1"):
            object.__setattr__(self, name, frozen(getattr(self, name)))

    @property
    def size(self):
        return self.E.shape[0]

    def matrix(self, s):
        return s * self.E - self.A0 + self.A1 * np.exp(-s * self.h)

    def derivative(self, s):
        return self.E - self.h * self.A1 * np.exp(-s * self.h)


def _check_h(h, strict=True):
    if not np.isfinite(h) or h < 0 or (strict and h == 0):
        raise ValueError(f"step size must be {'positive' if strict else 'non-negative'}, got {h}")


def _check_form(form):
    if form not in ("sparse", "dense"):
        raise ValueError(f"form must be 'sparse' or 'dense', got {form!r}")


def pencil_dae(ssm: SmallSignalModel, form="sparse") -> Pencil:
    """Pencil of the linearized DAE: ``sE - A`` (sparse) or ``sI - A_s`` (dense)."""
    _check_form(form)
    if form == "dense":
        return Pencil(np.eye(ssm.nu), state_matrix(ssm), "S", 0.0, form="dense", kind="dae")
    return Pencil(ssm.E, ssm.A, "S", 0.0, form="sparse", kind="dae")


def compute_cr(fx, h, r):
    """``sum_{j=0}^{r} (h/2 fx)^j`` via ``C_j = I + (h/2) C_{j-1} fx``."""
    fx = np.atleast_2d(np.asarray(fx, dtype=float))
    _check_h(h, strict=False)
    if r < 0:
        raise ValueError("r must be non-negative")
    eye = np.eye(fx.shape[0])
    c = eye
    half = 0.5 * h * fx
    for _ in range(r):
        c = eye + c @ half
    return c


def _c_prev(fx, h, r):
    # C_{r-1}; with no corrector pass the y_int term is absent, so it is zero.
    if r == 0:
        return np.zeros_like(np.atleast_2d(fx), dtype=float)
    return compute_cr(fx, h, r - 1)


def pencil_pc_extrapolation(ssm: SmallSignalModel, h, r=1, form="dense") -> Pencil:
    """Heun PC with ``y_int = y_n``."""
    _check_h(h)
    _check_form(form)
    cr = compute_cr(ssm.fx, h, r)
    nu, mu = ssm.nu, ssm.mu
    if form == "dense":
        As = state_matrix(ssm)
        return Pencil(np.eye(nu), np.eye(nu) + h * cr @ As, "Z", h, r, EXTRAPOLATION, "dense", "pc")
    E = np.block([[np.eye(nu), np.zeros((nu, mu))], [ssm.gx, ssm.gy]])
    A = np.block([[np.eye(nu) + h * cr @ ssm.fx, h * cr @ ssm.fy], [np.zeros((mu, nu + mu))]])
    return Pencil(E, A, "Z", h, r, EXTRAPOLATION, "sparse", "pc")


def pencil_pc_perfect(ssm: SmallSignalModel, h, r=1, form="dense") -> Pencil:
    """Heun PC with ``y_int = y_{n+1}`` (interface error removed)."""
    _check_h(h)
    _check_form(form)
    cr = compute_cr(ssm.fx, h, r)
    B = 0.5 * h * _c_prev(ssm.fx, h, r)
    nu, mu = ssm.nu, ssm.mu
    if form == "dense":
        As = state_matrix(ssm)
        M = B @ ssm.fy @ algebraic_gain(ssm)
        I = np.eye(nu)
        return Pencil(I + M, I + h * cr @ As + M, "Z", h, r, PERFECT, "dense", "pc")
    E = np.block([[np.eye(nu), -B @ ssm.fy], [ssm.gx, ssm.gy]])
    A = np.block([[np.eye(nu) + h * cr @ ssm.fx, (h * cr - B) @ ssm.fy], [np.zeros((mu, nu + mu))]])
    return Pencil(E, A, "Z", h, r, PERFECT, "sparse", "pc")


def reduce_to_standard(pencil: Pencil, rcond_cap=RCOND_CAP) -> np.ndarray:
    """``E^{-1} A`` by a linear solve; raises :class:`SingularMassMatrix` if E is near-singular."""
    lu = checked_lu(pencil.E, rcond_cap, SingularMassMatrix, "pencil E matrix")
    return scipy.linalg.lu_solve(lu, pencil.A)


def pencil_delay(ssm: SmallSignalModel, h, form="dense") -> DelayPencil:
    """Delay pencil from lagging the algebraic inputs of ``f`` by one step ``h``."""
    _check_h(h, strict=False)
    _check_form(form)
    nu, mu = ssm.nu, ssm.mu
    if form == "dense":
        A1 = ssm.fy @ algebraic_gain(ssm)
        return DelayPencil(np.eye(nu), ssm.fx, A1, h, "dense")
    A0 = np.block([[ssm.fx, np.zeros((nu, mu))], [ssm.gx, ssm.gy]])
    A1 = np.zeros((nu + mu, nu + mu))
    A1[:nu, nu:] = -ssm.fy
    return DelayPencil(ssm.E, A0, A1, h, "sparse")


def _unroll_corrector(ssm, scheme: PcScheme, h):
    """Linear coefficients of ``x_{n+1}`` on the history and on ``y_int``.

    Returns ``(R, Q, Y)`` where ``R[m]``, ``Q[m]`` multiply ``x_{n-m}``, ``y_{n-m}``
    for ``m = 0..k-1`` and ``Y`` multiplies ``y_int``.
    """
    nu, mu, k = ssm.nu, ssm.mu, scheme.k
    fx, fy = ssm.fx, ssm.fy
    c = scheme.predictor_weights
    b = scheme.b
    # predictor
    R = [np.zeros((nu, nu)) for _ in range(k)]
    Q = [np.zeros((nu, mu)) for _ in range(k)]
    R[0] = R[0] + np.eye(nu)
    for j in range(k):
        m = k - 1 - j
        R[m] = R[m] + h * c[j] * fx
        Q[m] = Q[m] + h * c[j] * fy
    Y = np.zeros((nu, mu))
    # history part of every corrector pass
    R_hist = [np.zeros((nu, nu)) for _ in range(k)]
    Q_hist = [np.zeros((nu, mu)) for _ in range(k)]
    R_hist[0] = R_hist[0] + np.eye(nu)
    for j in range(k):
        m = k - 1 - j
        R_hist[m] = R_hist[m] + h * b[j] * fx
        Q_hist[m] = Q_hist[m] + h * b[j] * fy
    bk = h * b[k]
    for _ in range(scheme.r):
        R = [R_hist[m] + bk * fx @ R[m] for m in range(k)]
        Q = [Q_hist[m] + bk * fx @ Q[m] for m in range(k)]
        Y = bk * fy + bk * fx @ Y
    return R, Q, Y


def adams_companion(ssm: SmallSignalModel, scheme: PcScheme, h, form="sparse") -> Pencil:
    """Companion pencil ``z calE - calA`` of a k-step Adams PC scheme.

    ``sparse``: the state is the stack of the last ``k`` full vectors ``(x, y)``.
    With perfect interfacing the ``y_int`` coefficient moves to the left-hand
    side, so the top-right block of ``K`` becomes ``-Y`` instead of zero.

    ``dense``: ``y = -g_y^{-1} g_x x`` is substituted at every history point,
    leaving a ``k nu`` companion matrix on the states. This drops the structural
    zero eigenvalues of the sparse form, which are defective for ``k > 1`` and
    split to about ``sqrt(eps)`` in floating point.
    """
    _check_h(h)
    _check_form(form)
    if scheme.family != "adams-bashforth":
        scheme = scheme.as_adams()
    nu, mu, k = ssm.nu, ssm.mu, scheme.k
    R, Q, Y = _unroll_corrector(ssm, scheme, h)
    meta = {"family": scheme.family, "k": k}
    if form == "dense":
        G = algebraic_gain(ssm)
        if scheme.interfacing == EXTRAPOLATION:
            Q = [Q[0] + Y] + Q[1:]
            lhs = np.eye(nu)
        else:
            lhs = np.eye(nu) + Y @ G
        n = k * nu
        calE = np.eye(n)
        calA = np.zeros((n, n))
        if k > 1:
            calA[: (k - 1) * nu, nu:] = np.eye((k - 1) * nu)
        top = (k - 1) * nu
        calE[top:, top:] = lhs
        for m in range(k):
            col = (k - 1 - m) * nu  # history ordered oldest first
            calA[top:, col : col + nu] = R[m] - Q[m] @ G
        return Pencil(calE, calA, "Z", h, scheme.r, scheme.interfacing, "dense", "companion", meta=meta)
    N = nu + mu
    if scheme.interfacing == EXTRAPOLATION:
        Q = [Q[0] + Y] + Q[1:]
        K12 = np.zeros((nu, mu))
    else:
        K12 = -Y
    K = np.block([[np.eye(nu), K12], [ssm.gx, ssm.gy]])
    H = [np.block([[R[m], Q[m]], [np.zeros((mu, N))]]) for m in range(k)]
    n = k * N
    calE = np.zeros((n, n))
    calA = np.zeros((n, n))
    # shift rows: y_{n+1}^{[j]} = y_n^{[j-1]}
    if k > 1:
        calE[: (k - 1) * N, N:] = np.eye((k - 1) * N)
        calA[: (k - 1) * N, : (k - 1) * N] = np.eye((k - 1) * N)
    # for k = 1 this leaves exactly (K, H_1)
    top = (k - 1) * N
    calE[top:, :N] = K
    for j in range(1, k):
        calE[top:, j * N : (j + 1) * N] = -H[j - 1]
    calA[top:, (k - 1) * N :] = H[k - 1]
    return Pencil(calE, calA, "Z", h, scheme.r, scheme.interfacing, "sparse", "companion", meta=meta)


def hm_step_map(ssm: SmallSignalModel, h, r=1, interfacing=EXTRAPOLATION) -> np.ndarray:
    """One-step update matrix ``T`` of linearized Heun PC: ``(x, y)_{n+1} = T (x, y)_n``.

    Built by applying the predictor and ``r`` corrector passes to coefficient
    matrices, then eliminating ``y_{n+1}`` through ``gx x + gy y = 0``.
    """
    _check_h(h, strict=False)
    interfacing = _interfacing(interfacing)
    nu, mu = ssm.nu, ssm.mu
    fx, fy = ssm.fx, ssm.fy
    G = algebraic_gain(ssm)  # y = -G x on the constraint manifold
    I = np.eye(nu)
    X = I + h * fx
    Yn = h * fy
    Yi = np.zeros((nu, mu))
    for _ in range(r):
        X = I + 0.5 * h * fx + 0.5 * h * fx @ X
        Yn = 0.5 * h * fy + 0.5 * h * fx @ Yn
        Yi = 0.5 * h * fy + 0.5 * h * fx @ Yi
    if interfacing == EXTRAPOLATION:
        Tx, Ty = X, Yn + Yi
    else:
        # x_{n+1} = X x + Yn y_n - Yi G x_{n+1}
        lhs = I + Yi @ G
        lu = checked_lu(lhs, RCOND_CAP, SingularMassMatrix, "I + M")
        Tx = scipy.linalg.lu_solve(lu, X)
        Ty = scipy.linalg.lu_solve(lu, Yn)
    T = np.zeros((nu + mu, nu + mu))
    T[:nu, :nu] = Tx
    T[:nu, nu:] = Ty
    T[nu:, :nu] = -G @ Tx
    T[nu:, nu:] = -G @ Ty
    return T


def scheme_pencil(ssm: SmallSignalModel, scheme: PcScheme, h, form="auto") -> Pencil:
    """Z-domain pencil for ``scheme`` at step ``h``.

    ``form="auto"`` picks the dense form when g_y is invertible and the sparse
    form otherwise. Adams schemes with ``k > 1`` use the companion pencil.
    """
    if form == "auto":
        form = "dense"
        if ssm.mu:
            try:
                algebraic_gain(ssm)
            except SingularAlgebraicJacobian:
                form = "sparse"
    if scheme.family == "adams-bashforth" and scheme.k > 1:
        return adams_companion(ssm, scheme, h, form)
    build = pencil_pc_extrapolation if scheme.interfacing == EXTRAPOLATION else pencil_pc_perfect
    return build(ssm, h, scheme.r, form)
