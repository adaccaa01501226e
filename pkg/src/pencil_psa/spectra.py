"""Eigenvalue solvers, Z-to-S mapping and per-mode summaries."""

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceFailure,
    EmptySpectrum,
    NoRootFound,
    SingularMassMatrix,
    ZeroEigenvalue,
)
from .pencils import DelayPencil, Pencil, reduce_to_standard

INFINITE_TOL = 1e-12
ZERO_TOL = 1e-12
ALIAS_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """Finite eigenvalues of a pencil plus the count of infinite ones.

    ``aliasing`` flags S-plane values mapped from Z-plane values that sit on the
    negative real axis, i.e. ``|Im s| = pi / h``, where the logarithm branch is
    ambiguous.
    """

    eigenvalues: np.ndarray
    infinite_multiplicity: int = 0
    domain: str = "S"
    source: dict = field(default_factory=dict)
    aliasing: Optional[np.ndarray] = None
    diagnostics: tuple = ()

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=complex).reshape(-1)
        order = np.lexsort((ev.imag, -ev.real))
        ev = ev[order]
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        if self.aliasing is None:
            al = np.zeros(ev.size, dtype=bool)
        else:
            al = np.asarray(self.aliasing, dtype=bool).reshape(-1)[order]
        al.setflags(write=False)
        object.__setattr__(self, "aliasing", al)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def size(self):
        return self.eigenvalues.size + self.infinite_multiplicity

    def spectral_radius(self):
        if self.eigenvalues.size == 0:
            return 0.0
        return float(np.max(np.abs(self.eigenvalues)))

    def rightmost(self):
        return self.eigenvalues[0] if self.eigenvalues.size else None

    def nonzero(self, tol=ZERO_TOL):
        return self.eigenvalues[np.abs(self.eigenvalues) > tol]

    def to_rows(self):
        rows = [
            (float(v.real), float(v.imag), self.domain, True, bool(a))
            for v, a in zip(self.eigenvalues, self.aliasing)
        ]
        rows += [(math.inf, 0.0, self.domain, False, False)] * self.infinite_multiplicity
        return rows

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "domain", "finite", "aliasing_flag"])
        for re, im, dom, fin, al in self.to_rows():
            w.writerow([fmt(re), fmt(im), dom, int(fin), int(al)])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(
            {
                "metadata": {
                    "domain": self.domain,
                    "infinite_multiplicity": self.infinite_multiplicity,
                    **{k: v for k, v in self.source.items()},
                },
                "eigenvalues": [[fmt(v.real), fmt(v.imag)] for v in self.eigenvalues],
                "aliasing": [bool(a) for a in self.aliasing],
            },
            sort_keys=True,
        )


def fmt(x):
    """Fixed 17-significant-digit scientific format used in every text output."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return f"{x:.16e}"


@dataclass(frozen=True)
class ModeSummary:
    eigenvalue: complex
    damping_ratio: float
    natural_frequency: float

    @property
    def damping_pct(self):
        return 100.0 * self.damping_ratio


def eig_dense(A, source=None) -> Spectrum:
    """All eigenvalues of a square matrix (LAPACK QR via scipy)."""
    A = np.asarray(A)
    if A.size and not np.all(np.isfinite(A)):
        raise ConvergenceFailure("matrix has non-finite entries")
    try:
        w = scipy.linalg.eigvals(A) if A.size else np.zeros(0, dtype=complex)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return Spectrum(w, 0, "S", dict(source or {}))


def eig_generalized(E, A, infinite_tol=INFINITE_TOL, source=None) -> Spectrum:
    """Finite eigenvalues of ``sE - A`` by QZ, counting the infinite ones.

    Both matrices are scaled to unit 2-norm before the decomposition and each
    homogeneous pair ``(alpha, beta)`` is normalised; a pair with
    ``|beta| <= infinite_tol`` is an infinite eigenvalue.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A, dtype=float)
    if E.shape != A.shape:
        raise ValueError("E and A must have equal shape")
    n = E.shape[0]
    if n == 0:
        return Spectrum(np.zeros(0), 0, "S", dict(source or {}))
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(A))):
        raise ConvergenceFailure("pencil has non-finite entries")
    ne = np.linalg.norm(E, 2)
    na = np.linalg.norm(A, 2)
    if ne == 0.0:
        return Spectrum(np.zeros(0), n, "S", dict(source or {}))
    if na == 0.0:
        na = 1.0
    try:
        w = scipy.linalg.eig(A / na, E / ne, right=False, homogeneous_eigvals=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    alpha, beta = w[0], w[1]
    norm = np.hypot(np.abs(alpha), np.abs(beta))
    norm[norm == 0.0] = 1.0
    alpha, beta = alpha / norm, beta / norm
    inf_mask = np.abs(beta) <= infinite_tol
    finite = alpha[~inf_mask] / beta[~inf_mask] * (na / ne)
    return Spectrum(finite, int(inf_mask.sum()), "S", dict(source or {}))


Solver = Callable[[np.ndarray, np.ndarray], Spectrum]


def pencil_spectrum(pencil: Pencil, solver: Optional[Solver] = None) -> Spectrum:
    """Spectrum of a :class:`Pencil` in its own domain.

    ``solver`` replaces the built-in dense/QZ backends; it receives ``(E, A)``
    and must return a :class:`Spectrum`. This is the hook for sparse iterative
    eigensolvers on large models.
    """
    if solver is not None:
        spec = solver(pencil.E, pencil.A)
    elif np.array_equal(pencil.E, np.eye(pencil.size)):
        spec = eig_dense(pencil.A)
    elif pencil.form == "dense":
        try:
            spec = eig_dense(reduce_to_standard(pencil))
        except SingularMassMatrix:
            spec = eig_generalized(pencil.E, pencil.A)
    else:
        spec = eig_generalized(pencil.E, pencil.A)
    return replace(spec, domain=pencil.domain, source=pencil.metadata())


def map_z_to_s(z, h):
    """``log(z) / h`` on the principal branch."""
    if h <= 0:
        raise ValueError("h must be positive")
    z = complex(z)
    if z == 0:
        raise ZeroEigenvalue("z = 0 maps to s = -inf")
    return complex(np.log(z)) / h


def to_s_plane(spec: Spectrum, h, zero_tol=ZERO_TOL) -> Spectrum:
    """Map a Z-domain spectrum to the S plane.

    Eigenvalues with ``|z| <= zero_tol`` map to ``-inf`` and are counted as
    infinite, together with any infinite Z eigenvalues.
    """
    if spec.domain == "S":
        return spec
    z = spec.eigenvalues
    zero = np.abs(z) <= zero_tol
    s = np.log(z[~zero]) / h
    alias = np.abs(np.abs(np.angle(z[~zero])) - np.pi) < ALIAS_TOL
    src = dict(spec.source)
    src["mapped_from"] = "Z"
    src["zero_z"] = int(zero.sum())
    return Spectrum(s, spec.infinite_multiplicity + int(zero.sum()), "S", src, alias, spec.diagnostics)


def stiffness_ratio(spec: Spectrum) -> float:
    """``max |s| / min |s|`` over finite nonzero eigenvalues."""
    if spec.domain != "S":
        raise ValueError("stiffness ratio is defined on an S-domain spectrum")
    mags = np.abs(spec.eigenvalues)
    mags = mags[mags > 0]
    if mags.size == 0:
        raise EmptySpectrum("no finite nonzero eigenvalues")
    return float(mags.max() / mags.min())


def damping_frequency(s) -> ModeSummary:
    s = complex(s)
    mag = abs(s)
    if mag == 0.0:
        raise ZeroEigenvalue("damping ratio undefined at s = 0")
    return ModeSummary(s, -s.real / mag, mag / (2.0 * np.pi))


@dataclass(frozen=True)
class DelayRootFailure:
    guess: complex
    last: complex
    residual: float
    iterations: int


def _newton_delay_root(dp: DelayPencil, s0, tol, max_iter):
    """Return ``(s, v, residual, iterations, converged)``."""
    n = dp.size
    s = complex(s0)
    _, _, vh = np.linalg.svd(dp.matrix(s))
    v = vh[-1].conj()
    c = v.conj()
    res = np.inf
    it = 0
    for it in range(max_iter + 1):
        T = dp.matrix(s)
        vn = v / np.linalg.norm(v)
        res = float(np.linalg.norm(T @ vn))
        if res <= tol:
            return s, vn, res, it, True
        if it == max_iter:
            break
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = T
        J[:n, n] = dp.derivative(s) @ v
        J[n, :n] = c
        F = np.concatenate([T @ v, [c @ v - 1.0]])
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        v = v + d[:n]
        s = s + d[n]
        if not (np.isfinite(s) and np.all(np.isfinite(v))):
            break
    return s, v, res, it, False


def solve_delay_eigs(dp: DelayPencil, guesses, tol=1e-10, max_iter=50, dedup_tol=1e-6,
                     strict=False) -> Spectrum:
    """Roots of ``det(sE - A0 + A1 e^{-sh})`` near each guess.

    Newton on the bordered system ``[T(s) v = 0; c^H v = 1]`` with ``c`` set from
    the smallest right singular vector of ``T`` at the guess. Guesses that fail
    to converge are recorded in ``Spectrum.diagnostics`` as
    :class:`DelayRootFailure` entries; with ``strict=True`` the first failure
    raises :class:`NoRootFound` instead.
    """
    guesses = list(guesses)
    if not guesses:
        raise ValueError("at least one guess is required")
    roots, failures = [], []
    for g in guesses:
        s, _, res, it, ok = _newton_delay_root(dp, g, tol, max_iter)
        if not ok:
            if strict:
                raise NoRootFound(f"no delay root near {g} (residual {res:.3e})", iterations=it)
            failures.append(DelayRootFailure(complex(g), complex(s), res, it))
            continue
        if all(abs(s - r) > dedup_tol for r in roots):
            roots.append(s)
    src = {"kind": "delay", "h": dp.h, "form": dp.form}
    return Spectrum(np.array(roots, dtype=complex), 0, "S", src, None, tuple(failures))
