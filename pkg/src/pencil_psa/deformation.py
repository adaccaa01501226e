"""Numerical deformation of system modes, stability margins and accuracy-limited steps."""

import csv
import io
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import (
    CriterionUnmetAtLowerBound,
    ModeLost,
    PencilPsaError,
    SingularAlgebraicJacobian,
    StableAtUpperBound,
    UnstableAtLowerBound,
    ZeroEigenvalue,
    ZeroReference,
)
from .model import SmallSignalModel
from .pencils import PcScheme, pencil_dae, pencil_delay, scheme_pencil
from .spectra import Spectrum, damping_frequency, fmt, pencil_spectrum, solve_delay_eigs, to_s_plane


def match_cap(s):
    """Largest admissible distance between a mode and its deformed image."""
    return 0.5 * abs(s) + 1.0


@dataclass(frozen=True)
class ModePairing:
    pairs: list
    unmatched_reference: list
    unmatched_deformed: list
    ref_index: list = field(default_factory=list)
    def_index: list = field(default_factory=list)

    def deformed_for(self, i):
        """Deformed eigenvalue paired with reference entry ``i``, or None."""
        for (_, d, _), ri in zip(self.pairs, self.ref_index):
            if ri == i:
                return d
        return None


def _greedy(anchor, candidates, caps):
    """Greedy minimum-distance assignment of anchors to candidates under per-anchor caps."""
    na, nc = len(anchor), len(candidates)
    if na == 0 or nc == 0:
        return {}
    dist = np.abs(np.asarray(anchor)[:, None] - np.asarray(candidates)[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    used_a, used_c, assign = set(), set(), {}
    for flat in order:
        i, j = divmod(int(flat), nc)
        if i in used_a or j in used_c or dist[i, j] > caps[i]:
            continue
        assign[i] = j
        used_a.add(i)
        used_c.add(j)
        if len(used_a) == na or len(used_c) == nc:
            break
    return assign


def match_modes(reference, deformed, strategy="nearest", previous=None) -> ModePairing:
    """Pair reference eigenvalues with deformed ones.

    ``nearest`` matches by distance to the reference values. ``continuation``
    matches by distance to ``previous``, the deformed values tracked at the
    preceding step of a sweep (aligned with ``reference``; ``None`` entries fall
    back to the reference value). The admissible distance is always
    ``0.5 |s| + 1`` with ``s`` the reference value.
    """
    ref = np.asarray(reference.eigenvalues if isinstance(reference, Spectrum) else reference, dtype=complex)
    dfm = np.asarray(deformed.eigenvalues if isinstance(deformed, Spectrum) else deformed, dtype=complex)
    if strategy == "nearest":
        anchor = ref
    elif strategy == "continuation":
        if previous is None:
            anchor = ref
        else:
            anchor = np.array([r if p is None or not np.isfinite(p) else p for r, p in zip(ref, previous)])
    else:
        raise ValueError(f"unknown matching strategy {strategy!r}")
    caps = [match_cap(s) for s in ref]
    assign = _greedy(anchor, dfm, caps)
    pairs, ri, di = [], [], []
    for i in sorted(assign):
        j = assign[i]
        pairs.append((complex(ref[i]), complex(dfm[j]), float(abs(dfm[j] - anchor[i]))))
        ri.append(i)
        di.append(j)
    unmatched_ref = [complex(ref[i]) for i in range(len(ref)) if i not in assign]
    taken = set(di)
    unmatched_def = [complex(dfm[j]) for j in range(len(dfm)) if j not in taken]
    return ModePairing(pairs, unmatched_ref, unmatched_def, ri, di)


def relative_error(s, s_hat) -> float:
    """Percent relative error ``100 |s_hat - s| / |s|``."""
    s, s_hat = complex(s), complex(s_hat)
    if s == 0:
        raise ZeroReference("relative error undefined for s = 0")
    return 100.0 * abs(s_hat - s) / abs(s)


def damping_deformation(s, s_hat) -> float:
    """Damping-ratio change ``100 (zeta_hat - zeta)`` in percentage points."""
    return 100.0 * (damping_frequency(s_hat).damping_ratio - damping_frequency(s).damping_ratio)


def reference_spectrum(ssm: SmallSignalModel) -> Spectrum:
    """Spectrum of the DAE pencil, dense when g_y is invertible."""
    try:
        return pencil_spectrum(pencil_dae(ssm, "dense"))
    except SingularAlgebraicJacobian:
        return pencil_spectrum(pencil_dae(ssm, "sparse"))


def discrete_spectrum(ssm, scheme: PcScheme, h) -> Spectrum:
    """Z-domain spectrum of ``scheme`` at step ``h``."""
    return pencil_spectrum(scheme_pencil(ssm, scheme, h))


def spectral_radius(ssm, scheme, h):
    return discrete_spectrum(ssm, scheme, h).spectral_radius()


@dataclass(frozen=True)
class MarginResult:
    """Largest stable step and the probes bracketing the stability boundary."""

    h: float
    lower: float
    upper: Optional[float]
    radius_lower: float
    radius_upper: Optional[float]
    capped: bool = False

    def __float__(self):
        return float(self.h)


def _scan_grid(h_lo, h_hi, n):
    if not (0 < h_lo < h_hi):
        raise ValueError("need 0 < h_lo < h_hi")
    return np.geomspace(h_lo, h_hi, n)


def stability_margin(ssm, scheme: PcScheme, h_lo=1e-4, h_hi=1.0, tol=1e-9, n_scan=64) -> MarginResult:
    """Largest step keeping every finite Z-pencil eigenvalue inside the unit circle.

    A geometric scan from ``h_lo`` finds the first unstable probe, then bisection
    narrows the bracket to ``tol``. The returned ``h`` is the stable end of the
    final bracket. If no probe up to ``h_hi`` is unstable, ``h_hi`` is returned
    with ``capped=True`` and a :class:`StableAtUpperBound` warning.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho_lo = spectral_radius(ssm, scheme, h_lo)
    if rho_lo >= 1.0:
        raise UnstableAtLowerBound(f"spectral radius {rho_lo:.6g} >= 1 already at h={h_lo:g}")
    lo, rlo = h_lo, rho_lo
    hi = rhi = None
    for h in _scan_grid(h_lo, h_hi, n_scan)[1:]:
        rho = spectral_radius(ssm, scheme, h)
        if rho >= 1.0:
            hi, rhi = float(h), rho
            break
        lo, rlo = float(h), rho
    if hi is None:
        warnings.warn(f"stable up to h_hi={h_hi:g}; margin not bracketed", StableAtUpperBound, stacklevel=2)
        return MarginResult(float(h_hi), lo, None, rlo, None, capped=True)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rho = spectral_radius(ssm, scheme, mid)
        if rho >= 1.0:
            hi, rhi = mid, rho
        else:
            lo, rlo = mid, rho
    return MarginResult(lo, lo, hi, rlo, rhi)


@dataclass(frozen=True)
class AccuracyResult:
    """Largest step meeting a relative-error criterion on a set of target modes."""

    h: float
    binding_mode: Optional[int]
    binding_eigenvalue: Optional[complex]
    errors_pct: tuple
    upper: Optional[float] = None
    capped: bool = False
    confirmed: bool = True  # the step just above ``h`` violates the criterion

    def __float__(self):
        return float(self.h)


def _mode_errors(ssm, scheme, h, targets, previous):
    """Relative errors of tracked targets at step ``h`` and the new tracked values."""
    spec = to_s_plane(discrete_spectrum(ssm, scheme, h), h)
    usable = spec.eigenvalues[~spec.aliasing]
    pairing = match_modes(targets, usable, "continuation", previous)
    tracked = []
    for i, s in enumerate(targets):
        d = pairing.deformed_for(i)
        if d is None:
            raise ModeLost(f"target mode {s} could not be tracked at h={h:g}", h=h, mode=i)
        tracked.append(d)
    errs = [relative_error(s, d) for s, d in zip(targets, tracked)]
    return np.array(errs), tracked


def max_step_for_accuracy(
    ssm, scheme: PcScheme, target_modes, criterion=0.1, h_lo=1e-5, h_hi=1.0, tol=1e-7, n_scan=64
) -> AccuracyResult:
    """Largest ``h`` for which every target mode's relative error stays within ``criterion`` percent.

    Errors need not grow monotonically with ``h``. The search therefore returns
    the first violation boundary met when scanning a geometric grid upward from
    ``h_lo``; the bracketing interval is refined by bisection and the step just
    above the result is checked to violate the criterion. Modes are tracked by
    continuation along the scan. All target modes are evaluated jointly.
    """
    if criterion <= 0:
        raise ValueError("criterion must be positive")
    targets = [complex(s) for s in target_modes]
    if not targets:
        raise ValueError("at least one target mode is required")
    errs, tracked = _mode_errors(ssm, scheme, h_lo, targets, None)
    if errs.max() > criterion:
        raise CriterionUnmetAtLowerBound(
            f"relative error {errs.max():.4g}% exceeds {criterion:g}% already at h={h_lo:g}"
        )
    lo, lo_errs, lo_tracked = h_lo, errs, tracked
    hi = None
    for h in _scan_grid(h_lo, h_hi, n_scan)[1:]:
        errs, tracked = _mode_errors(ssm, scheme, float(h), targets, lo_tracked)
        if errs.max() > criterion:
            hi, hi_errs = float(h), errs
            break
        lo, lo_errs, lo_tracked = float(h), errs, tracked
    if hi is None:
        warnings.warn(f"criterion met up to h_hi={h_hi:g}", StableAtUpperBound, stacklevel=2)
        return AccuracyResult(float(h_hi), None, None, tuple(lo_errs), None, capped=True)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        errs, tracked = _mode_errors(ssm, scheme, mid, targets, lo_tracked)
        if errs.max() > criterion:
            hi, hi_errs = mid, errs
        else:
            lo, lo_errs, lo_tracked = mid, errs, tracked
    check, _ = _mode_errors(ssm, scheme, lo + tol, targets, lo_tracked)
    binding = int(np.argmax(hi_errs))
    return AccuracyResult(lo, binding, targets[binding], tuple(lo_errs), hi, confirmed=bool(check.max() > criterion))


class ReportRow(NamedTuple):
    variant: str
    h: float
    mode_id: int
    ref: complex
    deformed: complex
    rel_err_pct: float
    damp_def_pts: float
    aliasing: bool


REPORT_COLUMNS = ["variant", "h", "mode_id", "ref_re", "ref_im", "def_re", "def_im", "rel_err_pct", "damp_def_pts", "aliasing"]


@dataclass
class DeformationReport:
    rows: List[ReportRow]
    config: dict
    errors: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    r.variant,
                    fmt(r.h),
                    r.mode_id,
                    fmt(r.ref.real),
                    fmt(r.ref.imag),
                    fmt(r.deformed.real),
                    fmt(r.deformed.imag),
                    fmt(r.rel_err_pct),
                    fmt(r.damp_def_pts),
                    int(r.aliasing),
                ]
            )
        return buf.getvalue()

    def for_mode(self, mode_id, variant=None):
        return [r for r in self.rows if r.mode_id == mode_id and (variant is None or r.variant == variant)]


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PENCIL_PSA_THREADS")
    return max(1, int(env)) if env else 1


def _cell_spectrum(ssm, scheme, h):
    try:
        return to_s_plane(discrete_spectrum(ssm, scheme, h), h), None
    except (PencilPsaError, ValueError, np.linalg.LinAlgError) as exc:
        return None, exc


def _row(label, h, mode_id, s, d, alias):
    if d is None:
        nan = complex(np.nan, np.nan)
        return ReportRow(label, h, mode_id, s, nan, np.nan, np.nan, False)
    try:
        dd = damping_deformation(s, d)
    except ZeroEigenvalue:
        dd = np.nan
    return ReportRow(label, h, mode_id, s, d, relative_error(s, d), dd, bool(alias))


def sweep(ssm, variants, h_grid, target_modes=None, include_delay=False, workers=None) -> DeformationReport:
    """Deformation of tracked modes for each scheme variant across a step grid.

    Spectra of all ``(variant, h)`` cells are computed independently (in a thread
    pool sized by ``workers`` or ``PENCIL_PSA_THREADS``); modes are then tracked
    along ``h_grid`` by continuation. A failing cell is recorded in
    ``report.errors`` and its rows are skipped. With ``include_delay`` the
    one-step-delay characteristic roots are added as variant ``"delay"``.
    """
    h_grid = [float(h) for h in h_grid]
    if any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("h_grid must be strictly increasing")
    if any(h <= 0 for h in h_grid):
        raise ValueError("h_grid entries must be positive")
    variants = list(variants)
    if target_modes is None:
        targets = [complex(s) for s in reference_spectrum(ssm).eigenvalues if s != 0]
    else:
        targets = [complex(s) for s in target_modes]
    config = {
        "variants": [v.label for v in variants] + (["delay"] if include_delay else []),
        "h_grid": h_grid,
        "targets": targets,
        "matching": "continuation",
    }
    report = DeformationReport([], config)
    if not h_grid or not targets:
        return report

    cells = [(v, h) for v in variants for h in h_grid]
    with ThreadPoolExecutor(max_workers=_worker_count(workers)) as pool:
        results = list(pool.map(lambda c: _cell_spectrum(ssm, c[0], c[1]), cells))

    rows = []
    for vi, v in enumerate(variants):
        previous = None
        for hi, h in enumerate(h_grid):
            spec, exc = results[vi * len(h_grid) + hi]
            if exc is not None:
                report.errors.append((v.label, h, type(exc).__name__, str(exc)))
                continue
            pairing = match_modes(targets, spec, "continuation", previous)
            alias_of = dict(zip(spec.eigenvalues.tolist(), spec.aliasing.tolist()))
            current = []
            for m, s in enumerate(targets):
                d = pairing.deformed_for(m)
                current.append(d if d is not None else (previous[m] if previous else None))
                rows.append((vi, m, hi, _row(v.label, h, m, s, d, alias_of.get(d, False))))
            previous = current

    if include_delay:
        vi = len(variants)
        previous = None
        for hi, h in enumerate(h_grid):
            guesses = targets if previous is None else [p if p is not None else s for p, s in zip(previous, targets)]
            try:
                spec = solve_delay_eigs(pencil_delay(ssm, h, "dense" if ssm.mu == 0 else _delay_form(ssm)), guesses)
            except (PencilPsaError, ValueError, np.linalg.LinAlgError) as exc:
                report.errors.append(("delay", h, type(exc).__name__, str(exc)))
                continue
            pairing = match_modes(targets, spec, "continuation", previous)
            current = []
            for m, s in enumerate(targets):
                d = pairing.deformed_for(m)
                current.append(d if d is not None else (previous[m] if previous else None))
                rows.append((vi, m, hi, _row("delay", h, m, s, d, False)))
            previous = current

    rows.sort(key=lambda t: (t[0], t[1], t[2]))
    report.rows = [r for *_, r in rows]
    return report


def _delay_form(ssm):
    try:
        pencil_delay(ssm, 0.0, "dense")
        return "dense"
    except SingularAlgebraicJacobian:
        return "sparse"
