"""Command-line front end.

Each run is described by a :class:`RunManifest`, built from flags or read from
a JSON file (``--manifest``). Outputs are written to a temporary file and
renamed into place, so a failed run never leaves a partial artifact.

Exit status: 0 success, 2 validation error, 3 numerical failure. Failures
print a JSON record ``{"error": <exception name>, "message": ...}`` to stderr.
"""

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .deformation import max_step_for_accuracy, reference_spectrum, stability_margin, sweep
from .errors import CoefficientMismatch, DimensionError, PencilPsaError
from .model import DaeModel, load_model
from .pencils import PcScheme, pencil_delay, scheme_pencil
from .simulator import SimConfig, simulate
from .spectra import ALIAS_TOL, ZERO_TOL, fmt, pencil_spectrum, solve_delay_eigs, to_s_plane

COMMANDS = ("eig", "pencil-eig", "margin", "maxstep", "sweep", "simulate")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ValidationError(PencilPsaError, ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    model_path: str
    output_path: Optional[str] = None
    h: Optional[float] = None
    r: int = 1
    interfacing: str = "ext"
    family: str = "heun"
    k: int = 1
    pencil: str = "pc"
    grid: Optional[object] = None  # "lo:hi:n(log|lin)" or a list of h values
    criterion_pct: float = 0.1
    modes: Optional[List[int]] = None
    t_end: float = 1.0
    format: str = "csv"
    h_lo: float = 1e-4
    h_hi: float = 1.0
    tol: float = 1e-9
    x0: Optional[List[float]] = None
    variants: Optional[List[dict]] = None
    include_delay: bool = False
    seed: Optional[int] = None

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**data)


def parse_grid(spec):
    """``lo:hi:n`` with optional spacing suffix, e.g. ``1e-4:1e-1:12log`` or ``0.01:0.1:10:lin``.

    Manifests may also give an explicit increasing list of step sizes.
    """
    if spec is None:
        raise ValidationError("a grid is required")
    if isinstance(spec, (list, tuple)):
        pts = [float(v) for v in spec]
        if not pts:
            raise ValidationError("grid is empty")
        if pts[0] <= 0 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValidationError("grid must be positive and strictly increasing")
        return pts
    parts = spec.split(":")
    if len(parts) == 4:
        lo, hi, n, kind = parts
    elif len(parts) == 3:
        lo, hi, n = parts
        kind = "log" if n.endswith("log") else "lin"
        n = n.removesuffix("log").removesuffix("lin")
    else:
        raise ValidationError(f"bad grid spec {spec!r}")
    try:
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ValidationError(f"bad grid spec {spec!r}") from None
    if kind not in ("log", "lin"):
        raise ValidationError(f"grid spacing must be log or lin, got {kind!r}")
    if n < 1:
        raise ValidationError("grid is empty")
    if not (0 < lo) or (n > 1 and not lo < hi):
        raise ValidationError("grid needs 0 < lo < hi")
    if n == 1:
        return [lo]
    pts = np.geomspace(lo, hi, n) if kind == "log" else np.linspace(lo, hi, n)
    return [float(v) for v in pts]


def _scheme(m: RunManifest, variant=None):
    v = dict(variant or {})
    family = v.get("family", m.family)
    r = int(v.get("r", m.r))
    iface = v.get("interfacing", m.interfacing)
    if family in ("heun", "fem"):
        return PcScheme.heun(0 if family == "fem" else r, iface)
    if family in ("ab", "adams", "adams-bashforth"):
        return PcScheme.adams(int(v.get("k", m.k)), r, iface)
    raise ValidationError(f"unknown family {family!r}")


def _validate(m: RunManifest):
    if m.command not in COMMANDS:
        raise ValidationError(f"unknown command {m.command!r}")
    if m.h is not None and not m.h > 0:
        raise ValidationError("h must be positive")
    if m.r < 0:
        raise ValidationError("r must be non-negative")
    if m.format not in ("csv", "json"):
        raise ValidationError("format must be csv or json")
    if m.command in ("pencil-eig", "simulate") and m.h is None:
        raise ValidationError(f"{m.command} needs --h")
    if m.command == "simulate" and not m.t_end >= m.h:
        raise ValidationError("t_end must be at least h")
    if m.pencil not in ("pc", "delay"):
        raise ValidationError("pencil must be pc or delay")


def _targets(ssm, modes):
    ref = reference_spectrum(ssm).eigenvalues
    if modes is None:
        return [complex(s) for s in ref], list(range(len(ref)))
    for i in modes:
        if not 0 <= i < len(ref):
            raise ValidationError(f"mode index {i} out of range (0..{len(ref) - 1})")
    return [complex(ref[i]) for i in modes], list(modes)


def _spectrum_out(spec, fmt_kind):
    return spec.to_json() + "\n" if fmt_kind == "json" else spec.to_csv()


def _pencil_eig_csv(zspec, h):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "domain", "finite", "aliasing_flag", "s_re", "s_im"])
    z = zspec.eigenvalues
    for v in z:
        if abs(v) <= ZERO_TOL:
            s, alias = complex(-np.inf, 0.0), False
        else:
            s = complex(np.log(v)) / h
            alias = abs(abs(np.angle(v)) - np.pi) < ALIAS_TOL
        w.writerow([fmt(v.real), fmt(v.imag), "Z", 1, int(alias), fmt(s.real), fmt(s.imag)])
    for _ in range(zspec.infinite_multiplicity):
        w.writerow(["inf", fmt(0.0), "Z", 0, 0, "inf", fmt(0.0)])
    return buf.getvalue()


def execute(m: RunManifest, base_dir="."):
    """Run a manifest and return ``(text, sidecars)`` without touching the output path."""
    _validate(m)
    path = m.model_path if os.path.isabs(m.model_path) else os.path.join(base_dir, m.model_path)
    try:
        ssm = load_model(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read model {path}: {exc}") from exc
    sidecars = {}

    if m.command == "eig":
        return _spectrum_out(reference_spectrum(ssm), m.format), sidecars

    if m.command == "pencil-eig":
        if m.pencil == "delay":
            guesses = reference_spectrum(ssm).eigenvalues
            spec = solve_delay_eigs(pencil_delay(ssm, m.h, "dense"), guesses)
            return _spectrum_out(spec, m.format), sidecars
        zspec = pencil_spectrum(scheme_pencil(ssm, _scheme(m), m.h))
        if m.format == "json":
            return to_s_plane(zspec, m.h).to_json() + "\n", sidecars
        return _pencil_eig_csv(zspec, m.h), sidecars

    if m.command == "margin":
        res = stability_margin(ssm, _scheme(m), m.h_lo, m.h_hi, m.tol)
        out = {
            "h_max": res.h,
            "lower_probe": res.lower,
            "upper_probe": res.upper,
            "radius_lower": res.radius_lower,
            "radius_upper": res.radius_upper,
            "capped": res.capped,
            "scheme": _scheme(m).label,
        }
        return json.dumps(out, sort_keys=True) + "\n", sidecars

    if m.command == "maxstep":
        targets, ids = _targets(ssm, m.modes)
        res = max_step_for_accuracy(ssm, _scheme(m), targets, m.criterion_pct, m.h_lo, m.h_hi, m.tol)
        out = {
            "h_max": res.h,
            "upper_probe": res.upper,
            "binding_mode_id": None if res.binding_mode is None else ids[res.binding_mode],
            "binding_eigenvalue": None
            if res.binding_eigenvalue is None
            else [res.binding_eigenvalue.real, res.binding_eigenvalue.imag],
            "criterion_pct": m.criterion_pct,
            "errors_pct": [float(e) for e in res.errors_pct],
            "capped": res.capped,
            "scheme": _scheme(m).label,
        }
        return json.dumps(out, sort_keys=True) + "\n", sidecars

    if m.command == "sweep":
        grid = parse_grid(m.grid)
        targets, ids = _targets(ssm, m.modes)
        variants = [_scheme(m, v) for v in (m.variants or [None])]
        report = sweep(ssm, variants, grid, targets, include_delay=m.include_delay)
        if report.errors:
            sidecars[".errors.json"] = json.dumps(report.errors, sort_keys=True) + "\n"
        text = report.to_csv()
        if m.modes is not None:
            # report mode ids as indices into the reference spectrum
            lines = text.splitlines(keepends=True)
            out = [lines[0]]
            for line in lines[1:]:
                cols = line.split(",")
                cols[2] = str(ids[int(cols[2])])
                out.append(",".join(cols))
            text = "".join(out)
        return text, sidecars

    # simulate
    model = DaeModel.from_linear(ssm)
    x0 = np.ones(ssm.nu) if m.x0 is None else np.asarray(m.x0, dtype=float)
    if x0.size != ssm.nu:
        raise ValidationError(f"x0 needs {ssm.nu} entries")
    method = {"heun": "heun", "fem": "fem", "ab": "adams", "adams": "adams", "tm": "tm"}.get(m.family)
    if method is None:
        raise ValidationError(f"unknown family {m.family!r}")
    scheme = _scheme(m) if m.family != "tm" else PcScheme.heun(m.r, m.interfacing)
    cfg = SimConfig(h=m.h, t_end=m.t_end, method=method, scheme=scheme)
    traj = simulate(model, x0, np.zeros(ssm.mu), cfg)
    sidecars[".diag.json"] = traj.diagnostics_json() + "\n"
    return traj.to_csv(), sidecars


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(manifest: RunManifest, base_dir=".", stdout=None, stderr=None) -> int:
    """Execute ``manifest``; return the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        text, sidecars = execute(manifest, base_dir)
    except (ValidationError, DimensionError, CoefficientMismatch, ValueError) as exc:
        if isinstance(exc, PencilPsaError) and not isinstance(exc, (ValidationError, DimensionError, CoefficientMismatch)):
            return _fail(exc, EXIT_NUMERICAL, stderr)
        return _fail(exc, EXIT_VALIDATION, stderr)
    except (PencilPsaError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, EXIT_NUMERICAL, stderr)
    if manifest.output_path:
        for suffix, extra in sidecars.items():
            _atomic_write(manifest.output_path + suffix, extra)
        _atomic_write(manifest.output_path, text)
    else:
        stdout.write(text)
    return EXIT_OK


def _fail(exc, code, stderr):
    stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="pencil-psa", description=__doc__.split("\n\n")[0])
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--manifest", help="JSON run manifest; flags given alongside override its fields")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--h", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--interfacing", choices=("ext", "perfect"))
    p.add_argument("--family", choices=("heun", "fem", "ab", "tm"))
    p.add_argument("--k", type=int)
    p.add_argument("--pencil", choices=("pc", "delay"))
    p.add_argument("--grid", help="lo:hi:n followed by log or lin, e.g. 1e-4:1e-1:12log")
    p.add_argument("--criterion-pct", type=float)
    p.add_argument("--modes", help="comma-separated indices into the DAE spectrum")
    p.add_argument("--tend", type=float)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--h-lo", type=float)
    p.add_argument("--h-hi", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--x0", help="comma-separated initial state perturbation")
    p.add_argument("--with-delay", action="store_true", help="add one-step-delay rows to a sweep")
    return p


def manifest_from_args(args):
    base_dir = "."
    if args.manifest:
        with open(args.manifest) as fh:
            m = RunManifest.from_json(fh.read())
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
    else:
        if not args.command or not args.model:
            raise ValidationError("command and --model are required without --manifest")
        m = RunManifest(command=args.command, model_path=os.path.abspath(args.model))
    if args.command:
        m.command = args.command
    if args.model and args.manifest:
        m.model_path = os.path.abspath(args.model)
    overrides = {
        "output_path": args.out,
        "h": args.h,
        "r": args.r,
        "interfacing": args.interfacing,
        "family": args.family,
        "k": args.k,
        "pencil": args.pencil,
        "grid": args.grid,
        "criterion_pct": args.criterion_pct,
        "t_end": args.tend,
        "format": args.format,
        "h_lo": args.h_lo,
        "h_hi": args.h_hi,
        "tol": args.tol,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(m, k, v)
    if args.modes:
        try:
            m.modes = [int(v) for v in args.modes.split(",")]
        except ValueError:
            raise ValidationError(f"bad --modes {args.modes!r}") from None
    if args.x0:
        m.x0 = [float(v) for v in args.x0.split(",")]
    if args.with_delay:
        m.include_delay = True
    return m, base_dir


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        m, base_dir = manifest_from_args(args)
    except (ValidationError, ValueError, OSError) as exc:
        return _fail(exc, EXIT_VALIDATION, sys.stderr)
    return run(m, base_dir)


if __name__ == "__main__":
    sys.exit(main())
