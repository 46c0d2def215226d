"""Command-line driver: one subcommand per experiment.

Usage::

    phasegeom <subcommand> [--config FILE] [--seed N] [--out DIR] [--threads N] [overrides]

Parameters resolve as schema defaults, then the config file, then command
line overrides. A config file is TOML (``key = value`` with ``[table]``
nesting) or JSON, chosen by suffix. Its top level may hold ``seed``,
``threads`` and either flat parameter keys or a table named after the
subcommand. Any other key is rejected with exit code 2; a config file with
no keys at all prints the full parameter schema and exits with 2.

Each run writes into ``--out`` (default ``phasegeom-out``):

* one or more ``<name>.csv`` tables, header row with units in brackets;
* ``<subcommand>.json`` holding results and a ``consistency`` list;
* ``<subcommand>.manifest.json`` with the config hash, tool version,
  timestamps and sha256 of every output.

The CSV and result JSON depend only on the resolved config and seed, so a
rerun reproduces the manifest checksums. A lock file
``.phasegeom.lock`` keeps two runs out of one directory.

History files (``histories --history-file``) are plain text with one chart
point per record: ``q p`` or ``q p t`` separated by commas or whitespace.
Blank lines and lines starting with ``#`` are skipped. Time labels, when
present, must be given on every record and be nondecreasing.

Exit codes: 0 success, 2 invalid input or unusable output directory,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
LOCK_NAME = ".phasegeom.lock"
RESERVED = ("seed", "threads")


@dataclass(frozen=True)
class Param:
    kind: str  # float, int, bool, str, floats, ints
    default: object
    help: str
    check: str = ""  # positive, nonneg, finite, ">=N" or "a|b|c"

    def parse(self, name, raw):
        try:
            v = self._convert(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"{name}: expected {self.kind}, got {raw!r}") from None
        for x in (v if isinstance(v, list) else [v]):
            self._validate(name, x)
        return v

    def _convert(self, raw):
        k = self.kind
        if k in ("floats", "ints"):
            if isinstance(raw, str):
                raw = [s for s in raw.replace(";", ",").split(",") if s.strip()]
            if not isinstance(raw, (list, tuple)) or not raw:
                raise ValueError
            return [self._scalar(k[:-1], x) for x in raw]
        return self._scalar(k, raw)

    @staticmethod
    def _scalar(k, x):
        if k == "float":
            if isinstance(x, bool):
                raise ValueError
            return float(x)
        if k == "int":
            if isinstance(x, bool) or (isinstance(x, float) and not x.is_integer()):
                raise ValueError
            return int(x)
        if k == "bool":
            if isinstance(x, bool):
                return x
            s = str(x).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if not isinstance(x, str):
            raise ValueError
        return x

    def _validate(self, name, x):
        c = self.check
        if isinstance(x, float) and not math.isfinite(x):
            raise ValidationError(f"{name} must be finite")
        if c == "positive" and not x > 0:
            raise ValidationError(f"{name} must be positive, got {x}")
        if c == "nonneg" and not x >= 0:
            raise ValidationError(f"{name} must be nonnegative, got {x}")
        if c.startswith(">=") and not x >= float(c[2:]):
            raise ValidationError(f"{name} must be {c}, got {x}")
        if "|" in c and x not in c.split("|"):
            raise ValidationError(f"{name} must be one of {c.split('|')}, got {x!r}")

    def describe(self):
        d = {"type": self.kind, "default": self.default, "help": self.help}
        if self.check:
            d["constraint"] = self.check
        return d


SCHEMAS = {
    "weyl-geometry": {
        "sigma": Param("float", 1.0, "reference width", "positive"),
        "cpq": Param("float", 0.0, "reference chirp (q-p correlation source)"),
        "gauge": Param("str", "position-phase", "phase convention", "position-phase|symmetric"),
        "q": Param("float", 0.7, "chart point q"),
        "p": Param("float", -0.4, "chart point p"),
        "loop_side": Param("float", 1.0, "side of the square holonomy loop", "positive"),
        "loop_points": Param("ints", [10, 100, 1000], "loop discretisations, increasing", ">=4"),
    },
    "histories": {
        "sigma": Param("float", 1.0, "reference width", "positive"),
        "loop_side": Param("float", 1.0, "side of the square loop", "positive"),
        "refinements": Param("ints", [8, 32, 128, 512], "Bargmann refinements, increasing", ">=2"),
        "separations": Param("floats", [0.5, 1.0, 2.0, 4.0, 8.0], "slot separations for the additivity defect",
                             "nonneg"),
        "history_file": Param("str", "", "optional history file (see module docstring)"),
    },
    "zeno": {
        "steps": Param("int", 10, "number of steps", ">=1"),
        "ds2": Param("float", 1.0, "metric length per step", "nonneg"),
        "sigma": Param("float", 1.0, "reference width", "positive"),
    },
    "uncertainty": {
        "sigma": Param("float", 1.0, "reference width", "positive"),
        "cpq": Param("float", 0.0, "reference chirp"),
        "dq": Param("float", 1.0, "probe displacement in q for the optimal-reference search", "positive"),
        "dp": Param("float", 1.0, "probe displacement in p", "positive"),
        "grid_points": Param("int", 400, "log-spaced dq grid size", ">=3"),
    },
    "extended": {
        "configs": Param("int", 100, "number of seeded oscillator configurations", ">=1"),
        "tol": Param("float", 1e-8, "slack tolerance", "nonneg"),
    },
    "klauder": {
        "nu": Param("floats", [4.0, 16.0, 64.0, 256.0], "diffusion constants, ascending", "positive"),
        "time": Param("float", math.pi / 2, "propagation time", "nonneg"),
        "omega": Param("float", 1.0, "oscillator frequency", "positive"),
        "n": Param("int", 128, "lattice points per axis", ">=8"),
        "steps": Param("int", 64, "time slices", ">=1"),
        "z": Param("floats", [1.0, 0.0], "final label (q, p)"),
        "zp": Param("floats", [0.0, 1.0], "initial label (q, p)"),
        "symbol": Param("str", "consistent", "Hamiltonian symbol", "consistent|upper"),
        "mc_samples": Param("int", 100000, "Monte Carlo paths at mc_nu (0 disables)", "nonneg"),
        "mc_nu": Param("float", 4.0, "diffusion constant for the Monte Carlo check", "positive"),
    },
    "poincare": {
        "sigma": Param("float", 0.1, "hyperboloid width", "positive"),
        "m": Param("float", 1.0, "mass", "positive"),
        "boost": Param("floats", [0.5, 0.0, 0.0], "spatial part of the test boost label I"),
        "kappa_sigmas": Param("floats", [0.05, 0.1, 0.2], "widths for the kappa table", "positive"),
        "geometry": Param("bool", True, "finite-difference geometry comparison"),
        "resolution": Param("bool", True, "resolution-of-unity Monte Carlo"),
        "resolution_sigma": Param("float", 0.2, "width for the resolution check", "positive"),
        "log2_samples": Param("int", 10, "log2 of Sobol points per replicate", ">=6"),
        "scan": Param("bool", True, "covariant uncertainty scans"),
    },
    "report": {},
}


def schema_dump() -> dict:
    return {sub: {k: p.describe() for k, p in sch.items()} for sub, sch in SCHEMAS.items()}


# ------------------------------------------------------------------ config

def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(raw.decode("utf-8")) if raw.strip() else {}
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise ValidationError(f"cannot parse config {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a key-value table")
    return doc


class EmptyConfig(ValidationError):
    pass


def resolve(sub: str, cfg: dict, overrides: dict, seed=None, threads=None):
    """Merge defaults, config and overrides; return (params, seed, threads)."""
    schema = SCHEMAS[sub]
    if cfg is not None and not cfg:
        raise EmptyConfig("config file is empty")
    cfg = dict(cfg or {})
    flat = {k: cfg.pop(k) for k in list(cfg) if k in schema}
    table = cfg.pop(sub, {})
    if not isinstance(table, dict):
        raise ValidationError(f"[{sub}] must be a table")
    reserved = {k: cfg.pop(k) for k in RESERVED if k in cfg}
    unknown = sorted(f"{k}" for k in cfg) + sorted(f"{sub}.{k}" for k in table if k not in schema)
    if unknown:
        raise ValidationError("unknown config keys: " + ", ".join(unknown))
    merged = {**flat, **table, **{k: v for k, v in overrides.items() if v is not None}}
    params = {k: p.parse(k, merged[k]) if k in merged else p.default for k, p in schema.items()}
    seed = reserved.get("seed", 0) if seed is None else seed
    threads = reserved.get("threads", 1) if threads is None else threads
    seed = Param("int", 0, "", ">=0").parse("seed", seed)
    if seed >= 2**64:
        raise ValidationError("seed must fit in 64 bits")
    threads = Param("int", 1, "", ">=1").parse("threads", threads)
    return params, seed, threads


# ------------------------------------------------------------------ output

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(x) for x in r])


def write_json(path: Path, doc):
    from .report import _plain
    text = json.dumps(_plain(doc), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


class OutputLock:
    def __init__(self, out: Path):
        self.path = out / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ValidationError(f"output directory is locked by another run ({self.path})") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except OSError:
            pass


def prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".phasegeom.probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ValidationError(f"output directory {out} is not writable: {e.strerror}") from None
    return out


# ------------------------------------------------------------- subcommands
# Each runner returns (tables, doc): tables maps a file stem to
# (header, rows); doc is the JSON body without the consistency list.

def run_weyl_geometry(P, seed):
    from . import report
    from .histories import berry_limit, rectangle
    from .pullback import geometry_fd
    from .weyl import GaussianReference, PhasePoint, WeylFamily, connection_analytic, metric_analytic

    ref = GaussianReference(P["sigma"], P["cpq"])
    fam = WeylFamily(ref, P["gauge"])
    z = np.array([P["q"], P["p"]])
    geo = geometry_fd(fam, z)
    A0 = np.asarray(connection_analytic(PhasePoint(*z), P["gauge"]), float)
    gqq, gpp, gqp = metric_analytic(ref)
    g0 = np.array([[gqq, gqp], [gqp, gpp]])
    F = geo.Omega
    rows = []
    for i, c in enumerate("qp"):
        rows.append((f"A_{c}", geo.A[i], A0[i], abs(geo.A[i] - A0[i])))
    for i, a in enumerate("qp"):
        for j, b in enumerate("qp"):
            if j >= i:
                rows.append((f"g_{a}{b}", geo.g[i, j], g0[i, j], abs(geo.g[i, j] - g0[i, j])))
    rows.append(("Omega_qp", F[0, 1], 1.0, abs(F[0, 1] - 1.0)))
    L = P["loop_side"]
    loops = P["loop_points"]
    bl = berry_limit(WeylFamily(ref, P["gauge"]), rectangle(0.0, 0.0, L, L), loops)
    # gauge check: the symmetric gauge differs by a per-point phase
    other = "symmetric" if P["gauge"] == "position-phase" else "position-phase"
    bl2 = berry_limit(WeylFamily(ref, other), rectangle(0.0, 0.0, L, L), loops)
    hol = [(n, ph, L * L, abs(ph - L * L), abs(ph - ph2))
           for n, ph, ph2 in zip(bl.refinements, bl.phases, bl2.phases)]
    tables = {
        "weyl_geometry": (["quantity", "fd [1]", "closed_form [1]", "abs_error [1]"], rows),
        "weyl_holonomy": (["loop_points", "holonomy [rad]", "enclosed_area [rad]", "abs_error [rad]",
                           "gauge_difference [rad]"], hol),
    }
    doc = {"point": z, "A_fd": geo.A, "g_fd": geo.g, "Omega_fd": F, "holonomy": hol[-1][1],
           "max_closed_form_error": max(r[3] for r in rows)}
    return tables, doc, report.weyl_entries(P["sigma"], P["cpq"] or 0.3)


def read_history_file(path, fam):
    from .histories import History
    pts, times = [], []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ValidationError(f"cannot read history file {path}: {e.strerror}") from None
    for k, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = s.replace(",", " ").split()
        if len(fields) not in (2, 3):
            raise ValidationError(f"{path}:{k}: expected 'q p' or 'q p t'")
        try:
            vals = [float(x) for x in fields]
        except ValueError:
            raise ValidationError(f"{path}:{k}: non-numeric field") from None
        pts.append(vals[:2])
        times.append(vals[2] if len(vals) == 3 else None)
    if not pts:
        raise ValidationError(f"{path}: no records")
    labelled = [t is not None for t in times]
    if any(labelled) and not all(labelled):
        raise ValidationError(f"{path}: time labels must be given on every record or none")
    return History(fam, np.array(pts), np.array(times, float) if all(labelled) else None)


def run_histories(P, seed):
    from .histories import bargmann, berry_limit, nonadditivity_demo, probability, rectangle
    from .weyl import WeylFamily

    fam = WeylFamily(P["sigma"])
    L = P["loop_side"]
    bl = berry_limit(fam, rectangle(0.0, 0.0, L, L), P["refinements"])
    berry = [(n, ph, bl.line_integral, d) for n, ph, d in zip(bl.refinements, bl.phases, bl.differences)]
    na = []
    for d in P["separations"]:
        r = nonadditivity_demo(fam, (0.0, 0.0), (d / 2, 0.0), (-d / 2, 0.0))
        na.append((d, r.p_a, r.p_b, r.p_union, r.defect))
    tables = {
        "berry_limit": (["refinement", "bargmann_phase [rad]", "line_integral [rad]", "abs_difference [rad]"],
                        berry),
        "nonadditivity": (["separation [chart]", "p_a [1]", "p_b [1]", "p_union [1]", "defect [1]"], na),
    }
    doc = {"line_integral": bl.line_integral, "ambiguous_refinements": bl.ambiguous,
           "max_abs_defect": max(abs(r[4]) for r in na)}
    if P["history_file"]:
        h = read_history_file(P["history_file"], fam)
        pr = probability(h)
        steps = [(k, pr.ds2[k], bool(pr.ds2[k] < 1.0)) for k in range(h.steps)]
        tables["history_steps"] = (["step", "ds2 [1]", "below_floor"], steps)
        doc["history"] = {"points": h.points, "times": h.times, "p": pr.p, "sum_ds2": pr.sum_ds2}
        if len(h) >= 3:
            # closing the record into a loop gives its Bargmann phase
            dv = bargmann(fam, h.points)
            doc["history"]["bargmann_phase"] = float(np.angle(dv.value))
            doc["history"]["bargmann_modulus"] = dv.modulus
    return tables, doc, []


def run_zeno(P, seed):
    from . import report
    from .histories import History, zeno_report
    from .weyl import GaussianReference, WeylFamily, metric_analytic

    ref = GaussianReference(P["sigma"])
    gqq = metric_analytic(ref)[0]
    step = math.sqrt(P["ds2"] / gqq)
    n = P["steps"]
    h = History(WeylFamily(ref), np.column_stack([np.arange(n + 1) * step, np.zeros(n + 1)]))
    r = zeno_report(h)
    rows = [(k, s, k in r.below_floor) for k, s in enumerate(r.ds2)]
    doc = {"p": r.p, "exp(-N)": r.bound, "ratio": r.p / r.bound, "N": r.N, "below_floor": r.below_floor,
           "bound_holds": r.bound_holds, "reversed_holds": r.reversed_holds, "verdict": r.verdict}
    return {"zeno_steps": (["step", "ds2 [1]", "below_floor"], rows)}, doc, [report.zeno_entry(n)]


def run_uncertainty(P, seed):
    from . import report
    from . import uncertainty as un
    from .weyl import GaussianReference, PhasePoint, WeylState

    ref = GaussianReference(P["sigma"], P["cpq"])
    grid = np.geomspace(0.02, 50.0, P["grid_points"])
    fixed = un.chain_fixed_reference(ref, grid)
    opt = un.chain_optimal_reference(un.ProbeDisplacement(P["dq"], P["dp"]))
    sr = un.schrodinger_robertson(WeylState(ref, PhasePoint(0.0, 0.0)))
    rows = [("min ds^2", fixed.ds2, 1.0, fixed.ds2 - 1.0, fixed.ds2 >= 1.0 - 1e-9)]
    rows += [(e.name, e.lhs, e.rhs, e.slack, e.satisfied) for e in fixed.chain + opt.chain]
    doc = {"min_ds2": fixed.ds2, "argmin_dq": fixed.minimizer.dq, "optimal_reference": opt.minimizer,
           "optimal_ds2": opt.ds2, "schrodinger_robertson": sr, "extras": fixed.extras | opt.extras}
    return ({"uncertainty_chain": (["inequality", "lhs [1]", "rhs [1]", "slack [1]", "satisfied"], rows)},
            doc, report.uncertainty_entries(P["sigma"]))


def run_extended(P, seed):
    from . import report
    from .uncertainty import extended_chain_survey

    sv = extended_chain_survey(P["configs"], seed, P["tol"])
    keys = list(sv.configs[0])
    units = {"q": "chart", "p": "chart", "sigma": "1", "omega": "1/time", "dq": "chart", "dp": "chart",
             "dt": "time"}
    header = [f"{k} [{units.get(k, '1')}]" for k in keys]
    rows = [[c[k] for k in keys] for c in sv.configs]
    doc = {"configs": len(sv.configs), "failures": sv.failures, "worst_slack": sv.worst,
           "all_hold": sv.all_hold, "commutator_rel_error": sv.commutator_rel_error,
           "commutator_rel_error_literal": sv.commutator_rel_error_literal,
           "metric_mismatch": sv.metric_mismatch, "metric_mismatch_plus": sv.metric_mismatch_plus}
    return {"extended_survey": (header, rows)}, doc, report.extended_entries(survey=sv)


def run_klauder(P, seed):
    from . import report
    from . import klauder as kl
    from .dynamics import HamiltonianSpec

    if len(P["z"]) != 2 or len(P["zp"]) != 2:
        raise ValidationError("z and zp need two components (q, p)")
    H = HamiltonianSpec.harmonic(P["omega"])
    cfgs = [kl.LatticeConfig.covering(P["z"], P["zp"], nu, P["time"], steps=P["steps"], n=P["n"])
            for nu in P["nu"]]
    sw = kl.nu_sweep(cfgs, H, P["z"], P["zp"], P["symbol"])
    rows = [(r["nu"], r["re"], r["im"], r["rel_error"]) for r in sw.table()]
    tables = {"klauder_convergence": (["nu [1/time]", "re [1]", "im [1]", "rel_error [1]"], rows)}
    doc = {"exact": sw.exact, "extrapolated": sw.extrapolated, "monotone": sw.monotone,
           "rel_error": [r[3] for r in rows]}
    if P["mc_samples"]:
        cfg = kl.LatticeConfig.covering(P["z"], P["zp"], P["mc_nu"], P["time"], steps=P["steps"], n=P["n"])
        mc = kl.mc_estimate(cfg, H, P["z"], P["zp"], P["mc_samples"], seed=seed, symbol=P["symbol"])
        tm = kl.transfer_matrix(cfg, H, P["z"], P["zp"], P["symbol"])
        dev = abs(mc.value - tm.value)
        doc["monte_carlo"] = {"nu": P["mc_nu"], "value": mc.value, "stderr": mc.stderr,
                              "transfer_matrix": tm.value, "deviation": dev,
                              "within_3_stderr": bool(dev <= 3 * mc.stderr), "diagnostics": mc.diagnostics}
    return tables, doc, report.klauder_entries(sw)


def run_poincare(P, seed):
    from . import poincare as pc
    from . import report

    s, m = P["sigma"], P["m"]
    if len(P["boost"]) != 3:
        raise ValidationError("boost needs three spatial components")
    kap = [(x, *(lambda k: (k.kappa_num, k.series_derived, k.series_printed, k.derived_residual))(pc.kappa(x)))
           for x in P["kappa_sigmas"]]
    alp = [(x, pc.alpha(x).alpha_num) for x in P["kappa_sigmas"]]
    a = pc.PoincareState.at(I=(0.0, 0.0, 0.0), sigma=s, m=m)
    b = pc.PoincareState.at(x=(0.3, 0.0, 0.0), I=(0.2, 0.1, 0.0), sigma=s, m=m)
    L = pc.boost_matrix(P["boost"])
    ov = pc.overlap(a, b)
    ovL = pc.overlap(a.transformed(L), b.transformed(L))
    st = pc.PoincareState.at(I=P["boost"], sigma=s, m=m)
    Pm = pc.momentum_expectation(st)
    target = m * pc.kappa(s).kappa_num * st.I4
    tables = {
        "poincare_kappa": (["sigma [length]", "kappa_num [1]", "derived_series [1]", "printed_series [1]",
                            "derived_residual [1]"], kap),
        "poincare_alpha": (["sigma [length]", "alpha_num [1]"], alp),
    }
    doc = {"overlap": ov, "overlap_boosted": ovL, "invariance_error": abs(ov - ovL),
           "momentum": Pm, "m_kappa_I": target,
           "momentum_rel_error": float(np.linalg.norm(Pm - target) / np.linalg.norm(target))}
    geo = res = scan = None
    if P["geometry"]:
        geo = pc.geometry_compare(st)
        tables["poincare_geometry"] = (["quantity", "verdict", "abs_error [1]"],
                                       [(r["quantity"], r["verdict"], r.get("abs_error", float("nan")))
                                        for r in geo.rows])
        doc["geometry"] = geo.rows
    if P["resolution"]:
        rs = P["resolution_sigma"]
        ref = pc.PoincareState.at(sigma=rs, m=m).wavefunction
        res = pc.resolution_of_unity_check(ref, ref, sigma=rs, m=m, log2_samples=P["log2_samples"], seed=seed)
        doc["resolution"] = {"lhs": res.lhs, "rhs": res.rhs, "stderr": res.stderr, "rel_error": res.rel_error,
                             "samples": res.samples, "ess": res.ess}
    if P["scan"]:
        scan = pc.covariant_uncertainty_scan(m)
        tables["poincare_scan"] = (["branch", "model", "sigma_star [length]", "minimum [1]", "analytic [1]"],
                                   [(r.branch, r.model, r.sigma_star, r.minimum, r.analytic) for r in scan])
    return tables, doc, report.poincare_entries(s, m, res, geo, scan)


RUNNERS = {
    "weyl-geometry": run_weyl_geometry,
    "histories": run_histories,
    "zeno": run_zeno,
    "uncertainty": run_uncertainty,
    "extended": run_extended,
    "klauder": run_klauder,
    "poincare": run_poincare,
}


# ------------------------------------------------------------------ driver

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasegeom", description="coherent-state geometry experiments")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML or JSON config file")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (default 0)")
        sp.add_argument("--out", default="phasegeom-out", help="output directory")
        sp.add_argument("--threads", type=int, help="thread budget recorded in the manifest (default 1)")
        for key, p in schema.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=f"p_{key}", metavar=p.kind.upper(),
                            help=f"{p.help} (default {p.default})")
    return ap


def execute(args) -> int:
    sub = args.subcommand
    overrides = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_")}
    cfg = load_config(args.config) if args.config else None
    params, seed, threads = resolve(sub, cfg, overrides, args.seed, args.threads)
    out = prepare_out(args.out)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    with OutputLock(out):
        written = []
        if sub == "report":
            from .report import merge_reports
            doc = merge_reports(out)
            path = out / "consistency_report.json"
            write_json(path, doc)
            written.append(path)
        else:
            tables, doc, entries = RUNNERS[sub](params, seed)
            for stem, (header, rows) in tables.items():
                path = out / f"{stem}.csv"
                write_csv(path, header, rows)
                written.append(path)
            path = out / f"{sub}.json"
            write_json(path, {"subcommand": sub, "parameters": params, "seed": seed, "results": doc,
                              "consistency": entries})
            written.append(path)
        resolved = json.dumps({"subcommand": sub, "parameters": params, "seed": seed}, sort_keys=True)
        manifest = {
            "subcommand": sub, "config_sha256": hashlib.sha256(resolved.encode()).hexdigest(),
            "version": _version(), "seed": seed, "threads": threads,
            "started": started, "finished": datetime.now(timezone.utc).isoformat(),
            "elapsed_s": round(time.perf_counter() - t0, 3),
            "outputs": {p.name: sha256_file(p) for p in written},
        }
        write_json(out / f"{sub}.manifest.json", manifest)
    print(f"{sub}: wrote {', '.join(p.name for p in written)} to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except EmptyConfig as e:
        print(f"error: {e}; parameter schema follows", file=sys.stderr)
        print(json.dumps(schema_dump(), indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
