"""Stage chain from a config to a full report directory.

Two-pass layout: `simulate` integrates the flow once and freezes everything
the later stages need onto disk (trajectory table + checkpoint files).  All
second-pass stages reload from those files instead of sharing state, so any
stage can be rerun in isolation and the chain stays reproducible: equal
config hashes give byte-identical CSVs.

Stage order: simulate, estimate-extinction, normalize, modulate, analyze,
linear-spectrum, oracle-compare, report.
"""

import os

import numpy as np

from .errors import ConfigError, InsufficientData
from . import geometry as geo
from . import io_files as iof
from .config import canonical_text, config_hash
from .solver import make_initial, run, estimate_extinction
from ._kernels import ST_GAP, ST_REM
from .modulation import build_series
from .analysis import build_report
from . import linearized
from . import oracle as orc

STAGES = ("simulate", "estimate-extinction", "normalize", "modulate",
          "analyze", "linear-spectrum", "oracle-compare", "report")


class StageOutcome:
    def __init__(self, files=(), warnings=(), flags=None, summary=""):
        self.files = list(files)
        self.warnings = list(warnings)
        self.flags = dict(flags or {})
        self.summary = summary


def _path(outdir, name):
    return os.path.join(outdir, name)


def _run_id(cfg):
    return config_hash(cfg)[:12]


# ---------------------------------------------------------------------------
# pass 1: integrate and freeze

def stage_simulate(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    domain = cfg.domain()
    state = make_initial(domain, cfg["initial.r0"], cfg["initial.eps"],
                         n=cfg["solver.N"], window0=cfg.window0())
    backend = cfg["solver.backend"]
    traj = run(domain, state, cfg.solver_options(),
               backend=None if backend == "auto" else backend)

    with open(_path(outdir, "config_canonical.ini"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_text(cfg))
    iof.write_trajectory(_path(outdir, "trajectory.csv"), traj)
    ck_names = iof.write_checkpoints(_path(outdir, "checkpoints"), traj)
    status_ok = traj.status in (ST_GAP, ST_REM) or cfg["solver.max_steps"] == 0
    meta = {"run_id": _run_id(cfg), "config_hash": config_hash(cfg),
            "backend": traj.backend, "status": traj.status,
            "status_ok": bool(status_ok), "steps": traj.steps,
            "rejected": traj.rejected, "samples": len(traj),
            "checkpoints": len(ck_names), "grid": cfg["solver.N"],
            "seed": cfg["seed"], "domain": iof.domain_to_dict(domain)}
    iof.write_json(_path(outdir, "run_meta.json"), meta)

    warnings = []
    if not status_ok:
        warnings.append(f"run stopped on status {traj.status} "
                        f"after {traj.steps} steps, not on a terminal "
                        "condition; downstream fits may be short")
    files = ["config_canonical.ini", "trajectory.csv", "run_meta.json"]
    files += [os.path.join("checkpoints", n) for n in ck_names]
    return StageOutcome(files, warnings, {"solver_terminal": bool(status_ok)},
                        f"{len(traj)} samples, {len(ck_names)} checkpoints, "
                        f"status {traj.status} ({traj.backend})")


# ---------------------------------------------------------------------------
# pass 2: everything below reloads from disk

class _SampledRun:
    """Dense scalar history from trajectory.csv plus the final checkpoint.

    Duck-typed stand-in for a Trajectory where only the last arc is needed
    (the extinction estimate projects its endpoints onto the barrier).
    """

    def __init__(self, domain, table, last_arc, last_t):
        self.domain = domain
        self.t = table["t"]
        self.theta_lo = table["theta_lo"]
        self.theta_hi = table["theta_hi"]
        self.area = table["area"]
        self.moment = table["moment"]
        if abs(last_t - self.t[-1]) > 1e-9 * (1.0 + abs(last_t)):
            raise ConfigError("final checkpoint and trajectory table "
                              "disagree; rerun the simulate stage")
        self._last = last_arc

    def __len__(self):
        return self.t.size

    @property
    def theta(self):
        return self.theta_hi - self.theta_lo

    def arc(self, i):
        if i != len(self) - 1:
            raise IndexError("only the final state is kept on this view")
        return self._last


def _last_checkpoint(outdir):
    ckdir = _path(outdir, "checkpoints")
    if not os.path.isdir(ckdir):
        raise ConfigError(f"no checkpoint directory under {outdir}")
    names = sorted(f for f in os.listdir(ckdir)
                   if f.startswith("ck_") and f.endswith(".txt"))
    if not names:
        raise InsufficientData("checkpoint directory is empty")
    return iof.read_checkpoint(os.path.join(ckdir, names[-1]))


def stage_estimate(cfg, outdir):
    domain = cfg.domain()
    table = iof.read_trajectory(_path(outdir, "trajectory.csv"))
    t_last, arc_last = _last_checkpoint(outdir)
    view = _SampledRun(domain, table, arc_last, t_last)
    est = estimate_extinction(view)
    obj = est.describe()
    obj["samples_used"] = len(view)
    iof.write_json(_path(outdir, "extinction.json"), obj)
    rem = est.T - est.t_last
    return StageOutcome(["extinction.json"], [], {},
                        f"T = {est.T:.9g} ({rem:.3e} beyond the last sample)")


def stage_normalize(cfg, outdir):
    domain = cfg.domain()
    est = iof.read_json(_path(outdir, "extinction.json"))
    p_star = np.asarray(est["p_star"], dtype=float)
    new_domain, extra = geo.standardize_frame(domain, p_star,
                                              est["normal_angle"])
    obj = {"extra": iof.frame_to_dict(extra),
           "domain": iof.domain_to_dict(new_domain)}
    iof.write_json(_path(outdir, "frame.json"), obj)
    return StageOutcome(["frame.json"], [], {},
                        f"shift ({extra.tx:+.3e}, {extra.ty:+.3e}), "
                        f"rotation {extra.alpha:+.3e}")


def _framed_history(cfg, outdir):
    fr = iof.read_json(_path(outdir, "frame.json"))
    domain = iof.domain_from_dict(fr["domain"])
    extra = iof.frame_from_dict(fr["extra"])
    traj = iof.load_checkpoint_history(_path(outdir, "checkpoints"), domain,
                                       opts=cfg.solver_options(), frame=extra)
    T = float(iof.read_json(_path(outdir, "extinction.json"))["T"])
    return traj, domain, T


def stage_modulate(cfg, outdir):
    traj, domain, T = _framed_history(cfg, outdir)
    series = build_series(traj, T)
    iof.write_modulation(_path(outdir, "modulation.csv"), series)
    dev = float(np.max(np.abs(series.lam - series.Lam)))
    return StageOutcome(["modulation.csv"], [], {},
                        f"{len(series)} states, sup|lambda-Lambda| = {dev:.3e}")


def _identity_gate(table, T, window, tol):
    """Mid-window maxima of the normalized residual columns.

    The end samples difference one-sidedly and the very first state is the
    prescribed datum rather than scheme output, so both stay outside the
    gate window.
    """
    t = table.t
    mask = (t >= window[0] * T) & (t <= window[1] * T)
    if mask.size >= 2:
        mask[0] = mask[-1] = False
    vals, flags = {}, {}
    for name in ("dU", "dq", "area", "theta", "q4"):
        col = np.abs(getattr(table, name)[mask])
        v = float(col.max()) if col.size else float("nan")
        vals[name] = v
        flags[f"identity_{name}"] = bool(col.size) and v <= tol
    return vals, flags


def stage_analyze(cfg, outdir):
    traj, domain, T = _framed_history(cfg, outdir)
    series = iof.read_modulation(_path(outdir, "modulation.csv"))
    wf = (cfg["analysis.window_lo"], cfg["analysis.window_hi"])
    report = build_report(traj, series, domain, T,
                          n_ext=cfg["analysis.n_ext"],
                          J=cfg["analysis.harmonics"],
                          window_frac=wf, margin=cfg["analysis.margin"],
                          identity_indices=np.arange(1, len(traj)))
    iof.write_analysis_rows(_path(outdir, "analysis.csv"), report.rows)
    iof.write_residuals(_path(outdir, "residuals.csv"), report.identity)

    tol = cfg["analysis.identity_tol"]
    iwin = cfg["analysis.identity_window"]
    ivals, iflags = _identity_gate(report.identity, T, iwin, tol)
    flags = dict(iflags)
    # bc_scale is outside the default gate set: its predicted rate carries
    # an unresolved constant, so it is reported but does not abort runs
    gated = set(cfg["analysis.gate_checks"].split())
    checks = {}
    for name, chk in report.checks.items():
        if name in gated:
            flags[f"decay_{name}"] = bool(chk.ok)
        checks[name] = {"predicted": chk.predicted,
                        "exponent": (chk.fit.exponent if chk.fit else None),
                        "stderr": (chk.fit.stderr if chk.fit else None),
                        "ok": bool(chk.ok), "note": chk.note}
    iof.write_json(_path(outdir, "checks.json"),
                   {"checks": checks,
                    "identity": {"tol": tol, "window": list(iwin),
                                 "max": ivals},
                    "flags": flags})

    lines = [report.describe(),
             "identity maxima over t in "
             f"[{iwin[0]:g} T, {iwin[1]:g} T] (gate {tol:g}):"]
    for name, v in ivals.items():
        ok = flags[f"identity_{name}"]
        lines.append(f"  {name:>6s}: {v:.3e} -> {'ok' if ok else 'FAIL'}")
    with open(_path(outdir, "rates.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    files = ["analysis.csv", "residuals.csv", "checks.json", "rates.txt"]
    warnings = [f"no usable fit for {name}"
                for name, chk in report.checks.items() if chk.fit is None]
    if "plots" in cfg["output.formats"].split():
        files += _emit_plot_scripts(outdir, report)
    n_fail = sum(1 for v in flags.values() if not v)
    return StageOutcome(files, warnings, flags,
                        f"{len(flags)} checks, {n_fail} failing")


_PLOT_TEMPLATE = '''\
"""Log-linear plot of |{name}| against the slow time, with its fit."""
import numpy as np
import matplotlib.pyplot as plt

rows = np.genfromtxt("../analysis.csv", delimiter=",", names=True)
t, y = rows["t_tilde"], np.abs(rows["{name}"])
keep = y > 0
t, y = t[keep], y[keep]
lo, hi = t[0] + {w0:.6g} * (t[-1] - t[0]), t[0] + {w1:.6g} * (t[-1] - t[0])
win = (t >= lo) & (t <= hi)
slope, icpt = np.polyfit(t[win], np.log(y[win]), 1)
plt.semilogy(t, y, ".", ms=3, label="|{name}|")
plt.semilogy(t[win], np.exp(icpt + slope * t[win]),
             label=f"exp fit, rate {{-slope:+.3f}}")
plt.xlabel("slow time")
plt.legend()
plt.tight_layout()
plt.savefig("{name}.png", dpi=150)
'''


def _emit_plot_scripts(outdir, report):
    pdir = _path(outdir, "plots")
    os.makedirs(pdir, exist_ok=True)
    names = []
    w0, w1 = 0.40, 0.95
    for name, fit in report.rates.items():
        if fit is None:
            continue
        script = _PLOT_TEMPLATE.format(name=name, w0=w0, w1=w1)
        rel = os.path.join("plots", f"{name}.py")
        with open(_path(outdir, rel), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(script)
        names.append(rel)
    return names


def stage_linear_spectrum(cfg, outdir):
    os.makedirs(outdir, exist_ok=True)
    modes = [int(j) for j in cfg["linear.modes"]]
    dt = cfg["linear.dt"] or None
    rows = linearized.spectrum_table(modes, cfg["linear.horizon"],
                                     n=cfg["linear.n"], dt=dt)
    iof.write_spectrum(_path(outdir, "spectrum.csv"), rows)
    tolf = cfg["linear.tol_frac"]
    flags = {}
    for j, expected, fitted, _ in rows:
        ok = abs(fitted - expected) <= tolf * max(1.0, abs(expected))
        flags[f"linear_j{int(j)}"] = bool(ok)
    n_fail = sum(1 for v in flags.values() if not v)
    return StageOutcome(["spectrum.csv"], [], flags,
                        f"{len(rows)} modes, {n_fail} outside "
                        f"{100 * tolf:g}% of exact")


def stage_oracle_compare(cfg, outdir):
    domain = cfg.domain()
    traj = iof.load_checkpoint_history(_path(outdir, "checkpoints"), domain,
                                       opts=cfg.solver_options())
    T = float(iof.read_json(_path(outdir, "extinction.json"))["T"])
    t0 = float(traj.t[0])
    t1 = min(t0 + cfg["oracle.horizon_frac"] * (T - t0), float(traj.t[-1]))
    times = np.linspace(t0, t1, cfg["oracle.samples"])
    line = orc.polyline_from_arc(traj.arc(0), cfg["oracle.m"], t=t0)
    snaps = orc.run_oracle(domain, line, times, cfl=cfg["oracle.cfl"])
    worst, table = orc.compare_solvers(traj, snaps, times)
    iof.write_oracle_trajectory(_path(outdir, "oracle_traj.csv"), snaps)
    iof.write_compare(_path(outdir, "compare.csv"), table)
    gate = cfg["oracle.gate"]
    flags = {"oracle_hausdorff": bool(worst <= gate)}
    return StageOutcome(["oracle_traj.csv", "compare.csv"], [], flags,
                        f"max Hausdorff {worst:.3e} over {len(table)} times "
                        f"(gate {gate:g})")


# ---------------------------------------------------------------------------
# collation

_KNOWN_FILES = ("config_canonical.ini", "trajectory.csv", "run_meta.json",
                "extinction.json", "frame.json", "modulation.csv",
                "analysis.csv", "residuals.csv", "checks.json", "rates.txt",
                "spectrum.csv", "oracle_traj.csv", "compare.csv")


def stage_report(cfg, outdir):
    meta_path = _path(outdir, "run_meta.json")
    if not os.path.isfile(meta_path):
        raise ConfigError(f"{outdir} has no run_meta.json; "
                          "run the simulate stage first")
    meta = iof.read_json(meta_path)
    if meta.get("config_hash") != config_hash(cfg):
        raise ConfigError("config does not match the artifacts in "
                          f"{outdir} (hash {meta.get('config_hash')!r})")

    flags = {"solver_terminal": bool(meta.get("status_ok"))}
    checks_path = _path(outdir, "checks.json")
    if os.path.isfile(checks_path):
        flags.update(iof.read_json(checks_path)["flags"])
    spec_path = _path(outdir, "spectrum.csv")
    if os.path.isfile(spec_path):
        d = iof.read_csv(spec_path, iof.SPECTRUM_HEADER)
        tolf = cfg["linear.tol_frac"]
        for j, expected, fitted in zip(d["j"], d["expected"], d["fitted"]):
            ok = abs(fitted - expected) <= tolf * max(1.0, abs(expected))
            flags[f"linear_j{int(j)}"] = bool(ok)
    cmp_path = _path(outdir, "compare.csv")
    if os.path.isfile(cmp_path):
        d = iof.read_csv(cmp_path, iof.COMPARE_HEADER)
        worst = float(np.max(d["hausdorff"])) if d["hausdorff"].size else 0.0
        flags["oracle_hausdorff"] = bool(worst <= cfg["oracle.gate"])

    inventory = [n for n in _KNOWN_FILES if os.path.isfile(_path(outdir, n))]
    for sub in ("checkpoints", "plots"):
        subdir = _path(outdir, sub)
        if os.path.isdir(subdir):
            inventory += [os.path.join(sub, n)
                          for n in sorted(os.listdir(subdir))]
    iof.write_manifest(_path(outdir, "manifest.json"), meta["run_id"],
                       meta["config_hash"], outdir, inventory,
                       acceptance=flags)
    n_fail = sum(1 for v in flags.values() if not v)
    lines = [f"{'ok' if v else 'FAIL':>4s}  {k}" for k, v in sorted(flags.items())]
    summary = "\n".join(lines + [f"{len(flags)} checks, {n_fail} failing"])
    return StageOutcome(["manifest.json"], [], flags, summary)


_STAGE_FUNCS = {
    "simulate": stage_simulate,
    "estimate-extinction": stage_estimate,
    "normalize": stage_normalize,
    "modulate": stage_modulate,
    "analyze": stage_analyze,
    "linear-spectrum": stage_linear_spectrum,
    "oracle-compare": stage_oracle_compare,
    "report": stage_report,
}


def enabled_stages(cfg):
    names = ["simulate", "estimate-extinction", "normalize", "modulate"]
    if cfg["analysis.enabled"]:
        names.append("analyze")
    if cfg["linear.enabled"]:
        names.append("linear-spectrum")
    if cfg["oracle.enabled"]:
        names.append("oracle-compare")
    names.append("report")
    return names


def run_stage(name, cfg, outdir):
    try:
        func = _STAGE_FUNCS[name]
    except KeyError:
        raise ConfigError(f"unknown stage {name!r}; choose from "
                          + ", ".join(STAGES)) from None
    return func(cfg, outdir)
