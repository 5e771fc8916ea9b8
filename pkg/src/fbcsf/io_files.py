"""On-disk artifacts: CSV tables, checkpoint text files, JSON sidecars.

Every float is written with 17 significant digits so reruns of the same
config are byte-identical and regression diffs are exact.  Headers are fixed
strings; readers check them, so a format drift fails loudly.  Timestamps
live only in the manifest, never in data files.
"""

import json
import os
import time

import numpy as np

from .errors import ConfigError, InsufficientData
from . import geometry as geo
from .solver import SolverOptions, Trajectory, _collect_diagnostics

TRAJECTORY_HEADER = ("t,theta_lo,theta_hi,Theta,area,moment,"
                     "kappa_min,kappa_max,r_lo,r_hi")
MODULATION_HEADER = "t,t_tilde,lambda,Lambda,p,L,B,U_resid,q_resid"
ANALYSIS_HEADER = ("t_tilde,I0,I1,L2,C0,C1,C2,hausdorff,"
                   "sigma0_hat,sigma1_hat,bc_scale")
RESIDUALS_HEADER = "t,t_tilde,dU_resid,dq_resid,area_resid,theta_resid,q4_resid"
SPECTRUM_HEADER = "j,expected,fitted,stderr"
ORACLE_HEADER = "t,x,y"
COMPARE_HEADER = "t,hausdorff"


def _g(x):
    return format(float(x), ".17g")


def write_csv(path, header, columns):
    """Columns are equal-length 1-d sequences; header a fixed string."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    m = cols[0].size
    if any(c.size != m for c in cols):
        raise ValueError("ragged columns")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(m):
            fh.write(",".join(_g(c[i]) for c in cols) + "\n")


def read_csv(path, header):
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"missing artifact {path}; "
                          "run the producing stage first") from exc
    with fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise ConfigError(f"{path}: header {first!r}, expected {header!r}")
        body = fh.read().split()
    names = header.split(",")
    if not body:
        return {n: np.empty(0) for n in names}
    table = np.array([[float(v) for v in row.split(",")] for row in body])
    if table.shape[1] != len(names):
        raise ConfigError(f"{path}: ragged rows")
    return {n: table[:, k] for k, n in enumerate(names)}


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"missing artifact {path}; "
                          "run the producing stage first") from exc


# ---------------------------------------------------------------------------
# trajectory table and checkpoint files

def write_trajectory(path, traj):
    if traj.area is None:
        _collect_diagnostics(traj)
    write_csv(path, TRAJECTORY_HEADER,
              [traj.t, traj.theta_lo, traj.theta_hi, traj.theta, traj.area,
               traj.moment, traj.kappa_min, traj.kappa_max,
               traj.r_lo, traj.r_hi])


def read_trajectory(path):
    return read_csv(path, TRAJECTORY_HEADER)


def checkpoint_name(k):
    return f"ck_{k:05d}.txt"


def write_checkpoint(path, t, arc):
    theta = arc.grid()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"t {_g(t)}\n")
        fh.write(f"theta_lo {_g(arc.theta_lo)}\n")
        fh.write(f"theta_hi {_g(arc.theta_hi)}\n")
        fh.write(f"N {arc.n}\n")
        for th, s in zip(theta, arc.sigma):
            fh.write(f"{_g(th)} {_g(s)}\n")


def read_checkpoint(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"missing artifact {path}; "
                          "run the producing stage first") from exc
    head = {}
    for row in lines[:4]:
        name, _, val = row.partition(" ")
        head[name] = val
    try:
        t = float(head["t"])
        lo = float(head["theta_lo"])
        hi = float(head["theta_hi"])
        n = int(head["N"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed checkpoint header") from exc
    if len(lines) != 4 + n + 1:
        raise ConfigError(f"{path}: expected {n + 1} rows, "
                          f"found {len(lines) - 4}")
    sigma = np.array([float(row.split()[1]) for row in lines[4:]])
    return t, geo.SupportArc(lo, hi, sigma)


def write_checkpoints(dirpath, traj):
    os.makedirs(dirpath, exist_ok=True)
    names = []
    for k, (t, arc) in enumerate(traj.checkpoints()):
        name = checkpoint_name(k)
        write_checkpoint(os.path.join(dirpath, name), t, arc)
        names.append(name)
    return names


def load_checkpoint_history(dirpath, domain, opts=None, frame=None):
    """Rebuild a Trajectory from checkpoint files alone.

    Used by the second-pass stages so they stay decoupled from the solver
    run that produced the files.  Every loaded state is a checkpoint of the
    rebuilt object; diagnostics are recomputed from the arcs.  An optional
    rigid motion re-frames each arc on the way in (the domain passed must
    already be in the same frame).
    """
    if not os.path.isdir(dirpath):
        raise ConfigError(f"no checkpoint directory {dirpath}")
    names = sorted(f for f in os.listdir(dirpath)
                   if f.startswith("ck_") and f.endswith(".txt"))
    if len(names) < 2:
        raise InsufficientData(f"{dirpath}: {len(names)} checkpoints")
    ts, arcs = [], []
    for name in names:
        t, arc = read_checkpoint(os.path.join(dirpath, name))
        if frame is not None and not frame.is_identity(0.0):
            arc = geo.transform_arc(arc, frame)
        ts.append(t)
        arcs.append(arc)
    t = np.asarray(ts)
    if np.any(np.diff(t) <= 0):
        raise ConfigError(f"{dirpath}: checkpoint times not increasing")
    traj = Trajectory(
        domain, opts or SolverOptions(), "disk", 0, 0, 0, t,
        np.array([a.theta_lo for a in arcs]),
        np.array([a.theta_hi for a in arcs]),
        np.gradient(t), np.arange(t.size),
        np.vstack([a.sigma for a in arcs]),
        ck_idx=np.arange(t.size))
    _collect_diagnostics(traj)
    return traj


# ---------------------------------------------------------------------------
# modulation / analysis tables

def write_modulation(path, series):
    write_csv(path, MODULATION_HEADER,
              [series.t, series.t_tilde, series.lam, series.Lam, series.p,
               series.L, series.B, series.U_resid, series.q_resid])


def read_modulation(path):
    from .modulation import ModulationSeries
    d = read_csv(path, MODULATION_HEADER)
    return ModulationSeries(d["t"], d["t_tilde"], d["lambda"], d["Lambda"],
                            d["p"], d["L"], d["B"], d["U_resid"],
                            d["q_resid"])


def write_analysis_rows(path, rows):
    names = ANALYSIS_HEADER.split(",")
    write_csv(path, ANALYSIS_HEADER, [rows[n] for n in names])


def write_residuals(path, table):
    write_csv(path, RESIDUALS_HEADER,
              [table.t, table.t_tilde, table.dU, table.dq, table.area,
               table.theta, table.q4])


def write_spectrum(path, rows):
    cols = list(zip(*rows))
    write_csv(path, SPECTRUM_HEADER, cols)


def write_oracle_trajectory(path, snapshots):
    """Flat (t, x, y) rows; each snapshot contributes its point count."""
    ts, xs, ys = [], [], []
    for line in snapshots:
        ts.append(np.full(line.m, line.t))
        xs.append(line.points[:, 0])
        ys.append(line.points[:, 1])
    write_csv(path, ORACLE_HEADER,
              [np.concatenate(ts), np.concatenate(xs), np.concatenate(ys)])


def write_compare(path, table):
    ts = [t for t, _ in table]
    ds = [d for _, d in table]
    write_csv(path, COMPARE_HEADER, [ts, ds])


# ---------------------------------------------------------------------------
# JSON sidecars

def frame_to_dict(frame):
    return {"alpha": frame.alpha, "tx": frame.tx, "ty": frame.ty}


def frame_from_dict(d):
    return geo.Frame(float(d["alpha"]), float(d["tx"]), float(d["ty"]))


def domain_to_dict(domain):
    return {"kind": domain.kind, "params": list(domain.params),
            "frame": frame_to_dict(domain.frame)}


def domain_from_dict(d):
    return geo.ConvexDomain(d["kind"], tuple(d["params"]),
                            frame_from_dict(d["frame"]))


def write_manifest(path, run_id, cfg_hash, files_dir, file_names,
                   acceptance=None):
    """Inventory of produced files with byte sizes; the one timestamped file."""
    inventory = {}
    for name in sorted(file_names):
        full = os.path.join(files_dir, name)
        if not os.path.isfile(full):
            raise ConfigError(f"manifest lists missing file {name}")
        inventory[name] = os.path.getsize(full)
    from . import __version__
    obj = {"run_id": run_id,
           "config_hash": cfg_hash,
           "versions": {"package": __version__, "format": 1},
           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
           "files": inventory,
           "acceptance": acceptance or {}}
    write_json(path, obj)
    return obj
