"""Scenario files and result emission.

A scenario is a YAML file plus CSV side files it names (paths relative to the
YAML file)::

    label: my-run
    grid: {t_end: 16200, n_time: 135, x_max: 42000, n_length: 14,
           arrival_times: [7200, 9000, 10800]}
    speed: {file: speed.csv, v_min: 1.0, v_max: 13.28}   # columns H,v
    demand: {file: demand.csv}                          # columns class,length_cell,count
    init: {file: init.csv}                              # columns length_cell,density (optional)
    params: {alpha: 1.0, beta: 0.51, gamma: 2.06, terminal_penalty_rate: 0.0}
    supply: {file: supply.csv, sigma_min: 0.01}         # columns n,sigma (optional)

``speed`` may also give ``breakpoints: [[H, v], ...]`` inline, and ``demand``
may give ``trips: trips.csv`` with columns ``origin_len_m,desired_arrival_s,count``
instead of a cell table. ``builtin: paris-scaled`` (with optional ``options``)
replaces all of the above.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

from .dynamics import SupplyConstraint
from .model import BathtubError, CostParams, DemandProfile, Grid, InitialState, SpeedFunction, Violation
from .scenarios import BUILTIN, Scenario

FMT = "{:.12g}"


class ScenarioError(BathtubError):
    """Scenario that parsed but failed validation; ``violations`` holds the report."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("invalid_scenario", "; ".join(f"{v.code}: {v.message}" for v in violations))


def _num(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise BathtubError("config_error", f"{where}: not a number: {text!r}") from None


def read_csv(path, columns: list[str]) -> np.ndarray:
    """Numeric CSV with a header naming at least ``columns``; returns ``(rows, len(columns))``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            missing = [c for c in columns if c not in header]
            if missing:
                raise BathtubError("config_error", f"{path}:1: missing column(s) {', '.join(missing)}")
            idx = [header.index(c) for c in columns]
            rows = []
            for line, row in enumerate(reader, start=2):
                if not row or not "".join(row).strip():
                    continue
                if len(row) < len(header):
                    raise BathtubError("config_error", f"{path}:{line}: expected {len(header)} fields")
                rows.append([_num(row[i], f"{path}:{line}") for i in idx])
    except OSError as exc:
        raise BathtubError("config_error", f"{path}: {exc.strerror or exc}") from None
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def write_csv(path, header: list[str], rows) -> int:
    """Write rows with 12 significant digits; returns the number of data rows."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else FMT.format(v) for v in row])
            n += 1
    return n


def _section(cfg: dict, key: str, required: bool = True) -> dict:
    val = cfg.get(key)
    if val is None:
        if required:
            raise BathtubError("config_error", f"missing section {key!r}")
        return {}
    if not isinstance(val, dict):
        raise BathtubError("config_error", f"section {key!r} must be a mapping")
    return val


def _get(sec: dict, key: str, name: str):
    if key not in sec:
        raise BathtubError("config_error", f"{name}: missing key {key!r}")
    return sec[key]


def _int_index(values, upper: int, path, what: str) -> np.ndarray:
    idx = values.astype(int)
    if np.any(idx != values) or np.any(idx < 0) or np.any(idx >= upper):
        raise BathtubError("config_error", f"{path}: {what} must be integers in [0, {upper})")
    return idx


def trips_to_demand(table: np.ndarray, grid: Grid, path="trips") -> np.ndarray:
    """Bin ``(origin_len_m, desired_arrival_s, count)`` rows into ``m[k, l]``.

    Desired arrival times must match one of the grid's arrival classes.
    """
    m = np.zeros((grid.n_classes, grid.n_length))
    if len(table) == 0:
        return m
    length, desired, count = table.T
    ta = grid.ta
    k = np.searchsorted(ta, desired)
    k_ok = (k < len(ta)) & np.isclose(ta[np.minimum(k, len(ta) - 1)], desired, rtol=0, atol=1e-6)
    if not np.all(k_ok):
        raise BathtubError("config_error", f"{path}: desired arrival times must be one of {list(ta)}")
    if np.any(length < 0) or np.any(length > grid.x_max):
        raise BathtubError("config_error", f"{path}: trip lengths must lie in [0, {grid.x_max}]")
    l = np.minimum((length / grid.dx).astype(int), grid.n_length - 1)
    np.add.at(m, (k, l), count)
    return m


def load_scenario(path, validate: bool = True) -> Scenario:
    """Read a scenario YAML file (and its side files); validation failures raise ``ScenarioError``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise BathtubError("config_error", f"{path}: {exc.strerror or exc}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise BathtubError("config_error", f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(cfg, dict):
        raise BathtubError("config_error", f"{path}: top level must be a mapping")

    if "builtin" in cfg:
        name = cfg["builtin"]
        if name not in BUILTIN:
            raise BathtubError("config_error", f"unknown builtin {name!r}; choose from {sorted(BUILTIN)}")
        try:
            sc = BUILTIN[name](**(cfg.get("options") or {}))
        except TypeError as exc:
            raise BathtubError("config_error", f"builtin {name!r}: {exc}") from None
    else:
        sc = _parse(cfg, path.parent)
    if validate:
        problems = sc.validate()
        if sc.supply is not None and not problems:
            sc.supply.validate(sc.grid)
        if problems:
            raise ScenarioError(problems)
    return sc


def _parse(cfg: dict, base: Path) -> Scenario:
    g = _section(cfg, "grid")
    try:
        grid = Grid(t_end=float(_get(g, "t_end", "grid")), n_time=int(_get(g, "n_time", "grid")),
                    x_max=float(_get(g, "x_max", "grid")), n_length=int(_get(g, "n_length", "grid")),
                    arrival_times=tuple(float(a) for a in _get(g, "arrival_times", "grid")))
    except (TypeError, ValueError) as exc:
        raise BathtubError("config_error", f"grid: {exc}") from None

    s = _section(cfg, "speed")
    if "file" in s:
        bp = read_csv(base / s["file"], ["H", "v"])
    else:
        bp = np.asarray(_get(s, "breakpoints", "speed"), dtype=float).reshape(-1, 2)
    speed = SpeedFunction(tuple(map(tuple, bp.tolist())), v_min=float(_get(s, "v_min", "speed")),
                          v_max=float(_get(s, "v_max", "speed")))

    d = _section(cfg, "demand")
    m = np.zeros((grid.n_classes, grid.n_length))
    if "file" in d:
        p = base / d["file"]
        t = read_csv(p, ["class", "length_cell", "count"])
        k = _int_index(t[:, 0], grid.n_classes, p, "class")
        l = _int_index(t[:, 1], grid.n_length, p, "length_cell")
        np.add.at(m, (k, l), t[:, 2])
    elif "trips" in d:
        p = base / d["trips"]
        m = trips_to_demand(read_csv(p, ["origin_len_m", "desired_arrival_s", "count"]), grid, p)
    else:
        raise BathtubError("config_error", "demand: give 'file' or 'trips'")

    i = _section(cfg, "init", required=False)
    if "file" in i:
        p = base / i["file"]
        t = read_csv(p, ["length_cell", "density"])
        dens = np.zeros(grid.n_length)
        dens[_int_index(t[:, 0], grid.n_length, p, "length_cell")] = t[:, 1]
        init = InitialState(dens, grid.dx)
    else:
        init = InitialState.empty(grid)

    p = _section(cfg, "params")
    try:
        params = CostParams(alpha=float(_get(p, "alpha", "params")), beta=float(_get(p, "beta", "params")),
                            gamma=float(_get(p, "gamma", "params")),
                            terminal_penalty_rate=float(p.get("terminal_penalty_rate", 0.0)))
    except (TypeError, ValueError) as exc:
        raise BathtubError("config_error", f"params: {exc}") from None

    supply = None
    sp = _section(cfg, "supply", required=False)
    if sp:
        path = base / _get(sp, "file", "supply")
        t = read_csv(path, ["n", "sigma"])
        sigma = np.full(grid.n_time + 1, np.nan)
        sigma[_int_index(t[:, 0], grid.n_time + 1, path, "n")] = t[:, 1]
        supply = SupplyConstraint(sigma, float(_get(sp, "sigma_min", "supply")))
    return Scenario(grid, DemandProfile(m), init, speed, params, supply, label=str(cfg.get("label", "")))


def save_scenario(sc: Scenario, path) -> list[Path]:
    """Write ``sc`` as YAML plus side files next to it; returns the written paths.

    Side files use full precision so that loading gives back an identical scenario.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    g = sc.grid
    files = {"speed": path.parent / f"{stem}.speed.csv", "demand": path.parent / f"{stem}.demand.csv",
             "init": path.parent / f"{stem}.init.csv"}
    exact = "{!r}".format

    def dump(p, header, rows):
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([[exact(float(v)) if isinstance(v, (float, np.floating)) else v for v in r] for r in rows])

    dump(files["speed"], ["H", "v"], [(float(h), float(v)) for h, v in sc.speed.breakpoints])
    K, L = sc.demand.counts.shape
    dump(files["demand"], ["class", "length_cell", "count"],
         [(k, l, float(sc.demand.counts[k, l])) for k in range(K) for l in range(L)])
    dump(files["init"], ["length_cell", "density"], [(l, float(v)) for l, v in enumerate(sc.init.density)])
    cfg = {
        "label": sc.label,
        "grid": {"t_end": float(g.t_end), "n_time": g.n_time, "x_max": float(g.x_max),
                 "n_length": g.n_length, "arrival_times": [float(a) for a in g.arrival_times]},
        "speed": {"file": files["speed"].name, "v_min": float(sc.speed.v_min), "v_max": float(sc.speed.v_max)},
        "demand": {"file": files["demand"].name},
        "init": {"file": files["init"].name},
        "params": {"alpha": float(sc.params.alpha), "beta": float(sc.params.beta),
                   "gamma": float(sc.params.gamma),
                   "terminal_penalty_rate": float(sc.params.terminal_penalty_rate)},
    }
    if sc.supply is not None:
        files["supply"] = path.parent / f"{stem}.supply.csv"
        dump(files["supply"], ["n", "sigma"], [(n, float(s)) for n, s in enumerate(sc.supply.sigma)])
        cfg["supply"] = {"file": files["supply"].name, "sigma_min": float(sc.supply.sigma_min)}
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return [path, *files.values()]


def read_pattern(path, grid: Grid) -> np.ndarray:
    """Departure pattern from a ``k,l,n,count`` CSV (absent entries are zero)."""
    t = read_csv(path, ["k", "l", "n", "count"])
    f = np.zeros(grid.shape)
    idx = tuple(_int_index(t[:, i], s, path, c) for i, (s, c) in enumerate(zip(grid.shape, "kln")))
    np.add.at(f, idx, t[:, 3])
    return f


def pattern_rows(f):
    f = np.asarray(f, dtype=float)
    for k, l, n in zip(*np.nonzero(f)):
        yield int(k), int(l), int(n), float(f[k, l, n])


def write_manifest(out_dir: Path, counts: dict[str, int]) -> Path:
    p = out_dir / "manifest.txt"
    p.write_text("".join(f"{name}\t{rows}\n" for name, rows in counts.items()))
    return p


def emit_results(out_dir, history=None, f_star=None, trajectory=None, report: dict | None = None,
                 trajectories=None) -> dict[str, int]:
    """Write the optimizer outputs and a manifest; returns ``{file name: data rows}``.

    ``trajectory`` is an ``(n, 4)`` array of ``t, z, H, v``; ``trajectories``
    (one such array per iteration) goes to ``trajectories.csv`` with a
    leading ``iter`` column. ``report`` entries become ``key: value`` lines of
    ``summary.txt``.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        counts = {}
        if history is not None:
            counts["history.csv"] = write_csv(
                out_dir / "history.csv", ["iter", "objective", "best", "residual", "step", "seconds", "evaluations"],
                ((r.iteration, r.objective, r.best, r.residual, r.step, r.seconds, r.evaluations)
                 for r in history.records))
        if f_star is not None:
            counts["f_star.csv"] = write_csv(out_dir / "f_star.csv", ["k", "l", "n", "count"], pattern_rows(f_star))
        if trajectory is not None:
            counts["trajectory.csv"] = write_csv(out_dir / "trajectory.csv", ["t", "z", "H", "v"],
                                                 np.asarray(trajectory))
        if trajectories:
            rows = ((i, *row) for i, tr in enumerate(trajectories, start=1) for row in np.asarray(tr))
            counts["trajectories.csv"] = write_csv(out_dir / "trajectories.csv", ["iter", "t", "z", "H", "v"], rows)
        if report is not None:
            lines = [f"{k}: {FMT.format(v) if isinstance(v, (float, np.floating)) else v}" for k, v in report.items()]
            (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
            counts["summary.txt"] = len(lines)
        write_manifest(out_dir, counts)
    except OSError as exc:
        raise OSError(exc.errno, f"{exc.filename or out_dir}: {exc.strerror}") from exc
    return counts


def emit_particles(out_dir, run, report=None) -> dict[str, int]:
    """``trips.csv`` (one trip per row) and ``trajectory.csv`` (``t, H, v``) of a particle run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tr = run.trips
    counts = {
        "trips.csv": write_csv(out_dir / "trips.csv",
                               ["class_id", "depart", "desired", "length", "arrival", "cost", "weight"],
                               zip(tr.class_id.tolist(), tr.depart, tr.desired, tr.length, tr.arrival, tr.cost,
                                   tr.weight)),
        "trajectory.csv": write_csv(out_dir / "trajectory.csv", ["t", "H", "v"], run.trajectory),
    }
    if report is not None:
        rows = [*report.rows, report.overall] + ([report.unfinished] if report.unfinished else [])
        counts["classes.csv"] = write_csv(out_dir / "classes.csv",
                                          ["class", "count", "mean_cost", "cost_std", "mean_abs_delay_min"],
                                          ((str(r.class_id), r.count, r.mean_cost, r.cost_std,
                                            r.mean_abs_delay_min) for r in rows))
    write_manifest(out_dir, counts)
    return counts
