"""Monte Carlo experiment driver: trials, sweeps, RMSE vs the bound, and
strict config/result serialization.

Trials are independent work items seeded by a hash of (master_seed, snr_db,
snapshots, trial_id), so any thread count produces bit-identical output; the
reduction order is fixed by trial id.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrays import AnalogCombiner, ArrayGeometry, SourceConfig
from .clustering import GMAXCS, GMIND, cluster_true_set
from .crlb import CrlbContext, crlb_report, hybrid_crlb
from .fusion import FusionError, FusedEstimate, IwfConfig, iwf_fuse
from .fusionnet import MlpModel, forward, load_model
from .pipeline import run_front_end
from .rootmusic import EstimationFailure

METHOD_IWF_GMIND = "IWF-GMinD"
METHOD_IWF_GMAXCS = "IWF-GMaxCS"
METHOD_NET_GMIND = "FusionNet-GMinD"
METHOD_NET_GMAXCS = "FusionNet-GMaxCS"
ALL_METHODS = (METHOD_IWF_GMIND, METHOD_IWF_GMAXCS, METHOD_NET_GMIND, METHOD_NET_GMAXCS)

_METHOD_CLUSTERING = {
    METHOD_IWF_GMIND: GMIND,
    METHOD_IWF_GMAXCS: GMAXCS,
    METHOD_NET_GMIND: GMIND,
    METHOD_NET_GMAXCS: GMAXCS,
}

# Trials whose picks land further than this from the coarse angle are counted
# as outliers and excluded from the RMSE (the pick is then almost surely from
# the wrong ambiguity class).
OUTLIER_GATE_DEG = 30.0

RESULT_COLUMNS = ("sweep_name", "sweep_value", "method", "rmse_deg",
                  "crlb_sqrt_deg", "trials", "failures")


@dataclass(frozen=True)
class SourceSpec:
    true_angle_deg: float
    snapshots: int

    def __post_init__(self):
        if not abs(self.true_angle_deg) < 90.0:
            raise ValueError("true_angle_deg must lie in (-90, 90)")
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    geometry: ArrayGeometry
    source: SourceSpec
    snr_grid: tuple
    snapshot_grid: tuple
    trials: int
    methods: tuple
    iwf: IwfConfig
    model_path: str | None
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "snapshot_grid", tuple(int(h) for h in self.snapshot_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_grid:
            raise ValueError("snr_grid must be nonempty")
        if not self.snapshot_grid:
            raise ValueError("snapshot_grid must be nonempty")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(unknown)}")
        needs_model = any(m.startswith("FusionNet") for m in self.methods)
        if needs_model and not self.model_path:
            raise ValueError("FusionNet methods require model_path")


@dataclass
class TrialResult:
    trial_id: int
    method: str
    theta_deg: float
    iterations_used: int
    failure: bool = False
    failure_reason: str = ""
    clamped: bool = False
    fused: FusedEstimate | None = None


@dataclass
class RmseCurve:
    sweep_name: str
    values: tuple
    methods: tuple
    rmse: dict                      # method -> list aligned with values
    crlb_sqrt_deg: list
    trials: list
    failures: dict                  # method -> list aligned with values


def trial_seed(master_seed: int, snr_db: float, snapshots: int, trial_id: int) -> np.random.SeedSequence:
    """Deterministic per-trial seed derived from the sweep coordinates."""
    snr_bits = struct.unpack("<Q", struct.pack("<d", float(snr_db)))[0]
    return np.random.SeedSequence([int(master_seed), snr_bits, int(snapshots), int(trial_id)])


def run_trial(spec: ExperimentSpec, snr_db: float, snapshots: int, trial_id: int,
              noiseless: bool = False, model: MlpModel | None = None,
              combiner: AnalogCombiner | None = None,
              collect_traces: bool = False) -> dict:
    """Execute the full pipeline once and evaluate every requested method.

    Failures (root selection outside the visible region, picks beyond the
    outlier gate, fusion blowups) are recorded on the affected methods, never
    raised.
    """
    seed = trial_seed(spec.master_seed, snr_db, snapshots, trial_id)
    source = SourceConfig(true_angle_deg=spec.source.true_angle_deg,
                          snr_db=snr_db, snapshots=snapshots)
    results = {}
    try:
        fe = run_front_end(spec.geometry, source, combiner, seed, noiseless)
    except EstimationFailure as exc:
        for m in spec.methods:
            results[m] = TrialResult(trial_id, m, math.nan, 0, True, str(exc))
        return results

    picks = {}
    gate_ok = {}
    for rule in {_METHOD_CLUSTERING[m] for m in spec.methods}:
        ts = cluster_true_set(fe.theta_fd_deg, fe.candidate_sets, rule)
        picks[rule] = ts
        gate_ok[rule] = all(abs(a - fe.theta_fd_deg) <= OUTLIER_GATE_DEG for a in ts.angles_deg)

    snr_linear = 10.0 ** (snr_db / 10.0)
    for m in spec.methods:
        rule = _METHOD_CLUSTERING[m]
        ts = picks[rule]
        if not gate_ok[rule]:
            results[m] = TrialResult(trial_id, m, math.nan, 0, True,
                                     "pick beyond outlier gate")
            continue
        if m.startswith("IWF"):
            try:
                est = iwf_fuse(fe.theta_fd_deg, ts, spec.geometry, snr_linear,
                               snapshots, spec.iwf)
            except FusionError as exc:
                results[m] = TrialResult(trial_id, m, math.nan, 0, True, str(exc))
                continue
            results[m] = TrialResult(trial_id, m, est.angle_deg, est.iterations_used,
                                     fused=est if collect_traces else None)
        else:
            row = list(ts.angles_deg) + [fe.theta_fd_deg]
            raw = forward(model, row)
            clamped = not -90.0 <= raw <= 90.0
            results[m] = TrialResult(trial_id, m, min(max(raw, -90.0), 90.0), 0,
                                     clamped=clamped)
    return results


def _rmse(errors) -> float:
    if not errors:
        return math.nan
    return math.sqrt(sum(e * e for e in errors) / len(errors))


def run_grid_point(spec: ExperimentSpec, snr_db: float, snapshots: int,
                   noiseless: bool = False, model: MlpModel | None = None,
                   threads: int = 1, collect_traces: bool = False,
                   include_outliers: bool = False):
    """All trials at one sweep coordinate. Returns (rmse, failures, trial_results)
    with rmse/failures keyed by method.
    """
    def one(tid):
        return run_trial(spec, snr_db, snapshots, tid, noiseless, model,
                         collect_traces=collect_traces)

    ids = range(spec.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(one, ids))
    else:
        per_trial = [one(t) for t in ids]

    rmse, failures = {}, {}
    for m in spec.methods:
        errs = []
        fails = 0
        for res in per_trial:
            tr = res[m]
            if tr.failure:
                fails += 1
                if not (include_outliers and math.isfinite(tr.theta_deg)):
                    continue
            errs.append(tr.theta_deg - spec.source.true_angle_deg)
        rmse[m] = _rmse(errs)
        failures[m] = fails
    return rmse, failures, per_trial


def _load_model_if_needed(spec: ExperimentSpec) -> MlpModel | None:
    if any(m.startswith("FusionNet") for m in spec.methods):
        return load_model(spec.model_path)
    return None


def monte_carlo_rmse(spec: ExperimentSpec, sweep_axis: str = "snr",
                     threads: int = 1, noiseless: bool = False,
                     include_outliers: bool = False) -> RmseCurve:
    """RMSE over the requested sweep with the matched bound at each point.

    sweep_axis "snr" walks snr_grid at the source snapshot count;
    "snapshots" walks snapshot_grid at the first grid SNR.
    """
    if sweep_axis == "snr":
        points = [(s, spec.source.snapshots) for s in spec.snr_grid]
        values = spec.snr_grid
    elif sweep_axis == "snapshots":
        points = [(spec.snr_grid[0], h) for h in spec.snapshot_grid]
        values = spec.snapshot_grid
    else:
        raise ValueError("sweep_axis must be 'snr' or 'snapshots'")

    model = _load_model_if_needed(spec)
    rmse = {m: [] for m in spec.methods}
    failures = {m: [] for m in spec.methods}
    crlb_sqrt = []
    for snr_db, snapshots in points:
        point_rmse, point_fail, _ = run_grid_point(
            spec, snr_db, snapshots, noiseless, model, threads,
            include_outliers=include_outliers)
        for m in spec.methods:
            rmse[m].append(point_rmse[m])
            failures[m].append(point_fail[m])
        ctx = CrlbContext(theta_deg=spec.source.true_angle_deg,
                          snr_linear=10.0 ** (snr_db / 10.0),
                          snapshots=snapshots, geometry=spec.geometry)
        crlb_sqrt.append(math.sqrt(hybrid_crlb(ctx, spec.iwf.crlb_variant)))
    return RmseCurve(sweep_name=sweep_axis, values=tuple(values), methods=spec.methods,
                     rmse=rmse, crlb_sqrt_deg=crlb_sqrt,
                     trials=[spec.trials] * len(points), failures=failures)


def sweep_iterations(spec: ExperimentSpec, iteration_caps, threads: int = 1,
                     noiseless: bool = False) -> RmseCurve:
    """RMSE versus the iteration cap, tolerance disabled.

    Cap 0 is the one-shot fusion with the initial weights; cap c >= 1 runs
    exactly c weight updates. The front end is run once per trial and shared
    across caps.
    """
    methods = tuple(m for m in spec.methods if m.startswith("IWF"))
    if not methods:
        raise ValueError("iteration sweep needs at least one IWF method")
    caps = [int(c) for c in iteration_caps]
    if any(c < 0 for c in caps):
        raise ValueError("iteration caps must be >= 0")
    snr_db = spec.snr_grid[0]
    snapshots = spec.source.snapshots
    snr_linear = 10.0 ** (snr_db / 10.0)

    def one(tid):
        seed = trial_seed(spec.master_seed, snr_db, snapshots, tid)
        source = SourceConfig(true_angle_deg=spec.source.true_angle_deg,
                              snr_db=snr_db, snapshots=snapshots)
        out = {m: {} for m in methods}
        try:
            fe = run_front_end(spec.geometry, source, None, seed, noiseless)
        except EstimationFailure:
            for m in methods:
                out[m] = {c: math.nan for c in caps}
            return out
        for m in methods:
            ts = cluster_true_set(fe.theta_fd_deg, fe.candidate_sets, _METHOD_CLUSTERING[m])
            if not all(abs(a - fe.theta_fd_deg) <= OUTLIER_GATE_DEG for a in ts.angles_deg):
                out[m] = {c: math.nan for c in caps}
                continue
            for c in caps:
                cfg = IwfConfig(tolerance_deg=spec.iwf.tolerance_deg,
                                max_iterations=max(c, 1),
                                crlb_variant=spec.iwf.crlb_variant)
                try:
                    est = iwf_fuse(fe.theta_fd_deg, ts, spec.geometry, snr_linear,
                                   snapshots, cfg, exhaust=True)
                    out[m][c] = est.angle_deg
                except FusionError:
                    out[m][c] = math.nan
        return out

    ids = range(spec.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(one, ids))
    else:
        per_trial = [one(t) for t in ids]

    rmse = {m: [] for m in methods}
    failures = {m: [] for m in methods}
    for c in caps:
        for m in methods:
            errs = [res[m][c] - spec.source.true_angle_deg for res in per_trial
                    if math.isfinite(res[m][c])]
            rmse[m].append(_rmse(errs))
            failures[m].append(sum(1 for res in per_trial if math.isnan(res[m][c])))
    ctx = CrlbContext(theta_deg=spec.source.true_angle_deg, snr_linear=snr_linear,
                      snapshots=snapshots, geometry=spec.geometry)
    bound = math.sqrt(hybrid_crlb(ctx, spec.iwf.crlb_variant))
    return RmseCurve(sweep_name="iterations", values=tuple(caps), methods=methods,
                     rmse=rmse, crlb_sqrt_deg=[bound] * len(caps),
                     trials=[spec.trials] * len(caps), failures=failures)


# --- configuration documents -------------------------------------------------

_GEOMETRY_FIELDS = {"num_groups", "antennas_per_subarray", "subarrays_per_group",
                    "fd_antennas", "element_spacing", "wavelength"}
_SOURCE_FIELDS = {"true_angle_deg", "snapshots"}
_IWF_FIELDS = {"tolerance_deg", "max_iterations", "crlb_variant", "relative_tolerance"}
_TOP_REQUIRED = {"geometry", "source", "snr_grid", "trials", "methods", "master_seed"}
_TOP_OPTIONAL = {"snapshot_grid", "iwf", "model_path"}


def _check_fields(mapping, required, optional, where):
    unknown = set(mapping) - required - optional
    if unknown:
        raise ValueError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    missing = required - set(mapping)
    if missing:
        raise ValueError(f"missing required field(s) in {where}: {', '.join(sorted(missing))}")


def parse_spec(path) -> ExperimentSpec:
    """Read an experiment configuration document (strict JSON schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("configuration must be a JSON object")
    _check_fields(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "configuration")
    _check_fields(doc["geometry"], {"num_groups", "antennas_per_subarray",
                                    "subarrays_per_group", "fd_antennas"},
                  _GEOMETRY_FIELDS, "geometry")
    _check_fields(doc["source"], _SOURCE_FIELDS, set(), "source")
    geo = ArrayGeometry(
        num_groups=doc["geometry"]["num_groups"],
        antennas_per_subarray=tuple(doc["geometry"]["antennas_per_subarray"]),
        subarrays_per_group=tuple(doc["geometry"]["subarrays_per_group"]),
        fd_antennas=doc["geometry"]["fd_antennas"],
        element_spacing=doc["geometry"].get("element_spacing", 0.5),
        wavelength=doc["geometry"].get("wavelength", 1.0),
    )
    source = SourceSpec(true_angle_deg=float(doc["source"]["true_angle_deg"]),
                        snapshots=int(doc["source"]["snapshots"]))
    iwf_doc = doc.get("iwf", {})
    _check_fields(iwf_doc, set(), _IWF_FIELDS, "iwf")
    iwf = IwfConfig(
        tolerance_deg=float(iwf_doc.get("tolerance_deg", 1e-4)),
        max_iterations=int(iwf_doc.get("max_iterations", 20)),
        crlb_variant=iwf_doc.get("crlb_variant", "fisher"),
        relative_tolerance=bool(iwf_doc.get("relative_tolerance", False)),
    )
    return ExperimentSpec(
        geometry=geo,
        source=source,
        snr_grid=tuple(doc["snr_grid"]),
        snapshot_grid=tuple(doc.get("snapshot_grid", [source.snapshots])),
        trials=int(doc["trials"]),
        methods=tuple(doc["methods"]),
        iwf=iwf,
        model_path=doc.get("model_path"),
        master_seed=int(doc["master_seed"]),
    )


def emit_spec(spec: ExperimentSpec, path) -> None:
    """Write a configuration document that parse_spec reads back unchanged."""
    doc = {
        "geometry": {
            "num_groups": spec.geometry.num_groups,
            "antennas_per_subarray": list(spec.geometry.antennas_per_subarray),
            "subarrays_per_group": list(spec.geometry.subarrays_per_group),
            "fd_antennas": spec.geometry.fd_antennas,
            "element_spacing": spec.geometry.element_spacing,
            "wavelength": spec.geometry.wavelength,
        },
        "source": {
            "true_angle_deg": spec.source.true_angle_deg,
            "snapshots": spec.source.snapshots,
        },
        "snr_grid": list(spec.snr_grid),
        "snapshot_grid": list(spec.snapshot_grid),
        "trials": spec.trials,
        "methods": list(spec.methods),
        "iwf": {
            "tolerance_deg": spec.iwf.tolerance_deg,
            "max_iterations": spec.iwf.max_iterations,
            "crlb_variant": spec.iwf.crlb_variant,
            "relative_tolerance": spec.iwf.relative_tolerance,
        },
        "model_path": spec.model_path,
        "master_seed": spec.master_seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# --- result emission ---------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _json_val(x):
    """Floats rounded to the same 9 significant digits the CSV carries."""
    if isinstance(x, float):
        return float(f"{x:.9g}")
    return x


def curve_rows(curve: RmseCurve):
    """Flatten a curve into result rows in deterministic order."""
    rows = []
    for i, value in enumerate(curve.values):
        for m in curve.methods:
            rows.append({
                "sweep_name": curve.sweep_name,
                "sweep_value": value,
                "method": m,
                "rmse_deg": curve.rmse[m][i],
                "crlb_sqrt_deg": curve.crlb_sqrt_deg[i],
                "trials": curve.trials[i],
                "failures": curve.failures[m][i],
            })
    return rows


def emit_results(curve: RmseCurve, path, fmt: str = "csv") -> None:
    """Write a curve as CSV (fixed column order) or the mirroring JSON array.

    Floats carry 9 significant digits; a grid point where all trials failed
    appears with rmse_deg = nan.
    """
    rows = curve_rows(curve)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    elif fmt == "json":
        payload = [{c: _json_val(row[c]) for c in RESULT_COLUMNS} for row in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError("format must be 'csv' or 'json'")


def traces_to_csv(trial_estimates, path, num_groups: int) -> None:
    """Write iteration traces as rows (trial_id, iteration, angle, w_fd, w_1..w_P)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "iteration", "angle_deg", "w_fd"]
                        + [f"w_{p + 1}" for p in range(num_groups)])
        for trial_id, est in trial_estimates:
            for it, (angle, weights) in enumerate(est.trace):
                writer.writerow([trial_id, it, _fmt(float(angle)), _fmt(weights.w_fd)]
                                + [_fmt(w) for w in weights.w_groups])


def crlb_table(spec: ExperimentSpec):
    """Bound table rows over snr_grid x snapshot_grid at the source angle."""
    rows = []
    for snr_db in spec.snr_grid:
        for snapshots in spec.snapshot_grid:
            ctx = CrlbContext(theta_deg=spec.source.true_angle_deg,
                              snr_linear=10.0 ** (snr_db / 10.0),
                              snapshots=snapshots, geometry=spec.geometry)
            rep = crlb_report(ctx, spec.iwf.crlb_variant)
            row = {
                "theta_deg": spec.source.true_angle_deg,
                "snr_db": snr_db,
                "snapshots": snapshots,
                "crlb_fd_deg2": rep.crlb_fd_deg2,
            }
            for p, val in enumerate(rep.crlb_groups_deg2):
                row[f"crlb_group{p + 1}_deg2"] = val
            row["hybrid_crlb_deg2"] = rep.hybrid_deg2
            row["hybrid_rmse_floor_deg"] = math.sqrt(rep.hybrid_deg2)
            rows.append(row)
    return rows


def emit_table(rows, path, fmt: str = "csv") -> None:
    """Write generic table rows (shared by the crlb subcommand)."""
    if not rows:
        raise ValueError("no rows to emit")
    columns = list(rows[0].keys())
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in columns])
    elif fmt == "json":
        payload = [{c: _json_val(row[c]) for c in columns} for row in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError("format must be 'csv' or 'json'")
