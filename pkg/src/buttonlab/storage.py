"""Artifact files: JSON for models and run state, CSV for bulk numbers.

Every writer goes through a temp file and an atomic rename, so a
crashed process never leaves a torn artifact behind.  Floats are
serialized with full round-trip precision in JSON; CSV exports use
fixed significant digits so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from .bspline import BSplineCurve
from .button import FdTrace, FdvvModel, VibrationSpec
from .config import config_fingerprint, parse_config, serialize_config
from .errors import FormatError
from .gp import KernelFamily, KernelSpec, gp_fit
from .loop import EpisodeSummary, EvaluationRecord, RunState, design_box, objective_names, rebuild_archive
from .pareto import ReferencePoint, hypervolume
from .policy import MetaPolicy, PolicyParams

TRACE_HEADER = ("t_s", "disp_mm", "force_n", "vib")

_FDVV_TAG = "fdvv/1"
_POLICY_TAG = "policy/1"
_RUNSTATE_TAG = "runstate/1"


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _encode_fdvv(model: FdvvModel) -> dict:
    return {
        "format": _FDVV_TAG,
        "velocity_levels": _floats(model.velocity_levels),
        "curves": [
            {
                "degree": int(c.degree),
                "knots": _floats(c.knots),
                "coefficients": _floats(c.coefficients),
            }
            for c in model.fd_curves
        ],
        "travel": float(model.travel),
        "activation_disp": float(model.activation_disp),
        "release_disp": float(model.release_disp),
        "vibration": {
            "frequency": float(model.vibration.frequency),
            "amplitude": float(model.vibration.amplitude),
            "decay": float(model.vibration.decay),
        },
        "max_force": float(model.max_force),
        "damping": float(model.damping),
    }


def _decode_fdvv(doc: dict) -> FdvvModel:
    vib = doc["vibration"]
    return FdvvModel(
        velocity_levels=tuple(doc["velocity_levels"]),
        fd_curves=tuple(
            BSplineCurve(int(c["degree"]), np.array(c["knots"]), np.array(c["coefficients"]))
            for c in doc["curves"]
        ),
        travel=doc["travel"],
        activation_disp=doc["activation_disp"],
        release_disp=doc["release_disp"],
        vibration=VibrationSpec(vib["frequency"], vib["amplitude"], vib["decay"]),
        max_force=doc["max_force"],
        damping=doc["damping"],
    )


def _encode_policy(meta: MetaPolicy) -> dict:
    return {
        "format": _POLICY_TAG,
        "layer_sizes": list(meta.init_params.layer_sizes),
        "vector": _floats(meta.init_params.vector),
        "inner_lr": float(meta.inner_lr),
        "adapt_episodes": int(meta.adapt_episodes),
    }


def _decode_policy(doc: dict) -> MetaPolicy:
    params = PolicyParams(tuple(doc["layer_sizes"]), np.array(doc["vector"], dtype=float))
    return MetaPolicy(params, doc["inner_lr"], doc["adapt_episodes"])


def _encode_runstate(state: RunState) -> dict:
    return {
        "format": _RUNSTATE_TAG,
        "fingerprint": config_fingerprint(state.config),
        "config": serialize_config(state.config),
        "reference": _floats(state.reference.values),
        "iteration": int(state.iteration),
        "seed_cursor": int(state.seed_cursor),
        "kernels": [
            {
                "signal_variance": float(m.kernel.signal_variance),
                "lengthscales": _floats(m.kernel.lengthscales),
                "noise_variance": float(m.kernel.noise_variance),
                "family": m.kernel.family.value,
            }
            for m in state.models
        ],
        "records": [
            {
                "design": _floats(r.design),
                "objectives": _floats(r.objectives),
                "seeds": [int(s) for s in r.seeds],
                "episodes": [
                    {
                        "return": float(e.return_),
                        "success": bool(e.success),
                        "time_to_activation_s": None
                        if math.isnan(e.time_to_activation_s)
                        else float(e.time_to_activation_s),
                    }
                    for e in r.episodes
                ],
                "iteration": int(r.iteration),
            }
            for r in state.records
        ],
    }


def _decode_runstate(doc: dict) -> RunState:
    config = parse_config(doc["config"])
    if config_fingerprint(config) != doc["fingerprint"]:
        raise FormatError("run state fingerprint does not match its embedded config")
    records = tuple(
        EvaluationRecord(
            design=np.array(r["design"], dtype=float),
            objectives=np.array(r["objectives"], dtype=float),
            seeds=tuple(int(s) for s in r["seeds"]),
            episodes=tuple(
                EpisodeSummary(
                    e["return"],
                    bool(e["success"]),
                    math.nan if e["time_to_activation_s"] is None else e["time_to_activation_s"],
                )
                for e in r["episodes"]
            ),
            iteration=int(r["iteration"]),
        )
        for r in doc["records"]
    )
    _, lower, upper = design_box(config)
    inputs = np.array([(r.design - lower) / (upper - lower) for r in records])
    targets = np.array([r.objectives for r in records])
    models = []
    for j, spec_doc in enumerate(doc["kernels"]):
        spec = KernelSpec(
            spec_doc["signal_variance"],
            np.array(spec_doc["lengthscales"], dtype=float),
            spec_doc["noise_variance"],
            KernelFamily(spec_doc["family"]),
        )
        models.append(gp_fit(inputs, targets[:, j], spec))
    return RunState(
        config=config,
        records=records,
        archive=rebuild_archive(config, records),
        models=tuple(models),
        reference=ReferencePoint(np.array(doc["reference"], dtype=float)),
        iteration=int(doc["iteration"]),
        seed_cursor=int(doc["seed_cursor"]),
    )


def save_artifact(path: str, artifact) -> None:
    """Write a model, policy, or run state as a tagged JSON document."""
    if isinstance(artifact, FdvvModel):
        doc = _encode_fdvv(artifact)
    elif isinstance(artifact, MetaPolicy):
        doc = _encode_policy(artifact)
    elif isinstance(artifact, RunState):
        doc = _encode_runstate(artifact)
    else:
        raise TypeError(f"cannot serialize {type(artifact).__name__} as an artifact")
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_artifact(path: str):
    """Read back an artifact written by :func:`save_artifact`.

    Raises:
        FormatError: unreadable JSON, missing fields, or a format tag
            this version does not understand; nothing partial is returned.
    """
    with open(path) as handle:
        text = handle.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a complete JSON artifact ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: artifact must be a JSON object")
    tag = doc.get("format")
    decoders = {
        _FDVV_TAG: _decode_fdvv,
        _POLICY_TAG: _decode_policy,
        _RUNSTATE_TAG: _decode_runstate,
    }
    if tag not in decoders:
        known = ", ".join(sorted(decoders))
        raise FormatError(f"{path}: unsupported format tag {tag!r} (known: {known})")
    try:
        return decoders[tag](doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed {tag} artifact ({exc})") from exc


def save_trace(path: str, trace: FdTrace) -> None:
    """Write a trace as CSV with the canonical four-column header."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for t, d, f, v in zip(trace.time, trace.displacement, trace.force, trace.vibration):
        writer.writerow([f"{t:.12g}", f"{d:.12g}", f"{f:.12g}", f"{v:.12g}"])
    _atomic_write(path, out.getvalue())


def load_trace(path: str) -> FdTrace:
    """Read a four-column trace CSV, validating timing row by row.

    Time must be strictly increasing and uniformly sampled within 1% of
    the median interval; the sample rate is derived from that median.

    Raises:
        FormatError: wrong header, short file, non-numeric cells,
            non-monotone time, or irregular sampling; the message cites
            the first offending row (1-based, header is row 1).
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        found = ",".join(rows[0]) if rows else "<empty file>"
        raise FormatError(f"{path}: expected header {','.join(TRACE_HEADER)}, found {found}")
    if len(rows) < 3:
        raise FormatError(f"{path}: need at least 2 samples, found {len(rows) - 1}")
    data = np.empty((len(rows) - 1, 4))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"{path}: row {i}: expected 4 columns, found {len(row)}")
        try:
            data[i - 2] = [float(cell) for cell in row]
        except ValueError:
            raise FormatError(f"{path}: row {i}: non-numeric value in {row}") from None
        if not np.all(np.isfinite(data[i - 2])):
            raise FormatError(f"{path}: row {i}: non-finite value")
    time = data[:, 0]
    steps = np.diff(time)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise FormatError(f"{path}: row {bad[0] + 3}: time does not increase")
    dt = float(np.median(steps))
    off = np.flatnonzero(np.abs(steps - dt) > 0.01 * dt)
    if off.size:
        raise FormatError(
            f"{path}: row {off[0] + 3}: sampling interval {steps[off[0]]:.6g} deviates "
            f"more than 1% from the median {dt:.6g}"
        )
    return FdTrace(time, data[:, 1], data[:, 2], data[:, 3], sample_rate=1.0 / dt)


def export_front(state: RunState, front_path: str, hv_path: str) -> None:
    """Write the archive front and the hypervolume convergence curve.

    The front CSV has one row per archive entry (raw design columns,
    objective columns, source record id), ordered by record id.  The
    companion CSV replays the archive after each iteration against the
    frozen reference.  Numbers carry 9 significant digits.
    """
    names, _, _ = design_box(state.config)
    obj_names = objective_names(state.config)

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(names) + list(obj_names) + ["record_id"])
    for entry in sorted(state.archive.entries, key=lambda e: e.record_id):
        record = state.records[entry.record_id]
        row = [f"{v:.9g}" for v in record.design] + [f"{v:.9g}" for v in record.objectives]
        writer.writerow(row + [str(entry.record_id)])
    _atomic_write(front_path, out.getvalue())

    init = state.config.init_count
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["iteration", "hypervolume"])
    for k in range(state.iteration + 1):
        archive = rebuild_archive(state.config, state.records[: init + k])
        value = hypervolume(archive.objective_matrix, state.reference).value if len(archive) else 0.0
        writer.writerow([str(k), f"{value:.9g}"])
    _atomic_write(hv_path, out.getvalue())
