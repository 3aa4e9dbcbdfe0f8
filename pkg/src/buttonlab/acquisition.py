"""Candidate selection: Monte-Carlo expected hypervolume improvement.

EHVI uses common random numbers: one fixed block of standard-normal
draws per seed, shared by every candidate.  That makes single-candidate
calls exactly reproduce the values a batched scan computed internally,
so proposals can be audited by rescanning.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

from .gp import GpModel, gp_predict_batch
from .pareto import HypervolumeResult, ParetoArchive, ReferencePoint, hypervolume

# Posterior samples per candidate inside propose_next.
DEFAULT_EHVI_SAMPLES = 128
# Proposals closer than this (max-abs) to an evaluated design get bumped.
DUPLICATE_TOL = 1e-9
# Archive perturbation scale, as a fraction of each dimension's range.
PERTURB_FRACTION = 0.05
# Pattern-search refinement of the scan argmax: starting step as a
# fraction of each dimension's range, the step below which search
# stops, and a cap on accepted moves.
REFINE_STEP_INIT = 0.2
REFINE_STEP_MIN = 0.01
REFINE_MOVE_LIMIT = 40

_CHUNK = 256


def _posterior_grid(models: list[GpModel], candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-objective posteriors into (n, m) mean and std arrays."""
    means = np.empty((candidates.shape[0], len(models)))
    stds = np.empty_like(means)
    for j, model in enumerate(models):
        mu, var = gp_predict_batch(model, candidates)
        means[:, j] = mu
        stds[:, j] = np.sqrt(var)
    return means, stds


def _check_models(models) -> list[GpModel]:
    models = list(models)
    if len(models) < 2:
        raise ValueError("EHVI needs one surrogate per objective, at least 2")
    dims = {m.kernel.dim for m in models}
    if len(dims) != 1:
        raise ValueError(f"surrogates disagree on design dimension: {sorted(dims)}")
    return models


def _check_ref(ref: ReferencePoint, m: int) -> np.ndarray:
    # Archive points outside the reference box are legal; they simply
    # contribute no volume.  Only shape and finiteness are enforced.
    values = ref.values if isinstance(ref, ReferencePoint) else np.asarray(ref, dtype=float)
    if values.size != m:
        raise ValueError(f"reference point has {values.size} objectives, models define {m}")
    if not np.all(np.isfinite(values)):
        raise ValueError("reference point must be finite")
    return values


def _delta_hv2(front: np.ndarray, ref: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Hypervolume gained by each (y1, y2) over a fixed 2-D front.

    Decomposes the free area above the front staircase into vertical
    strips; each strip contributes (width) x (headroom above y2).
    """
    if front.shape[0] == 0:
        return np.clip(ref[0] - y1, 0.0, None) * np.clip(ref[1] - y2, 0.0, None)
    order = np.lexsort((front[:, 1], front[:, 0]))
    f = front[order]
    # Strip j spans [left[j], right[j]) with F-boundary height bound[j].
    left = np.concatenate(([-np.inf], f[:, 0]))
    right = np.concatenate((f[:, 0], [ref[0]]))
    bound = np.concatenate(([ref[1]], np.minimum.accumulate(f[:, 1])))
    widths = np.clip(right[None, :] - np.maximum(left[None, :], y1[:, None]), 0.0, None)
    heights = np.clip(np.minimum(bound, ref[1])[None, :] - y2[:, None], 0.0, None)
    gain = np.sum(np.minimum(widths, np.clip(ref[0] - y1, 0.0, None)[:, None]) * heights, axis=1)
    return np.where(y2 >= ref[1], 0.0, gain)


def _boxes3(front: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint boxes whose union is the region the front dominates inside ref.

    Sweeps the third objective into slabs; within each slab the active
    points form a 2-D staircase, cut into vertical strips.
    """
    empty = np.zeros((0, 3))
    if front.shape[0] == 0:
        return empty, empty
    pts = front[np.all(front < ref, axis=1)]
    if pts.shape[0] == 0:
        return empty, empty
    los: list[tuple[float, float, float]] = []
    his: list[tuple[float, float, float]] = []
    zs = np.unique(pts[:, 2])
    z_edges = np.append(zs, ref[2])
    for j in range(zs.size):
        active = pts[pts[:, 2] <= zs[j]]
        xs, inv = np.unique(active[:, 0], return_inverse=True)
        ymin = np.full(xs.size, np.inf)
        np.minimum.at(ymin, inv, active[:, 1])
        ymin = np.minimum.accumulate(ymin)
        x_edges = np.append(xs, ref[0])
        for i in range(xs.size):
            if x_edges[i + 1] > x_edges[i]:
                los.append((x_edges[i], ymin[i], z_edges[j]))
                his.append((x_edges[i + 1], ref[1], z_edges[j + 1]))
    return np.array(los), np.array(his)


def _ehvi_batch(
    models: list[GpModel],
    candidates: np.ndarray,
    archive: ParetoArchive,
    ref_values: np.ndarray,
    sample_count: int,
    seed: int,
) -> np.ndarray:
    m = len(models)
    front = archive.objective_matrix if len(archive) else np.zeros((0, m))
    z = np.random.default_rng(seed).standard_normal((sample_count, m))
    out = np.empty(candidates.shape[0])
    if m == 2:
        for start in range(0, candidates.shape[0], _CHUNK):
            block = candidates[start : start + _CHUNK]
            means, stds = _posterior_grid(models, block)
            samples = means[:, None, :] + stds[:, None, :] * z[None, :, :]
            y1 = samples[:, :, 0].ravel()
            y2 = samples[:, :, 1].ravel()
            gains = _delta_hv2(front, ref_values, y1, y2).reshape(block.shape[0], sample_count)
            out[start : start + block.shape[0]] = gains.mean(axis=1)
        return out
    if m == 3:
        # Gain of y = vol(box y..ref) minus its overlap with the region
        # already dominated, the latter summed over disjoint boxes.
        lo_b, hi_b = _boxes3(front, ref_values)
        means, stds = _posterior_grid(models, candidates)
        for i in range(candidates.shape[0]):
            samples = means[i] + stds[i] * z
            gain = np.prod(np.clip(ref_values - samples, 0.0, None), axis=1)
            if lo_b.shape[0]:
                overlap = np.prod(
                    np.clip(hi_b[None, :, :] - np.maximum(lo_b[None, :, :], samples[:, None, :]), 0.0, None),
                    axis=2,
                ).sum(axis=1)
                gain = np.clip(gain - overlap, 0.0, None)
            out[i] = gain.mean()
        return out
    base = hypervolume(front, ref_values).value if front.shape[0] else 0.0
    means, stds = _posterior_grid(models, candidates)
    for i in range(candidates.shape[0]):
        samples = means[i] + stds[i] * z
        gains = np.empty(sample_count)
        for s in range(sample_count):
            joined = np.vstack([front, samples[s][None, :]]) if front.shape[0] else samples[s][None, :]
            gains[s] = max(0.0, hypervolume(joined, ref_values).value - base)
        out[i] = gains.mean()
    return out


def ehvi(
    models,
    candidate,
    archive: ParetoArchive,
    ref: ReferencePoint,
    sample_count: int = 10_000,
    seed: int = 0,
) -> float:
    """Expected hypervolume improvement of evaluating ``candidate``.

    Mean over posterior samples of max(0, HV(archive + y) - HV(archive)),
    with objectives sampled independently per surrogate.  Deterministic
    for a given seed.
    """
    models = _check_models(models)
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    ref_values = _check_ref(ref, len(models))
    point = np.atleast_2d(np.asarray(candidate, dtype=float))
    return float(_ehvi_batch(models, point, archive, ref_values, sample_count, seed)[0])


def scan_candidates(bounds, scan_count: int, seed: int) -> np.ndarray:
    """Seeded scrambled-Sobol scan of the design box, shape (n, d)."""
    lo, hi = _check_bounds(bounds)
    sampler = qmc.Sobol(d=lo.size, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        # Non power-of-two draws are fine here; balance is not required.
        warnings.simplefilter("ignore", UserWarning)
        unit = sampler.random(scan_count)
    return qmc.scale(unit, lo, hi)


def _check_bounds(bounds) -> tuple[np.ndarray, np.ndarray]:
    lo = np.atleast_1d(np.asarray(bounds[0], dtype=float))
    hi = np.atleast_1d(np.asarray(bounds[1], dtype=float))
    if lo.shape != hi.shape:
        raise ValueError("bounds halves differ in shape")
    if np.any(lo > hi):
        raise ValueError(f"empty bounds: {lo} > {hi} somewhere")
    return lo, hi


def propose_next(
    models,
    bounds,
    archive: ParetoArchive,
    ref: ReferencePoint,
    scan_count: int = 1024,
    seed: int = 0,
    sample_count: int = DEFAULT_EHVI_SAMPLES,
) -> np.ndarray:
    """Next design to evaluate: EHVI argmax over a candidate pool.

    The pool is a Sobol scan of the box plus one Gaussian perturbation
    (5% of range per dimension) of each archived design.  The argmax is
    then refined by a pattern search under the same random numbers, so
    the returned point's EHVI never falls below the scanned maximum.
    The all-zero-EHVI case falls back to the scanned candidate with the
    largest summed posterior variance.  Proposals within 1e-9 of an
    already-evaluated design are perturbed once.
    """
    models = _check_models(models)
    if scan_count < 1:
        raise ValueError("scan_count must be >= 1")
    lo, hi = _check_bounds(bounds)
    ref_values = _check_ref(ref, len(models))

    scan = scan_candidates(bounds, scan_count, seed)
    pool = scan
    if len(archive):
        prng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
        sigma = PERTURB_FRACTION * (hi - lo)
        jumps = prng.standard_normal((len(archive), lo.size)) * sigma
        local = np.clip(archive.design_matrix + jumps, lo, hi)
        pool = np.vstack([scan, local])

    values = _ehvi_batch(models, pool, archive, ref_values, sample_count, seed)
    if np.max(values) > 0.0:
        choice = pool[int(np.argmax(values))]
        if len(archive):
            choice = _refine(
                models, choice, float(np.max(values)), lo, hi, archive, ref_values, sample_count, seed
            )
    else:
        _, var_sum = _scan_variances(models, scan)
        choice = scan[int(np.argmax(var_sum))]

    evaluated = models[0].inputs
    if evaluated.shape[0] and np.min(np.max(np.abs(evaluated - choice[None, :]), axis=1)) < DUPLICATE_TOL:
        bump = np.random.default_rng(np.random.SeedSequence([seed, 11, 1]))
        sigma = PERTURB_FRACTION * (hi - lo)
        choice = np.clip(choice + bump.standard_normal(lo.size) * sigma, lo, hi)
    return choice


def _refine(
    models: list[GpModel],
    start: np.ndarray,
    start_value: float,
    lo: np.ndarray,
    hi: np.ndarray,
    archive: ParetoArchive,
    ref_values: np.ndarray,
    sample_count: int,
    seed: int,
) -> np.ndarray:
    """Axis-aligned pattern search on EHVI around the scan argmax.

    Every comparison reuses the scan's common-random-number block, so a
    move is accepted only on a genuine EHVI gain and the result never
    falls below the scanned maximum.
    """
    span = hi - lo
    best = np.array(start, dtype=float)
    best_value = start_value
    step = REFINE_STEP_INIT
    moves = 0
    while step >= REFINE_STEP_MIN and moves < REFINE_MOVE_LIMIT:
        cands = np.repeat(best[None, :], 2 * lo.size, axis=0)
        for j in range(lo.size):
            cands[2 * j, j] = max(best[j] - step * span[j], lo[j])
            cands[2 * j + 1, j] = min(best[j] + step * span[j], hi[j])
        vals = _ehvi_batch(models, cands, archive, ref_values, sample_count, seed)
        k = int(np.argmax(vals))
        if vals[k] > best_value:
            best = cands[k]
            best_value = float(vals[k])
            moves += 1
        else:
            step *= 0.5
    return best


def _scan_variances(models: list[GpModel], scan: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    variances = np.zeros(scan.shape[0])
    for model in models:
        _, var = gp_predict_batch(model, scan)
        variances += var
    return scan, variances


def archive_hypervolume(archive: ParetoArchive, ref: ReferencePoint) -> HypervolumeResult:
    """Hypervolume of the archive front against its reference point."""
    if len(archive) == 0:
        return HypervolumeResult(0.0)
    return hypervolume(archive.objective_matrix, ref)
