"""End-to-end picking of one micrograph and batch runs over many files."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .ctf import CtfParams, phase_flip, read_ctf_sidecar
from .micrograph_io import Micrograph, Pick, bin_micrograph, crop_border, read_mrc, write_picks
from .picker import (classify_pixels, connected_components, enforce_separation, erode,
                     filter_clusters, make_picks)
from .references import select_references
from .response import QuerySet, ScoreField, save_score_grid, score_micrograph
from .svm import SvmModel, train
from .training import EmptyClassError, TrainingSet, extract_training, noise_regions, particle_regions

log = logging.getLogger(__name__)

__all__ = ["PickOutcome", "FileReport", "prepare", "pick_micrograph", "run", "SUMMARY_FIELDS"]


@dataclass
class PickOutcome:
    picks: list[Pick]
    micrograph: Micrograph  # the binned, cropped (and possibly phase-flipped) image
    queries: QuerySet
    scores: ScoreField
    training: TrainingSet
    model: SvmModel
    mask: np.ndarray
    clusters: list
    n_references: int
    tau2_used: float
    timings: dict = field(default_factory=dict)


@dataclass
class FileReport:
    path: str
    status: str
    picks: int = 0
    references: int = 0
    queries: int = 0
    threshold: float = float("nan")
    particle_windows: int = 0
    noise_windows: int = 0
    tau2_used: float = float("nan")
    support_vectors: int = 0
    seconds: float = 0.0
    output: str = ""
    error: str = ""


SUMMARY_FIELDS = [f for f in FileReport.__dataclass_fields__]


def prepare(m: Micrograph, cfg: Config, ctf: CtfParams | None = None) -> Micrograph:
    """Crop, bin and optionally phase-flip a raw micrograph."""
    m = crop_border(m, cfg.border_crop)
    m = bin_micrograph(m, cfg.bin_factor)
    if ctf is not None:
        binned = CtfParams(ctf.defocus, ctf.wavelength, ctf.spherical_aberration,
                           ctf.amplitude_contrast, ctf.pixel_size * m.bin_factor)
        m = phase_flip(m, binned)
    return m


def _training_with_fallback(m, queries, scores, cfg: Config, n: int):
    """Build the training set, lowering tau2 in 5-point steps while noise windows are scarce."""
    particle_mask = particle_regions(queries, scores, cfg.tau1)
    tau2 = cfg.tau2
    while True:
        noise_mask = noise_regions(queries, scores, tau2)
        try:
            ts = extract_training(m, particle_mask, noise_mask, n)
            enough = ts.n_noise >= cfg.min_noise_windows
        except EmptyClassError as exc:
            if exc.which == "particle":
                raise
            ts, enough = None, False
        if enough or tau2 - 5 < cfg.tau1:
            break
        tau2 -= 5
        log.info("too few noise windows; lowering tau2 to %g", tau2)
    if ts is None:
        raise EmptyClassError("noise")
    if not enough:
        log.warning("only %d noise windows at tau2=%g", ts.n_noise, tau2)
    return ts, tau2


def pick_micrograph(raw: Micrograph, cfg: Config, ctf: CtfParams | None = None) -> PickOutcome:
    cfg.validate()
    timings = {}
    t0 = time.perf_counter()
    m = prepare(raw, cfg, ctf)
    n = cfg.resolved_query_size()

    refs = select_references(m, n, cfg.container_size)
    queries, scores = score_micrograph(m, refs, n, threads=cfg.threads, divisor=cfg.threshold_divisor)
    timings["scoring"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    ts, tau2 = _training_with_fallback(m, queries, scores, cfg, n)
    model = train(ts, bandwidth=cfg.svm_bandwidth, slack=cfg.svm_slack)
    timings["training"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    mask = classify_pixels(m, model, n, threads=cfg.threads)
    radius = cfg.resolved_erosion_radius()
    work = erode(mask, radius) if radius > 0 else mask
    clusters = connected_components(work)
    if cfg.uses_diameter_filter:
        lo, hi = cfg.diameter_bounds()
        # erosion shrinks a cluster's extent by about 2 * radius
        shrink = 2.0 * radius
        clusters = filter_clusters(clusters, min_diameter=max(0.0, lo - shrink), max_diameter=hi - shrink)
    else:
        lo, hi = cfg.pixel_bounds()
        clusters = filter_clusters(clusters, min_pixels=lo, max_pixels=hi)
    clusters = enforce_separation(clusters, cfg.binned_min_distance())
    picks = make_picks(m, clusters, int(cfg.particle_size))
    timings["picking"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0

    log.info("B=%d C=%d t=%.4g |S1|=%d |S2|=%d tau2=%g SV=%d picks=%d",
             len(refs), len(queries), scores.t, ts.n_particle, ts.n_noise, tau2,
             model.n_support, len(picks))
    return PickOutcome(picks, m, queries, scores, ts, model, mask, clusters, len(refs), tau2, timings)


def _ctf_for(path: Path, sidecar) -> CtfParams | None:
    if sidecar is None:
        return None
    sidecar = Path(sidecar)
    if sidecar.is_dir():
        candidate = sidecar / (path.stem + ".ctf")
        if not candidate.exists():
            raise FileNotFoundError(f"no CTF sidecar {candidate}")
        return read_ctf_sidecar(candidate)
    return read_ctf_sidecar(sidecar)


def run(cfg: Config, paths, out_dir) -> list[FileReport]:
    """Pick every input micrograph independently; failures are logged and skipped.

    Writes one pick file per micrograph plus ``summary.csv`` into ``out_dir``
    and, when ``cfg.overlay`` is set, a figure per micrograph.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for path in map(Path, paths):
        start = time.perf_counter()
        try:
            raw = read_mrc(path)
            outcome = pick_micrograph(raw, cfg, _ctf_for(path, cfg.ctf_sidecar))
            target = out_dir / f"{path.stem}.{cfg.out_format}"
            write_picks(outcome.picks, target, cfg.out_format)
            if cfg.save_scores:
                save_score_grid(outcome.queries, outcome.scores, out_dir / f"{path.stem}_scores.csv")
            if cfg.overlay:
                from .plotting import save_overlay, write_pgm

                save_overlay(outcome, out_dir / f"{path.stem}_overlay.png")
                write_pgm(outcome.mask, out_dir / f"{path.stem}_mask.pgm")
            reports.append(FileReport(
                path=str(path), status="ok", picks=len(outcome.picks),
                references=outcome.n_references, queries=len(outcome.queries),
                threshold=outcome.scores.t, particle_windows=outcome.training.n_particle,
                noise_windows=outcome.training.n_noise, tau2_used=outcome.tau2_used,
                support_vectors=outcome.model.n_support,
                seconds=time.perf_counter() - start, output=str(target),
            ))
        except Exception as exc:  # per-file isolation
            log.error("%s: %s", path, exc)
            reports.append(FileReport(path=str(path), status="failed",
                                      seconds=time.perf_counter() - start, error=str(exc)))
    write_summary(reports, out_dir / "summary.csv")
    return reports


def write_summary(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for r in reports:
            row = dict(r.__dict__)
            row["seconds"] = f"{r.seconds:.3f}"
            writer.writerow(row)
