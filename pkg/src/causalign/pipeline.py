"""Corpus-level orchestration: series building, testing, and reports.

One report cell is an (action, time role, modality, condition) tuple;
rewind and skip contribute separate "from" and "to" time roles, pause and
dropout a single "n/a" role. Every cell aggregates per-video permutation
tests into a Fisher p, a mean effect size with bootstrap interval, and the
joint significance verdict.

All randomness is derived from the run seed plus stable labels (video id,
cell key), so results are identical however the work is scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import stats
from .complexity import Modality, binarize, complexity_events, load_annotations
from .errors import CausalignError
from .ingest import EventKind, Session, clean_sessions, derive_dropout, parse_session_log
from .rng import derive_seed
from .series import (
    BinSeries,
    SeriesMeta,
    active_sessions_per_bin,
    bin_complexity,
    bin_unique_sessions,
    detrend_linear,
    normalize_by_active,
    trim_edges,
    z_normalize,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# (action, time_role) in report order; pause and dropout have no from/to split.
ACTION_CELLS: tuple[tuple[str, str], ...] = (
    ("pause", "n/a"),
    ("dropout", "n/a"),
    ("rewind", "from"),
    ("rewind", "to"),
    ("skip", "from"),
    ("skip", "to"),
)

MODALITIES: tuple[str, ...] = ("T", "V", "T+V")
CONDITIONS: tuple[str, ...] = ("Binary", "VisCom")

MODALITY_FILTERS = {
    "T": frozenset({Modality.TEXTUAL}),
    "V": frozenset({Modality.INFOVIS}),
    "T+V": frozenset({Modality.TEXTUAL, Modality.INFOVIS}),
}


@dataclass
class VideoSpec:
    video_id: str
    duration_s: float
    annotations: Path


@dataclass
class RunConfig:
    sessions_path: Path
    out_dir: Path
    videos: list[VideoSpec]
    bin_width: float = 5.0
    trim: int = 2
    window: int = 2
    n_perm: int = stats.DEFAULT_N_PERM
    n_boot: int = stats.DEFAULT_N_BOOT
    seed: int = 0
    jobs: int = 1
    actions: tuple[tuple[str, str], ...] = ACTION_CELLS
    modalities: tuple[str, ...] = MODALITIES
    conditions: tuple[str, ...] = CONDITIONS


@dataclass
class ReportRow:
    action: str
    time_role: str
    modality: str
    condition: str
    p: float
    pes: float
    ci_lo: float
    ci_hi: float
    significant: bool
    n_videos: int


@dataclass
class SkipRecord:
    video_id: str
    scope: str  # which cell(s) the video was excluded from
    reason: str


@dataclass
class PipelineResult:
    rows: list[ReportRow]
    aggregates: list[stats.AggregateResult]
    skipped: list[SkipRecord]


def load_config(path: str | Path) -> RunConfig:
    """Read an analyze config (TOML); paths resolve relative to the file."""
    path = Path(path)
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    base = path.parent
    annotations_dir = base / doc.get("annotations_dir", "annotations")
    videos = []
    for entry in doc.get("videos", []):
        vid = str(entry["id"])
        annotations = Path(entry.get("annotations", annotations_dir / f"{vid}.json"))
        if not annotations.is_absolute():
            annotations = base / annotations
        videos.append(VideoSpec(vid, float(entry["duration_s"]), annotations))
    return RunConfig(
        sessions_path=base / doc.get("sessions", "sessions.csv"),
        out_dir=base / doc.get("out_dir", "out"),
        videos=videos,
        bin_width=float(doc.get("bin_width_s", 5.0)),
        trim=int(doc.get("trim_bins", 2)),
        window=int(doc.get("window_bins", 2)),
        n_perm=int(doc.get("n_perm", stats.DEFAULT_N_PERM)),
        n_boot=int(doc.get("n_boot", stats.DEFAULT_N_BOOT)),
        seed=int(doc.get("seed", 0)),
    )


def response_events(
    sessions: list[Session],
    action: str,
    time_role: str,
    duration: float,
    bin_width: float,
) -> list[tuple[str, float]]:
    """(session_id, video-time) pairs for one action/time-role cell."""
    pairs: list[tuple[str, float]] = []
    for s in sessions:
        if action == "pause":
            pairs.extend(
                (s.session_id, e.position)
                for e in s.events
                if e.kind is EventKind.PAUSE
            )
        elif action == "dropout":
            pos = derive_dropout(s, duration, bin_width)
            if pos is not None:
                pairs.append((s.session_id, pos))
        elif action in ("rewind", "skip"):
            seeks = s.rewinds if action == "rewind" else s.skips
            for e in seeks:
                pairs.append(
                    (s.session_id, e.position if time_role == "from" else e.seek_to)
                )
        else:
            raise ValueError(f"unknown action {action!r}")
    return pairs


def build_stimulus(
    frames,
    modality: str,
    condition: str,
    duration: float,
    bin_width: float,
    trim: int,
    video_id: str,
) -> BinSeries:
    """Stimulus pipeline: complexity events, bin, trim, z-normalize."""
    events = complexity_events(frames, MODALITY_FILTERS[modality])
    if condition == "Binary":
        events = binarize(events)
    meta = SeriesMeta(role="stimulus", modality=modality, condition=condition)
    series = bin_complexity(events, duration, bin_width, video_id=video_id, meta=meta)
    return z_normalize(trim_edges(series, trim))


def build_response(
    sessions: list[Session],
    active_trimmed: BinSeries,
    action: str,
    time_role: str,
    duration: float,
    bin_width: float,
    trim: int,
    video_id: str,
) -> BinSeries:
    """Response pipeline: bin unique sessions, trim, normalize, z-norm, detrend."""
    events = response_events(sessions, action, time_role, duration, bin_width)
    meta = SeriesMeta(role="response", action=_cell_name(action, time_role))
    series = bin_unique_sessions(
        events, duration, bin_width, video_id=video_id, meta=meta
    )
    series = normalize_by_active(trim_edges(series, trim), active_trimmed)
    return detrend_linear(z_normalize(series))


def _cell_name(action: str, time_role: str) -> str:
    return action if time_role == "n/a" else f"{action}_{time_role}"


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Run every report cell over the corpus and persist artifacts.

    A per-video failure (short series, missing annotations, out-of-range
    events) excludes that video from the affected cells with a logged
    warning and a SkipRecord; it never fails the run.
    """
    out_dir = Path(config.out_dir)
    parse_result = parse_session_log(
        _iter_lines(config.sessions_path), strict=False
    )
    for line_no, reason in parse_result.malformed:
        logger.warning("%s: skipped line %d (%s)", config.sessions_path, line_no, reason)
    sessions = clean_sessions(parse_result.sessions)
    by_video: dict[str, list[Session]] = {}
    for session in sessions:
        by_video.setdefault(session.video_id, []).append(session)

    skipped: list[SkipRecord] = []
    stimuli: dict[tuple[str, str, str], BinSeries] = {}
    responses: dict[tuple[str, str], BinSeries] = {}
    video_ids: list[str] = []

    for spec in config.videos:
        vid = spec.video_id
        vid_sessions = by_video.get(vid, [])
        try:
            frames = load_annotations(spec.annotations)
            active = trim_edges(
                active_sessions_per_bin(
                    vid_sessions, spec.duration_s, config.bin_width, video_id=vid
                ),
                config.trim,
            )
        except (CausalignError, OSError) as exc:
            logger.warning("video %s skipped entirely: %s", vid, exc)
            skipped.append(SkipRecord(vid, "*", str(exc)))
            continue
        video_ids.append(vid)

        for modality in config.modalities:
            for condition in config.conditions:
                try:
                    stimuli[(vid, modality, condition)] = build_stimulus(
                        frames, modality, condition, spec.duration_s,
                        config.bin_width, config.trim, vid,
                    )
                except CausalignError as exc:
                    logger.warning(
                        "video %s stimulus %s/%s skipped: %s",
                        vid, modality, condition, exc,
                    )
                    skipped.append(
                        SkipRecord(vid, f"*/{modality}/{condition}", str(exc))
                    )
        for action, time_role in config.actions:
            try:
                responses[(vid, _cell_name(action, time_role))] = build_response(
                    vid_sessions, active, action, time_role,
                    spec.duration_s, config.bin_width, config.trim, vid,
                )
            except CausalignError as exc:
                name = _cell_name(action, time_role)
                logger.warning("video %s response %s skipped: %s", vid, name, exc)
                skipped.append(SkipRecord(vid, f"{name}/*", str(exc)))

    _dump_series(out_dir, stimuli, responses)

    # Every (cell, video) permutation test gets its own derived seed, so
    # the fan-out order and worker count cannot change any result.
    tasks = []
    for action, time_role in config.actions:
        name = _cell_name(action, time_role)
        for modality in config.modalities:
            for condition in config.conditions:
                for vid in video_ids:
                    stim = stimuli.get((vid, modality, condition))
                    resp = responses.get((vid, name))
                    if stim is None or resp is None:
                        continue
                    tasks.append((name, modality, condition, vid, stim, resp))

    def run_test(task):
        name, modality, condition, vid, stim, resp = task
        seed = derive_seed(config.seed, "test", vid, name, modality, condition)
        return stats.permutation_test(
            stim, resp, n_perm=config.n_perm, window=config.window,
            rng_seed=seed, video_id=vid,
        )

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_test, tasks))
    else:
        results = [run_test(t) for t in tasks]
    by_cell: dict[tuple[str, str, str], list[stats.TestResult]] = {}
    for task, result in zip(tasks, results):
        by_cell.setdefault(task[:3], []).append(result)

    rows: list[ReportRow] = []
    aggregates: list[stats.AggregateResult] = []
    for action, time_role in config.actions:
        name = _cell_name(action, time_role)
        for modality in config.modalities:
            for condition in config.conditions:
                per_video = by_cell.get((name, modality, condition), [])
                if not per_video:
                    logger.warning(
                        "cell %s/%s/%s has no usable videos; row omitted",
                        name, modality, condition,
                    )
                    continue
                per_video.sort(key=lambda r: r.video_id)
                agg = stats.aggregate(
                    per_video,
                    n_boot=config.n_boot,
                    rng_seed=derive_seed(
                        config.seed, "bootstrap", name, modality, condition
                    ),
                    action=action,
                    time_role=time_role,
                    modality=modality,
                    condition=condition,
                )
                aggregates.append(agg)
                rows.append(
                    ReportRow(
                        action=action,
                        time_role=time_role,
                        modality=modality,
                        condition=condition,
                        p=agg.fisher_p,
                        pes=agg.mean_pes,
                        ci_lo=agg.ci[0],
                        ci_hi=agg.ci[1],
                        significant=agg.significant,
                        n_videos=len(per_video),
                    )
                )

    _dump_results(out_dir, config, rows, aggregates, skipped)
    return PipelineResult(rows=rows, aggregates=aggregates, skipped=skipped)


def _iter_lines(path: str | Path):
    with open(path, encoding="utf-8", newline="") as fh:
        yield from fh


def _dump_series(out_dir: Path, stimuli, responses) -> None:
    for (vid, modality, condition), series in stimuli.items():
        _write_series_csv(
            out_dir / "series" / vid / f"stimulus_{modality.replace('+', 'plus')}_{condition}.csv",
            series,
        )
    for (vid, name), series in responses.items():
        _write_series_csv(out_dir / "series" / vid / f"response_{name}.csv", series)


def _write_series_csv(path: Path, series: BinSeries) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "value"])
        for b, v in enumerate(series.values):
            writer.writerow([b, repr(float(v))])


def _dump_results(out_dir, config, rows, aggregates, skipped) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tests = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "n_perm": config.n_perm,
        "cells": [
            {
                "action": a.action,
                "time_role": a.time_role,
                "modality": a.modality,
                "condition": a.condition,
                "fisher_p": a.fisher_p,
                "mean_pes": a.mean_pes,
                "ci": list(a.ci),
                "significant": a.significant,
                "per_video": [
                    {
                        "video_id": r.video_id,
                        "cost": r.cost,
                        "null_mean": r.null_mean,
                        "null_std": r.null_std,
                        "p": r.p,
                        "pes": r.pes,
                        "n_perm": r.n_perm,
                        "seed": r.seed,
                        "degenerate_null": r.degenerate_null,
                    }
                    for r in a.per_video
                ],
            }
            for a in aggregates
        ],
        "skipped": [
            {"video_id": s.video_id, "scope": s.scope, "reason": s.reason}
            for s in skipped
        ],
    }
    (out_dir / "tests.json").write_text(
        json.dumps(tests, indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "report.json").write_text(emit_report(rows, "json"), encoding="utf-8")
    (out_dir / "report.csv").write_text(emit_report(rows, "csv"), encoding="utf-8")
    (out_dir / "report.md").write_text(emit_report(rows, "markdown"), encoding="utf-8")


REPORT_COLUMNS = [
    "action",
    "time_role",
    "modality",
    "condition",
    "p",
    "pes",
    "ci_lo",
    "ci_hi",
    "significant",
    "n_videos",
]


def emit_report(rows: list[ReportRow], fmt: str = "markdown") -> str:
    """Render report rows as csv, json (full precision) or markdown.

    The markdown table mirrors the study layout: one display row per
    action/time/modality with Binary and VisCom column blocks, p to three
    decimals and effect sizes to two. The p cell is bold when p < 0.05;
    the PES and CI cells are bold when the joint rule holds.
    """
    if fmt == "csv":
        return _report_csv(rows)
    if fmt == "json":
        return _report_json(rows)
    if fmt == "markdown":
        return _report_markdown(rows)
    raise ValueError(f"unknown report format {fmt!r}")


def _report_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r.action,
                r.time_role,
                r.modality,
                r.condition,
                repr(r.p),
                repr(r.pes),
                repr(r.ci_lo),
                repr(r.ci_hi),
                r.significant,
                r.n_videos,
            ]
        )
    return buf.getvalue()


def _report_json(rows: list[ReportRow]) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "rows": [
            {
                "action": r.action,
                "time_role": r.time_role,
                "modality": r.modality,
                "condition": r.condition,
                "p": r.p,
                "pes": r.pes,
                "ci_lo": r.ci_lo,
                "ci_hi": r.ci_hi,
                "significant": r.significant,
                "n_videos": r.n_videos,
            }
            for r in rows
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def rows_from_json(text: str) -> list[ReportRow]:
    """Inverse of emit_report(..., "json")."""
    doc = json.loads(text)
    return [
        ReportRow(
            action=r["action"],
            time_role=r["time_role"],
            modality=r["modality"],
            condition=r["condition"],
            p=float(r["p"]),
            pes=float(r["pes"]),
            ci_lo=float(r["ci_lo"]),
            ci_hi=float(r["ci_hi"]),
            significant=bool(r["significant"]),
            n_videos=int(r["n_videos"]),
        )
        for r in doc["rows"]
    ]


def _report_markdown(rows: list[ReportRow]) -> str:
    cells: dict[tuple[str, str, str], dict[str, ReportRow]] = {}
    for r in rows:
        cells.setdefault((r.action, r.time_role, r.modality), {})[r.condition] = r

    lines = [
        "| action | time | mod | Binary p | Binary PES | Binary CI "
        "| VisCom p | VisCom PES | VisCom CI |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    last_group = None
    for action, time_role in ACTION_CELLS:
        for modality in MODALITIES:
            row_cells = cells.get((action, time_role, modality))
            if row_cells is None:
                continue
            group = (action, time_role)
            show_action = action if group != last_group else ""
            show_time = time_role if time_role != "n/a" and group != last_group else ""
            last_group = group
            parts = [show_action, show_time, modality]
            for condition in CONDITIONS:
                r = row_cells.get(condition)
                if r is None:
                    parts.extend(["-", "-", "-"])
                    continue
                p_txt = f"{r.p:.3f}"
                pes_txt = f"{r.pes:.2f}"
                ci_txt = f"[{r.ci_lo:.2f}, {r.ci_hi:.2f}]"
                if r.p < stats.ALPHA:
                    p_txt = f"**{p_txt}**"
                if r.significant:
                    pes_txt = f"**{pes_txt}**"
                    ci_txt = f"**{ci_txt}**"
                parts.extend([p_txt, pes_txt, ci_txt])
            lines.append("| " + " | ".join(parts) + " |")
    return "\n".join(lines) + "\n"


def with_overrides(config: RunConfig, **kwargs) -> RunConfig:
    """Config copy with selected fields replaced (seed, n_perm, out_dir...)."""
    return replace(config, **kwargs)
