"""Human-readable comparison table and plot-ready set outlines from run artifacts."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

from . import zonoset as zs
from .awareness import scene_from_record
from .frames import global_to_local
from .scenario import parse_scenario

OUTLINE_COLUMNS = ("time", "provenance", "source", "track_id", "vertex", "x_ev", "y_ev")


def read_truth(path: Path) -> dict:
    """``{time_ms: {actor: row}}`` from ``truth.csv``."""
    table = defaultdict(dict)
    with path.open() as fh:
        for row in csv.DictReader(fh):
            table[int(row["time_ms"])][row["actor"]] = row
    return table


def read_metrics(path: Path) -> list[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _nearest(tracks, x, y, cls, gate):
    best, best_d = None, gate
    for t in tracks:
        if t.class_hint not in (cls, "unknown"):
            continue
        d = math.hypot(t.corrected_set.c[0] - x, t.corrected_set.c[1] - y)
        if d <= best_d:
            best, best_d = t, d
    return best


def _cell(track) -> tuple[str, str]:
    if track is None:
        return "-", "-"
    c = track.corrected_set.c
    return f"({c[0]:.2f},{c[1]:.2f})", f"{zs.area_2d(track.corrected_set):.2f}"


def comparison_table(scene, truth_rows: dict, source_names: dict, actors, gate: float) -> str:
    """Per-actor ground truth, local, external and fused centers and areas at one scene."""
    sources = sorted({t.source for t in scene.by_provenance("external")}, key=str)
    header_groups = ["Ground truth", "Local perception"]
    header_groups += [f"External ({source_names.get(str(s), s)})" for s in sources]
    header_groups += ["Fused set"]
    rows = []
    for actor in actors:
        tr = truth_rows.get(actor)
        if tr is None:
            continue
        x, y = float(tr["x"]), float(tr["y"])
        cls = tr["class"]
        cells = [(f"({x:.2f},{y:.2f})", f"{float(tr['length']) * float(tr['width']):.2f}")]
        local = [t for t in scene.tracks if t.provenance == "local"]
        cells.append(_cell(_nearest(local, x, y, cls, gate)))
        for s in sources:
            ext = [t for t in scene.tracks if t.provenance == "external" and t.source == s]
            cells.append(_cell(_nearest(ext, x, y, cls, gate)))
        cells.append(_cell(_nearest(scene.by_provenance("fused"), x, y, cls, gate)))
        rows.append((actor, cells))
    widths = [max(len(g), 2 * 18 + 3) for g in header_groups]
    lines = [
        "Actor  | " + " | ".join(g.center(w) for g, w in zip(header_groups, widths)),
        "       | " + " | ".join(f"{'Center (m,m)':>18} {'Area m^2':>18}"[: w].rjust(w) for w in widths),
    ]
    lines.append("-" * len(lines[0]))
    for actor, cells in rows:
        lines.append(
            f"{actor:<6} | " + " | ".join(f"{c:>18} {a:>18}".rjust(w) for (c, a), w in zip(cells, widths))
        )
    return "\n".join(lines)


def rmse_table(rows: list[dict]) -> str:
    lines = [f"{'Actor':<8}{'Provenance':<12}{'Source':<10}{'Samples':>8}{'RMSE m':>10}{'Mean area m^2':>16}"]
    for r in rows:
        lines.append(
            f"{r['actor']:<8}{r['provenance']:<12}{r['source']:<10}{int(r['samples']):>8}"
            f"{float(r['rmse_m']):>10.3f}{float(r['mean_area_m2']):>16.3f}"
        )
    return "\n".join(lines)


def write_outlines(scenes, path: Path):
    """Closed vertex polygons of every set's (x, y) projection, in the ego frame."""
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OUTLINE_COLUMNS)
        for scene in scenes:
            for t in scene.tracks:
                for i, v in enumerate(zs.vertices_2d(t.corrected_set)):
                    ex, ey = global_to_local(scene.ego_pose, v)
                    w.writerow([scene.time, t.provenance, t.source, t.track_id, i, f"{ex:.6f}", f"{ey:.6f}"])


def report(run_dir, at: float | None = None, outlines: bool = True) -> str:
    """Summarise a finished run and write ``report.txt`` (and ``outlines.csv``)."""
    run_dir = Path(run_dir)
    cfg = parse_scenario((run_dir / "config.yaml").read_text())
    truth = read_truth(run_dir / "truth.csv")
    rows = read_metrics(run_dir / "metrics.csv")
    scenes = []
    with (run_dir / "scenes.ndjson").open() as fh:
        for line in fh:
            scenes.append(scene_from_record(json.loads(line)))
    if not scenes:
        raise ValueError(f"no scenes recorded in {run_dir}")
    if at is None:
        scene = scenes[-1]
    else:
        scene = min(scenes, key=lambda s: abs(s.time - at))
    names = {str(a.station_id): a.id for a in cfg.actors if a.station_id is not None}
    actors = [a.id for a in cfg.actors if a.role != "obstacle"]
    text = "\n".join(
        [
            f"Scenario {cfg.name} (seed {cfg.seed}), scene at t = {scene.time:.2f} s",
            "",
            "Comparison of ground truth, estimated sets and fused set",
            comparison_table(scene, truth[round(scene.time * 1000)], names, actors, cfg.awareness.gate),
            "",
            "Center RMSE against ground truth over the whole run",
            rmse_table(rows),
            "",
        ]
    )
    (run_dir / "report.txt").write_text(text)
    if outlines:
        write_outlines(scenes, run_dir / "outlines.csv")
    return text
