"""Trajectory CSV emission/parsing and the run manifest.

CSV schema (fixed header and column order):
    t,x,y,theta,v,u1,u2,uf1,uf2,nu1,nu2,delta,b,psi1,psi2,qp_status,solve_time_s

Floats print with 17 significant digits so parsing and re-emitting a file is
byte identical. Non-applicable cells (nu for direct-controller runs, controls
on the terminal sample) are empty, not zero. Wall-clock solve times are not
written to the CSV (they would break byte-level replayability); they live in
the run manifest and the in-memory log.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .sim import TrajectoryLog

CSV_COLUMNS = (
    "t", "x", "y", "theta", "v", "u1", "u2", "uf1", "uf2",
    "nu1", "nu2", "delta", "b", "psi1", "psi2", "qp_status", "solve_time_s",
)
CSV_HEADER = ",".join(CSV_COLUMNS)


class SchemaMismatch(ValueError):
    """CSV header does not match the trajectory schema."""


def _fmt(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def render_csv(log: TrajectoryLog) -> str:
    lines = [CSV_HEADER]
    for rec in log.records:
        st = rec.state
        u = rec.u if rec.u is not None else (None, None)
        uf = rec.uf if rec.uf is not None else (None, None)
        nu = rec.nu if rec.nu is not None else (None, None)
        cells = [
            _fmt(rec.t), _fmt(st.x), _fmt(st.y), _fmt(st.theta), _fmt(st.v),
            _fmt(u[0]), _fmt(u[1]), _fmt(uf[0]), _fmt(uf[1]),
            _fmt(nu[0]), _fmt(nu[1]), _fmt(rec.delta),
            _fmt(rec.b), _fmt(rec.psi1), _fmt(rec.psi2),
            rec.qp_status if rec.qp_status is not None else "",
            "",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_csv(log: TrajectoryLog, path) -> None:
    Path(path).write_text(render_csv(log))


@dataclass
class LogFrame:
    """Parsed trajectory CSV: per-column lists, None for empty cells."""

    columns: dict = field(default_factory=dict)
    path: str = ""

    def __len__(self) -> int:
        return len(self.columns.get("t", []))

    def floats(self, name: str) -> list:
        return self.columns[name]

    def series(self, name: str) -> list:
        """Column with None rows dropped."""
        return [v for v in self.columns[name] if v is not None]

    def last_row(self) -> dict:
        return {name: col[-1] for name, col in self.columns.items()}


def parse_csv_text(text: str) -> LogFrame:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        got = lines[0] if lines else "<empty>"
        raise SchemaMismatch(f"expected header {CSV_HEADER!r}, got {got!r}")
    frame = LogFrame(columns={name: [] for name in CSV_COLUMNS})
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(CSV_COLUMNS):
            raise SchemaMismatch(f"line {lineno}: expected {len(CSV_COLUMNS)} cells")
        for name, cell in zip(CSV_COLUMNS, cells):
            if cell == "":
                frame.columns[name].append(None)
            elif name == "qp_status":
                frame.columns[name].append(cell)
            else:
                frame.columns[name].append(float(cell))
    return frame


def read_csv(path) -> LogFrame:
    frame = parse_csv_text(Path(path).read_text())
    frame.path = str(path)
    return frame


def render_frame(frame: LogFrame) -> str:
    """Re-emit a parsed frame; byte-identical to its source file."""
    lines = [CSV_HEADER]
    n = len(frame)
    for i in range(n):
        cells = []
        for name in CSV_COLUMNS:
            v = frame.columns[name][i]
            if v is None:
                cells.append("")
            elif name == "qp_status":
                cells.append(v)
            else:
                cells.append(format(v, ".17g"))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@dataclass
class RunManifest:
    """Provenance record tying output files to the config that produced them."""

    config_path: str
    controller: str
    outputs: list
    seed: int
    config_sha256: str
    created_unix: float
    status: str = ""
    n_steps: int = 0
    mean_solve_time_s: float = 0.0
    max_solve_time_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def build_manifest(config_path, controller: str, outputs, seed: int,
                   log: TrajectoryLog | None = None) -> RunManifest:
    text = Path(config_path).read_text() if Path(config_path).is_file() else ""
    solve_times = [r.solve_time for r in (log.records if log else []) if r.solve_time]
    return RunManifest(
        config_path=str(config_path),
        controller=controller,
        outputs=[str(o) for o in outputs],
        seed=seed,
        config_sha256=config_hash(text),
        created_unix=time.time(),
        status=log.summary.status if log else "",
        n_steps=log.summary.n_steps if log else 0,
        mean_solve_time_s=float(sum(solve_times) / len(solve_times)) if solve_times else 0.0,
        max_solve_time_s=float(max(solve_times)) if solve_times else 0.0,
    )


def write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(manifest.to_json())


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
