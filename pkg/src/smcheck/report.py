"""Analysis report model and CSV/JSON serialization.

A report is a pure function of (config, master seed, model identity):
serialization is deterministic (sorted keys, fixed column order, shortest
round-trip float repr) so re-runs can be compared byte for byte.
Wall-clock timing is intentionally not part of the serialized payload; the
CLI logs it to stderr instead.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict

TOOL_VERSION = "0.1.0"

CSV_COLUMNS = (
    "target_id",
    "parametric_value",
    "estimate",
    "ci_halfwidth",
    "n_replications",
    "converged",
    "warmup_steps",
    "method",
    "batch_count",
    "batch_size",
    "horizon",
    "steps_used",
)


@dataclass
class TargetRow:
    target_id: str
    estimate: float | None
    ci_halfwidth: float | None
    n_replications: int
    converged: bool
    parametric_value: float | None = None
    warmup_steps: int | None = None
    method: str | None = None  # IR | BM | RD | manualBM | manualRD | warmup
    batch_count: int | None = None
    batch_size: int | None = None
    horizon: int | None = None
    steps_used: int | None = None
    samples: list | None = None  # recorded per-replication samples, if requested


@dataclass
class AnalysisReport:
    config: dict
    seed_plan: dict
    rows: list = field(default_factory=list)
    total_replications: int = 0
    total_steps: int = 0
    valid: bool = True
    error: str | None = None
    version: str = TOOL_VERSION

    @property
    def all_converged(self) -> bool:
        return all(row.converged for row in self.rows)

    def to_json(self, include_samples: bool = False) -> str:
        rows = []
        for row in self.rows:
            d = asdict(row)
            if not include_samples or d.get("samples") is None:
                d.pop("samples", None)
            rows.append(d)
        payload = {
            "version": self.version,
            "config": self.config,
            "seed_plan": self.seed_plan,
            "valid": self.valid,
            "error": self.error,
            "total_replications": self.total_replications,
            "total_steps": self.total_steps,
            "rows": rows,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            d = asdict(row)
            writer.writerow([_cell(d[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ConfidenceSetReport:
    """Calibration output: Table-shaped confidence set plus per-seed losses."""

    config: dict
    seed_plan: dict
    param_names: list
    entries: list = field(default_factory=list)  # of calibration.ConfidenceSetEntry
    total_replications: int = 0
    valid: bool = True
    version: str = TOOL_VERSION

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "config": self.config,
            "seed_plan": self.seed_plan,
            "valid": self.valid,
            "total_replications": self.total_replications,
            "param_names": list(self.param_names),
            "entries": [
                {
                    "combo": dict(e.combo),
                    "estimated_loss": e.estimated_loss,
                    "ci_width": e.ci_width,
                    "estimated_variance": e.estimated_variance,
                    "runs": e.runs,
                    "p_value": e.p_value,
                }
                for e in self.entries
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.param_names) +
                        ["estimated_loss", "ci_width", "estimated_variance",
                         "runs", "p_value"])
        for e in self.entries:
            writer.writerow(
                [_cell(e.combo[name]) for name in self.param_names]
                + [_cell(e.estimated_loss), _cell(e.ci_width),
                   _cell(e.estimated_variance), _cell(e.runs), _cell(e.p_value)]
            )
        return buf.getvalue()


def losses_to_csv(param_names, per_combo_samples) -> str:
    """Persist per-seed loss samples so the confidence set can be recomputed
    offline at a different test level without re-simulation.

    ``per_combo_samples``: iterable of (combo dict, [(seed_index, seed, loss), ...]).
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(param_names) + ["seed_index", "seed", "loss"])
    for combo, samples in per_combo_samples:
        for seed_index, seed, loss in samples:
            writer.writerow([_cell(combo[name]) for name in param_names]
                            + [seed_index, seed, _cell(loss)])
    return buf.getvalue()
