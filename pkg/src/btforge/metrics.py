"""Per-tree structural metrics and corpus-level aggregates."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from .model import BTNode

if TYPE_CHECKING:
    from .sim import ExecutionResult
    from .validate import ValidationReport


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class TreeMetrics:
    depth: int
    leaf_count: int
    composite_count: int

    @property
    def total_nodes(self) -> int:
        return self.leaf_count + self.composite_count

    @property
    def node_density(self) -> float:
        return self.composite_count / self.leaf_count if self.leaf_count else 0.0

    def to_json(self) -> dict:
        return {"td": self.depth, "lc": self.leaf_count, "composites": self.composite_count,
                "nd": self.node_density, "nodes": self.total_nodes}


def tree_metrics(bt: BTNode) -> TreeMetrics:
    """Depth counts the root as level 1."""

    def rec(node: BTNode) -> tuple[int, int, int]:
        if not node.is_composite:
            return 1, 1, 0
        depth, leaves, comps = 0, 0, 1
        for child in node.children:
            d, l, c = rec(child)
            depth = max(depth, d)
            leaves += l
            comps += c
        return depth + 1, leaves, comps

    d, l, c = rec(bt)
    return TreeMetrics(d, l, c)


@dataclass
class SampleOutcome:
    sample_id: Any
    parse_ok: bool
    key_errors: int = 0
    validation: ValidationReport | None = None
    metrics: TreeMetrics | None = None
    execution: ExecutionResult | None = None
    task_success: bool = False
    error: str | None = None

    @property
    def lowered(self) -> bool:
        return self.parse_ok and self.key_errors == 0

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "id": self.sample_id,
            "parse_ok": self.parse_ok,
            "key_errors": self.key_errors,
            "compliant": None if self.validation is None else self.validation.schema_compliant(),
            "violations": [] if self.validation is None
            else [v.to_json() for v in self.validation.violations],
            "metrics": None if self.metrics is None else self.metrics.to_json(),
            "executed": self.execution is not None,
            "status": None if self.execution is None else self.execution.final_status.value,
            "ticks": None if self.execution is None else self.execution.ticks_used,
            "task_success": self.task_success,
        }
        if self.error:
            out["error"] = self.error
        return out


@dataclass
class MetricsReport:
    n_samples: int
    jvr: float
    ker: float
    tsr: float
    sc: float
    mean_td: float
    mean_lc: float
    mean_nd: float
    men: float
    label: str = "corpus"
    counts: dict = field(default_factory=dict)

    COLUMNS = ("id", "tsr", "jvr", "ker", "td", "lc", "nd", "men", "sc")

    def row(self) -> dict:
        return {"id": self.label, "tsr": self.tsr, "jvr": self.jvr, "ker": self.ker,
                "td": self.mean_td, "lc": self.mean_lc, "nd": self.mean_nd,
                "men": self.men, "sc": self.sc}

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, **self.row(), "counts": dict(self.counts)}


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def aggregate(corpus: Iterable[SampleOutcome], label: str = "corpus") -> MetricsReport:
    """Corpus aggregates; empty denominators yield 0.

    KER is taken over the JSON-valid subset, SC over the lowered subset, TSR
    over every sample, and MEN over task-successful samples only.
    """
    outcomes = sorted(corpus, key=lambda o: str(o.sample_id))
    n = len(outcomes)
    if n == 0:
        raise EmptyCorpus("cannot aggregate an empty corpus")
    parsed = [o for o in outcomes if o.parse_ok]
    keyerr = [o for o in parsed if o.key_errors > 0]
    lowered = [o for o in parsed if o.key_errors == 0]
    compliant = [o for o in lowered if o.validation is not None and o.validation.schema_compliant()]
    success = [o for o in outcomes if o.task_success]
    measured = [o.metrics for o in lowered if o.metrics is not None]
    return MetricsReport(
        n_samples=n,
        jvr=_pct(len(parsed), n),
        ker=_pct(len(keyerr), len(parsed)),
        tsr=_pct(len(success), n),
        sc=_pct(len(compliant), len(lowered)),
        mean_td=_mean([m.depth for m in measured]),
        mean_lc=_mean([m.leaf_count for m in measured]),
        mean_nd=_mean([m.node_density for m in measured]),
        men=_mean([o.metrics.total_nodes for o in success if o.metrics is not None]),
        label=label,
        counts={"parsed": len(parsed), "key_errors": len(keyerr), "lowered": len(lowered),
                "compliant": len(compliant), "success": len(success)},
    )


def _fmt(v: Any) -> str:
    return f"{v:.2f}" if isinstance(v, float) else str(v)


def report_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MetricsReport.COLUMNS)
    for r in reports:
        row = r.row()
        w.writerow([_fmt(row[c]) for c in MetricsReport.COLUMNS])
    return buf.getvalue()


def report_table(reports: Sequence[MetricsReport]) -> str:
    header = [c.upper() for c in MetricsReport.COLUMNS]
    rows = [[_fmt(r.row()[c]) for c in MetricsReport.COLUMNS] for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"
