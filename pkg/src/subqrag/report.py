"""Fixed-width text rendering of scenario tables, metric reports and win-rate matrices."""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Mapping

from .domain import SubqragError
from .metrics import SCENARIO_NAMES

ABSENT = "—"
TYPE_KEYS = ("core", "background", "follow_up")
TYPE_SHORT = {"core": "C", "background": "B", "follow_up": "F"}
SCENARIO_LABELS = {
    "not_answered_not_retrieved": "¬answered, ¬retrieved",
    "not_answered_retrieved": "¬answered, retrieved",
    "answered_not_retrieved": "answered, ¬retrieved",
    "answered_retrieved": "answered, retrieved",
}


class RenderError(SubqragError):
    pass


def percent(value: float | None, *, scale: float = 100.0) -> str:
    """Integer percent, rounding half away from zero; ``None`` renders as an em dash."""
    if value is None:
        return ABSENT
    d = Decimal(repr(float(value))) * Decimal(repr(scale))
    return f"{int(d.quantize(Decimal(1), rounding=ROUND_HALF_UP))}%"


def percent2(value: float | None) -> str:
    """Percentage points with two decimals, for win rates (already in percent)."""
    if value is None:
        return "-"
    d = Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{d:.2f}".rstrip("0").rstrip(".") + "%"


def _grid(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(line.rstrip() for line in lines)


def _systems(report: Mapping[str, Any]) -> Mapping[str, Any]:
    try:
        systems = report["systems"]
        for sid, body in systems.items():
            body["scenarios"], body["metrics"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise RenderError(f"report does not match the expected schema: {exc}") from exc
    return systems


def render_scenarios(report: Mapping[str, Any]) -> str:
    systems = _systems(report)
    header = ["Scenario"] + [f"{sid}:{TYPE_SHORT[t]}" for sid in systems for t in TYPE_KEYS]
    rows = []
    for name in SCENARIO_NAMES:
        row = [SCENARIO_LABELS[name]]
        for body in systems.values():
            for t in TYPE_KEYS:
                cell = body["scenarios"].get(t, {})
                row.append(percent(cell.get(name)) if cell.get("count") else ABSENT)
        rows.append(row)
    return _grid(header, rows)


METRIC_ROWS = (
    ("Metric #1 (core)", ("metric1", "core"), 100.0),
    ("Metric #1 (background)", ("metric1", "background"), 100.0),
    ("Metric #1 (follow-up)", ("metric1", "follow_up"), 100.0),
    ("Metric #2 (core)", ("metric2", "core"), 100.0),
    ("Metric #2 (background)", ("metric2", "background"), 100.0),
    ("Metric #2 (follow-up)", ("metric2", "follow_up"), 100.0),
    ("Metric #3", ("metric3",), 100.0),
    ("Metric #4", ("metric4",), 100.0),
    ("Metric #5", ("metric5",), 100.0),
    ("Metric #6", ("metric6",), 1.0),  # already in percentage points
)


def _lookup(metrics: Mapping[str, Any], path: tuple[str, ...]) -> float | None:
    value: Any = metrics
    for p in path:
        if not isinstance(value, Mapping):
            raise RenderError(f"metric path {'.'.join(path)} is malformed")
        value = value.get(p)
    return value


def render_metrics(report: Mapping[str, Any]) -> str:
    systems = _systems(report)
    header = ["Metric"] + list(systems)
    rows = [[label] + [percent(_lookup(b["metrics"], path), scale=scale) for b in systems.values()]
            for label, path, scale in METRIC_ROWS]
    return _grid(header, rows)


def render_report(report: Mapping[str, Any]) -> str:
    return ("Scenario occurrence by sub-question type\n\n" + render_scenarios(report)
            + "\n\nFine-grained metrics\n\n" + render_metrics(report) + "\n")


def render_winrates(matrix: Mapping[str, Any]) -> str:
    try:
        methods = list(matrix["methods"])
        rates = matrix["win_rates"]
        rows = [[m] + [percent2(rates[m][n]) for n in methods] for m in methods]
    except (KeyError, TypeError) as exc:
        raise RenderError(f"win-rate file does not match the expected schema: {exc}") from exc
    return _grid(["Method"] + methods, rows) + "\n"


def render_any(doc: Mapping[str, Any]) -> str:
    if "systems" in doc:
        return render_report(doc)
    if "win_rates" in doc:
        return render_winrates(doc)
    raise RenderError("unrecognised document: expected a metrics report or a win-rate matrix")
