"""Per-run quality metrics shared by the solvers and the benchmark harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass

__all__ = ["Metrics", "delta_alpha"]


@dataclass
class Metrics:
    p_feasible: float | None = None
    p_success: float | None = None
    delta_alpha: float | None = None
    best_cost: float | None = None
    best_assignment: tuple[int, ...] | None = None
    wall_time: float | None = None

    def __post_init__(self):
        for name in ("p_feasible", "p_success"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"{name}={val} outside [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["best_assignment"] is not None:
            d["best_assignment"] = list(d["best_assignment"])
        return d


def delta_alpha(cost_method: float, cost_reference: float) -> float:
    """Relative quality gap ``1 - C(method) / C(reference)``; negative when the method wins."""
    if cost_reference == 0:
        raise ZeroDivisionError("delta_alpha is undefined for a zero reference cost")
    return 1.0 - cost_method / cost_reference
