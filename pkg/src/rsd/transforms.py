"""Strictly increasing score transforms applied to absolute residuals.

A :class:`ScoreTransformSpec` picks a :class:`TransformInstance` for every
(stage, coordinate, history) triple. Stages are 1-based, coordinates and
history entries 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import BadParameter, NotIncreasing

KINDS = ("identity", "power", "affine", "logshift", "bayes_factor", "table")

_CHECK_GRID = np.linspace(0.0, 50.0, 1001)


@dataclass(frozen=True)
class TransformInstance:
    kind: str
    params: tuple[tuple[str, Any], ...] = ()

    @property
    def p(self) -> dict[str, Any]:
        return dict(self.params)

    def __call__(self, u: ArrayLike) -> NDArray:
        u = np.asarray(u, dtype=float)
        p = self.p
        if self.kind == "identity":
            return u
        if self.kind == "power":
            return u ** p["p"]
        if self.kind == "affine":
            return p["a"] * u + p["b"]
        if self.kind == "logshift":
            return np.log1p(p["c"] * u)
        if self.kind == "bayes_factor":
            t2 = p["tau"] ** 2
            return (t2 / (2.0 * (1.0 + t2))) * u * u - 0.5 * np.log1p(t2)
        if self.kind == "table":
            xs = np.asarray(p["x"])
            ys = np.asarray(p["y"])
            out = np.interp(u, xs, ys)
            lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
            hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(u < xs[0], ys[0] + lo_slope * (u - xs[0]), out)
            return np.where(u > xs[-1], ys[-1] + hi_slope * (u - xs[-1]), out)
        raise BadParameter(f"unknown transform kind {self.kind!r}")

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params}}


def _positive(name: str, value: Any) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise BadParameter(f"{name} must be a number, got {value!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise BadParameter(f"{name} must be finite and > 0, got {value!r}")
    return v


def make_instance(kind: str, **params: Any) -> TransformInstance:
    """Build and validate one transform; raises BadParameter or NotIncreasing."""
    if kind == "identity":
        inst = TransformInstance("identity")
    elif kind == "power":
        inst = TransformInstance("power", (("p", _positive("p", params.get("p"))),))
    elif kind == "affine":
        b = float(params.get("b", 0.0))
        if not np.isfinite(b):
            raise BadParameter("b must be finite")
        inst = TransformInstance("affine", (("a", _positive("a", params.get("a"))), ("b", b)))
    elif kind == "logshift":
        inst = TransformInstance("logshift", (("c", _positive("c", params.get("c"))),))
    elif kind == "bayes_factor":
        inst = TransformInstance("bayes_factor", (("tau", _positive("tau", params.get("tau"))),))
    elif kind == "table":
        xs = np.asarray(params.get("x", ()), dtype=float)
        ys = np.asarray(params.get("y", ()), dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise BadParameter("table needs matching x and y knot lists with at least 2 entries")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise BadParameter("table knots must be finite")
        if np.any(np.diff(xs) <= 0):
            raise BadParameter("table x knots must be strictly increasing")
        if np.any(np.diff(ys) <= 0):
            raise NotIncreasing("table y values must be strictly increasing at the knots")
        inst = TransformInstance("table", (("x", tuple(xs.tolist())), ("y", tuple(ys.tolist()))))
    else:
        raise BadParameter(f"unknown transform kind {kind!r}; expected one of {KINDS}")
    check_increasing(inst)
    return inst


def check_increasing(inst: Callable[[NDArray], NDArray]) -> None:
    vals = np.asarray(inst(_CHECK_GRID), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(np.diff(vals) <= 0):
        raise NotIncreasing(f"transform {inst!r} is not strictly increasing on [0, 50]")


IDENTITY = TransformInstance("identity")


@dataclass(frozen=True)
class Override:
    """Transform used when every non-None selector field matches."""

    instance: TransformInstance
    stage: int | None = None
    coordinate: int | None = None
    history: tuple[int, ...] | None = None

    @property
    def specificity(self) -> int:
        return sum(f is not None for f in (self.stage, self.coordinate, self.history))

    def matches(self, t: int, j: int, history: tuple[int, ...]) -> bool:
        return (
            (self.stage is None or self.stage == t)
            and (self.coordinate is None or self.coordinate == j)
            and (self.history is None or self.history == history)
        )


@dataclass(frozen=True, eq=False)
class ScoreTransformSpec:
    """Selector from (stage, coordinate, history) to a transform.

    Resolution: ``rule`` if given and it returns an instance, else the most
    specific matching override (earliest listed wins among equals), else
    ``default``.
    """

    default: TransformInstance = IDENTITY
    overrides: tuple[Override, ...] = ()
    rule: Callable[[int, int, tuple[int, ...]], TransformInstance | None] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = sorted(self.overrides, key=lambda o: -o.specificity)
        object.__setattr__(self, "overrides", tuple(ordered))

    @property
    def is_identity(self) -> bool:
        return self.default == IDENTITY and not self.overrides and self.rule is None

    def instance(self, t: int, j: int, history: tuple[int, ...] = ()) -> TransformInstance:
        key = (t, j, history)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        inst = None
        if self.rule is not None:
            inst = self.rule(t, j, history)
        if inst is None:
            for o in self.overrides:
                if o.matches(t, j, history):
                    inst = o.instance
                    break
            else:
                inst = self.default
        self._cache[key] = inst
        return inst

    def describe(self, one_based: bool = True) -> dict[str, Any]:
        off = 1 if one_based else 0
        out: dict[str, Any] = self.default.describe()
        if self.overrides:
            out["overrides"] = [
                {
                    **o.instance.describe(),
                    **({"stage": o.stage} if o.stage is not None else {}),
                    **({"coordinate": o.coordinate + off} if o.coordinate is not None else {}),
                    **({"history": [h + off for h in o.history]} if o.history is not None else {}),
                }
                for o in self.overrides
            ]
        return out


def score(spec: ScoreTransformSpec, t: int, j: int, history: Sequence[int], u_abs: ArrayLike) -> NDArray | float:
    u = np.asarray(u_abs, dtype=float)
    if np.any(u < 0):
        raise BadParameter("score takes absolute residuals (u >= 0)")
    out = spec.instance(t, j, tuple(history))(u)
    return float(out) if np.ndim(out) == 0 else out


def _instance_from(desc: Mapping[str, Any]) -> TransformInstance:
    if "kind" not in desc:
        raise BadParameter(f"transform description {dict(desc)!r} lacks 'kind'")
    return make_instance(desc["kind"], **dict(desc.get("params") or {}))


def make_transform(description: str | Mapping[str, Any] | None = None, one_based: bool = False) -> ScoreTransformSpec:
    """Build a spec from ``"identity"`` or ``{"kind", "params", "overrides"}``.

    Each override is ``{"kind", "params", "stage"?, "coordinate"?, "history"?}``.
    With ``one_based`` the coordinate and history labels are shifted down by one.
    """
    if description is None:
        return ScoreTransformSpec()
    if isinstance(description, str):
        return ScoreTransformSpec(default=make_instance(description))
    off = 1 if one_based else 0
    default = _instance_from(description)
    overrides = []
    for od in description.get("overrides") or ():
        hist = od.get("history")
        coord = od.get("coordinate")
        stage = od.get("stage")
        if stage is not None and int(stage) < 1:
            raise BadParameter(f"override stage must be >= 1, got {stage}")
        overrides.append(
            Override(
                instance=_instance_from(od),
                stage=None if stage is None else int(stage),
                coordinate=None if coord is None else int(coord) - off,
                history=None if hist is None else tuple(int(h) - off for h in hist),
            )
        )
    return ScoreTransformSpec(default=default, overrides=tuple(overrides))
