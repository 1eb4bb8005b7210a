"""Balanced-panel ingestion and model transforms.

Long-format panels are validated into :class:`PanelDataset`, then first
differenced into stacked form and reflection padded to a dyadic length for
the wavelet stage.  Differenced time is stored 0-based: stored slot ``s``
corresponds to the transition from period ``s + 1`` to period ``s + 2`` of
the original panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DuplicateCell,
    NonNumericValue,
    RankDeficientFirstStage,
    ShapeMismatch,
    UnbalancedPanel,
)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PanelDataset:
    """Balanced long-format panel in array form.

    Attributes
    ----------
    y : ndarray, shape (n, T)
        Outcome per unit and period.
    x : ndarray, shape (n, T, P)
        Regressors.
    z : ndarray, shape (n, T, Q)
        Instruments; defaults to ``x`` when none are supplied (exogenous case).
    unit_labels, time_labels : ndarray
        Opaque identifiers, sorted; time labels are strictly increasing and
        common to all units.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray | None = None
    unit_labels: np.ndarray = field(default=None)
    time_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        y = _freeze(np.atleast_2d(self.y))
        x = _freeze(self.x)
        if x.ndim != 3:
            raise ShapeMismatch(f"x must have shape (n, T, P), got {x.shape}")
        if y.shape != x.shape[:2]:
            raise ShapeMismatch(f"y shape {y.shape} does not match x shape {x.shape}")
        n, t, p = x.shape
        if p < 1 or n < 1:
            raise ShapeMismatch("need at least one unit and one regressor")
        if t < 3:
            raise ShapeMismatch(f"need at least 3 periods, got {t}")
        z = self.z
        z = x if z is None else _freeze(z)
        if z.ndim != 3 or z.shape[:2] != (n, t):
            raise ShapeMismatch(f"z shape {z.shape} does not match panel ({n}, {t}, .)")
        units = self.unit_labels if self.unit_labels is not None else np.arange(1, n + 1)
        times = self.time_labels if self.time_labels is not None else np.arange(1, t + 1)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "unit_labels", np.asarray(units))
        object.__setattr__(self, "time_labels", np.asarray(times))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    @property
    def n_instruments(self) -> int:
        return self.z.shape[2]


@dataclass(frozen=True)
class DifferencedPanel:
    """First-differenced panel in stacked form.

    ``xu[:, s]`` holds ``(x[t+1], -x[t], 1)`` for the stored slot ``s = t - 1``
    (0-based), so the stacked width is ``2 P + 1`` while the unit regressor
    column carries the differenced common time effect.  After
    :func:`reflect_pad` the time dimension is ``2**(depth - 1)``.
    """

    dy: np.ndarray
    xu: np.ndarray
    zu: np.ndarray
    t_orig: int
    t_orig_diff: int
    n_regressors: int
    has_unit_col: bool = True
    depth: int | None = None
    unit_labels: np.ndarray | None = None
    time_labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "dy", _freeze(self.dy))
        object.__setattr__(self, "xu", _freeze(self.xu))
        object.__setattr__(self, "zu", _freeze(self.zu))
        if self.xu.shape != self.zu.shape or self.dy.shape != self.xu.shape[:2]:
            raise ShapeMismatch("dy, xu and zu shapes are inconsistent")
        if self.depth is not None and self.t_diff != 2 ** (self.depth - 1):
            raise ShapeMismatch("padded length must equal 2**(depth - 1)")

    @property
    def n(self) -> int:
        return self.dy.shape[0]

    @property
    def t_diff(self) -> int:
        return self.dy.shape[1]

    @property
    def width(self) -> int:
        return self.xu.shape[2]

    @property
    def padded(self) -> bool:
        return self.depth is not None


@dataclass(frozen=True)
class ModelComponents:
    """Recovered intercept, unit effects and time effects.

    Normalized so that the unit effects and the time effects each sum to
    zero, which identifies all three components given a slope path.
    """

    mu: float
    alpha: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class ColumnSchema:
    """Column-role map for long-format input tables."""

    unit: str = "unit"
    time: str = "time"
    y: str = "y"
    x: tuple[str, ...] | None = None
    z: tuple[str, ...] | None = None

    @staticmethod
    def from_dict(raw: dict) -> "ColumnSchema":
        x = raw.get("x")
        z = raw.get("z")
        return ColumnSchema(
            unit=raw.get("unit", "unit"),
            time=raw.get("time", "time"),
            y=raw.get("y", "y"),
            x=tuple(x) if x else None,
            z=tuple(z) if z else None,
        )


def _detect_numbered(columns, prefix: str) -> tuple[str, ...]:
    found = []
    for name in columns:
        if name.startswith(prefix) and name[len(prefix) :].isdigit():
            found.append((int(name[len(prefix) :]), name))
    return tuple(name for _, name in sorted(found))


def load_panel(source, schema: ColumnSchema | dict | None = None) -> PanelDataset:
    """Read a long-format table into a balanced :class:`PanelDataset`.

    Parameters
    ----------
    source : path-like or pandas.DataFrame
        CSV file with a header row, or an already-loaded frame.
    schema : ColumnSchema or dict, optional
        Column-role map.  Without one, columns named ``unit``, ``time``,
        ``y``, ``x1..xP`` and optionally ``z1..zQ`` are used.

    Raises
    ------
    UnbalancedPanel, DuplicateCell, NonNumericValue
        Each naming the offending (unit, time) cell.
    """
    if isinstance(source, pd.DataFrame):
        frame = source.copy()
    else:
        frame = pd.read_csv(Path(source))
    if schema is None:
        schema = ColumnSchema()
    elif isinstance(schema, dict):
        schema = ColumnSchema.from_dict(schema)
    x_cols = schema.x or _detect_numbered(frame.columns, "x")
    z_cols = schema.z or _detect_numbered(frame.columns, "z") or None
    if not x_cols:
        raise ShapeMismatch("no regressor columns found (expected x1..xP or an explicit schema)")
    needed = [schema.unit, schema.time, schema.y, *x_cols, *(z_cols or ())]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise ShapeMismatch(f"missing columns: {missing}")

    dup = frame.duplicated(subset=[schema.unit, schema.time])
    if dup.any():
        row = frame.loc[dup.idxmax()]
        raise DuplicateCell(f"duplicate cell (unit={row[schema.unit]}, time={row[schema.time]})")

    units = np.sort(frame[schema.unit].unique())
    times = np.sort(frame[schema.time].unique())
    if len(frame) != len(units) * len(times):
        have = set(zip(frame[schema.unit], frame[schema.time]))
        for u in units:
            for t in times:
                if (u, t) not in have:
                    raise UnbalancedPanel(f"missing cell (unit={u}, time={t})")

    value_cols = [schema.y, *x_cols, *(z_cols or ())]
    for col in value_cols:
        coerced = pd.to_numeric(frame[col], errors="coerce")
        bad = coerced.isna() & frame[col].notna()
        if bad.any():
            row = frame.loc[bad.idxmax()]
            raise NonNumericValue(
                f"non-numeric value in column {col!r} at (unit={row[schema.unit]}, "
                f"time={row[schema.time]})"
            )
        if coerced.isna().any():
            row = frame.loc[coerced.isna().idxmax()]
            raise UnbalancedPanel(
                f"missing value in column {col!r} at (unit={row[schema.unit]}, "
                f"time={row[schema.time]})"
            )
        frame[col] = coerced

    frame = frame.sort_values([schema.unit, schema.time])
    n, t = len(units), len(times)
    y = frame[schema.y].to_numpy().reshape(n, t)
    x = np.stack([frame[c].to_numpy().reshape(n, t) for c in x_cols], axis=2)
    z = None
    if z_cols:
        z = np.stack([frame[c].to_numpy().reshape(n, t) for c in z_cols], axis=2)
    return PanelDataset(y=y, x=x, z=z, unit_labels=units, time_labels=times)


def first_difference(panel: PanelDataset) -> DifferencedPanel:
    """First difference the panel and stack regressors as ``(x_t, -x_{t-1}, 1)``.

    The result is unpadded (length ``T - 1``); instruments are stacked the
    same way, which requires the prepared instrument array to have one column
    per regressor (see :func:`prepare_instruments`).
    """
    n, t, p = panel.x.shape
    if panel.z.shape[2] != p:
        raise ShapeMismatch(
            "instrument width must equal the regressor count; run prepare_instruments first"
        )
    dy = panel.y[:, 1:] - panel.y[:, :-1]
    ones = np.ones((n, t - 1, 1))
    xu = np.concatenate([panel.x[:, 1:, :], -panel.x[:, :-1, :], ones], axis=2)
    zu = np.concatenate([panel.z[:, 1:, :], -panel.z[:, :-1, :], ones], axis=2)
    return DifferencedPanel(
        dy=dy,
        xu=xu,
        zu=zu,
        t_orig=t,
        t_orig_diff=t - 1,
        n_regressors=p,
        has_unit_col=True,
        depth=None,
        unit_labels=panel.unit_labels,
        time_labels=panel.time_labels,
    )


def reflect_pad(dp: DifferencedPanel) -> DifferencedPanel:
    """Extend a differenced panel to dyadic length by boundary reflection.

    If the length is already a power of two this is a no-op (only the depth
    is recorded).  Otherwise the sample is prolonged by ``m = 2**g - (T-1)``
    slots, where ``g`` is the smallest integer with ``2**g > T - 1``, and the
    appended slot ``T - 1 + j`` copies slot ``T - 1 - (j - 1)`` (1-based),
    i.e. the last observations in reversed order.
    """
    t0 = dp.t_diff
    if t0 < 2:
        raise ShapeMismatch("reflect_pad needs at least 2 differenced periods")
    if t0 & (t0 - 1) == 0:
        return replace(dp, depth=t0.bit_length())
    g = t0.bit_length()
    target = 2**g
    m = target - t0
    src = np.arange(t0 - 1, t0 - 1 - m, -1)
    idx = np.concatenate([np.arange(t0), src])
    return DifferencedPanel(
        dy=dp.dy[:, idx],
        xu=dp.xu[:, idx, :],
        zu=dp.zu[:, idx, :],
        t_orig=dp.t_orig,
        t_orig_diff=dp.t_orig_diff,
        n_regressors=dp.n_regressors,
        has_unit_col=dp.has_unit_col,
        depth=g + 1,
        unit_labels=dp.unit_labels,
        time_labels=dp.time_labels,
    )


def dot_transform(series: np.ndarray) -> np.ndarray:
    """Cross-sectional demeaning (the between or "dot" transform).

    Removes the unit average from every period column, so common time effects
    drop out.  Idempotent; every column of the result has mean zero.
    """
    series = np.asarray(series, dtype=float)
    return series - series.mean(axis=0, keepdims=True)


def between_transform(dp: DifferencedPanel) -> DifferencedPanel:
    """Demean a differenced panel across units and drop the unit column.

    This removes the differenced time effect from the estimation problem
    instead of carrying it as an extra jumping parameter.
    """
    if not dp.has_unit_col:
        return dp
    w = dp.width - 1
    return DifferencedPanel(
        dy=dot_transform(dp.dy),
        xu=dot_transform(dp.xu)[:, :, :w],
        zu=dot_transform(dp.zu)[:, :, :w],
        t_orig=dp.t_orig,
        t_orig_diff=dp.t_orig_diff,
        n_regressors=dp.n_regressors,
        has_unit_col=False,
        depth=dp.depth,
        unit_labels=dp.unit_labels,
        time_labels=dp.time_labels,
    )


def _within_two_way(arr: np.ndarray) -> np.ndarray:
    """Two-way within transform: remove unit means, time means, add back grand mean."""
    return arr - arr.mean(axis=1, keepdims=True) - arr.mean(axis=0, keepdims=True) + arr.mean()


def prepare_instruments(panel: PanelDataset, mode: str = "self") -> PanelDataset:
    """Return a panel whose ``z`` is ready for the stacked-instrument build.

    ``mode="self"`` sets ``z := x`` (exogenous case).  ``mode="two_stage"``
    replaces each regressor column with the fitted values of a two-way
    fixed-effects regression of that column on all supplied instrument
    columns, the classic first stage for over-identified designs.

    Raises
    ------
    RankDeficientFirstStage
        If the first-stage cross-product is singular.
    """
    if mode == "self":
        return PanelDataset(
            y=panel.y,
            x=panel.x,
            z=panel.x,
            unit_labels=panel.unit_labels,
            time_labels=panel.time_labels,
        )
    if mode != "two_stage":
        raise ValueError(f"unknown instrument mode {mode!r}")
    p, q = panel.n_regressors, panel.n_instruments
    if q < p:
        raise RankDeficientFirstStage(f"two_stage needs at least P={p} instruments, got Q={q}")
    zw = np.stack([_within_two_way(panel.z[:, :, j]) for j in range(q)], axis=2)
    zmat = zw.reshape(-1, q)
    gram = zmat.T @ zmat
    if np.linalg.cond(gram) > 1e12:
        raise RankDeficientFirstStage("first-stage cross-product is singular")
    fitted = np.empty_like(panel.x)
    for j in range(p):
        xw = _within_two_way(panel.x[:, :, j]).reshape(-1)
        coef = np.linalg.solve(gram, zmat.T @ xw)
        resid = xw - zmat @ coef
        fitted[:, :, j] = panel.x[:, :, j] - resid.reshape(panel.n, panel.t)
    return PanelDataset(
        y=panel.y,
        x=panel.x,
        z=fitted,
        unit_labels=panel.unit_labels,
        time_labels=panel.time_labels,
    )


def recover_effects(panel: PanelDataset, beta_path: np.ndarray) -> ModelComponents:
    """Back out intercept, unit effects and time effects given a slope path.

    With ``r = y - sum_p x_p * beta[t, p]`` the overall mean identifies the
    intercept, row means the unit effects and column means the time effects;
    the zero-sum normalizations hold by construction.
    """
    beta_path = np.asarray(beta_path, dtype=float)
    if beta_path.shape != (panel.t, panel.n_regressors):
        raise ShapeMismatch(
            f"beta_path must have shape ({panel.t}, {panel.n_regressors}), got {beta_path.shape}"
        )
    r = panel.y - np.einsum("itp,tp->it", panel.x, beta_path)
    mu = float(r.mean())
    alpha = r.mean(axis=1) - mu
    theta = r.mean(axis=0) - mu
    return ModelComponents(mu=mu, alpha=alpha, theta=theta)
