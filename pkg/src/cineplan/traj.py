"""Time allocation, corridor-verified minimum-snap position trajectories,
C2 yaw splines, and discretized control sampling.

The position trajectory is a piecewise degree-7 polynomial minimizing
integrated squared snap, with rest-to-rest boundary conditions, interpolation
at every knot, and continuity through jerk. After fitting, the curve is
sampled densely and verified against the safety corridor and dynamic limits;
bounded refit rounds (extra interpolation points, uniform time scaling)
repair violations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidArgumentError, TrajectoryInfeasibleError
from .geom import wrap_angle
from .mapplan import CorridorBox, Polyline, corridor_contains

log = logging.getLogger(__name__)

MIN_LEG_DURATION = 0.1


@dataclass(frozen=True)
class DynLimits:
    v_max: float
    a_max: float

    def __post_init__(self):
        if self.v_max <= 0 or self.a_max <= 0:
            raise InvalidArgumentError("dynamic limits must be strictly positive")


def allocate_times(polyline: Polyline, limits: DynLimits) -> np.ndarray:
    """Per-leg durations from a trapezoidal speed profile over arc length.

    A leg is the polyline stretch between consecutive waypoint marks; legs too
    short to reach v_max get the triangular profile. Zero-length legs collapse
    to a fixed small duration.
    """
    marks = polyline.waypoint_marks
    seg_len = polyline.segment_lengths()
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    taus = [0.0]
    for a, b in zip(marks, marks[1:]):
        length = float(cum[b] - cum[a])
        taus.append(taus[-1] + _trapezoid_duration(length, limits))
    return np.array(taus)


def _trapezoid_duration(length: float, limits: DynLimits) -> float:
    if length <= 0.0:
        log.warning("zero-length leg collapsed to %.2f s", MIN_LEG_DURATION)
        return MIN_LEG_DURATION
    cruise_dist = limits.v_max**2 / limits.a_max
    if length >= cruise_dist:
        return length / limits.v_max + limits.v_max / limits.a_max
    return 2.0 * math.sqrt(length / limits.a_max)


def unwrap_yaw(thetas: list[float]) -> list[float]:
    """Lift wrapped yaws so successive differences lie in (-pi, pi]."""
    if not thetas:
        raise InvalidArgumentError("need at least one yaw")
    out = [float(thetas[0])]
    for th in thetas[1:]:
        delta = wrap_angle(th - out[-1])
        out.append(out[-1] + delta)
    return out


# ---------------------------------------------------------------------------
# Minimum-snap piecewise polynomial

_DEG = 7
_NC = _DEG + 1


def _deriv_row(u: float, order: int) -> np.ndarray:
    """Row vector evaluating the order-th derivative at normalized time u."""
    row = np.zeros(_NC)
    for k in range(order, _NC):
        row[k] = math.perm(k, order) * u ** (k - order)
    return row


def _snap_cost(T: float) -> np.ndarray:
    """Integrated squared snap of one segment in normalized coefficients."""
    Q = np.zeros((_NC, _NC))
    for k in range(4, _NC):
        for l in range(4, _NC):
            Q[k, l] = math.perm(k, 4) * math.perm(l, 4) / (k + l - 7)
    return Q / T**7


def _solve_min_snap_axis(values: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Coefficients (s, 8) for one axis through the given knot values."""
    s = len(durations)
    nvar = _NC * s
    rows = []
    rhs = []

    def add(row_seg, seg, val):
        row = np.zeros(nvar)
        row[seg * _NC : (seg + 1) * _NC] = row_seg
        rows.append(row)
        rhs.append(val)

    for i in range(s):
        add(_deriv_row(0.0, 0), i, values[i])
        add(_deriv_row(1.0, 0), i, values[i + 1])
    for i in range(s - 1):
        for d in (1, 2, 3):
            row = np.zeros(nvar)
            row[i * _NC : (i + 1) * _NC] = _deriv_row(1.0, d) / durations[i] ** d
            row[(i + 1) * _NC : (i + 2) * _NC] = -_deriv_row(0.0, d) / durations[i + 1] ** d
            rows.append(row)
            rhs.append(0.0)
    for d in (1, 2):
        add(_deriv_row(0.0, d) / durations[0] ** d, 0, 0.0)
        add(_deriv_row(1.0, d) / durations[-1] ** d, s - 1, 0.0)

    A = np.stack(rows)
    b = np.array(rhs)
    Q = np.zeros((nvar, nvar))
    for i in range(s):
        Q[i * _NC : (i + 1) * _NC, i * _NC : (i + 1) * _NC] = _snap_cost(durations[i])
    m = len(rows)
    kkt = np.zeros((nvar + m, nvar + m))
    kkt[:nvar, :nvar] = 2.0 * Q
    kkt[:nvar, nvar:] = A.T
    kkt[nvar:, :nvar] = A
    vec = np.concatenate([np.zeros(nvar), b])
    sol, *_ = np.linalg.lstsq(kkt, vec, rcond=None)
    return sol[:nvar].reshape(s, _NC)


@dataclass(frozen=True)
class PiecewisePolyTraj:
    knot_times: np.ndarray  # all interpolation knots, including inserted points
    coeffs: np.ndarray  # (segments, 3, 8) normalized-time coefficients
    waypoint_times: np.ndarray  # subset of knot_times at the refined waypoints

    @property
    def t_end(self) -> float:
        return float(self.knot_times[-1])

    def _locate(self, t: float) -> tuple[int, float, float]:
        ts = self.knot_times
        t = min(max(t, ts[0]), ts[-1])
        seg = int(np.searchsorted(ts, t, side="right") - 1)
        seg = min(seg, len(ts) - 2)
        T = float(ts[seg + 1] - ts[seg])
        u = (t - ts[seg]) / T
        return seg, u, T

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Position (order 0) or an analytic time derivative at time t."""
        seg, u, T = self._locate(t)
        row = _deriv_row(u, order) / T**order
        return self.coeffs[seg] @ row

    def eval_onesided(self, t: float, order: int, side: str) -> np.ndarray:
        """Derivative evaluated from within one adjoining segment, for
        continuity checks at knots."""
        ts = self.knot_times
        idx = int(np.argmin(np.abs(ts - t)))
        seg = idx - 1 if side == "left" else idx
        seg = min(max(seg, 0), len(ts) - 2)
        T = float(ts[seg + 1] - ts[seg])
        u = (t - ts[seg]) / T
        row = _deriv_row(u, order) / T**order
        return self.coeffs[seg] @ row


def _fit_min_snap(points: np.ndarray, times: np.ndarray) -> np.ndarray:
    durations = np.diff(times)
    if np.any(durations <= 0):
        raise InvalidArgumentError("knot times must be strictly increasing")
    coeffs = np.stack(
        [_solve_min_snap_axis(points[:, ax], durations) for ax in range(3)], axis=1
    )
    return coeffs


class _ArcMap:
    """Maps arc-length stations on the guiding polyline to points."""

    def __init__(self, polyline: Polyline):
        self.verts = np.stack(polyline.vertices)
        seg = np.diff(self.verts, axis=0)
        self.cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])

    def station_of_mark(self, mark: int) -> float:
        return float(self.cum[mark])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), float(self.cum[-1]))
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.cum) - 2)
        span = self.cum[i + 1] - self.cum[i]
        frac = 0.0 if span == 0 else (s - self.cum[i]) / span
        return self.verts[i] + frac * (self.verts[i + 1] - self.verts[i])


def fit_position_traj(
    polyline: Polyline,
    taus: np.ndarray,
    corridor: list[CorridorBox],
    limits: DynLimits,
    resolution: float,
    dt: float = 0.05,
    max_refits: int = 5,
) -> PiecewisePolyTraj:
    """Minimum-snap trajectory through the waypoint marks of the polyline.

    Verification samples at step min(dt, resolution / (2 v_max)); corridor
    violations insert the violating leg's polyline midpoint as an extra knot,
    limit violations scale all durations by 1.2, each up to max_refits times.
    """
    marks = polyline.waypoint_marks
    if len(marks) < 2:
        raise InvalidArgumentError("need at least two waypoints")
    arc = _ArcMap(polyline)
    stations = [arc.station_of_mark(m) for m in marks]
    points = [np.asarray(polyline.vertices[m]) for m in marks]
    times = list(np.asarray(taus, dtype=float))
    if len(times) != len(points):
        raise InvalidArgumentError("one knot time per waypoint required")
    wp_index = list(range(len(points)))  # positions of the waypoints among knots

    step = min(dt, resolution / (2.0 * limits.v_max))
    corridor_rounds = 0
    scale_rounds = 0
    while True:
        traj = PiecewisePolyTraj(
            knot_times=np.array(times),
            coeffs=_fit_min_snap(np.stack(points), np.array(times)),
            waypoint_times=np.array([times[i] for i in wp_index]),
        )
        violation = _verify(traj, corridor, limits, step)
        if violation is None:
            return traj
        kind, t_bad, sample = violation
        if kind == "corridor":
            if corridor_rounds >= max_refits:
                raise TrajectoryInfeasibleError(
                    f"corridor violation persists after {max_refits} refits at t={t_bad:.3f}",
                    sample=sample,
                )
            corridor_rounds += 1
            seg = int(np.searchsorted(times, t_bad, side="right") - 1)
            seg = min(max(seg, 0), len(times) - 2)
            s_mid = 0.5 * (stations[seg] + stations[seg + 1])
            t_mid = 0.5 * (times[seg] + times[seg + 1])
            points.insert(seg + 1, arc.point_at(s_mid))
            stations.insert(seg + 1, s_mid)
            times.insert(seg + 1, t_mid)
            wp_index = [i if i <= seg else i + 1 for i in wp_index]
        else:
            if scale_rounds >= max_refits:
                raise TrajectoryInfeasibleError(
                    f"dynamic-limit violation persists after {max_refits} rescalings at t={t_bad:.3f}",
                    sample=sample,
                )
            scale_rounds += 1
            times = [t * 1.2 for t in times]


def _verify(traj, corridor, limits, step):
    ts = np.arange(0.0, traj.t_end, step)
    ts = np.append(ts, traj.t_end)
    for t in ts:
        p = traj.eval(t, 0)
        if corridor and not corridor_contains(corridor, p, tol=1e-9):
            return ("corridor", float(t), p)
        v = float(np.linalg.norm(traj.eval(t, 1)))
        a = float(np.linalg.norm(traj.eval(t, 2)))
        if v > 1.05 * limits.v_max or a > 1.05 * limits.a_max:
            return ("limits", float(t), p)
    return None


# ---------------------------------------------------------------------------
# Yaw spline


@dataclass(frozen=True)
class YawSpline:
    knot_times: np.ndarray
    knot_yaws: np.ndarray  # unwrapped
    _spline: object

    def eval(self, t: float, order: int = 0) -> float:
        t = min(max(t, self.knot_times[0]), self.knot_times[-1])
        if self._spline is None:  # constant yaw
            return float(self.knot_yaws[0]) if order == 0 else 0.0
        return float(self._spline(t, order))


def fit_yaw_spline(taus: np.ndarray, thetas_unwrapped: list[float]) -> YawSpline:
    """Natural cubic spline through (time, unwrapped yaw) knots."""
    taus = np.asarray(taus, dtype=float)
    th = np.asarray(thetas_unwrapped, dtype=float)
    if len(taus) != len(th):
        raise InvalidArgumentError("knot count mismatch between times and yaws")
    if len(taus) == 0:
        raise InvalidArgumentError("degenerate spline: no knots")
    if len(taus) == 1:
        return YawSpline(knot_times=taus, knot_yaws=th, _spline=None)
    spline = CubicSpline(taus, th, bc_type="natural")
    return YawSpline(knot_times=taus, knot_yaws=th, _spline=spline)


# ---------------------------------------------------------------------------
# Control sampling


@dataclass(frozen=True)
class ControlSample:
    t: float
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    theta: float
    theta_dot: float

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "p": [float(x) for x in self.p],
            "v": [float(x) for x in self.v],
            "a": [float(x) for x in self.a],
            "theta": self.theta,
            "theta_dot": self.theta_dot,
        }


def sample_controls(pos: PiecewisePolyTraj, yaw: YawSpline, dt: float) -> list[ControlSample]:
    """Discretize the trajectory at fixed step dt, final sample exactly at the end."""
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt}")
    t_end = pos.t_end
    ts = list(np.arange(0.0, t_end, dt))
    if not ts or ts[-1] < t_end:
        ts.append(t_end)
    if len(ts) == 1:
        ts = [0.0, t_end]
    samples = []
    for t in ts:
        samples.append(
            ControlSample(
                t=float(t),
                p=pos.eval(t, 0),
                v=pos.eval(t, 1),
                a=pos.eval(t, 2),
                theta=wrap_angle(yaw.eval(t, 0)),
                theta_dot=yaw.eval(t, 1),
            )
        )
    return samples
