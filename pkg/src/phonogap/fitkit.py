"""Damped least-squares engine and the measurement curve models.

One Levenberg-Marquardt core drives every 1-D curve fit (exponential
recovery, Lorentzian line, saturation, Gaussian, tether waist); the conic
fits (ellipse, circle) get algebraic initializations followed by geometric
refinement on orthogonal distances.  Standard errors come from the inverse
weighted normal matrix and therefore assume the supplied sigmas are absolute
one-sigma uncertainties.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import FitError, InvalidParameterError, NonConvergenceError

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
GRAD_TOL = 1e-12


@dataclass(frozen=True)
class CurveModel:
    """A parametric 1-D model with analytic derivatives."""

    tag: str
    param_names: tuple[str, ...]
    predict: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @property
    def n_params(self) -> int:
        return len(self.param_names)


@dataclass
class FitResult:
    """Converged parameters with covariance-based standard errors."""

    tag: str
    param_names: tuple[str, ...]
    params: np.ndarray
    stderr: np.ndarray
    wrss: float
    dof: int
    n_iterations: int
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.param_names.index(name)])

    def error_of(self, name: str) -> float:
        return float(self.stderr[self.param_names.index(name)])


# --------------------------------------------------------------------------
# Built-in models


def _recovery_predict(x, p):
    return 1.0 - np.exp(-x / p[0])


def _recovery_jacobian(x, p):
    return (-np.exp(-x / p[0]) * x / p[0] ** 2)[:, None]


def _lorentzian_predict(x, p):
    center, fwhm, amplitude, offset = p
    d = 2.0 * (x - center) / fwhm
    return offset + amplitude / (1.0 + d * d)


def _lorentzian_jacobian(x, p):
    center, fwhm, amplitude, offset = p
    d = 2.0 * (x - center) / fwhm
    lor = 1.0 / (1.0 + d * d)
    jac = np.empty((x.size, 4))
    jac[:, 0] = amplitude * lor**2 * 4.0 * d / fwhm
    jac[:, 1] = amplitude * lor**2 * 2.0 * d * d / fwhm
    jac[:, 2] = lor
    jac[:, 3] = 1.0
    return jac


def _saturation_predict(x, p):
    i_max, p_sat = p
    return i_max * (1.0 - np.exp(-x / p_sat))


def _saturation_jacobian(x, p):
    i_max, p_sat = p
    decay = np.exp(-x / p_sat)
    jac = np.empty((x.size, 2))
    jac[:, 0] = 1.0 - decay
    jac[:, 1] = -i_max * decay * x / p_sat**2
    return jac


def _gaussian_predict(x, p):
    amplitude, center, width = p
    return amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)


def _gaussian_jacobian(x, p):
    amplitude, center, width = p
    z = (x - center) / width
    core = np.exp(-0.5 * z * z)
    jac = np.empty((x.size, 3))
    jac[:, 0] = core
    jac[:, 1] = amplitude * core * z / width
    jac[:, 2] = amplitude * core * z * z / width
    return jac


def _waist_predict(x, p):
    y0, x0, curv, span = p
    q = x - x0
    soft = 1.0 + np.abs(q) / span
    return y0 + curv * q * q / soft


def _waist_jacobian(x, p):
    y0, x0, curv, span = p
    q = x - x0
    soft = 1.0 + np.abs(q) / span
    jac = np.empty((x.size, 4))
    jac[:, 0] = 1.0
    jac[:, 1] = -curv * (2.0 * q * soft - q * q * np.sign(q) / span) / soft**2
    jac[:, 2] = q * q / soft
    jac[:, 3] = curv * q * q * np.abs(q) / (span * soft) ** 2
    return jac


MODELS: dict[str, CurveModel] = {
    m.tag: m
    for m in (
        CurveModel("recovery", ("t1",), _recovery_predict, _recovery_jacobian),
        CurveModel(
            "lorentzian",
            ("center", "fwhm", "amplitude", "offset"),
            _lorentzian_predict,
            _lorentzian_jacobian,
        ),
        CurveModel(
            "saturation", ("i_max", "p_sat"), _saturation_predict,
            _saturation_jacobian,
        ),
        CurveModel(
            "gaussian", ("amplitude", "center", "width"), _gaussian_predict,
            _gaussian_jacobian,
        ),
        CurveModel(
            "waist", ("y0", "x0", "curvature", "softening"), _waist_predict,
            _waist_jacobian,
        ),
    )
}


# --------------------------------------------------------------------------
# Engine


def _as_arrays(x, y, sigma, n_params):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidParameterError("x and y must be 1-D arrays of equal length")
    if sigma is None:
        sigma = np.ones_like(y)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != y.shape:
            raise InvalidParameterError("sigma must match the data length")
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise InvalidParameterError("sigma values must be positive")
    if x.size < n_params:
        raise FitError(
            f"need at least {n_params} points to fit, got {x.size}"
        )
    return x, y, sigma


def fit_nonlinear(
    model: CurveModel,
    x: Sequence[float],
    y: Sequence[float],
    sigma: Sequence[float] | None,
    init: Sequence[float],
    max_iterations: int = MAX_ITERATIONS,
) -> FitResult:
    """Levenberg-Marquardt weighted least squares.

    Damping starts at 1e-3 on the normal-matrix diagonal and adapts by
    factors of ten.  Convergence requires a relative parameter step below
    1e-10 or a gradient norm below 1e-12; running out of iterations raises
    :class:`NonConvergenceError` carrying the best parameters so far.

    When ``sigma`` is given, the standard errors treat it as absolute
    one-sigma uncertainties; otherwise the covariance is rescaled by the
    reduced chi-square, as usual for unweighted fits.
    """
    absolute_sigma = sigma is not None
    x, y, sigma = _as_arrays(x, y, sigma, model.n_params)
    params = np.asarray(init, dtype=float).copy()
    if params.shape != (model.n_params,):
        raise InvalidParameterError(
            f"{model.tag} expects {model.n_params} initial parameters"
        )

    def weighted(p):
        resid = (model.predict(x, p) - y) / sigma
        return resid, float(resid @ resid)

    resid, wrss = weighted(params)
    lam = 1e-3
    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        jac = model.jacobian(x, params) / sigma[:, None]
        grad = jac.T @ resid
        if np.linalg.norm(grad) < GRAD_TOL:
            n_iter -= 1
            break
        normal = jac.T @ jac
        diag = np.diag(normal).copy()
        diag[diag == 0] = 1.0
        stepped = False
        while lam < 1e12:
            try:
                step = np.linalg.solve(
                    normal + lam * np.diag(diag), -grad
                )
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            trial_resid, trial_wrss = weighted(trial)
            if np.isfinite(trial_wrss) and trial_wrss <= wrss:
                rel_step = np.max(
                    np.abs(step) / (np.abs(params) + 1e-30)
                )
                params, resid, wrss = trial, trial_resid, trial_wrss
                lam = max(lam / 10.0, 1e-15)
                stepped = True
                break
            lam *= 10.0
        if not stepped or rel_step < STEP_TOL:
            if stepped:
                break
            raise NonConvergenceError(
                f"{model.tag} fit stalled (damping exhausted)",
                best=_finalize(model, x, sigma, params, wrss, n_iter,
                               absolute_sigma),
            )
    else:
        raise NonConvergenceError(
            f"{model.tag} fit exceeded {max_iterations} iterations",
            best=_finalize(model, x, sigma, params, wrss, max_iterations,
                           absolute_sigma),
        )
    return _finalize(model, x, sigma, params, wrss, n_iter, absolute_sigma)


def _finalize(model, x, sigma, params, wrss, n_iter, absolute_sigma=True):
    jac = model.jacobian(x, params) / sigma[:, None]
    normal = jac.T @ jac
    flags: tuple[str, ...] = ()
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(normal)
        flags = ("singular-normal-matrix",)
    dof = x.size - params.size
    if not absolute_sigma and dof > 0:
        cov = cov * (wrss / dof)
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        tag=model.tag,
        param_names=model.param_names,
        params=params,
        stderr=stderr,
        wrss=wrss,
        dof=dof,
        n_iterations=n_iter,
        flags=flags,
    )


# --------------------------------------------------------------------------
# Measurement-specific wrappers


def fit_recovery(
    taus_ns: Sequence[float],
    ratios: Sequence[float],
    sigma: Sequence[float] | None = None,
) -> FitResult:
    """One-parameter fit of the recovery curve 1 - exp(-tau/T1)."""
    taus = np.asarray(taus_ns, dtype=float)
    vals = np.asarray(ratios, dtype=float)
    if taus.size < 3:
        raise FitError("recovery fit needs at least 3 delay points")
    if np.all(vals <= 0):
        raise FitError("all recovery ratios are non-positive; nothing to fit")
    if np.all(vals >= 1.0 - 1e-9):
        raise FitError(
            "all ratios are saturated at 1; T1 is not identifiable from "
            "fully thermalized delays"
        )
    usable = (vals > 0) & (vals < 1)
    guesses = -taus[usable] / np.log1p(-np.clip(vals[usable], 0.0, 1 - 1e-12))
    init = float(np.median(guesses)) if usable.any() else float(np.median(taus))
    return fit_nonlinear(MODELS["recovery"], taus, vals, sigma, [init])


def fit_lorentzian(
    freq_mhz: Sequence[float],
    counts: Sequence[float],
    sigma: Sequence[float] | None = None,
) -> FitResult:
    """Four-parameter Lorentzian line fit (center, FWHM, amplitude, offset)."""
    freq = np.asarray(freq_mhz, dtype=float)
    vals = np.asarray(counts, dtype=float)
    if freq.size < 5:
        raise FitError("Lorentzian fit needs at least 5 points")
    offset = float(vals.min())
    amplitude = float(vals.max() - offset)
    center = float(freq[np.argmax(vals)])
    above = freq[vals > offset + 0.5 * amplitude]
    fwhm = float(above.max() - above.min()) if above.size > 1 else float(
        np.ptp(freq) / 4.0
    )
    fwhm = max(fwhm, np.ptp(freq) * 1e-3)
    result = fit_nonlinear(
        MODELS["lorentzian"], freq, vals, sigma,
        [center, fwhm, amplitude, offset],
    )
    if (
        result["amplitude"] <= 0
        or result["fwhm"] <= 0
        or "singular-normal-matrix" in result.flags
    ):
        raise NonConvergenceError(
            "no Lorentzian peak found in the data", best=result
        )
    return result


def fit_saturation(
    power_uw: Sequence[float],
    counts: Sequence[float],
    sigma: Sequence[float] | None = None,
) -> FitResult:
    """Saturation curve I(P) = I_max * (1 - exp(-P/P_sat))."""
    power = np.asarray(power_uw, dtype=float)
    vals = np.asarray(counts, dtype=float)
    if power.size < 3:
        raise FitError("saturation fit needs at least 3 points")
    if np.any(power < 0):
        raise InvalidParameterError("optical powers must be non-negative")
    if sigma is None:
        # Robust per-point noise from successive differences in the
        # saturated (flat) upper half of the power range.
        diffs = np.diff(vals)
        tail = diffs[diffs.size // 2 :] if diffs.size >= 8 else diffs
        level = 1.4826 * float(np.median(np.abs(tail - np.median(tail))))
        noise = np.full_like(vals, max(level / math.sqrt(2.0), 1e-30))
    else:
        noise = np.asarray(sigma, dtype=float)
    drops = np.diff(vals) < -3.0 * np.hypot(noise[1:], noise[:-1])
    if np.any(drops):
        warnings.warn(
            "saturation data decreases beyond its error bars; the "
            "exponential model may not apply",
            RuntimeWarning,
            stacklevel=2,
        )
    i_max = float(vals.max()) or 1.0
    positive = power > 0
    slope = (
        float(np.median(vals[positive] / power[positive]))
        if positive.any()
        else 1.0
    )
    p_sat = i_max / slope if slope > 0 else float(np.median(power) or 1.0)
    return fit_nonlinear(
        MODELS["saturation"], power, vals, sigma, [i_max, p_sat]
    )


# --------------------------------------------------------------------------
# Conic fits


@dataclass(frozen=True)
class EllipseFit:
    center_x: float
    center_y: float
    semi_x: float  # along the rotated first axis
    semi_y: float
    rotation_rad: float  # in [-pi/2, pi/2); 0 for circles by convention
    rms_distance: float


@dataclass(frozen=True)
class CircleFit:
    center_x: float
    center_y: float
    radius: float
    rms_distance: float


def _point_array(points, minimum, label):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidParameterError(f"{label} points must be an (N, 2) array")
    if pts.shape[0] < minimum:
        raise FitError(f"{label} fit needs at least {minimum} points")
    return pts


def _direct_ellipse_coeffs(pts: np.ndarray) -> np.ndarray:
    """Determinant-constrained direct ellipse fit (numerically stabilized).

    Returns conic coefficients (a, b, c, d, e, f) for
    a x^2 + b x y + c y^2 + d x + e y + f = 0 guaranteed elliptical.
    """
    x, y = pts[:, 0], pts[:, 1]
    d1 = np.stack([x * x, x * y, y * y], axis=1)
    d2 = np.stack([x, y, np.ones_like(x)], axis=1)
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t_mat = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise FitError("degenerate point set for ellipse fitting")
    m = s1 + s2 @ t_mat
    # Constraint 4ac - b^2 = 1 via the reduced scatter matrix.
    reduced = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    _, eigvecs = np.linalg.eig(reduced)
    eigvecs = np.real(eigvecs)
    cond = 4.0 * eigvecs[0] * eigvecs[2] - eigvecs[1] ** 2
    valid = np.where(cond > 0)[0]
    if valid.size == 0:
        raise FitError("points do not determine an ellipse")
    a1 = eigvecs[:, valid[0]]
    return np.concatenate([a1, t_mat @ a1])


def _conic_to_geometry(coeffs: np.ndarray) -> tuple[float, float, float, float, float]:
    a, b, c, d, e, f = coeffs
    disc = 4.0 * a * c - b * b
    if disc <= 0:
        raise FitError("fitted conic is not an ellipse")
    cx = (b * e - 2.0 * c * d) / disc
    cy = (b * d - 2.0 * a * e) / disc
    # Value of the quadratic form at the centre.
    f_c = f + 0.5 * (d * cx + e * cy)
    mat = np.array([[a, b / 2.0], [b / 2.0, c]])
    evals, evecs = np.linalg.eigh(mat)
    if evals[0] * evals[1] <= 0:
        raise FitError("fitted conic is not an ellipse")
    scale = -f_c
    if evals[0] < 0:
        evals, scale = -evals, -scale
    if scale <= 0:
        raise FitError("fitted conic is not an ellipse")
    # eigh returns ascending eigenvalues, so axes[0] >= axes[1].
    axes = np.sqrt(scale / evals)
    angle = math.atan2(evecs[1, 0], evecs[0, 0])
    semi_x, semi_y = float(axes[0]), float(axes[1])
    # Normalize the angle to [-pi/2, pi/2).
    while angle >= math.pi / 2.0:
        angle -= math.pi
    while angle < -math.pi / 2.0:
        angle += math.pi
    return float(cx), float(cy), semi_x, semi_y, float(angle)


def _ellipse_distances(pts: np.ndarray, geom: np.ndarray) -> np.ndarray:
    cx, cy, ax, ay, phi = geom
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    u = (pts[:, 0] - cx) * cos_p + (pts[:, 1] - cy) * sin_p
    v = -(pts[:, 0] - cx) * sin_p + (pts[:, 1] - cy) * cos_p
    t = np.arctan2(ay * v, ax * u)
    for _ in range(30):
        ct, st = np.cos(t), np.sin(t)
        ex, ey = ax * ct, ay * st
        # Stationarity of squared distance w.r.t. the ellipse parameter.
        g = (ax * st) * (ex - u) - (ay * ct) * (ey - v)
        gp = (ax * ct) * (ex - u) + (ay * st) * (ey - v) - (
            ax * st
        ) ** 2 - (ay * ct) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(np.abs(gp) > 0, g / gp, 0.0)
        t = t - delta
        if np.max(np.abs(delta)) < 1e-14:
            break
    ct, st = np.cos(t), np.sin(t)
    return np.hypot(ax * ct - u, ay * st - v)


def fit_ellipse(points) -> EllipseFit:
    """Direct least-squares ellipse fit refined on geometric distances."""
    pts = _point_array(points, 6, "ellipse")
    coeffs = _direct_ellipse_coeffs(pts)
    geom = np.array(_conic_to_geometry(coeffs))

    def objective(g):
        d = _ellipse_distances(pts, g)
        return float(d @ d)

    best = geom.copy()
    best_val = objective(best)
    lam = 1e-3
    scale = np.maximum(np.abs(best), 1e-6)
    for _ in range(MAX_ITERATIONS):
        # Central-difference Jacobian of the distance residuals.
        jac = np.empty((pts.shape[0], 5))
        h = 1e-6 * scale
        for j in range(5):
            plus, minus = best.copy(), best.copy()
            plus[j] += h[j]
            minus[j] -= h[j]
            jac[:, j] = (
                _ellipse_distances(pts, plus) - _ellipse_distances(pts, minus)
            ) / (2.0 * h[j])
        resid = _ellipse_distances(pts, best)
        grad = jac.T @ resid
        if np.linalg.norm(grad) < GRAD_TOL:
            break
        normal = jac.T @ jac
        diag = np.diag(normal).copy()
        diag[diag == 0] = 1.0
        improved = False
        while lam < 1e10:
            try:
                step = np.linalg.solve(normal + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = best + step
            if trial[2] <= 0 or trial[3] <= 0:
                lam *= 10.0
                continue
            val = objective(trial)
            if val <= best_val:
                rel = np.max(np.abs(step) / (np.abs(best) + 1e-30))
                best, best_val = trial, val
                lam = max(lam / 10.0, 1e-15)
                improved = True
                break
            lam *= 10.0
        if not improved or rel < STEP_TOL:
            break

    cx, cy, ax, ay, phi = best
    if ax < ay:  # keep the first axis the longer one consistently
        ax, ay = ay, ax
        phi += math.pi / 2.0
    while phi >= math.pi / 2.0:
        phi -= math.pi
    while phi < -math.pi / 2.0:
        phi += math.pi
    if abs(ax - ay) < 1e-9 * (ax + ay):
        phi = 0.0
    rms = math.sqrt(best_val / pts.shape[0])
    return EllipseFit(cx, cy, float(ax), float(ay), float(phi), rms)


def fit_circle(points) -> CircleFit:
    """Algebraic circle fit refined by Gauss-Newton on radial distances."""
    pts = _point_array(points, 3, "circle")
    x, y = pts[:, 0], pts[:, 1]
    design = np.stack([x, y, np.ones_like(x)], axis=1)
    rhs = x * x + y * y
    sol, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < 3:
        raise FitError("points are collinear; no circle fits them")
    cx, cy = sol[0] / 2.0, sol[1] / 2.0
    r_sq = sol[2] + cx * cx + cy * cy
    if r_sq <= 0:
        raise FitError("degenerate circle fit")
    params = np.array([cx, cy, math.sqrt(r_sq)])

    for _ in range(MAX_ITERATIONS):
        dx = x - params[0]
        dy = y - params[1]
        dist = np.hypot(dx, dy)
        if np.any(dist == 0):
            raise FitError("a point coincides with the circle centre")
        resid = dist - params[2]
        jac = np.stack([-dx / dist, -dy / dist, -np.ones_like(dist)], axis=1)
        grad = jac.T @ resid
        if np.linalg.norm(grad) < GRAD_TOL:
            break
        step, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        params = params + step
        if np.max(np.abs(step) / (np.abs(params) + 1e-30)) < STEP_TOL:
            break
    dx, dy = x - params[0], y - params[1]
    resid = np.hypot(dx, dy) - params[2]
    rms = math.sqrt(float(resid @ resid) / pts.shape[0])
    return CircleFit(float(params[0]), float(params[1]), float(params[2]), rms)


# --------------------------------------------------------------------------
# Tether waist


@dataclass(frozen=True)
class TetherFit:
    width_nm: float
    waist_x_nm: float
    upper: FitResult
    lower: FitResult


def _fit_edge(points, flip: bool, label: str) -> FitResult:
    pts = _point_array(points, 5, label)
    x = pts[:, 0]
    y = -pts[:, 1] if flip else pts[:, 1]
    inner = np.argmin(y)
    if inner == 0 or inner == x.size - 1:
        raise FitError(
            f"{label} edge has no interior waist; profile is monotone"
        )
    span = max(np.ptp(x) / 4.0, 1e-3)
    rise = max(float(y.max() - y.min()), 1e-9)
    curv = rise / max((np.ptp(x) / 2.0) ** 2, 1e-12)
    init = [float(y[inner]), float(x[inner]), curv, span]
    return fit_nonlinear(MODELS["waist"], x, y, None, init)


def fit_tether_width(upper_edge, lower_edge) -> TetherFit:
    """Tether thickness from waist fits of the two opposing edge contours.

    Both edges are fitted with the symmetric waist profile
    y(x) = y0 + c*(x - x0)^2 / (1 + |x - x0|/s); the thickness is the sum of
    the two waist offsets (the lower edge is mirrored before fitting).
    """
    upper = _fit_edge(upper_edge, flip=False, label="upper tether")
    lower = _fit_edge(lower_edge, flip=True, label="lower tether")
    width = upper["y0"] + lower["y0"]
    waist_x = 0.5 * (upper["x0"] + lower["x0"])
    return TetherFit(float(width), float(waist_x), upper, lower)


# --------------------------------------------------------------------------
# Histogram statistics


@dataclass(frozen=True)
class HistogramStats:
    mean: float
    sd: float
    fit_amplitude: float
    fit_center: float
    fit_width: float
    degenerate: bool


def gaussian_histogram_stats(values, bins: int | None = None) -> HistogramStats:
    """Sample mean/S.D. plus a Gaussian fit to the histogram."""
    vals = np.asarray(values, dtype=float)
    if vals.size < 10:
        raise InvalidParameterError(
            f"need at least 10 samples, got {vals.size}"
        )
    mean = float(vals.mean())
    sd = float(vals.std(ddof=1))
    if sd == 0.0:
        return HistogramStats(mean, 0.0, float(vals.size), mean, 0.0, True)

    n_bins = bins if bins is not None else max(6, int(round(math.sqrt(vals.size))))
    counts, edges = np.histogram(vals, bins=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    sigma = np.sqrt(np.maximum(counts, 1.0))
    init = [float(counts.max()), mean, sd]
    result = fit_nonlinear(
        MODELS["gaussian"], centers, counts.astype(float), sigma, init
    )
    return HistogramStats(
        mean,
        sd,
        result["amplitude"],
        result["center"],
        abs(result["width"]),
        False,
    )
