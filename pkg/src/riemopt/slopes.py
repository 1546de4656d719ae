"""Log-log slope fitting for Taylor-remainder and retraction-order checks.

Residual curves of the form err(t) ~ C * t^p are sampled on a geometric
t-grid and the order p is recovered as a least-squares slope in log-log
coordinates. Two regimes pollute the raw fit: for tiny t the residual sits
on the floating-point cancellation floor (slope ~ 0), and for large t
higher-order terms bend the curve. The fit is therefore taken on the best
consecutive window of points above an absolute noise floor, "best" meaning
highest coefficient of determination.
"""

import math

import numpy as np

#: residuals at or below ``floor * scale`` are treated as exact zeros
DEFAULT_WINDOW = 7


def log_spaced(lo, hi, num):
    """Geometric grid between lo and hi inclusive, descending from hi."""
    return np.geomspace(hi, lo, num)


def fit_loglog_slope(ts, errs, window=DEFAULT_WINDOW, floor=1e-14):
    """Slope of log(err) vs log(t) on the best consecutive window.

    Parameters
    ----------
    ts, errs : array-like
        Sample abscissae (positive) and residual magnitudes (nonnegative).
    window : int
        Number of consecutive samples the line is fitted on.
    floor : float
        Absolute residual level below which a sample counts as exact zero
        (cancellation noise), excluded from the fit.

    Returns
    -------
    float
        Fitted slope. ``inf`` when fewer than three samples survive the
        floor, i.e. the residual is zero to machine precision.
    """
    ts = np.asarray(ts, dtype=float)
    errs = np.asarray(errs, dtype=float)
    order = np.argsort(ts)
    ts, errs = ts[order], errs[order]
    valid = errs > floor
    if valid.sum() < 3:
        return math.inf

    lt, le = np.log(ts[valid]), np.log(errs[valid])
    idx = np.flatnonzero(valid)
    # consecutive runs in the original grid, so the window never straddles
    # a floor gap
    fits = []
    w = min(window, len(idx))
    for start in range(len(idx) - w + 1):
        if idx[start + w - 1] - idx[start] != w - 1:
            continue
        slope, r2 = _lsq_line(lt[start:start + w], le[start:start + w])
        fits.append((slope, r2))
    if not fits:  # no consecutive run of length w; fit what we have
        slope, _ = _lsq_line(lt, le)
        return float(slope)
    # among (near-)equally clean windows prefer the smallest t: that is
    # where the leading order dominates higher-order contamination
    r2_max = max(r2 for _, r2 in fits)
    for slope, r2 in fits:
        if r2 >= r2_max - 1e-4:
            return float(slope)
    return float(fits[0][0])


def _lsq_line(x, y):
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    denom = float(dx @ dx)
    if denom == 0.0:
        return 0.0, -math.inf
    slope = float(dx @ dy) / denom
    resid = dy - slope * dx
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        return slope, 1.0
    return slope, 1.0 - float(resid @ resid) / ss_tot
