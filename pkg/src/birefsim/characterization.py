"""Cavity transmission scans: double-Lorentzian model, fitting and CSV ingestion."""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

SCAN_HEADER = ("detuning_mhz", "transmission")
MAX_ITER = 200
GTOL = 1e-10


class ScanFormatError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TransmissionScan:
    detuning: np.ndarray
    signal: np.ndarray
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asarray(self.detuning, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if d.shape != s.shape or d.ndim != 1:
            raise ValueError("detuning and signal must be 1-D arrays of equal length")
        if d.size > 1 and not (np.all(np.diff(d) > 0) or np.all(np.diff(d) < 0)):
            raise ValueError("detuning must be strictly monotonic")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("signal must be finite and non-negative")
        object.__setattr__(self, "detuning", d)
        object.__setattr__(self, "signal", s)

    def __len__(self):
        return self.detuning.size


def double_lorentzian(params, detuning, per_peak_widths: bool = False):
    """baseline + sum_i A_i (G_i/2)^2 / ((x - c_i)^2 + (G_i/2)^2).

    ``params`` is (c1, c2, fwhm, a1, a2, baseline), or (c1, c2, w1, w2, a1, a2, baseline)
    with per-peak widths.
    """
    x = np.asarray(detuning, dtype=float)
    if per_peak_widths:
        c1, c2, w1, w2, a1, a2, b = params
    else:
        c1, c2, w1, a1, a2, b = params
        w2 = w1
    if w1 <= 0 or w2 <= 0:
        raise ValueError("fwhm must be positive")
    h1, h2 = (0.5 * w1) ** 2, (0.5 * w2) ** 2
    return b + a1 * h1 / ((x - c1) ** 2 + h1) + a2 * h2 / ((x - c2) ** 2 + h2)


def _jacobian(p, x, per_peak_widths):
    if per_peak_widths:
        c1, c2, w1, w2, a1, a2, _ = p
    else:
        c1, c2, w1, a1, a2, _ = p
        w2 = w1
    cols = {}
    for i, (c, w, a) in enumerate(((c1, w1, a1), (c2, w2, a2))):
        h = 0.25 * w * w
        den = (x - c) ** 2 + h
        lor = h / den
        cols[f"c{i}"] = a * 2 * h * (x - c) / den ** 2
        cols[f"w{i}"] = a * 0.5 * w * (x - c) ** 2 / den ** 2
        cols[f"a{i}"] = lor
    ones = np.ones_like(x)
    if per_peak_widths:
        order = [cols["c0"], cols["c1"], cols["w0"], cols["w1"], cols["a0"], cols["a1"], ones]
    else:
        order = [cols["c0"], cols["c1"], cols["w0"] + cols["w1"], cols["a0"], cols["a1"], ones]
    return np.column_stack(order)


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    converged: bool
    n_iter: int
    message: str
    history: list[float] = field(default_factory=list)
    jac: np.ndarray | None = None


def levenberg_marquardt(residual, jacobian, x0, max_iter: int = MAX_ITER, gtol: float = GTOL,
                        xtol: float = 1e-12, ftol: float = 1e-15, feasible=None) -> LMResult:
    """Damped Gauss-Newton with Marquardt diagonal scaling.

    ``history`` holds the sum of squares after every accepted step, so it is
    non-increasing by construction. ``feasible`` may veto trial points.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jac = jacobian(x)
        grad = jac.T @ r
        if np.max(np.abs(grad)) < gtol:
            return LMResult(x, cost, True, it - 1, "gradient tolerance reached", history, jac)
        a = jac.T @ jac
        diag = np.maximum(np.diag(a), 1e-12)
        while True:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = x + step
            ok = feasible is None or feasible(trial)
            r_trial = residual(trial) if ok else None
            cost_trial = float(r_trial @ r_trial) if ok else math.inf
            if cost_trial < cost:
                break
            lam *= 4.0
            if lam > 1e16:
                return LMResult(x, cost, True, it, "no further decrease possible", history, jac)
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol)
        small_gain = cost - cost_trial <= ftol * cost
        x, r, cost = trial, r_trial, cost_trial
        history.append(cost)
        lam = max(lam / 3.0, 1e-12)
        if small_step or small_gain:
            return LMResult(x, cost, True, it, "step or reduction below tolerance", history, jacobian(x))
    return LMResult(x, cost, False, max_iter, "maximum iterations reached", history, jacobian(x))


@dataclass(frozen=True, eq=False)
class DoubleLorentzianFit:
    centers: tuple[float, float]
    fwhm: float | tuple[float, float]
    amplitudes: tuple[float, float]
    baseline: float
    covariance: np.ndarray
    converged: bool
    residual_norm: float
    n_iter: int
    history: tuple[float, ...] = ()

    @property
    def splitting(self) -> float:
        return abs(self.centers[1] - self.centers[0])

    @property
    def params(self) -> np.ndarray:
        w = self.fwhm if isinstance(self.fwhm, tuple) else (self.fwhm,)
        return np.array([*self.centers, *w, *self.amplitudes, self.baseline])

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def predict(self, detuning) -> np.ndarray:
        return double_lorentzian(self.params, detuning, isinstance(self.fwhm, tuple))

    def report_items(self) -> list[tuple[str, object]]:
        err = self.stderr
        items = [("center1_mhz", self.centers[0]), ("center2_mhz", self.centers[1]),
                 ("splitting_mhz", self.splitting)]
        if isinstance(self.fwhm, tuple):
            items += [("fwhm1_mhz", self.fwhm[0]), ("fwhm2_mhz", self.fwhm[1])]
        else:
            items += [("fwhm_mhz", self.fwhm)]
        items += [("amplitude1", self.amplitudes[0]), ("amplitude2", self.amplitudes[1]),
                  ("baseline", self.baseline)]
        names = [k for k, _ in items if k != "splitting_mhz"]
        items += [(f"{k}_err", e) for k, e in zip(names, err)]
        items += [("converged", self.converged), ("residual_norm", self.residual_norm),
                  ("iterations", self.n_iter)]
        return items

    def report(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in self.report_items()) + "\n"

    def csv_header(self) -> str:
        return ",".join(k for k, _ in self.report_items())

    def csv_row(self) -> str:
        return ",".join(_fmt(v) for _, v in self.report_items())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def _smooth(y, width):
    if width <= 1:
        return y.copy()
    kernel = np.ones(width) / width
    pad = width // 2
    return np.convolve(np.pad(y, pad, mode="edge"), kernel, mode="valid")[: y.size]


def initial_guess(detuning, signal, per_peak_widths: bool = False) -> np.ndarray:
    """Centres from the two largest local maxima of the lightly smoothed scan."""
    x = np.asarray(detuning, dtype=float)
    y = np.asarray(signal, dtype=float)
    base = float(np.percentile(y, 5))
    ys = _smooth(y, max(1, (y.size // 60) | 1))
    top = int(np.argmax(ys))
    half = base + 0.5 * (ys[top] - base)
    above = np.flatnonzero(ys >= half)
    width = max(float(x[above[-1]] - x[above[0]]), 3 * float(np.median(np.abs(np.diff(x)))))
    interior = np.flatnonzero((ys[1:-1] >= ys[:-2]) & (ys[1:-1] > ys[2:])) + 1
    peaks = sorted(interior, key=lambda k: ys[k], reverse=True)
    second = None
    for k in peaks:
        if k == top:
            continue
        sep = abs(x[k] - x[top])
        dip = ys[min(k, top):max(k, top) + 1].min()
        if sep > 0.1 * width and ys[k] - dip > 0.02 * (ys[top] - base):
            second = k
            break
    if second is None:
        c1, c2 = x[top] - 0.25 * width, x[top] + 0.25 * width
        a1 = a2 = 0.6 * (ys[top] - base)
        w = 0.7 * width
    else:
        c1, c2 = sorted((x[top], x[second]))
        a1 = float(ys[np.argmin(np.abs(x - c1))] - base) * 0.8
        a2 = float(ys[np.argmin(np.abs(x - c2))] - base) * 0.8
        w = max(width - abs(c2 - c1), 0.3 * width)
    if per_peak_widths:
        return np.array([c1, c2, w, w, a1, a2, base])
    return np.array([c1, c2, w, a1, a2, base])


def fit_transmission(scan: TransmissionScan, initial_guess_params=None, per_peak_widths: bool = False,
                     max_iter: int = MAX_ITER, strict: bool = True) -> DoubleLorentzianFit:
    x = scan.detuning
    y = scan.signal
    if x.size < 8:
        raise FitError(f"need at least 8 points to fit, got {x.size}")
    if np.ptp(y) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        raise FitError("degenerate scan: signal is constant")
    p0 = np.asarray(initial_guess(x, y, per_peak_widths) if initial_guess_params is None
                    else initial_guess_params, dtype=float)

    # normalised problem: detuning mapped to [-1, 1], signal to [0, 1]
    x_mid, x_half = 0.5 * (x.max() + x.min()), 0.5 * np.ptp(x)
    y_scale = float(np.max(y))
    nw = 2 if per_peak_widths else 1
    kinds = ["c", "c"] + ["w"] * nw + ["a", "a", "a"]
    scale = np.array([x_half if k in "cw" else y_scale for k in kinds])
    shift = np.array([x_mid if k == "c" else 0.0 for k in kinds])
    u = (x - x_mid) / x_half
    v = y / y_scale
    q0 = (p0 - shift) / scale
    w_idx = slice(2, 2 + nw)

    res = levenberg_marquardt(
        lambda q: double_lorentzian(q, u, per_peak_widths) - v,
        lambda q: _jacobian(q, u, per_peak_widths),
        q0, max_iter=max_iter, feasible=lambda q: bool(np.all(q[w_idx] > 0)))
    if strict and not res.converged:
        raise FitError(f"fit did not converge after {res.n_iter} iterations")
    p = res.x * scale + shift
    dof = max(x.size - p.size, 1)
    s2 = res.cost / dof
    try:
        cov_q = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov_q = np.full((p.size, p.size), np.nan)
    cov = cov_q * np.outer(scale, scale)

    if per_peak_widths:
        c1, c2, w1, w2, a1, a2, b = p
        order = (0, 1) if c1 <= c2 else (1, 0)
        widths = (w1, w2)
        fwhm = (float(widths[order[0]]), float(widths[order[1]]))
        perm = [order[0], order[1], 2 + order[0], 2 + order[1], 4 + order[0], 4 + order[1], 6]
    else:
        c1, c2, w, a1, a2, b = p
        order = (0, 1) if c1 <= c2 else (1, 0)
        fwhm = float(w)
        perm = [order[0], order[1], 2, 3 + order[0], 3 + order[1], 5]
    p = p[perm]
    cov = cov[np.ix_(perm, perm)]
    centers = (float(p[0]), float(p[1]))
    amps = (float(p[2 + nw]), float(p[3 + nw]))
    return DoubleLorentzianFit(centers, fwhm, amps, float(p[-1]), cov, res.converged,
                               float(np.sqrt(res.cost) * y_scale), res.n_iter,
                               tuple(h * y_scale ** 2 for h in res.history))


def ingest_scan(source) -> TransmissionScan:
    """Read a ``detuning_mhz,transmission`` CSV from a path or text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return ingest_scan(io.StringIO(fh.read()))
    reader = csv.reader(source)
    rows = [(n, row) for n, row in enumerate(reader, start=1) if any(cell.strip() for cell in row)]
    if not rows:
        raise ScanFormatError("empty scan file")
    n0, header = rows[0]
    if tuple(c.strip() for c in header) != SCAN_HEADER:
        raise ScanFormatError(f"line {n0}: expected header {','.join(SCAN_HEADER)!r}, got {','.join(header)!r}")
    xs, ys, diags = [], [], []
    for n, row in rows[1:]:
        if len(row) != 2:
            raise ScanFormatError(f"line {n}: expected 2 columns, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise ScanFormatError(f"line {n}: cannot parse {row!r} as numbers") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            diags.append(f"line {n}: non-finite value rejected")
            continue
        if y < 0:
            diags.append(f"line {n}: negative transmission {y} rejected")
            continue
        xs.append(x)
        ys.append(y)
    for d in diags:
        warnings.warn(d, stacklevel=2)
    if not xs:
        raise ScanFormatError("scan contains no valid rows")
    xs, ys = np.array(xs), np.array(ys)
    if np.any(np.diff(xs) < 0):
        warnings.warn("scan rows were not sorted by detuning; sorted", stacklevel=2)
        diags.append("rows sorted by detuning")
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
    if np.any(np.diff(xs) == 0):
        raise ScanFormatError("duplicate detuning values")
    return TransmissionScan(xs, ys, tuple(diags))


def synthetic_scan(splitting: float = 3.471, fwhm: float = 3.543, amplitudes=(1.0, 0.8), baseline: float = 0.02,
                   span: float = 20.0, n: int = 401, noise: float = 0.0, seed=None) -> TransmissionScan:
    """Scan centred on the midpoint of the two eigenmodes; ``noise`` is relative to the peak amplitude."""
    x = np.linspace(-span, span, n)
    y = double_lorentzian([-0.5 * splitting, 0.5 * splitting, fwhm, *amplitudes, baseline], x)
    if noise:
        rng = np.random.default_rng(seed)
        y = y + rng.normal(0.0, noise * max(amplitudes), size=n)
        y = np.clip(y, 0.0, None)
    return TransmissionScan(x, y)
