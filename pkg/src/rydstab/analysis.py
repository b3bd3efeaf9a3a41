"""Fringe fitting, bootstrap errors, parity classification and contrast bookkeeping.

The fringe model is ``p(phi) = offset + (contrast / 2) * cos(phi - phase)``,
so a perfect fringe has contrast 1 and offset 0.5. Writing it as
``offset + a cos(phi) + b sin(phi)`` makes the fit linear, so it has a
closed-form weighted least-squares solution and needs no initial guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .pulses import wrap_phase
from .tables import FringeTable

PARAMS = ("contrast", "phase", "offset")


class FitError(ValueError):
    pass


class BootstrapError(RuntimeError):
    def __init__(self, failures: int, resamples: int):
        super().__init__(f"fit failed on {failures} of {resamples} bootstrap resamples")
        self.failures = failures
        self.resamples = resamples


@dataclass(frozen=True)
class FringeFit:
    contrast: float
    phase: float
    offset: float
    xi_fit: dict = field(default_factory=lambda: dict.fromkeys(PARAMS, 0.0))
    xi_bootstrap: dict = field(default_factory=lambda: dict.fromkeys(PARAMS, 0.0))
    phase_defined: bool = True
    clipped: bool = False

    @property
    def xi_total(self) -> dict:
        return {k: math.hypot(self.xi_bootstrap.get(k, 0.0), self.xi_fit.get(k, 0.0))
                for k in PARAMS}

    def model(self, phi):
        return self.offset + 0.5 * self.contrast * np.cos(np.asarray(phi) - self.phase)

    def report(self) -> list[dict]:
        """Rows of (parameter, value, xi_b, xi_f, xi_total) for JSON output."""
        tot = self.xi_total
        return [
            {"parameter": k, "value": getattr(self, k), "xi_b": self.xi_bootstrap.get(k, 0.0),
             "xi_f": self.xi_fit.get(k, 0.0), "xi_total": tot[k]}
            for k in PARAMS
        ]


def _check_grid(phases: np.ndarray) -> None:
    u = np.unique(np.round(np.mod(phases, 2 * np.pi), 12))
    if u.size < 4:
        raise FitError(f"need at least 4 distinct phases, got {u.size}")
    gaps = np.diff(np.concatenate([u, [u[0] + 2 * np.pi]]))
    if 2 * np.pi - gaps.max() < np.pi - 1e-12:
        raise FitError("phase grid must span at least pi")


def binomial_weights(probs, shots, successes=None) -> np.ndarray:
    """Inverse binomial variances; empty or full bins get a half-count regularization."""
    shots = np.asarray(shots, dtype=float)
    p = np.asarray(probs, dtype=float)
    if successes is not None:
        s = np.asarray(successes, dtype=float)
        edge = (s <= 0) | (s >= shots)
        p = np.where(edge, (s + 0.5) / (shots + 1), s / np.maximum(shots, 1))
    var = np.clip(p * (1 - p), 1e-12, None) / np.maximum(shots, 1)
    return 1.0 / var


def fit_fringe(phases, probs, shots=None, successes=None) -> FringeFit:
    """Weighted linear least-squares fringe fit.

    With ``shots`` the weights are binomial and the fit errors absolute;
    without, the fit is unweighted and errors scale with the residuals.
    """
    phases = np.asarray(phases, dtype=float)
    probs = np.asarray(probs, dtype=float)
    keep = np.isfinite(probs)
    if shots is not None:
        shots_arr = np.asarray(shots)
        keep &= shots_arr > 0
    phases, probs = phases[keep], probs[keep]
    _check_grid(phases)
    X = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    if shots is not None:
        s = None if successes is None else np.asarray(successes)[keep]
        w = binomial_weights(probs, np.asarray(shots)[keep], s)
    else:
        w = np.ones_like(probs)
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * probs))
    cov = np.linalg.inv(A)
    if shots is None:
        dof = probs.size - 3
        rss = float(np.sum((probs - X @ beta) ** 2))
        cov = cov * (rss / dof if dof > 0 else 0.0)
    o, a, b = beta
    amp = math.hypot(a, b)
    if amp < 1e-12:
        return FringeFit(0.0, float("nan"), float(o), dict.fromkeys(PARAMS, 0.0),
                         phase_defined=False)
    contrast, phase = 2 * amp, math.atan2(b, a)
    # Jacobian of (contrast, phase, offset) with respect to (o, a, b)
    J = np.array([
        [0.0, 2 * a / amp, 2 * b / amp],
        [0.0, -b / amp**2, a / amp**2],
        [1.0, 0.0, 0.0],
    ])
    pcov = J @ cov @ J.T
    err = np.sqrt(np.clip(np.diag(pcov), 0, None))
    clipped = False
    if not 0 <= o <= 1:
        o, clipped = min(max(o, 0.0), 1.0), True
    cmax = 2 * min(o, 1 - o)
    if contrast > cmax + 1e-12:
        contrast, clipped = cmax, True
    return FringeFit(float(contrast), float(phase), float(o),
                     dict(zip(PARAMS, map(float, err))), clipped=clipped)


def fit_table(table: FringeTable) -> FringeFit:
    return fit_fringe(table.phases, table.probs, table.shots, table.successes)


def delta_phi(fit_ref: FringeFit, fit_probe: FringeFit) -> float:
    """Fringe shift probe - ref in (-pi, pi].

    Shifts within 1e-9 rad of -pi are reported as +pi so that an ideal pi
    shift does not flip sign with rounding.
    """
    if not (fit_ref.phase_defined and fit_probe.phase_defined):
        raise FitError("fringe phase undefined (zero contrast)")
    d = wrap_phase(fit_probe.phase - fit_ref.phase)
    return math.pi if d < -math.pi + 1e-9 else d


@dataclass
class BootstrapResult:
    fit: FringeFit          # bootstrap means with xi_b, xi_f
    full_fit: FringeFit     # fit of the full sample
    samples: np.ndarray     # (resamples, 3) in PARAMS order
    failures: int = 0


def bootstrap(table: FringeTable, fitter: Callable = fit_fringe, resamples: int = 300,
              seed: int = 0) -> BootstrapResult:
    """Resample shots with replacement within each phase bin and refit.

    Each resample redraws every bin's successes from its own shots (a
    binomial draw at the observed frequency). The reported value is the mean
    over resamples; phase statistics are taken on the circle around the
    full-sample phase.
    """
    if table.shots is None:
        raise ValueError("bootstrap needs shot counts")
    if np.sum(table.shots) == 0:
        raise ValueError("bootstrap needs at least one shot")
    full = fitter(table.phases, table.probs, table.shots, table.successes)
    shots = table.shots
    p_hat = table.successes / np.maximum(shots, 1)
    rows, failures = [], 0
    for r in range(resamples):
        rng = np.random.default_rng([seed, r])
        succ = rng.binomial(shots, p_hat)
        probs = succ / np.maximum(shots, 1)
        try:
            f = fitter(table.phases, probs, shots, succ)
        except (FitError, np.linalg.LinAlgError):
            failures += 1
            continue
        if not f.phase_defined:
            failures += 1
            continue
        rows.append((f.contrast, f.phase, f.offset))
    if failures > 0.1 * resamples:
        raise BootstrapError(failures, resamples)
    samples = np.array(rows)
    ref_phase = full.phase if full.phase_defined else 0.0
    dev = wrap_phase(samples[:, 1] - ref_phase)
    means = {
        "contrast": float(samples[:, 0].mean()),
        "phase": wrap_phase(ref_phase + dev.mean()),
        "offset": float(samples[:, 2].mean()),
    }
    ddof = 1 if len(samples) > 1 else 0
    xi_b = {
        "contrast": float(samples[:, 0].std(ddof=ddof)),
        "phase": float(dev.std(ddof=ddof)),
        "offset": float(samples[:, 2].std(ddof=ddof)),
    }
    fit = FringeFit(means["contrast"], means["phase"], means["offset"], full.xi_fit, xi_b,
                    phase_defined=full.phase_defined, clipped=full.clipped)
    return BootstrapResult(fit, full, samples, failures)


def delta_method_errors(phases, contrast: float, phase: float, offset: float, shots) -> dict:
    """Asymptotic parameter errors for binomial data drawn from a known fringe."""
    phases = np.asarray(phases, dtype=float)
    p = offset + 0.5 * contrast * np.cos(phases - phase)
    w = np.asarray(shots, dtype=float) / (p * (1 - p))
    # derivatives of p with respect to (contrast, phase, offset)
    J = np.column_stack([0.5 * np.cos(phases - phase), 0.5 * contrast * np.sin(phases - phase),
                         np.ones_like(phases)])
    cov = np.linalg.inv(J.T @ (w[:, None] * J))
    return dict(zip(PARAMS, np.sqrt(np.diag(cov))))


def parity(n1: int) -> int:
    if n1 < 0:
        raise ValueError("n1 must be non-negative")
    return -1 if n1 % 2 else 1


@dataclass(frozen=True)
class DecayFit:
    fidelity: float
    fidelity_err: float
    c0: float
    c0_err: float


def contrast_decay_fit(ns: Sequence[int], contrasts: Sequence[float],
                       errors: Sequence[float] | None = None) -> DecayFit:
    """Fit contrast(n) = c0 * f**n; returns the per-qubit factor f."""
    ns = np.asarray(ns, dtype=float)
    c = np.asarray(contrasts, dtype=float)
    if ns.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(ns < 0) or np.any(ns != np.round(ns)):
        raise ValueError("n must be non-negative integers")
    if np.any(c <= 0):
        raise ValueError("contrasts must be positive")
    slope, intercept = np.polyfit(ns, np.log(c), 1)
    p0 = (math.exp(intercept), math.exp(slope))
    sigma = None if errors is None else np.asarray(errors, dtype=float)
    if sigma is not None and np.any(sigma <= 0):
        sigma = None
    popt, pcov = curve_fit(lambda n, c0, f: c0 * f**n, ns, c, p0=p0, sigma=sigma,
                           absolute_sigma=sigma is not None, xtol=1e-14, ftol=1e-14)
    err = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else (0.0, 0.0)
    return DecayFit(float(popt[1]), float(err[1]), float(popt[0]), float(err[0]))


def correct_contrast(raw, reference_contrast: float):
    """Scale the deviation from 1/2 by 1/reference_contrast.

    Returns ``(corrected, clipped)``; values pushed outside [0, 1] are clipped
    and flagged.
    """
    if not 0 < reference_contrast <= 1:
        raise ValueError("reference contrast must be in (0, 1]")
    raw = np.asarray(raw, dtype=float)
    out = 0.5 + (raw - 0.5) / reference_contrast
    clipped = (out < 0) | (out > 1)
    return np.clip(out, 0, 1), clipped


def uncorrect_contrast(corrected, reference_contrast: float) -> np.ndarray:
    return 0.5 + (np.asarray(corrected, dtype=float) - 0.5) * reference_contrast


@dataclass(frozen=True)
class OperatingPoint:
    phase: float
    gap: float
    even_survives: bool   # even sector has the higher survival at ``phase``
    separated: bool


def operating_point(fits_even: Iterable[FringeFit], fits_odd: Iterable[FringeFit],
                    step: float = 1e-3) -> OperatingPoint:
    """Ramsey phase maximizing the worst-case survival gap between sectors.

    At each phase the gap is the smallest separation between any even-sector
    fringe and any odd-sector fringe, taken in the better orientation.
    """
    fits_even, fits_odd = list(fits_even), list(fits_odd)
    if not fits_even or not fits_odd:
        raise ValueError("need at least one fit per sector")
    grid = np.arange(0.0, 2 * np.pi, step)
    pe = np.array([f.model(grid) for f in fits_even])
    po = np.array([f.model(grid) for f in fits_odd])
    even_high = pe.min(axis=0) - po.max(axis=0)
    odd_high = po.min(axis=0) - pe.max(axis=0)
    ie, io = int(np.argmax(even_high)), int(np.argmax(odd_high))
    if even_high[ie] >= odd_high[io]:
        phase, gap, even = grid[ie], float(even_high[ie]), True
    else:
        phase, gap, even = grid[io], float(odd_high[io]), False
    return OperatingPoint(wrap_phase(phase), gap, even, gap > 1e-12)


def sector_mean_phase(fits: Sequence[FringeFit], weighted: bool = False) -> float:
    """Circular mean of fringe phases, optionally weighted by 1/xi_total^2."""
    ph = np.array([f.phase for f in fits])
    if weighted:
        xi = np.array([f.xi_total["phase"] for f in fits])
        w = np.where(xi > 0, 1 / np.maximum(xi, 1e-300) ** 2, 1.0)
    else:
        w = np.ones_like(ph)
    return float(np.angle(np.sum(w * np.exp(1j * ph))))


@dataclass
class ParityCell:
    n_loaded: int
    n1: int
    shots: int
    survivals: int
    predicted_sign: int

    @property
    def frequency(self) -> float:
        return self.survivals / self.shots if self.shots else float("nan")

    @property
    def stderr(self) -> float:
        p = self.frequency
        return math.sqrt(p * (1 - p) / self.shots) if self.shots else float("nan")


@dataclass
class ParitySummary:
    cells: dict
    accuracy: float
    shots: int


def parity_summary(records, even_survives: bool = True) -> ParitySummary:
    """Group shots by (n_loaded, n1) and score ancilla-inferred parity.

    A surviving ancilla is read as sign +1 when ``even_survives`` else -1.
    Only accepted records are used.
    """
    cells: dict = {}
    correct = total = 0
    for rec in records:
        if not rec.accepted:
            continue
        key = (rec.n_loaded, rec.n1)
        cell = cells.setdefault(key, ParityCell(rec.n_loaded, rec.n1, 0, 0, parity(rec.n1)))
        cell.shots += 1
        cell.survivals += int(rec.ancilla_survived)
        inferred = 1 if rec.ancilla_survived == even_survives else -1
        correct += int(inferred == parity(rec.n1))
        total += 1
    return ParitySummary(cells, correct / total if total else float("nan"), total)


def with_errors(fit: FringeFit, xi_bootstrap: dict) -> FringeFit:
    return replace(fit, xi_bootstrap=dict(xi_bootstrap))
