"""Precision metrics, analytic bounds and estimator calibration.

Cyclic spread is measured by the Holevo deviation D_H = mu^-2 - 1, where mu
is the modulus of the mean of exp[i (phi - phi_est)] over data and phase.
For the Bayes-optimal estimate phi_est(y) = arg <exp(i phi)>_{phi|y} the
deviation coincides with the Holevo variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .protocol import OutcomeDistribution

#: mu below this is reported as a deviation overflow, never a huge float.
MU_FLOOR = 1e-12

DEFAULT_PHI_GRID = 4096

#: best known fixed measurement angles for the single-photon strategy.
#: Gauge-fixed so the first angle is zero; the optimum is not unique, only
#: the variance value matters.
KNOWN_OPTIMAL_ANGLES = {
    3: (0.0, 0.0, math.pi / 2.0),
    7: (0.0, 0.0, 2.31099, 1.32133, 1.32133, 0.843774, -0.830605),
}


class MetricsError(ValueError):
    """Invalid metric input (e.g. vanishing resultant length)."""


class DeviationOverflowError(MetricsError):
    """Mean resultant length too small for a meaningful deviation."""


@dataclass(frozen=True)
class HolevoStats:
    """Ensemble summary of a phase-estimation experiment."""

    mu: float
    deviation: float
    n_ens: int
    stderr_mu: float

    @property
    def stderr_deviation(self) -> float:
        """Delta-method propagation of the mu standard error."""
        return 2.0 * self.mu ** -3 * self.stderr_mu


def holevo_from_phasors(phasors: np.ndarray) -> HolevoStats:
    """Statistics of a sample of unit phasors exp[i(phi - phi_est)]."""
    z = np.asarray(phasors, dtype=complex)
    n = z.size
    if n < 1:
        raise MetricsError("need at least one run")
    zbar = z.mean()
    mu = abs(zbar)
    if mu < MU_FLOOR:
        raise DeviationOverflowError(
            f"mean resultant length {mu:.3e} below {MU_FLOOR}; deviation undefined")
    if n == 1:
        se = 0.0
    else:
        x, y = z.real, z.imag
        cx, cy = x.mean(), y.mean()
        vx = x.var(ddof=1) / n
        vy = y.var(ddof=1) / n
        cxy = np.cov(x, y, ddof=1)[0, 1] / n
        se = math.sqrt(max(cx * cx * vx + 2 * cx * cy * cxy + cy * cy * vy, 0.0)) / mu
    return HolevoStats(mu=float(mu), deviation=float(mu ** -2 - 1.0),
                       n_ens=n, stderr_mu=float(se))


def holevo_from_runs(runs) -> HolevoStats:
    """Holevo statistics from a list of ProtocolRun records."""
    z = np.array([np.exp(1j * (r.phi_true - r.phi_est)) for r in runs])
    return holevo_from_phasors(z)


# ---------------------------------------------------------------------------
# Exact (enumeration-based) deviations
# ---------------------------------------------------------------------------

def phase_dependent_deviation(dist: OutcomeDistribution, phi: float) -> float:
    """D_H at a fixed true phase, from the exact outcome distribution."""
    p = dist.probabilities(phi)
    ests = dist.estimates()
    z = np.sum(p * np.exp(1j * (phi - ests)))
    mu = abs(z)
    if mu < MU_FLOOR:
        raise DeviationOverflowError("conditional resultant length vanished")
    return float(mu ** -2 - 1.0)


def holevo_deviation_exact(dist: OutcomeDistribution,
                           grid_points: int = DEFAULT_PHI_GRID) -> float:
    """Ab-initio Holevo deviation with the phase average taken on a uniform grid.

    The integrand is a trigonometric polynomial of bounded degree, so the
    uniform grid (trapezoid on a periodic function) is exact once the grid
    exceeds the bandwidth; the default is far beyond that.
    """
    grid = np.arange(grid_points) * 2.0 * math.pi / grid_points
    tab = dist.tabulate(grid)
    ests = dist.estimates()
    z = (tab * np.exp(1j * (grid[:, None] - ests[None, :]))).sum(axis=1).mean()
    mu = abs(z)
    if mu < MU_FLOOR:
        raise DeviationOverflowError("resultant length vanished")
    return float(mu ** -2 - 1.0)


def calibrate_estimator(dist: OutcomeDistribution,
                        grid_points: int = DEFAULT_PHI_GRID) -> dict[int, float]:
    """Bayes-optimal per-outcome estimates arg integral P(y|phi) e^{i phi} dphi.

    Needs a uniform grid of at least 720 points so the quadrature is exact
    for every distribution this package produces.
    """
    if grid_points < 720:
        raise MetricsError("calibration grid must have at least 720 points")
    grid = np.arange(grid_points) * 2.0 * math.pi / grid_points
    tab = dist.tabulate(grid)
    table: dict[int, float] = {}
    for y in range(dist.n_outcomes):
        resultant = np.mean(tab[:, y] * np.exp(1j * grid))
        if abs(resultant) < MU_FLOOR:
            raise MetricsError(f"outcome {y} has a vanishing posterior resultant")
        table[y] = float(np.angle(resultant) % (2.0 * math.pi))
    return table


# ---------------------------------------------------------------------------
# Analytic probability density and bounds
# ---------------------------------------------------------------------------

def analytic_pdf(coeffs: np.ndarray, phi: float,
                 phi_est: np.ndarray | float) -> np.ndarray | float:
    """Estimate density (1/2pi) |sum_n C_n e^{-i n (phi_est - phi)}|^2.

    `coeffs` is normalised to unit square sum so the density integrates to
    one over a 2 pi period.
    """
    c = np.asarray(coeffs, dtype=complex)
    norm = np.linalg.norm(c)
    if norm < 1e-15:
        raise MetricsError("coefficients are not normalisable")
    c = c / norm
    delta = np.asarray(phi_est, dtype=float) - phi
    n = np.arange(c.size)
    amp = np.tensordot(np.exp(-1j * np.multiply.outer(delta, n)), c, axes=([-1], [0]))
    return np.abs(amp) ** 2 / (2.0 * math.pi)


def hl_bound(n_resources: int) -> float:
    """Exact Heisenberg limit tan^2(pi / (N+2)) on the Holevo variance."""
    if n_resources < 1:
        raise MetricsError("need at least one resource")
    return math.tan(math.pi / (n_resources + 2)) ** 2


def qpea_bound(n_resources: int) -> float:
    """Holevo variance 2/N + 1/N^2 of the plain estimation algorithm."""
    if n_resources < 1:
        raise MetricsError("need at least one resource")
    return 2.0 / n_resources + 1.0 / n_resources ** 2


# ---------------------------------------------------------------------------
# Shot-noise limit: independent photons at fixed measurement angles
# ---------------------------------------------------------------------------

def _outcome_fourier_side(thetas: np.ndarray) -> np.ndarray:
    """Coefficient of e^{-i phi} in prod_l (1 + u_l cos(phi - theta_l)) / 2,
    for all 2^m sign vectors u at once.

    Row r of the result corresponds to u read off the bits of r (bit l is
    photon l, 0 -> +1, 1 -> -1).
    """
    m = len(thetas)
    width = 2 * m + 1  # frequencies -m .. m
    coeffs = np.zeros((1, width), dtype=complex)
    coeffs[0, m] = 1.0
    for ell, th in enumerate(thetas):
        plus = 0.25 * np.exp(-1j * th)   # e^{+i phi} coefficient, u = +1
        minus = 0.25 * np.exp(1j * th)   # e^{-i phi} coefficient, u = +1
        up = np.zeros_like(coeffs)
        up[:, 1:] += plus * coeffs[:, :-1]
        up[:, :-1] += minus * coeffs[:, 1:]
        branch_plus = 0.5 * coeffs + up
        branch_minus = 0.5 * coeffs - up
        coeffs = np.concatenate([branch_plus, branch_minus], axis=0)
    return coeffs[:, m - 1]


def snl_mu(thetas: np.ndarray) -> float:
    """Mean resultant length of the optimal estimate from m single photons
    measured at the given angles.

    Evaluates mu = sum_u |(1/2pi) integral e^{i phi} p(u | phi, theta) dphi|
    by expanding the product of per-photon likelihoods as a trigonometric
    polynomial; the integral picks out the e^{-i phi} coefficient.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if thetas.size > 12:
        raise MetricsError("angle sets beyond 12 photons are not supported")
    return float(np.sum(np.abs(_outcome_fourier_side(thetas))))


def snl_mu_quadrature(thetas: np.ndarray) -> float:
    """Oracle for snl_mu using adaptive quadrature outcome by outcome."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    m = thetas.size
    total = 0.0
    for r in range(2 ** m):
        u = np.array([1.0 if not (r >> ell) & 1 else -1.0 for ell in range(m)])

        def integrand(phi, trig):
            p = np.prod(0.5 * (1.0 + u * np.cos(phi - thetas)))
            return trig(phi) * p

        re, _ = integrate.quad(integrand, 0.0, 2.0 * math.pi, args=(math.cos,),
                               limit=200)
        im, _ = integrate.quad(integrand, 0.0, 2.0 * math.pi, args=(math.sin,),
                               limit=200)
        total += math.hypot(re, im) / (2.0 * math.pi)
    return total


def snl_variance(thetas: np.ndarray) -> float:
    """Holevo variance mu^-2 - 1 of the fixed-angle single-photon strategy."""
    mu = snl_mu(thetas)
    if mu < MU_FLOOR:
        raise DeviationOverflowError("angle set gives vanishing resultant")
    return mu ** -2 - 1.0


def snl_optimize(m: int, restarts: int = 64, seed: int = 20240901,
                 xatol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Minimise the fixed-angle Holevo variance over measurement angles.

    The landscape is multimodal, so a simplex search is restarted from
    `restarts` random angle sets; the overall phase origin is gauged away by
    pinning the first angle to zero.  Solutions are not unique; only the
    variance value is meaningful.
    """
    if m < 1 or m > 10:
        raise MetricsError("optimiser supports 1 to 10 photons")
    if m == 1:
        return np.zeros(1), snl_variance(np.zeros(1))
    rng = np.random.default_rng(seed)

    def objective(free):
        return -snl_mu(np.concatenate([[0.0], free]))

    best_angles, best_mu = None, -1.0
    for _ in range(restarts):
        start = rng.uniform(0.0, 2.0 * math.pi, size=m - 1)
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-12,
                                         "maxiter": 4000, "maxfev": 8000})
        if -res.fun > best_mu:
            best_mu = -res.fun
            best_angles = np.concatenate([[0.0], res.x])
    if best_angles is None or best_mu < MU_FLOOR:
        raise MetricsError("optimiser failed to converge within the restart budget")
    return best_angles, float(best_mu ** -2 - 1.0)


# ---------------------------------------------------------------------------
# State quality
# ---------------------------------------------------------------------------

def _sqrtm_psd(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    # Square-rooting numerical noise (~1e-17) would inject ~1e-9 errors, so
    # zero everything far below the leading eigenvalue.
    floor = 1e-14 * max(vals.max(), 1e-300)
    vals = np.where(vals > floor, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray, psd_tol: float = 1e-8) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Against a pure second argument this reduces to <psi|rho|psi>.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape or rho.ndim != 2:
        raise MetricsError("density matrices must share a square shape")
    for mat in (rho, sigma):
        if np.linalg.eigvalsh(mat).min() < -psd_tol:
            raise MetricsError("input is not positive semidefinite")
    s = _sqrtm_psd(rho)
    inner = _sqrtm_psd(s @ sigma @ s)
    value = float(np.trace(inner).real ** 2)
    if value > 1.0 + 1e-6:
        raise MetricsError(f"fidelity {value} exceeds 1 beyond tolerance")
    return min(value, 1.0)


def purity(rho: np.ndarray) -> float:
    """tr rho^2; equals the squared Frobenius norm for Hermitian input."""
    rho = np.asarray(rho, dtype=complex)
    return float(np.trace(rho @ rho).real)
