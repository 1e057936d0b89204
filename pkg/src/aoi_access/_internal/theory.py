# Convergence certificate for the age-gated unfolded iteration.
#
# With unit-norm pilots, mutual coherence mu1 over all column pairs, and mu2 over pairs
# whose first column is not gated, thresholds of the form
# `theta_l = mu2 * sup ||h^l - h*||_1 + C_P * sigma` keep every iterate supported inside
# the true support, and the error then obeys
#
#     ||h^l - h*||_2 <= s B exp(-c l) + C sigma,
#     c = -log(mu1 s - mu1 + mu2 s),   C = 2 s C_P / (1 - mu1 s - mu2 s + mu1).
#
# This module computes the constants, builds datasets that satisfy the premises, runs
# the iteration (unit step) and checks each step of the argument numerically.


from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from scipy.linalg import qr

from aoi_access._internal.exceptions import CertificationError
from aoi_access._internal.log import get_logger
from aoi_access._internal.solvers import age_gated_threshold
from aoi_access._internal.system import PilotMatrix, normalize_columns

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

_logger = get_logger(__name__)

# Relative slack for float round-off in thresholds and bound comparisons.
_SLACK = 1e-9
_NORM_TOL = 1e-9


@dataclass(frozen=True)
class CoherenceReport:
    mu1: float
    mu2: float
    c_p: float
    """Largest absolute pilot entry."""
    sparsity: int
    rate: float
    """Decay exponent c; +inf when the contraction factor is zero."""
    constant: float
    """Noise amplification C; +inf when the contraction factor reaches one."""
    s_admissible: int

    @property
    def contraction(self) -> float:
        """mu1 s - mu1 + mu2 s, the per-layer l1 contraction factor exp(-c)."""
        return self.mu1 * self.sparsity - self.mu1 + self.mu2 * self.sparsity


def _bound_constants(mu1: float, mu2: float, sparsity: int, c_p: float) -> tuple[float, float]:
    contraction = mu1 * sparsity - mu1 + mu2 * sparsity
    rate = math.inf if contraction <= 0.0 else -math.log(contraction)
    denominator = 1.0 - mu1 * sparsity - mu2 * sparsity + mu1
    constant = 2.0 * sparsity * c_p / denominator if denominator > 0.0 else math.inf
    return rate, constant


def _admissible_sparsity(mu1: float, mu2: float, n_devices: int) -> int:
    """Largest s with mu1 s - mu1 + mu2 s < 1, capped at S."""
    if mu1 + mu2 == 0.0:
        return n_devices
    # the contraction factor must stay strictly below one; ceil(x) - 1 is the largest integer s < x
    return min(math.ceil((1.0 + mu1) / (mu1 + mu2)) - 1, n_devices)


def coherence(pilot: PilotMatrix | np.ndarray, gated: Iterable[int] = (), sparsity: int = 1) -> CoherenceReport:
    """Coherence constants of a unit-column pilot matrix under a gate.

    Raises:
        CertificationError: If a column is not unit-norm (reason `pilot-not-normalized`).
    """
    entries = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot, dtype=np.float64)
    norms = np.linalg.norm(entries, axis=0)
    if np.any(np.abs(norms - 1.0) > _NORM_TOL):
        msg = "coherence bounds need unit-norm pilot columns"
        raise CertificationError(msg, reason="pilot-not-normalized")
    n_devices = entries.shape[1]
    gram = np.abs(entries.T @ entries)
    np.fill_diagonal(gram, 0.0)
    mu1 = float(gram.max()) if n_devices > 1 else 0.0
    keep = np.ones(n_devices, dtype=bool)
    keep[list(gated)] = False
    mu2 = float(gram[keep].max()) if keep.any() and n_devices > 1 else 0.0
    c_p = float(np.abs(entries).max())
    rate, constant = _bound_constants(mu1, mu2, sparsity, c_p)
    return CoherenceReport(
        mu1=mu1,
        mu2=mu2,
        c_p=c_p,
        sparsity=sparsity,
        rate=rate,
        constant=constant,
        s_admissible=_admissible_sparsity(mu1, mu2, n_devices),
    )


def lista_constants(mu1: float, sparsity: int, c_p: float) -> tuple[float, float]:
    """Constants (c, C) of the ungated analysis: c = -log(2 mu1 s - mu1), C = 2 s C_P / (1 - 2 mu1 s + mu1)."""
    contraction = 2.0 * mu1 * sparsity - mu1
    rate = math.inf if contraction <= 0.0 else -math.log(contraction)
    denominator = 1.0 - 2.0 * mu1 * sparsity + mu1
    return rate, (2.0 * sparsity * c_p / denominator if denominator > 0.0 else math.inf)


# ---------------------------------------------------------------------------
# Instances and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CertificationDataset:
    """Ground truths (S, Q) and noise (M, Q) with |h| <= B, ||h||_0 <= s, ||n||_1 <= sigma, zero on the gate."""

    truths: np.ndarray
    noise: np.ndarray
    gated: np.ndarray
    amplitude: float
    sparsity: int
    sigma: float

    @property
    def size(self) -> int:
        return self.truths.shape[1]

    def validate(self) -> None:
        """Raise `CertificationError` (reason `outside-dataset`) if a premise is violated."""
        if self.size == 0:
            msg = "certification needs at least one instance"
            raise CertificationError(msg, reason="empty-dataset")
        problems = []
        if np.any(np.abs(self.truths) > self.amplitude):
            problems.append(f"an entry exceeds the amplitude bound {self.amplitude}")
        if np.any(np.count_nonzero(self.truths, axis=0) > self.sparsity):
            problems.append(f"a ground truth has more than {self.sparsity} nonzeros")
        if np.any(np.abs(self.noise).sum(axis=0) > self.sigma * (1.0 + _SLACK)):
            problems.append(f"a noise vector exceeds l1 norm {self.sigma}")
        if self.gated.size and np.any(self.truths[self.gated] != 0.0):
            problems.append("a gated device carries a nonzero value")
        if problems:
            msg = "dataset outside the certified class: " + "; ".join(problems)
            raise CertificationError(msg, reason="outside-dataset")


def construct_instance(
    pilot_len: int,
    n_devices: int,
    sparsity: int,
    rng: np.random.Generator,
    *,
    gated_fraction: float = 0.5,
    max_tries: int = 200,
) -> tuple[PilotMatrix, np.ndarray]:
    """Draw a low-coherence pilot and a gate whose admissible sparsity reaches `sparsity`.

    The pilot is the first M rows of the orthogonal factor of an S x S Gaussian matrix,
    with columns rescaled to unit norm; for M close to S its coherence is far below
    that of an i.i.d. Gaussian draw. The gate closes a random `gated_fraction` of columns.

    Raises:
        CertificationError: If no draw within `max_tries` is admissible (reason `sparsity-not-admissible`).
    """
    n_gated = math.floor(gated_fraction * n_devices)
    best = 0
    for attempt in range(1, max_tries + 1):
        orthogonal, _ = qr(rng.standard_normal((n_devices, n_devices)))
        entries = normalize_columns(orthogonal[:pilot_len, :])
        gated = np.sort(rng.choice(n_devices, size=n_gated, replace=False))
        report = coherence(entries, gated, sparsity)
        best = max(best, report.s_admissible)
        if report.s_admissible >= sparsity:
            _logger.debug("admissible instance after %d draw(s): mu1=%.3f mu2=%.3f", attempt, report.mu1, report.mu2)
            return PilotMatrix(entries), gated
    msg = (
        f"no {pilot_len}x{n_devices} pilot in {max_tries} draws admits sparsity {sparsity} "
        f"(best admissible sparsity {best}); the bound would be vacuous"
    )
    raise CertificationError(msg, reason="sparsity-not-admissible")


def make_dataset(
    pilot: PilotMatrix | np.ndarray,
    *,
    sparsity: int,
    amplitude: float,
    sigma: float,
    size: int,
    gated: Sequence[int] | np.ndarray,
    rng: np.random.Generator,
) -> CertificationDataset:
    """Draw `size` instances: `sparsity` ungated nonzeros uniform in [-B, B], noise with ||n||_1 = sigma."""
    entries = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot, dtype=np.float64)
    pilot_len, n_devices = entries.shape
    gated = np.asarray(gated, dtype=np.int64)
    open_columns = np.setdiff1d(np.arange(n_devices), gated)
    if open_columns.size < sparsity:
        msg = f"only {open_columns.size} ungated columns for sparsity {sparsity}"
        raise CertificationError(msg, reason="outside-dataset")
    truths = np.zeros((n_devices, size))
    for q in range(size):
        support = rng.choice(open_columns, size=sparsity, replace=False)
        truths[support, q] = rng.uniform(-amplitude, amplitude, size=sparsity)
    noise = rng.standard_normal((pilot_len, size))
    if sigma > 0.0:
        noise *= sigma / np.abs(noise).sum(axis=0)
    else:
        noise[:] = 0.0
    return CertificationDataset(truths=truths, noise=noise, gated=gated, amplitude=amplitude, sparsity=sparsity, sigma=sigma)


# ---------------------------------------------------------------------------
# Certificate
# ---------------------------------------------------------------------------


def theta_schedule(states: np.ndarray, truths: np.ndarray, mu2: float, c_p: float, sigma: float) -> np.ndarray:
    """Thresholds theta_l = mu2 * max_q ||h^l_q - h*_q||_1 + C_P sigma for every supplied layer.

    `states` is (layers, S, Q) and `truths` is (S, Q).
    """
    states = np.asarray(states, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if truths.ndim != 2 or truths.shape[1] == 0:  # noqa: PLR2004
        msg = "theta schedule needs a non-empty (S, Q) dataset"
        raise CertificationError(msg, reason="empty-dataset")
    l1 = np.abs(states - truths[None]).sum(axis=1).max(axis=1)
    return mu2 * l1 + c_p * sigma


@dataclass(frozen=True)
class LayerCheck:
    layer: int
    theta: float
    """Threshold used to produce the next layer; nan at the last layer."""
    max_error_l1: float
    max_error_l2: float
    bound: float
    support_included: bool
    recursion_holds: bool

    @property
    def margin(self) -> float:
        return self.bound - self.max_error_l2


@dataclass(frozen=True)
class CertificationReport:
    coherence: CoherenceReport
    amplitude: float
    sigma: float
    layers: list[LayerCheck] = field(default_factory=list)

    @property
    def support_included(self) -> bool:
        return all(check.support_included for check in self.layers)

    @property
    def recursion_holds(self) -> bool:
        return all(check.recursion_holds for check in self.layers)

    @property
    def min_margin(self) -> float:
        return min(check.margin for check in self.layers)

    @property
    def passed(self) -> bool:
        bound_ok = all(check.margin >= -_SLACK * max(1.0, check.bound) for check in self.layers)
        return bound_ok and self.support_included and self.recursion_holds

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "layer": [c.layer for c in self.layers],
                "theta": [c.theta for c in self.layers],
                "max_error_l1": [c.max_error_l1 for c in self.layers],
                "max_error_l2": [c.max_error_l2 for c in self.layers],
                "bound": [c.bound for c in self.layers],
                "margin": [c.margin for c in self.layers],
                "support_included": [c.support_included for c in self.layers],
                "recursion_holds": [c.recursion_holds for c in self.layers],
            }
        )

    def render(self) -> str:
        co = self.coherence
        lines = [
            f"mu1 = {co.mu1:.6f}   mu2 = {co.mu2:.6f}   C_P = {co.c_p:.6f}",
            f"s = {co.sparsity} (admissible up to {co.s_admissible})   B = {self.amplitude:g}   sigma = {self.sigma:g}",
            f"c = {co.rate:.6f}   C = {co.constant:.6f}",
            f"support inclusion: {'holds' if self.support_included else 'VIOLATED'}",
            f"l1 recursion:      {'holds' if self.recursion_holds else 'VIOLATED'}",
            f"min margin:        {self.min_margin:.3e}",
            f"result:            {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def certify_bound(pilot: PilotMatrix | np.ndarray, dataset: CertificationDataset, layers: int) -> CertificationReport:
    """Run the gated iteration with unit step and certified thresholds, checking the bound at every layer.

    Thresholds are built layer by layer from the dataset's worst-case l1 error, so the
    schedule is the one the bound assumes.

    Raises:
        CertificationError: If the dataset violates the premises, the pilot is not
            normalized, or the sparsity exceeds the admissible one.
    """
    entries = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot, dtype=np.float64)
    dataset.validate()
    report = coherence(entries, dataset.gated, dataset.sparsity)
    if dataset.sparsity > report.s_admissible:
        msg = (
            f"sparsity {dataset.sparsity} exceeds the admissible sparsity {report.s_admissible} "
            f"(mu1={report.mu1:.4f}, mu2={report.mu2:.4f}, c={report.rate:.4f}); the bound would be vacuous"
        )
        raise CertificationError(msg, reason="sparsity-not-admissible")

    truths = dataset.truths
    y = entries @ truths + dataset.noise
    gamma = np.ones(entries.shape[1], dtype=bool)
    gamma[dataset.gated] = False
    support = truths != 0.0
    support_sizes = support.sum(axis=0)
    s, amplitude, sigma = dataset.sparsity, dataset.amplitude, dataset.sigma
    contraction = report.contraction
    noise_term = report.constant * sigma if sigma > 0.0 else 0.0

    h = np.zeros_like(truths)
    checks: list[LayerCheck] = []
    # flags describe the step that produced the current layer; layer 0 is the zero start
    included, recursion_ok = True, True
    for layer in range(layers + 1):
        error = h - truths
        l1 = np.abs(error).sum(axis=0)
        l2 = np.sqrt((error**2).sum(axis=0))
        bound = s * amplitude * contraction**layer + noise_term
        if layer == layers:
            checks.append(LayerCheck(layer, math.nan, float(l1.max()), float(l2.max()), bound, included, recursion_ok))
            break
        theta = float(theta_schedule(h[None], truths, report.mu2, report.c_p, sigma)[0]) * (1.0 + _SLACK)
        checks.append(LayerCheck(layer, theta, float(l1.max()), float(l2.max()), bound, included, recursion_ok))
        h_next = age_gated_threshold(h - entries.T @ (entries @ h - y), gamma, theta)
        included = bool(np.all(h_next[~support] == 0.0))
        next_l1 = np.abs(h_next - truths).sum(axis=0)
        allowed = report.mu1 * (support_sizes - 1) * l1 + (theta + report.c_p * sigma) * support_sizes
        recursion_ok = bool(np.all(next_l1 <= allowed * (1.0 + _SLACK) + _SLACK))
        if not (included and recursion_ok):
            _logger.warning("layer %d: support inclusion %s, l1 recursion %s", layer + 1, included, recursion_ok)
        h = h_next
    return CertificationReport(coherence=report, amplitude=amplitude, sigma=sigma, layers=checks)
