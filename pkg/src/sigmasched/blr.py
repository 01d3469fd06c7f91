"""Online Bayesian linear regression for behavior-time prediction.

The model is the conjugate Normal-Inverse-Gamma family::

    noise_var ~ InvGamma(a, b)
    w | noise_var ~ N(mu, noise_var * inv(precision))
    y | w, noise_var ~ N(w @ x, noise_var)

Weight priors are elicited from a training cohort: pooled least squares
gives point estimates and coefficient t-tests, per-participant least squares
gives the spread of estimates across people. Significant coefficients keep
the pooled estimate and the full spread; the rest get mean zero and half the
spread. The prior precision is scaled so that the marginal weight SDs at the
prior noise mean equal the elicited SDs.

Predictions use a plug-in Gaussian predictive SD,
``sqrt(b/(a-1) * (1 + x @ inv(precision) @ x))``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, stats

from .core import (
    SLOTS,
    BehaviorEvent,
    PredictionWithUQ,
    SlotKind,
    UserProvidedSchedule,
    resolve_user_time,
    weekday_of,
)
from .data import InsufficientData, Participant

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "intercept",
    "user_time",
    "dow_tuesday",
    "dow_wednesday",
    "dow_thursday",
    "dow_friday",
    "dow_saturday",
    "dow_sunday",
    "is_evening",
    "past7_min",
    "past7_max",
    "past7_cv",
    "most_recent",
    "no_brush_days_past7",
)
N_FEATURES = len(FEATURE_NAMES)
WINDOW_DAYS = 7
ALPHA = 0.05
PRIOR_SHAPE = 3.0
SD_FLOOR = 1e-6
NOISE_VAR_FLOOR = 1e-6
RIDGE_SCALE = 1e-6


class NumericalFailure(ArithmeticError):
    pass


class DegenerateNoise(ValueError):
    pass


class SingularDesign(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# Features

CellMap = Mapping[tuple[int, SlotKind], float]


def _features(
    times: CellMap,
    schedule: UserProvidedSchedule,
    day_index: int,
    slot: SlotKind,
    anchor: int,
) -> NDArray[np.float64]:
    user_time = resolve_user_time(schedule, day_index, slot, anchor)
    x = np.zeros(N_FEATURES)
    x[0] = 1.0
    x[1] = user_time
    dow = weekday_of(day_index, anchor)
    if dow > 0:
        x[1 + dow] = 1.0
    x[8] = float(slot is SlotKind.EVENING)

    window = range(day_index - WINDOW_DAYS, day_index)
    same_slot = [times[(d, slot)] for d in window if (d, slot) in times]
    if len(same_slot) >= 2:
        arr = np.asarray(same_slot)
        x[9], x[10] = arr.min(), arr.max()
        x[11] = arr.std(ddof=1) / arr.mean()
        x[12] = same_slot[-1]
    else:
        x[9] = x[10] = x[12] = user_time
        x[11] = 0.0
    brushed = sum(1 for d in window if any((d, s) in times for s in SLOTS))
    x[13] = WINDOW_DAYS - brushed
    return x


def featurize(
    history: Iterable[BehaviorEvent],
    schedule: UserProvidedSchedule,
    day_index: int,
    slot: SlotKind,
    anchor: int,
) -> NDArray[np.float64]:
    """Regressors for the (day, slot) cell given everything observed before it.

    Window statistics use the same slot over the trailing seven calendar
    days. With fewer than two events in the window, min, max and most
    recent fall back to the user-provided time and the coefficient of
    variation to 0. The no-brush count covers days in the window with no
    event in either slot.
    """
    here = (day_index, slot.order)
    times = {}
    for e in history:
        if e.key >= here:
            raise ValueError(f"history event at {e.key} is not before cell {here}")
        times[(e.day_index, e.slot)] = e.true_time
    return _features(times, schedule, day_index, slot, anchor)


def design_matrix(participant: Participant, anchor: int) -> tuple[NDArray, NDArray]:
    """Training rows (features, targets) for a participant's analyzable events.

    Window features see every observed event, including intervened ones;
    only analyzable events become rows.
    """
    times: dict[tuple[int, SlotKind], float] = {}
    rows, ys = [], []
    for e in participant.events:
        if not e.intervened_before:
            rows.append(_features(times, participant.schedule, e.day_index, e.slot, anchor))
            ys.append(e.true_time)
        times[(e.day_index, e.slot)] = e.true_time
    X = np.asarray(rows, dtype=float).reshape(-1, N_FEATURES)
    return X, np.asarray(ys, dtype=float)


# ---------------------------------------------------------------------------
# Prior specification and elicitation


@dataclass
class PriorSpec:
    weight_means: NDArray[np.float64]
    weight_sds: NDArray[np.float64]
    noise_shape: float
    noise_scale: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.weight_means = np.asarray(self.weight_means, dtype=float)
        self.weight_sds = np.asarray(self.weight_sds, dtype=float)
        if self.weight_means.shape != self.weight_sds.shape or self.weight_means.ndim != 1:
            raise ValueError("weight_means and weight_sds must be vectors of equal length")
        if not np.all(self.weight_sds > 0):
            raise ValueError("weight_sds must be strictly positive")
        if not self.noise_shape > 1 or not self.noise_scale > 0:
            raise ValueError("need noise_shape > 1 and noise_scale > 0")

    @property
    def noise_var_mean(self) -> float:
        return self.noise_scale / (self.noise_shape - 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_names": list(FEATURE_NAMES) if len(self.weight_means) == N_FEATURES else None,
            "weight_means": [float(v) for v in self.weight_means],
            "weight_sds": [float(v) for v in self.weight_sds],
            "noise_shape": float(self.noise_shape),
            "noise_scale": float(self.noise_scale),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PriorSpec":
        return cls(
            np.asarray(raw["weight_means"], dtype=float),
            np.asarray(raw["weight_sds"], dtype=float),
            float(raw["noise_shape"]),
            float(raw["noise_scale"]),
            dict(raw.get("diagnostics") or {}),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "PriorSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _normal_equations_solve(X: NDArray, y: NDArray) -> tuple[NDArray, NDArray, bool]:
    """Least squares via normal equations; returns (beta, inv(XtX), used_ridge).

    Rank-deficient designs fall back to ridge with penalty
    ``1e-6 * trace(XtX) / d``.
    """
    d = X.shape[1]
    xtx = X.T @ X
    try:
        if np.linalg.matrix_rank(X) < d:
            raise SingularDesign("rank-deficient design")
        cho = linalg.cho_factor(xtx)
        ridge = False
    except (SingularDesign, linalg.LinAlgError):
        lam = RIDGE_SCALE * np.trace(xtx) / d
        cho = linalg.cho_factor(xtx + lam * np.eye(d))
        ridge = True
    beta = linalg.cho_solve(cho, X.T @ y)
    return beta, linalg.cho_solve(cho, np.eye(d)), ridge


def prior_moments(
    estimates: NDArray, p_values: NDArray, spreads: NDArray, alpha: float = ALPHA
) -> tuple[NDArray, NDArray]:
    """Per-coefficient prior (mean, sd).

    Significant coefficients keep the pooled estimate and the cross-participant
    spread; the others get mean 0 and half the spread.
    """
    significant = np.asarray(p_values) < alpha
    means = np.where(significant, estimates, 0.0)
    sds = np.where(significant, spreads, np.asarray(spreads) / 2.0)
    return means, np.maximum(sds, SD_FLOOR)


def elicit_priors(
    designs: Sequence[tuple[NDArray, NDArray]], alpha: float = ALPHA
) -> PriorSpec:
    """Elicit a weight/noise prior from per-participant training designs.

    Participants with fewer than ``d + 2`` rows are left out of both fits.
    """
    d = N_FEATURES if not designs else designs[0][0].shape[1]
    usable = [(X, y) for X, y in designs if len(y) >= d + 2]
    if len(usable) < len(designs):
        logger.info("elicitation skipped %d participants with < %d rows",
                    len(designs) - len(usable), d + 2)
    if len(usable) < 2:
        raise InsufficientData(
            f"prior elicitation needs >= 2 participants with >= {d + 2} usable events, "
            f"got {len(usable)}"
        )

    X = np.vstack([X for X, _ in usable])
    y = np.concatenate([y for _, y in usable])
    beta, xtx_inv, pooled_ridge = _normal_equations_solve(X, y)
    resid = y - X @ beta
    dof = max(len(y) - d, 1)
    resid_var = float(resid @ resid) / dof
    se = np.sqrt(np.maximum(resid_var * np.diag(xtx_inv), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = np.where(se > 0, np.abs(beta) / se, np.where(beta != 0, np.inf, 0.0))
    p_values = 2.0 * stats.t.sf(t_stat, dof)

    per_participant = []
    n_ridge = 0
    for Xi, yi in usable:
        bi, _, ridge = _normal_equations_solve(Xi, yi)
        per_participant.append(bi)
        n_ridge += ridge
    spread = np.std(np.asarray(per_participant), axis=0, ddof=1)

    means, sds = prior_moments(beta, p_values, spread, alpha)
    noise_var = max(resid_var, NOISE_VAR_FLOOR)
    return PriorSpec(
        means,
        sds,
        PRIOR_SHAPE,
        2.0 * noise_var,
        diagnostics={
            "n_participants": len(usable),
            "n_rows": int(len(y)),
            "pooled_estimates": [float(v) for v in beta],
            "p_values": [float(v) for v in p_values],
            "cross_participant_sd": [float(v) for v in spread],
            "pooled_residual_var": resid_var,
            "pooled_ridge": bool(pooled_ridge),
            "participants_ridge": int(n_ridge),
        },
    )


def elicit_from_participants(participants: Sequence[Participant], anchor: int) -> PriorSpec:
    return elicit_priors([design_matrix(p, anchor) for p in participants])


# ---------------------------------------------------------------------------
# Posterior


@dataclass(frozen=True)
class NIGPosterior:
    mu: NDArray[np.float64]
    precision: NDArray[np.float64]
    a: float
    b: float
    n_obs: int = 0

    @classmethod
    def from_prior(cls, prior: PriorSpec) -> "NIGPosterior":
        precision = np.diag(prior.noise_var_mean / prior.weight_sds**2)
        return cls(prior.weight_means.copy(), precision, prior.noise_shape, prior.noise_scale, 0)

    @property
    def noise_var(self) -> float:
        """Posterior mean of the noise variance, ``b / (a - 1)``."""
        if self.a <= 1:
            raise DegenerateNoise(f"noise-variance mean undefined for a={self.a}")
        return self.b / (self.a - 1.0)


def _cholesky(precision: NDArray) -> tuple[NDArray, bool]:
    try:
        return linalg.cho_factor(precision)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"precision matrix is not positive definite: {exc}") from exc


def blr_update(post: NIGPosterior, x: NDArray, y: float) -> NIGPosterior:
    """Conjugate rank-one update with a single observation ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    precision = post.precision + np.outer(x, x)
    cho = _cholesky(precision)
    mu = linalg.cho_solve(cho, post.precision @ post.mu + x * y)
    # Equivalent to b + (y^2 + mu0'L0 mu0 - mu'L mu)/2 without the cancellation.
    leverage = float(x @ linalg.cho_solve(_cholesky(post.precision), x))
    resid = y - float(x @ post.mu)
    b = post.b + 0.5 * resid * resid / (1.0 + leverage)
    return NIGPosterior(mu, precision, post.a + 0.5, b, post.n_obs + 1)


def blr_batch(prior: PriorSpec | NIGPosterior, X: NDArray, y: NDArray) -> NIGPosterior:
    """Closed-form posterior from the full sufficient statistics."""
    start = NIGPosterior.from_prior(prior) if isinstance(prior, PriorSpec) else prior
    X = np.asarray(X, dtype=float).reshape(-1, len(start.mu))
    y = np.asarray(y, dtype=float)
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} entries")
    if len(y) == 0:
        return start
    precision = start.precision + X.T @ X
    mu = linalg.cho_solve(_cholesky(precision), start.precision @ start.mu + X.T @ y)
    resid = y - X @ mu
    shift = mu - start.mu
    b = start.b + 0.5 * (float(resid @ resid) + float(shift @ start.precision @ shift))
    return NIGPosterior(mu, precision, start.a + 0.5 * len(y), b, start.n_obs + len(y))


def blr_predict(post: NIGPosterior, x: NDArray) -> PredictionWithUQ:
    x = np.asarray(x, dtype=float)
    noise_var = post.noise_var
    leverage = float(x @ linalg.cho_solve(_cholesky(post.precision), x))
    return PredictionWithUQ(float(x @ post.mu), math.sqrt(noise_var * (1.0 + max(leverage, 0.0))))


# ---------------------------------------------------------------------------
# Replay


def replay_participant(
    participant: Participant, prior: PriorSpec, anchor: int, n_days: int
) -> Iterator[tuple[int, SlotKind, float, PredictionWithUQ]]:
    """Walk every (day, slot) cell in order, predicting before observing.

    Yields ``(day, slot, user_time, prediction)``. The posterior absorbs an
    event only after its cell has been predicted, and only analyzable
    events update it.
    """
    post = NIGPosterior.from_prior(prior)
    events = {(e.day_index, e.slot): e for e in participant.events}
    times: dict[tuple[int, SlotKind], float] = {}
    for day in range(n_days):
        for slot in SLOTS:
            x = _features(times, participant.schedule, day, slot, anchor)
            yield day, slot, float(x[1]), blr_predict(post, x)
            event = events.get((day, slot))
            if event is None:
                continue
            if not event.intervened_before:
                post = blr_update(post, x, event.true_time)
            times[(day, slot)] = event.true_time
