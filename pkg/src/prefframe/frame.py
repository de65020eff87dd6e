"""Preference frames: small reversible Markov chains over communities.

A K-preference frame is a row-stochastic, nonsingular, reversible K x K
matrix ``R``. Everything here is cheap (K is small) and pure.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import (
    DisconnectedFrame,
    FrameError,
    NoConvergence,
    NotReversible,
    NotStochastic,
    Singular,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameOptions:
    row_normalize: bool = True
    # accepted raw row-sum deviation when normalizing; strict bound afterwards
    tol_stoch_raw: float = 2e-2
    tol_stoch: float = 1e-12
    tol_rev: float = 1e-8
    tol_sing: float = 1e-10
    tol_eig: float = 1e-10
    on_irreversible: Literal["error", "warn", "symmetrize"] = "error"


@dataclass(frozen=True, eq=False)
class PreferenceFrame:
    """Validated K-preference frame.

    Attributes
    ----------
    R : (K, K) ndarray
        Row-stochastic transition matrix.
    rho : (K,) ndarray
        Stationary distribution, ``rho @ R == rho``.
    eigenvalues : (K,) ndarray
        Real eigenvalues of ``R`` by decreasing magnitude, positive first on ties.
    eigenvectors : (K, K) ndarray
        Right eigenvectors of ``R`` as columns, in the same order.
    """

    R: np.ndarray
    rho: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    reversibility_violation: float = 0.0
    normalization_correction: float = 0.0
    symmetrized: bool = False
    notes: tuple[str, ...] = field(default=())

    @property
    def K(self) -> int:
        return self.R.shape[0]

    def symmetric_form(self) -> np.ndarray:
        """``diag(rho)^{1/2} R diag(rho)^{-1/2}``; symmetric for reversible R."""
        s = np.sqrt(self.rho)
        return s[:, None] * self.R / s[None, :]

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "row_normalize": False}


def order_by_magnitude(values: np.ndarray) -> np.ndarray:
    """Indices sorting ``values`` by decreasing |value|, positive before negative."""
    values = np.asarray(values, dtype=float)
    return np.lexsort((-values, -np.abs(values)))


def stationary_distribution(R, tol: float = 1e-10) -> np.ndarray:
    """Left principal eigenvector of a stochastic matrix, normalized to sum 1.

    Solves ``(R^T - I) x = 0`` with the constraint ``sum(x) = 1`` appended,
    as a direct least-squares problem.
    """
    R = np.asarray(R, dtype=float)
    K = R.shape[0]
    G = R.T - np.eye(K)
    sv = np.linalg.svd(G, compute_uv=False)
    # one zero singular value for a simple eigenvalue 1; two or more otherwise
    if K > 1 and sv[-2] <= tol * max(1.0, sv[0]):
        raise DisconnectedFrame("eigenvalue 1 of the frame has multiplicity > 1")
    system = np.vstack([G, np.ones((1, K))])
    rhs = np.zeros(K + 1)
    rhs[-1] = 1.0
    x, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = np.abs(x @ R - x).max()
    if residual > max(tol, 1e-12) * 100:
        raise NoConvergence(f"stationary residual {residual:.3g}")
    if x.min() < -1e3 * tol:
        raise DisconnectedFrame("stationary distribution has negative mass; frame is reducible")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    return x


def _symmetrize(R: np.ndarray, rho: np.ndarray) -> np.ndarray:
    # reversible projection with the same stationary distribution
    flow = rho[:, None] * R
    return 0.5 * (flow + flow.T) / rho[:, None]


def build_preference_frame(R_raw, options: FrameOptions | None = None) -> PreferenceFrame:
    """Validate ``R_raw`` and return a :class:`PreferenceFrame`.

    Raises
    ------
    NotStochastic, Singular, NotReversible, DisconnectedFrame
    """
    opts = options or FrameOptions()
    R = np.array(R_raw, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] == 0:
        raise FrameError(f"frame matrix must be square, got shape {R.shape}")
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise NotStochastic("frame matrix has negative or non-finite entries")
    sums = R.sum(axis=1)
    if np.any(sums <= 0):
        raise NotStochastic("frame matrix has an all-zero row")

    notes = []
    correction = float(np.abs(sums - 1.0).max())
    if opts.row_normalize:
        if correction > opts.tol_stoch_raw:
            raise NotStochastic(f"row sums deviate from 1 by {correction:.3g}")
        if correction > 1e-9:
            log.warning("row-normalizing frame matrix (max row-sum correction %.3g)", correction)
            notes.append(f"row sums corrected by up to {correction:.3g}")
        R = R / sums[:, None]
    elif correction > opts.tol_stoch:
        raise NotStochastic(f"row sums deviate from 1 by {correction:.3g}")
    if R.max() > 1.0 + opts.tol_stoch:
        raise NotStochastic("frame entries exceed 1")

    K = R.shape[0]
    smin = np.linalg.svd(R, compute_uv=False)[-1]
    if smin <= opts.tol_sing:
        raise Singular(f"frame matrix is singular (smallest singular value {smin:.3g})")

    rho = stationary_distribution(R, tol=opts.tol_eig)
    if rho.min() <= 0:
        raise DisconnectedFrame("stationary distribution has zero entries")

    flow = rho[:, None] * R
    violation = float(np.abs(flow - flow.T).max())
    symmetrized = False
    if violation > opts.tol_rev:
        if opts.on_irreversible == "error":
            raise NotReversible(f"detailed balance violated by {violation:.3g}")
        if opts.on_irreversible == "symmetrize":
            log.warning("replacing irreversible frame by its reversible projection "
                        "(detailed balance violation %.3g)", violation)
            R = _symmetrize(R, rho)
            symmetrized = True
            notes.append(f"symmetrized; detailed balance violation was {violation:.3g}")
            smin = np.linalg.svd(R, compute_uv=False)[-1]
            if smin <= opts.tol_sing:
                raise Singular("reversible projection of the frame is singular")
        else:
            log.warning("frame violates detailed balance by %.3g", violation)
            notes.append(f"detailed balance violated by {violation:.3g}")

    if violation <= opts.tol_rev or symmetrized:
        s = np.sqrt(rho)
        B = s[:, None] * R / s[None, :]
        vals, X = np.linalg.eigh(0.5 * (B + B.T))
        vecs = X / s[:, None]
    else:
        vals, vecs = np.linalg.eig(R)
        if np.abs(vals.imag).max() > 1e-8:
            raise NotReversible("frame has complex eigenvalues")
        vals, vecs = vals.real, vecs.real
    order = order_by_magnitude(vals)
    vals, vecs = vals[order], vecs[:, order]
    if K > 1 and abs(1.0 - abs(vals[1])) <= opts.tol_sing:
        raise DisconnectedFrame("eigenvalue of magnitude 1 is not simple")

    return PreferenceFrame(
        R=R,
        rho=rho,
        eigenvalues=vals,
        eigenvectors=vecs,
        reversibility_violation=violation,
        normalization_correction=correction,
        symmetrized=symmetrized,
        notes=tuple(notes),
    )


def frame_factor(frame: PreferenceFrame | np.ndarray) -> float:
    """``max_k (r_kk + sum_{l != k} sqrt(r_kl r_lk))``, the factor multiplying c
    in the spurious-eigenvalue bound."""
    R = frame.R if isinstance(frame, PreferenceFrame) else np.asarray(frame, dtype=float)
    G = np.sqrt(R * R.T)  # diagonal of G is r_kk
    return float(G.sum(axis=1).max())


def column_sum_bound(frame: PreferenceFrame | np.ndarray) -> float:
    """Cauchy-Schwarz upper bound ``max_k sqrt(sum_l r_lk)`` on :func:`frame_factor`."""
    R = frame.R if isinstance(frame, PreferenceFrame) else np.asarray(frame, dtype=float)
    return float(np.sqrt(R.sum(axis=0)).max())


def frame_to_json(frame: PreferenceFrame) -> str:
    return json.dumps(frame.to_dict())


def frame_from_json(text: str | dict, options: FrameOptions | None = None) -> PreferenceFrame:
    """Load a frame; rho and eigenvalues are always recomputed."""
    obj = json.loads(text) if isinstance(text, str) else dict(text)
    opts = options or FrameOptions()
    extra = {k: obj[k] for k in ("on_irreversible", "tol_rev") if k in obj}
    opts = FrameOptions(**{**opts.__dict__, "row_normalize": bool(obj.get("row_normalize", True)), **extra})
    return build_preference_frame(obj["R"], opts)
