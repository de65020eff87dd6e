"""Normalized Laplacians and their spectra.

Eigenvalues are always ordered by decreasing magnitude, positive before
negative on ties. Eigenvectors are sign-fixed so that their entry of
largest magnitude is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CertificateViolation,
    DimensionMismatch,
    EigensolverFailure,
    FrameMismatch,
    ZeroDegreeNode,
)
from .frame import PreferenceFrame, frame_factor, order_by_magnitude
from .models import Partition

FULL_EIGEN_MAX_N = 2000


def normalized_laplacian(M):
    """``L = D^{-1/2} M D^{-1/2}`` for a symmetric nonnegative ``M``.

    Sparse input gives sparse output. Returns ``(L, d)``.
    """
    if sp.issparse(M):
        d = np.asarray(M.sum(axis=1)).ravel()
    else:
        M = np.asarray(M, dtype=float)
        d = M.sum(axis=1)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise ZeroDegreeNode(bad)
    s = 1.0 / np.sqrt(d)
    if sp.issparse(M):
        Dm = sp.diags_array(s)
        L = sp.csr_array(Dm @ M @ Dm)
    else:
        L = s[:, None] * M * s[None, :]
        L = 0.5 * (L + L.T)
    return L, d


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    if vecs.size == 0:
        return vecs
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """Top-K eigen-structure of a normalized Laplacian.

    ``eigenvalues`` holds the full spectrum when ``full`` is true, otherwise
    at least the leading ``K + 1`` values. ``vectors`` keeps every computed
    eigenvector (columns, same order); ``Y`` is its first ``K`` columns.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    K: int
    degrees: np.ndarray | None = None
    full: bool = False
    tol: float = 1e-8

    @property
    def Y(self) -> np.ndarray:
        return self.vectors[:, : self.K]

    @property
    def V(self) -> np.ndarray:
        if self.degrees is None:
            raise ValueError("degrees are required to form V")
        return self.Y / np.sqrt(self.degrees)[:, None]

    @property
    def top(self) -> np.ndarray:
        return self.eigenvalues[: self.K]

    @property
    def lambda_K(self) -> float:
        return float(self.eigenvalues[self.K - 1])

    @property
    def sigma(self) -> float:
        """Eigengap ``|lambda_K| - |lambda_{K+1}|``."""
        if self.eigenvalues.size <= self.K:
            return float(abs(self.eigenvalues[self.K - 1]))
        return float(abs(self.eigenvalues[self.K - 1]) - abs(self.eigenvalues[self.K]))

    @property
    def degenerate(self) -> bool:
        return self.sigma <= self.tol

    @property
    def max_spurious(self) -> float:
        if self.eigenvalues.size <= self.K:
            return 0.0
        return float(abs(self.eigenvalues[self.K]))


def _spectral_scale(L) -> float:
    if sp.issparse(L):
        return float(abs(L).sum(axis=1).max())
    return float(np.abs(L).sum(axis=1).max())


def top_k_eigen(L, K: int, degrees=None, method: str = "auto", extra: int = 1,
                tol: float | None = None) -> SpectralEmbedding:
    """Leading ``K`` eigenpairs of symmetric ``L`` by magnitude.

    ``method="full"`` computes the whole spectrum with a dense solver;
    ``"sparse"`` uses ARPACK for ``K + extra`` pairs; ``"auto"`` picks full
    for ``n <= FULL_EIGEN_MAX_N`` (half that for sparse input).
    """
    n = L.shape[0]
    if K > n or K < 1:
        raise DimensionMismatch(f"K={K} not in [1, n={n}]")
    if method == "auto":
        limit = FULL_EIGEN_MAX_N // 2 if sp.issparse(L) else FULL_EIGEN_MAX_N
        method = "full" if n <= limit or K + extra >= n - 1 else "sparse"
    scale = 1.0
    try:
        if method == "full":
            dense = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)
            vals, vecs = np.linalg.eigh(0.5 * (dense + dense.T))
            scale = max(1.0, float(np.abs(vals).max()))
        elif method == "sparse":
            k = min(K + extra, n - 2)
            v0 = np.full(n, 1.0 / np.sqrt(n))
            vals, vecs = spla.eigsh(L, k=k, which="LM", v0=v0, tol=1e-12, maxiter=20 * n)
            scale = max(1.0, float(np.abs(vals).max()))
        else:
            raise ValueError(f"unknown method {method!r}")
    except (np.linalg.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise EigensolverFailure(str(exc)) from exc
    order = order_by_magnitude(vals)
    vals, vecs = vals[order], _fix_signs(vecs[:, order])
    return SpectralEmbedding(
        eigenvalues=vals,
        vectors=vecs,
        K=K,
        degrees=None if degrees is None else np.asarray(degrees, dtype=float),
        full=(method == "full"),
        tol=tol if tol is not None else 1e-8 * scale,
    )


def embed(M, K: int, method: str = "auto") -> SpectralEmbedding:
    """Laplacian plus top-K eigenpairs with degrees attached, ready for K-means."""
    L, d = normalized_laplacian(M)
    return top_k_eigen(L, K, degrees=d, method=method)


def piecewise_constant_check(V: np.ndarray, partition: Partition) -> float:
    """Largest Euclidean distance between two rows of ``V`` in the same community."""
    worst = 0.0
    for idx in partition.members:
        rows = np.asarray(V[idx], dtype=float)
        for start in range(0, rows.shape[0], 256):
            diff = rows[start:start + 256, None, :] - rows[None, :, :]
            worst = max(worst, float(np.sqrt(np.max(np.sum(diff**2, axis=2)))))
    return worst


# --- block-level analysis ------------------------------------------------

@dataclass(frozen=True)
class BlockAnalysis:
    diag_max: np.ndarray          # lambda_max(L_kk)
    diag_second: np.ndarray       # second largest |eigenvalue| of L_kk
    diag_ratio: np.ndarray
    pair_max: np.ndarray          # K x K, lambda_max(M_kl) for k < l
    pair_third: np.ndarray        # third largest |eigenvalue| of M_kl
    pair_ratio: np.ndarray
    pair_asymmetry: float         # how far the spectra of M_kl are from +/- symmetric
    c: float
    flagged: tuple[str, ...] = field(default=())


def _by_magnitude(vals):
    return vals[order_by_magnitude(vals)]


def block_analysis(L, partition: Partition, frame: PreferenceFrame, tol: float = 1e-8) -> BlockAnalysis:
    """Per-block eigen-analysis of an expected Laplacian.

    Checks ``lambda_max(L_kk) = r_kk`` and ``lambda_max(M_kl) = sqrt(r_kl r_lk)``
    where ``M_kl = [[0, L_kl], [L_lk, 0]]``; reports the homogeneity ratios
    whose maximum is ``c``.

    Raises
    ------
    FrameMismatch
        If a block's top eigenvalue deviates from the frame beyond ``tol``.
    """
    L = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)
    K = partition.K
    R = frame.R
    mem = partition.members
    flagged = []
    dmax = np.zeros(K)
    dsec = np.zeros(K)
    drat = np.zeros(K)
    for k in range(K):
        vals = _by_magnitude(np.linalg.eigvalsh(L[np.ix_(mem[k], mem[k])]))
        dmax[k] = vals.max()
        if abs(dmax[k] - R[k, k]) > tol:
            raise FrameMismatch(f"lambda_max(L_{k}{k})={dmax[k]:.12g} but r_kk={R[k, k]:.12g}")
        if vals.size < 2:
            flagged.append(f"block {k} has a single node")
            continue
        dsec[k] = abs(vals[1])
        if dmax[k] > tol:
            drat[k] = dsec[k] / dmax[k]
        else:
            flagged.append(f"block {k} is empty")
    pmax = np.zeros((K, K))
    pthird = np.zeros((K, K))
    prat = np.zeros((K, K))
    asym = 0.0
    for k in range(K):
        for l in range(k + 1, K):
            Lkl = L[np.ix_(mem[k], mem[l])]
            nk, nl = Lkl.shape
            M = np.zeros((nk + nl, nk + nl))
            M[:nk, nk:] = Lkl
            M[nk:, :nk] = Lkl.T
            vals = np.linalg.eigvalsh(M)  # ascending
            asym = max(asym, float(np.abs(vals + vals[::-1]).max()))
            pmax[k, l] = vals[-1]
            target = np.sqrt(R[k, l] * R[l, k])
            if abs(vals[-1] - target) > tol:
                raise FrameMismatch(
                    f"lambda_max(M_{k}{l})={vals[-1]:.12g} but sqrt(r_kl r_lk)={target:.12g}")
            mags = np.sort(np.abs(vals))[::-1]
            pthird[k, l] = mags[2] if mags.size > 2 else 0.0
            if pmax[k, l] > tol:
                prat[k, l] = pthird[k, l] / pmax[k, l]
            else:
                flagged.append(f"pair ({k},{l}) has no edges")
    c = float(max(drat.max(initial=0.0), prat.max(initial=0.0)))
    return BlockAnalysis(dmax, dsec, drat, pmax, pthird, prat, asym, c, tuple(flagged))


@dataclass(frozen=True)
class SpuriousCertificate:
    max_spurious: float
    c: float
    frame_factor: float
    bound: float
    holds: bool


def spurious_bound_certificate(analysis: BlockAnalysis, frame: PreferenceFrame,
                               spectrum: SpectralEmbedding, tol: float | None = None,
                               raise_on_violation: bool = True) -> SpuriousCertificate:
    """Check ``max_{j>K} |lambda_j| <= c * frame_factor(frame)``."""
    tol = spectrum.tol if tol is None else tol
    ff = frame_factor(frame)
    bound = analysis.c * ff
    lhs = spectrum.max_spurious
    holds = lhs <= bound + tol
    if not holds and raise_on_violation:
        raise CertificateViolation(lhs, bound)
    return SpuriousCertificate(lhs, analysis.c, ff, bound, holds)


def spurious_orthogonality_check(spectrum: SpectralEmbedding, partition: Partition) -> float:
    """Largest ``|x_k^T s_k| / ||s_k||`` over spurious eigenvectors ``x`` and
    communities ``k``, with ``s_i = sqrt(d_i)``."""
    if spectrum.degrees is None:
        raise ValueError("degrees are required")
    X = spectrum.vectors[:, spectrum.K:]
    if X.shape[1] == 0:
        return 0.0
    s = np.sqrt(spectrum.degrees)
    worst = 0.0
    for idx in partition.members:
        sk = s[idx]
        proj = sk @ X[idx]
        worst = max(worst, float(np.abs(proj).max() / np.linalg.norm(sk)))
    return worst


# --- perturbation diagnostics -------------------------------------------

def low_rank_operator(spectrum: SpectralEmbedding) -> spla.LinearOperator:
    """``Y Lambda Y^T`` as an operator; exact for models with no spurious spectrum."""
    Y = spectrum.Y
    lam = spectrum.top
    n = Y.shape[0]
    return spla.LinearOperator((n, n), matvec=lambda x: Y @ (lam * (Y.T @ x)), dtype=float)


def spectral_norm_diff(L1, L2) -> float:
    """Spectral norm ``||L1 - L2||`` of a symmetric difference."""
    if L1.shape != L2.shape:
        raise DimensionMismatch(f"{L1.shape} vs {L2.shape}")
    n = L1.shape[0]
    dense_ok = all(isinstance(X, np.ndarray) or sp.issparse(X) for X in (L1, L2))
    if dense_ok and n <= 600:
        a = L1.toarray() if sp.issparse(L1) else L1
        b = L2.toarray() if sp.issparse(L2) else L2
        return float(np.linalg.norm(a - b, 2))
    A1 = spla.aslinearoperator(L1)
    A2 = spla.aslinearoperator(L2)
    op = spla.LinearOperator((n, n), matvec=lambda x: A1.matvec(x) - A2.matvec(x), dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    vals = spla.eigsh(op, k=1, which="LM", v0=v0, tol=1e-6, maxiter=50 * n, return_eigenvectors=False)
    return float(abs(vals[0]))


def concentration_rhs(n: int, psi: float = 1.0, gamma: float = 1.0) -> float:
    """``psi gamma^2 / sqrt(ln n)``."""
    return psi * gamma**2 / np.sqrt(np.log(n))


def orthogonal_alignment(Y: np.ndarray, Y_hat: np.ndarray) -> np.ndarray:
    """Orthogonal ``O`` minimizing ``||Y_hat - Y O||_F`` (polar factor of ``Y^T Y_hat``)."""
    U, _, Wt = np.linalg.svd(Y.T @ Y_hat)
    return U @ Wt


def subspace_distance(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    if Y.shape != Y_hat.shape:
        raise DimensionMismatch(f"{Y.shape} vs {Y_hat.shape}")
    O = orthogonal_alignment(Y, Y_hat)
    return float(np.linalg.norm(Y_hat - Y @ O))


def davis_kahan_delta(spectrum: SpectralEmbedding, hpfm: bool) -> float:
    """``|lambda_K| / 2`` for an HPFM, ``sigma / 2`` otherwise."""
    return (abs(spectrum.lambda_K) if hpfm else spectrum.sigma) / 2.0


def davis_kahan_report(spectrum: SpectralEmbedding, spectrum_hat: SpectralEmbedding,
                       norm_diff: float, delta: float) -> dict:
    """Observed perturbation of the top-K structure against the bound chain.

    Reports ``||Y_hat - Y O||_F`` next to ``sqrt(32 K) ||L_hat - L|| / delta``
    and the projection error next to ``sqrt(8 K) ||L_hat - L||``.
    """
    K = spectrum.K
    dist = subspace_distance(spectrum.Y, spectrum_hat.Y)
    rhs = np.sqrt(32 * K) * norm_diff / delta if delta > 0 else np.inf
    proj = projection_error(spectrum, spectrum_hat)
    proj_rhs = np.sqrt(8 * K) * norm_diff
    return {"distance": dist, "bound": float(rhs), "delta": float(delta),
            "norm_diff": float(norm_diff), "holds": bool(dist <= rhs),
            "projection_error": proj, "projection_bound": float(proj_rhs),
            "projection_holds": bool(proj <= proj_rhs)}


def projection_error(spectrum: SpectralEmbedding, spectrum_hat: SpectralEmbedding) -> float:
    """``||Y_hat Lambda_hat Y_hat^T - Y Lambda Y^T||_F`` without forming n x n matrices."""
    Y, lam = spectrum.Y, spectrum.top
    Yh, lamh = spectrum_hat.Y, spectrum_hat.top
    G = Y.T @ Yh
    sq = np.sum(lam**2) + np.sum(lamh**2) - 2.0 * np.sum((lam[:, None] * G) * (G * lamh[None, :]))
    return float(np.sqrt(max(sq, 0.0)))


def save_spectrum_csv(path, eigenvalues) -> None:
    with open(path, "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, v in enumerate(np.asarray(eigenvalues, dtype=float)):
            fh.write(f"{i + 1},{float(v)!r}\n")


def save_embedding_csv(path, V) -> None:
    V = np.asarray(V, dtype=float)
    with open(path, "w") as fh:
        fh.write("node," + ",".join(f"V_{k + 1}" for k in range(V.shape[1])) + "\n")
        for i, row in enumerate(V):
            fh.write(f"{i}," + ",".join(repr(float(x)) for x in row) + "\n")
