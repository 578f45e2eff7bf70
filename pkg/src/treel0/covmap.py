"""Sample covariances and the inverse soft-threshold target map.

The per-population regression target is B = inv(ST_nu(S)) where S is the
sample covariance and ST_nu soft-thresholds off-diagonal entries only. When
the thresholded matrix is singular, an escalating diagonal jitter
(start, 10x, 100x, ... up to cap) is added before inversion; if the cap is
reached the computation fails rather than silently degrading.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NonFiniteInput, SingularAfterJitter


@dataclass(frozen=True)
class SampleCovariance:
    """A population's covariance estimate plus the sample count behind it."""

    matrix: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class BackwardMapSet:
    """Per-population dense regression targets and the jitter each needed."""

    maps: Tuple[np.ndarray, ...]
    jitters: Tuple[float, ...]

    def __post_init__(self):
        if len(self.maps) != len(self.jitters):
            raise ValueError("maps and jitters lengths differ")

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.maps[k]


MatrixLike = Union[np.ndarray, SampleCovariance]


def _as_matrix(m: MatrixLike) -> np.ndarray:
    return m.matrix if isinstance(m, SampleCovariance) else np.asarray(m, dtype=np.float64)


def sample_covariance(x, center: bool = True) -> SampleCovariance:
    """(1/n) X X^T over samples, optionally centering each gene first.

    Accepts an ExpressionMatrix or a raw (p, n) array.
    """
    values = x.values if hasattr(x, "values") else np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("expression values contain NaN or infinity")
    n = values.shape[1]
    if center:
        values = values - values.mean(axis=1, keepdims=True)
    s = (values @ values.T) / n
    return SampleCovariance(matrix=0.5 * (s + s.T), n=int(n))


def soft_threshold(mat: MatrixLike, nu: float) -> np.ndarray:
    """Soft-threshold off-diagonal entries by nu; the diagonal is untouched."""
    m = _as_matrix(mat)
    out = np.sign(m) * np.maximum(np.abs(m) - nu, 0.0)
    np.fill_diagonal(out, np.diag(m))
    return out


def _spd_inverse(mat: np.ndarray) -> Optional[np.ndarray]:
    """Inverse via Cholesky, or None if the matrix is not positive definite."""
    try:
        c = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    inv = np.linalg.inv(c)
    return inv.T @ inv


def backward_map(
    cov: MatrixLike,
    nu: float,
    jitter_start: float = 1e-6,
    jitter_cap: float = 1e-2,
) -> Tuple[np.ndarray, float]:
    """Regression target inv(ST_nu(cov)) and the jitter that was needed.

    Returns (B, jitter_used) with jitter_used == 0.0 on the clean path. B is
    symmetrized to kill inversion round-off asymmetry.
    """
    t = soft_threshold(cov, nu)
    inv = _spd_inverse(t)
    jitter = 0.0
    if inv is None:
        jitter = float(jitter_start)
        p = t.shape[0]
        eye = np.eye(p)
        while True:
            inv = _spd_inverse(t + jitter * eye)
            if inv is not None:
                break
            jitter *= 10.0
            if jitter > jitter_cap * (1.0 + 1e-12):
                raise SingularAfterJitter(
                    f"thresholded covariance still singular at jitter {jitter / 10.0:g}"
                    f" (cap {jitter_cap:g})"
                )
    return 0.5 * (inv + inv.T), jitter


def backward_map_set(
    covs: Sequence[MatrixLike],
    nus: Sequence[float],
    jitter_start: float = 1e-6,
    jitter_cap: float = 1e-2,
) -> BackwardMapSet:
    """Backward maps for all populations; failures name the population."""
    maps: List[np.ndarray] = []
    jitters: List[float] = []
    for k, (cov, nu) in enumerate(zip(covs, nus)):
        try:
            b, j = backward_map(cov, nu, jitter_start, jitter_cap)
        except SingularAfterJitter as exc:
            raise SingularAfterJitter(f"population {k}: {exc}") from None
        maps.append(b)
        jitters.append(j)
    return BackwardMapSet(maps=tuple(maps), jitters=tuple(jitters))
