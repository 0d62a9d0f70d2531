"""Riemannian metrics on the open stratum, and gradients taken in them.

Three built-in families plus user-supplied matrices:

* ``euclidean``: the ambient flat metric.
* ``cone-euclidean``: g = Id / tau.  Its gradient has the closed form
  grad f = tau * df, which keeps flow right-hand sides cheap.
* ``kahler-cone``: on R^{2n} identified with C^n,
  g = ((dtau/tau)^T (dtau/tau) + ((dtau o I)/tau)^T ((dtau o I)/tau) + Id) / tau
  where I is the complex-structure block rotation.  This is the metric the
  complex-polynomial pipeline installs.
* ``custom``: a symmetric matrix of expressions in the problem variables.

Every evaluation point gets a Cholesky certificate; an indefinite or badly
asymmetric matrix raises NotPositiveDefinite rather than silently flowing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NotPositiveDefinite
from .expr import Expression, eval_jet1, eval_values

__all__ = ["MetricSpec", "metric_at", "metric_batch", "gradient_field",
           "apply_inverse_batch", "KINDS"]

KINDS = ("euclidean", "cone-euclidean", "kahler-cone", "custom")

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    custom: Optional[Tuple[Tuple[Expression, ...], ...]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown metric kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom":
            if not self.custom:
                raise ConfigError("custom metric needs a matrix of expressions")
            n = len(self.custom)
            if any(len(row) != n for row in self.custom):
                raise ConfigError("custom metric matrix must be square")
        elif self.custom is not None:
            raise ConfigError(f"matrix entries only make sense for kind='custom', not {self.kind!r}")


def _complex_rotate(rows: np.ndarray) -> np.ndarray:
    """Apply the block rotation J (u_k, v_k) -> (v_k, -u_k) to covector rows."""
    out = np.empty_like(rows)
    out[..., 0::2] = rows[..., 1::2]
    out[..., 1::2] = -rows[..., 0::2]
    return out


def metric_batch(spec: MetricSpec, tau: Expression, names: Sequence[str],
                 X: np.ndarray, certify: bool = False) -> np.ndarray:
    """Metric matrices at a batch of points, shape (m, n, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    if spec.kind == "euclidean":
        G = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    elif spec.kind == "cone-euclidean":
        tv = eval_values(tau, X, names)
        G = np.eye(n)[None, :, :] / tv[:, None, None]
    elif spec.kind == "kahler-cone":
        if n % 2 != 0:
            raise ConfigError("kahler-cone metric needs an even-dimensional problem")
        tv, tg = eval_jet1(tau, X, names)
        a = tg / tv[:, None]
        b = _complex_rotate(a)
        G = (a[:, :, None] * a[:, None, :] + b[:, :, None] * b[:, None, :]
             + np.eye(n)[None, :, :]) / tv[:, None, None]
    else:
        G = np.empty((m, n, n))
        for i in range(n):
            for j in range(n):
                G[:, i, j] = eval_values(spec.custom[i][j], X, names)
    if certify:
        for k in range(m):
            _certify(G[k], X[k])
    return G


def _certify(G: np.ndarray, x: np.ndarray) -> None:
    if not np.all(np.isfinite(G)):
        raise NotPositiveDefinite(f"metric is not finite at {x.tolist()}")
    scale = max(1.0, float(np.max(np.abs(G))))
    if float(np.max(np.abs(G - G.T))) > _SYMMETRY_TOL * scale:
        raise NotPositiveDefinite(f"metric is not symmetric at {x.tolist()}")
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"metric is not positive definite at {x.tolist()}") from None


def metric_at(spec: MetricSpec, tau: Expression, names: Sequence[str],
              point: Sequence[float]) -> np.ndarray:
    """Certified metric matrix at one point."""
    x = np.asarray(point, dtype=float)
    G = metric_batch(spec, tau, names, x[None, :])[0]
    _certify(G, x)
    return G


def apply_inverse_batch(spec: MetricSpec, tau: Expression, names: Sequence[str],
                        X: np.ndarray, df: np.ndarray) -> np.ndarray:
    """Solve g(x) w = df(x) row-wise: the gradient vector field of f.

    Exploits closed forms where the metric admits them so flow integration
    does not pay for dense solves in the common cases.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.kind == "euclidean":
        return np.array(df, dtype=float, copy=True)
    if spec.kind == "cone-euclidean":
        tv = eval_values(tau, X, names)
        return tv[:, None] * df
    G = metric_batch(spec, tau, names, X)
    return np.linalg.solve(G, df[..., None])[..., 0]


def gradient_field(problem, eps: float, point: Sequence[float]) -> np.ndarray:
    """Gradient of f_eps at a point, taken in the problem's metric.

    This is the certified single-point entry; flows use the batch path.
    """
    from .problem import perturbed_function
    from .expr import eval_jet1 as _j1

    x = np.asarray(point, dtype=float)
    fe = perturbed_function(problem, eps)
    _, dfe = _j1(fe, x[None, :], problem.variables)
    G = metric_at(problem.metric, problem.tau, problem.variables, x)
    if problem.metric.kind == "euclidean":
        return dfe[0]
    if problem.metric.kind == "cone-euclidean":
        tv = eval_values(problem.tau, x[None, :], problem.variables)[0]
        return tv * dfe[0]
    return np.linalg.solve(G, dfe[0])
