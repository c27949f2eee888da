"""Agent vector fields with the derivative information the solver needs.

Every model is fully actuated, ``x' = F(x) + u``.  Alongside ``F`` a model
provides the Jacobian ``F_x`` and the costate-contracted Hessian
``d^2 (lam . F) / dx^2``, which is all the second-order information the sweep
uses.  All callables broadcast over leading axes: ``x`` of shape ``(..., n)``
gives fields of shape ``(..., n)`` and matrices of shape ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class DynamicsModel:
    name: str
    state_dim: int
    field: Callable[[Array], Array]
    jacobian: Callable[[Array], Array]
    costate_hessian: Callable[[Array, Array], Array]
    lipschitz_bound: float | None = None
    params: dict | None = None

    def to_spec(self):
        """Scenario-file representation: a bare name, or a dict for parametric models."""
        if self.params is None:
            return self.name
        return {"name": self.name, **self.params}


def _chaotic_family(name: str, p: float, q: float, r: float, s: float) -> DynamicsModel:
    # x1' = p (x2 - x1);  x2' = q x1 + r x2 - x1 x3;  x3' = x1 x2 - s x3
    # Lorenz, Lu and Chen are all members; only the bilinear terms have curvature.

    def field(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack((p * (x2 - x1), q * x1 + r * x2 - x1 * x3, x1 * x2 - s * x3), axis=-1)

    def jacobian(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        J = np.zeros(x.shape + (3,))
        J[..., 0, 0] = -p
        J[..., 0, 1] = p
        J[..., 1, 0] = q - x3
        J[..., 1, 1] = r
        J[..., 1, 2] = -x1
        J[..., 2, 0] = x2
        J[..., 2, 1] = x1
        J[..., 2, 2] = -s
        return J

    def costate_hessian(lam, x):
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(lam.shape, np.shape(x))
        H = np.zeros(shape + (3,))
        H[..., 0, 1] = H[..., 1, 0] = lam[..., 2]
        H[..., 0, 2] = H[..., 2, 0] = -lam[..., 1]
        return H

    return DynamicsModel(name, 3, field, jacobian, costate_hessian)


def lorenz() -> DynamicsModel:
    return _chaotic_family("lorenz", 10.0, 28.0, -1.0, 8.0 / 3.0)


def lu_system() -> DynamicsModel:
    return _chaotic_family("lu", 36.0, 0.0, 13.0, 3.0)


def chen() -> DynamicsModel:
    return _chaotic_family("chen", 35.0, -7.0, 28.0, 3.0)


def linear(matrix) -> DynamicsModel:
    """Linear plant ``x' = M x + u``; used for LQR cross-checks."""
    M = np.array(matrix, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"linear model needs a square matrix, got shape {M.shape}")
    M.setflags(write=False)
    n = M.shape[0]

    Mt = M.T

    def field(x):
        return np.asarray(x, dtype=float) @ Mt

    def jacobian(x):
        # read-only view; the Jacobian of a linear field never changes
        return np.broadcast_to(M, np.shape(x)[:-1] + (n, n))

    def costate_hessian(lam, x):
        shape = np.broadcast_shapes(np.shape(lam), np.shape(x))
        return np.zeros(shape + (n,))

    return DynamicsModel(
        "linear", n, field, jacobian, costate_hessian,
        lipschitz_bound=float(np.linalg.norm(M, 2)),
        params={"matrix": M.tolist()},
    )


_NAMED = {"lorenz": lorenz, "lu": lu_system, "chen": chen}


def model_names() -> list[str]:
    return sorted(_NAMED)


def get_model(entry) -> DynamicsModel:
    """Resolve a scenario model entry: ``"lorenz" | "lu" | "chen"`` or ``{"name": "linear", "matrix": ...}``."""
    if isinstance(entry, DynamicsModel):
        return entry
    if isinstance(entry, str):
        try:
            return _NAMED[entry]()
        except KeyError:
            raise ValueError(f"unknown model {entry!r}; expected one of {model_names()} or linear") from None
    if isinstance(entry, dict) and entry.get("name") == "linear":
        return linear(entry["matrix"])
    raise ValueError(f"cannot interpret model entry {entry!r}")


def _state(model: DynamicsModel, x, label: str = "x") -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.state_dim,):
        raise ValueError(f"{label} has trailing dimension {x.shape[-1:]}, model {model.name} needs {model.state_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{label} has non-finite entries")
    return x


def eval_field(model: DynamicsModel, x) -> Array:
    return model.field(_state(model, x))


def eval_jacobian(model: DynamicsModel, x) -> Array:
    return model.jacobian(_state(model, x))


def eval_costate_hessian(model: DynamicsModel, x, lam) -> Array:
    return model.costate_hessian(_state(model, lam, "lam"), _state(model, x))
