"""The jointly controllable/observable discrete-time LTI plant."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, JointSystemError
from .linalg import as_matrix, controllability_matrix, numerical_rank


@dataclass(frozen=True)
class LtiSystem:
    """Plant matrix A with per-agent input columns B_i and output rows C_i.

    Dimensions are validated on construction; joint controllability and
    observability of the stacked pair is checked separately by
    ``joint_rank_checks`` (scenario loading enforces it).
    """

    a: np.ndarray
    b_list: tuple[np.ndarray, ...]
    c_list: tuple[np.ndarray, ...]
    n: int = field(init=False)

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        if a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"A must be square, got {a.shape}")
        n = a.shape[0]
        b_list = tuple(as_matrix(b, "B_i") for b in self.b_list)
        c_list = tuple(as_matrix(c, "C_i") for c in self.c_list)
        if len(b_list) != len(c_list):
            raise InvalidInputError("need one B_i and one C_i per agent")
        for i, b in enumerate(b_list):
            if b.shape[0] != n:
                raise InvalidInputError(f"B_{i} must have {n} rows, got {b.shape}")
        for i, c in enumerate(c_list):
            if c.shape[1] != n:
                raise InvalidInputError(f"C_{i} must have {n} columns, got {c.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b_list", b_list)
        object.__setattr__(self, "c_list", c_list)
        object.__setattr__(self, "n", n)

    @property
    def agent_count(self) -> int:
        return len(self.b_list)

    @property
    def input_dims(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.b_list)

    @property
    def output_dims(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.c_list)

    def b_stacked(self) -> np.ndarray:
        return np.hstack(self.b_list)

    def c_stacked(self) -> np.ndarray:
        return np.vstack(self.c_list)


def plant_step(sys: LtiSystem, x, u_list):
    """One plant update: outputs at the current state, then x <- Ax + sum B_i u_i.

    Returns (x_next, [y_i]) with y_i = C_i x measured before the update.
    """
    xv = np.asarray(x)
    if xv.shape != (sys.n,) and not (xv.dtype == object and len(xv) == sys.n):
        raise InvalidInputError(f"state must have length {sys.n}")
    if len(u_list) != sys.agent_count:
        raise InvalidInputError("need one input per agent")
    ys = [c @ xv for c in sys.c_list]
    x_next = sys.a @ xv
    for i, (b, u) in enumerate(zip(sys.b_list, u_list)):
        uv = np.asarray(u).reshape(-1)
        if len(uv) != b.shape[1]:
            raise InvalidInputError(
                f"input {i} must have length {b.shape[1]}, got {len(uv)}"
            )
        x_next = x_next + b @ uv
    return x_next, ys


def joint_rank_checks(sys: LtiSystem, rel_tol: float | None = None) -> tuple[bool, bool]:
    """Kalman-rank tests on the stacked input and output matrices."""
    n = sys.n
    ctrl = numerical_rank(controllability_matrix(sys.a, sys.b_stacked()), rel_tol) == n
    obsv = numerical_rank(controllability_matrix(sys.a.T, sys.c_stacked().T), rel_tol) == n
    return ctrl, obsv


def require_jointly_controllable_observable(sys: LtiSystem) -> None:
    ctrl, obsv = joint_rank_checks(sys)
    if not ctrl or not obsv:
        missing = []
        if not ctrl:
            missing.append("controllable")
        if not obsv:
            missing.append("observable")
        raise JointSystemError(f"system is not jointly {' or '.join(missing)}")


def local_indices(sys: LtiSystem, rel_tol: float | None = None):
    """Per-agent controllability and observability ranks (rho_i, chi_i)."""
    rho = [
        numerical_rank(controllability_matrix(sys.a, b), rel_tol) for b in sys.b_list
    ]
    chi = [
        numerical_rank(controllability_matrix(sys.a.T, c.T), rel_tol)
        for c in sys.c_list
    ]
    return rho, chi
