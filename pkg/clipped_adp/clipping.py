"""Terminal-boundary clipping: the clipping fraction, the clipped model and cost
functions, and their analytic derivatives.

Matrix convention throughout: a derivative of a vector function g by a vector argument y
is stored with element (i, j) equal to d g^j / d y^i (the transpose of the usual Jacobian).
So a perturbation dy maps to dg = M.T @ dy, and a cotangent c pulls back as M @ c.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DegeneratePlaneError, DimensionError

DEGENERACY_THRESHOLD = 1e-12
FRACTION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Plane:
    """Tangent plane of a terminal boundary: points r with (r - point) . normal = 0.

    The normal need not be unit length; every formula here is invariant to its scale and sign.
    """

    point: np.ndarray
    normal: np.ndarray
    label: str = ""

    def __post_init__(self):
        point = np.asarray(self.point, dtype=np.float64)
        normal = np.asarray(self.normal, dtype=np.float64)
        if point.shape != normal.shape or point.ndim != 1:
            raise DimensionError(
                f"plane point {point.shape} and normal {normal.shape} must be equal-length vectors"
            )
        if not np.linalg.norm(normal) > 0.0:
            raise DegeneratePlaneError(f"plane '{self.label}' has a zero normal")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "normal", normal)

    @property
    def dim(self) -> int:
        return self.point.shape[0]

    def offset(self, state: np.ndarray) -> float:
        """Signed (state - point) . normal."""
        return float(np.dot(np.asarray(state) - self.point, self.normal))

    def snap(self, state: np.ndarray) -> np.ndarray:
        """Return state moved onto the plane along the normal.

        Axis-aligned planes get the constrained coordinate assigned exactly.
        """
        snapped = np.array(state, dtype=np.float64)
        axes = np.flatnonzero(self.normal)
        if axes.size == 1:
            snapped[axes[0]] = self.point[axes[0]]
            return snapped
        snapped -= (self.offset(snapped) / np.dot(self.normal, self.normal)) * self.normal
        return snapped


@dataclass
class ClippedJacobians:
    """Derivatives of the clipped fraction, model and cost at the penultimate state."""

    dlam_dx: np.ndarray
    dlam_da: np.ndarray
    dfC_dx: np.ndarray
    dfC_da: np.ndarray
    dUC_dx: np.ndarray
    dUC_da: np.ndarray
    v: np.ndarray


@dataclass
class QGradients:
    """Derivatives of the one-step Q-function with respect to state and action."""

    q_x: np.ndarray
    q_u: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.q_x)) and np.all(np.isfinite(self.q_u))):
            raise FloatingPointError(f"non-finite Q-gradients: q_x={self.q_x}, q_u={self.q_u}")


def discount_power(gamma: float, exponent: float) -> float:
    """gamma ** exponent computed as exp(exponent * ln gamma).

    gamma == 1 and exponent == 1 short-circuit so the unclipped code path is reproduced bit for bit.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {gamma}")
    if gamma == 1.0:
        return 1.0
    if exponent == 1.0:
        return gamma
    return math.exp(exponent * math.log(gamma))


def log_discount(gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {gamma}")
    return 0.0 if gamma == 1.0 else math.log(gamma)


def _check_crossing(plane: Plane, v: np.ndarray) -> float:
    """Return v . n, raising when the transition is parallel to the plane."""
    if v.shape != plane.normal.shape:
        raise DimensionError(f"transition has dimension {v.shape[0]}, plane has {plane.dim}")
    v_dot_n = float(np.dot(v, plane.normal))
    scale = np.linalg.norm(plane.normal) * max(1.0, float(np.linalg.norm(v)))
    if abs(v_dot_n) < DEGENERACY_THRESHOLD * scale:
        raise DegeneratePlaneError(
            f"transition is parallel to plane '{plane.label}' (v.n={v_dot_n:.3e})"
        )
    return v_dot_n


def clipping_fraction(x: np.ndarray, f_next: np.ndarray, plane: Plane) -> float:
    """Fraction of the transition x -> f_next at which the plane is met."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(f_next, dtype=np.float64) - x
    v_dot_n = _check_crossing(plane, v)
    return float(np.dot(plane.point - x, plane.normal)) / v_dot_n


def checked_fraction(x: np.ndarray, f_next: np.ndarray, plane: Plane) -> float:
    """clipping_fraction restricted to [0, 1].

    Round-off within FRACTION_TOLERANCE is clamped; anything further out is an error.
    """
    lam = clipping_fraction(x, f_next, plane)
    if -FRACTION_TOLERANCE <= lam <= 1.0 + FRACTION_TOLERANCE:
        return min(max(lam, 0.0), 1.0)
    raise DegeneratePlaneError(
        f"clipping fraction {lam:.6g} for plane '{plane.label}' lies outside [0, 1]"
    )


def clipped_transition(
    x: np.ndarray,
    f_next: np.ndarray,
    cost: float,
    plane: Plane,
    lam: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """Clipped model and cost: (x + lam (f_next - x), lam cost).

    lam defaults to the raw clipping fraction; pass a checked value to reuse it.
    """
    x = np.asarray(x, dtype=np.float64)
    f_next = np.asarray(f_next, dtype=np.float64)
    if lam is None:
        lam = clipping_fraction(x, f_next, plane)
    if lam == 1.0:
        return f_next.copy(), float(cost)
    return plane.snap(x + lam * (f_next - x)), lam * float(cost)


def clip_fraction_gradients(
    x: np.ndarray,
    a: np.ndarray,
    jac,
    plane: Plane,
    v: np.ndarray,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """d lambda / dx and d lambda / da for the transition with displacement v."""
    n = plane.normal
    v_dot_n = _check_crossing(plane, np.asarray(v, dtype=np.float64))
    gap = float(np.dot(plane.point - np.asarray(x, dtype=np.float64), n))
    shift = gap / (v_dot_n * v_dot_n)
    eye = np.eye(n.shape[0])
    dlam_dx = -n / v_dot_n - shift * ((jac.df_dx - eye) @ n)
    dlam_da = -shift * (jac.df_da @ n)
    return dlam_dx, dlam_da


def clipped_jacobians(
    x: np.ndarray,
    a: np.ndarray,
    cost: float,
    jac,
    plane: Plane,
    lam: float,
    f_next: np.ndarray,
) -> ClippedJacobians:
    """Derivatives of the clipped model and cost at (x, a).

    cost is the unclipped step cost U(x, a); f_next the unclipped model output.
    With lam == 1 and vanishing lambda-gradients the results equal jac entrywise.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(f_next, dtype=np.float64) - x
    dlam_dx, dlam_da = clip_fraction_gradients(x, a, jac, plane, v, lam)
    eye = np.eye(x.shape[0])
    dfC_dx = lam * jac.df_dx + (1.0 - lam) * eye + np.outer(dlam_dx, v)
    dfC_da = lam * jac.df_da + np.outer(dlam_da, v)
    dUC_dx = dlam_dx * cost + lam * jac.dU_dx
    dUC_da = dlam_da * cost + lam * jac.dU_da
    return ClippedJacobians(
        dlam_dx=dlam_dx,
        dlam_da=dlam_da,
        dfC_dx=dfC_dx,
        dfC_da=dfC_da,
        dUC_dx=dUC_dx,
        dUC_da=dUC_da,
        v=v,
    )


def clipped_q_gradients(
    cj: ClippedJacobians,
    cost: float,
    phi: float,
    dphi_dx: np.ndarray,
    gamma: float,
    lam: float,
) -> QGradients:
    """Penultimate-step Q-gradients of U^C + gamma^lam phi(f^C)."""
    discount = discount_power(gamma, lam)
    ln_gamma = log_discount(gamma)
    q_x = cj.dUC_dx + discount * (cj.dfC_dx @ dphi_dx + ln_gamma * cj.dlam_dx * phi)
    q_u = cj.dUC_da + discount * (cj.dfC_da @ dphi_dx + ln_gamma * cj.dlam_da * phi)
    return QGradients(q_x=q_x, q_u=q_u)
