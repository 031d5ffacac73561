"""Plant models: a cart-mounted inverted pendulum, linear time-varying test
plants, and Gaussian noise sampling.

A plant exposes the dimensions ``n_x``/``n_u``/``n_y`` and two pure maps::

    step(state, control, process_noise, k)   -> next state
    observe(state, measurement_noise, k)     -> output

Noise is an explicit argument so that rollouts are deterministic; the time
index ``k`` exists for time-varying plants and is ignored by autonomous ones.
Fully observed plants return ``state + noise`` from ``observe``.

The cart-pole state is ``(theta, theta_dot, x, x_dot)`` with ``theta``
measured from the upright vertical, so ``theta = pi`` is the hanging rest
position. The angle is not wrapped: costs act on the unwrapped value. The
continuous dynamics are integrated with classical RK4 over one sample period
and additive process noise is applied after integration.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


def rk4_step(deriv, state, dt):
    """One classical Runge-Kutta step of ``d state / dt = deriv(state)``."""
    k1 = deriv(state)
    k2 = deriv(state + 0.5 * dt * k1)
    k3 = deriv(state + 0.5 * dt * k2)
    k4 = deriv(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class CartPoleParams:
    """Cart-pole physical parameters and the sampling period."""

    cart_mass: float = 2.4
    pole_mass: float = 0.23
    rod_length: float = 0.36
    gravity: float = 9.81
    dt: float = 0.1

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "rod_length", "gravity", "dt"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be strictly positive")


def cartpole_derivatives(state, force, params):
    """Continuous-time derivatives of the cart-pole state.

    ``state`` is ``(theta, theta_dot, x, x_dot)`` and ``force`` is the
    horizontal force on the cart. The two denominators never vanish for
    positive masses.
    """
    th = float(state[0])
    om = float(state[1])
    vel = float(state[3])
    u = float(force[0]) if np.ndim(force) else float(force)
    big_m, m, ell, g = params.cart_mass, params.pole_mass, params.rod_length, params.gravity
    s, c = math.sin(th), math.cos(th)
    om_dot = (u * c - (big_m + m) * g * s + m * ell * c * s * om * om) / (
        m * ell * c * c - (big_m + m) * ell
    )
    v_dot = (u + m * ell * s * om * om - m * g * c * s) / (big_m + m - m * c * c)
    return np.array([om, om_dot, vel, v_dot])


def _cartpole_rk4(th, om, pos, vel, u, p):
    """Scalar-arithmetic RK4 step; the hot path of finite-difference rollouts."""
    big_m, m, ell, g, dt = p.cart_mass, p.pole_mass, p.rod_length, p.gravity, p.dt
    mm = big_m + m

    def derivs(a, b, d):
        s = math.sin(a)
        c = math.cos(a)
        b2 = b * b
        om_dot = (u * c - mm * g * s + m * ell * c * s * b2) / (m * ell * c * c - mm * ell)
        v_dot = (u + m * ell * s * b2 - m * g * c * s) / (mm - m * c * c)
        return b, om_dot, d, v_dot

    h = 0.5 * dt
    a1, b1, c1, d1 = derivs(th, om, vel)
    a2, b2, c2, d2 = derivs(th + h * a1, om + h * b1, vel + h * d1)
    a3, b3, c3, d3 = derivs(th + h * a2, om + h * b2, vel + h * d2)
    a4, b4, c4, d4 = derivs(th + dt * a3, om + dt * b3, vel + dt * d3)
    sixth = dt / 6.0
    return (
        th + sixth * (a1 + 2.0 * (a2 + a3) + a4),
        om + sixth * (b1 + 2.0 * (b2 + b3) + b4),
        pos + sixth * (c1 + 2.0 * (c2 + c3) + c4),
        vel + sixth * (d1 + 2.0 * (d2 + d3) + d4),
    )


class CartPolePlant:
    """Force-driven cart-pole, fully observed, sampled at ``params.dt``."""

    n_x = 4
    n_u = 1
    n_y = 4

    def __init__(self, params=None):
        self.params = params if params is not None else CartPoleParams()

    def step(self, state, control, noise, k=0):
        u = float(control[0]) if np.ndim(control) else float(control)
        try:
            th, om, pos, vel = _cartpole_rk4(
                float(state[0]), float(state[1]), float(state[2]), float(state[3]),
                u, self.params,
            )
        except (ValueError, OverflowError):
            # math.sin/cos reject the infinities produced by a blown-up state;
            # surface the blow-up as a non-finite next state instead.
            return np.full(4, np.inf)
        return np.array([th, om, pos, vel]) + noise

    def observe(self, state, noise, k=0):
        return state + noise


class LtvPlant:
    """Linear time-varying plant ``x+ = A_k x + B_k u + w``, ``y = C_k x + v``.

    ``a_seq``/``b_seq`` cover steps ``0..N-1``; ``c_seq`` may have ``N`` or
    ``N+1`` entries (with ``N``, the last output map is reused at step ``N``).
    Used as an identification oracle: its generalized impulse responses are
    known in closed form.
    """

    def __init__(self, a_seq, b_seq, c_seq):
        self.a_seq = np.asarray(a_seq, dtype=float)
        self.b_seq = np.asarray(b_seq, dtype=float)
        self.c_seq = np.asarray(c_seq, dtype=float)
        if self.a_seq.ndim != 3 or self.b_seq.ndim != 3 or self.c_seq.ndim != 3:
            raise InvalidInputError("matrix sequences must be 3-D arrays")
        n = self.a_seq.shape[0]
        n_x = self.a_seq.shape[1]
        if self.a_seq.shape[2] != n_x:
            raise InvalidInputError("A_k must be square")
        if self.b_seq.shape[0] != n or self.b_seq.shape[1] != n_x:
            raise InvalidInputError("B sequence does not match A sequence")
        if self.c_seq.shape[0] not in (n, n + 1) or self.c_seq.shape[2] != n_x:
            raise InvalidInputError("C sequence does not match A sequence")
        self.n_x = n_x
        self.n_u = self.b_seq.shape[2]
        self.n_y = self.c_seq.shape[1]
        self.horizon = n

    def _c_at(self, k):
        return self.c_seq[min(k, self.c_seq.shape[0] - 1)]

    def step(self, state, control, noise, k=0):
        return self.a_seq[k] @ state + self.b_seq[k] @ np.atleast_1d(control) + noise

    def observe(self, state, noise, k=0):
        return self._c_at(k) @ state + noise


def make_ltv_plant(a_seq, b_seq, c_seq):
    """Build an :class:`LtvPlant` from per-step matrix sequences."""
    return LtvPlant(a_seq, b_seq, c_seq)


def psd_sqrt(cov):
    """Symmetric square root of a PSD matrix via eigendecomposition."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInputError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise InvalidInputError("covariance contains non-finite entries")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
        raise InvalidInputError("covariance must be symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals[0] < -1e-10 * max(1.0, abs(vals[-1])):
        raise InvalidInputError("covariance has negative eigenvalues")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sample_gaussian(cov, rng):
    """Zero-mean Gaussian draw with covariance ``cov``; deterministic per seed."""
    root = psd_sqrt(cov)
    return root @ rng.standard_normal(root.shape[0])


@dataclass(frozen=True)
class NoiseSpec:
    """Process and measurement noise covariances (symmetric PSD)."""

    process_cov: np.ndarray
    measurement_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "process_cov", _checked_cov(self.process_cov, "process_cov"))
        object.__setattr__(
            self, "measurement_cov", _checked_cov(self.measurement_cov, "measurement_cov")
        )

    @staticmethod
    def isotropic(process_var, measurement_var, n_x, n_y):
        """Diagonal covariances ``process_var * I`` and ``measurement_var * I``."""
        return NoiseSpec(process_var * np.eye(n_x), measurement_var * np.eye(n_y))


def _checked_cov(cov, name):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
        raise InvalidInputError(f"{name} must be symmetric")
    vals = np.linalg.eigvalsh(cov)
    scale = max(1.0, abs(vals[-1]))
    if vals[0] < -1e-10 * scale:
        raise InvalidInputError(f"{name} must be positive semidefinite")
    return cov
