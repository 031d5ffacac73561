"""Time-varying ERA identification of the perturbation system around a
nominal trajectory.

The pipeline is experiment -> Markov parameters -> Hankel factorization:

1. ``impulse_experiments`` perturbs the nominal control sequence with one
   impulse per (time step, input channel) and records output deviations of
   the noiseless plant. For a horizon ``N`` and ``n_u`` inputs this yields
   ``M = N * n_u`` experiments, which makes the recovery step below exactly
   determined.
2. ``estimate_markov`` recovers the generalized Markov parameters
   ``h[k, j]`` (response at step ``k`` to a unit impulse at step ``j``) by a
   per-step minimum-norm least squares over the stacked input deviations.
3. ``era_step`` factors two consecutive generalized Hankel matrices by SVD
   into observability/reachability factors and extracts one step of the
   balanced realization ``(A_k, B_k, C_k)``.

The per-step SVD bases differ, so the identified matrices are only similar
to the underlying linearization; comparisons must go through input-output
quantities (``reconstruct_markov``), never through the matrices themselves.

A realization step ``k`` needs a full-size Hankel at ``k`` and ``k + 1``,
which requires ``q`` past inputs and ``p`` future outputs; no zero padding is
used near the horizon ends, so the realization covers ``q <= k <= N - p``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, IdentificationError, InvalidInputError
from .linalg import pseudo_inverse, solve_least_squares, svd
from .trajopt import rollout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EraConfig:
    """Design parameters of the identification experiment.

    ``p``/``q`` set the Hankel block dimensions (``p >= 2`` is needed for the
    shifted-observability extraction of ``A_k``), ``impulse_amplitude`` scales
    the input perturbations, and ``rank_tol`` is the relative singular-value
    cutoff for the realization order. ``experiment_count`` is normally left
    ``None`` and defaults to ``N * n_u``, which the impulse design requires.
    """

    p: int = 5
    q: int = 5
    impulse_amplitude: float = 0.01
    rank_tol: float = 1e-8
    experiment_count: int | None = None

    def __post_init__(self):
        if self.p < 2 or self.q < 1:
            raise InvalidInputError("need p >= 2 and q >= 1")
        if self.impulse_amplitude <= 0:
            raise InvalidInputError("impulse_amplitude must be positive")
        if self.rank_tol < 0:
            raise InvalidInputError("rank_tol must be nonnegative")


@dataclass(frozen=True)
class ImpulseResponses:
    """Output-deviation sequences from the impulse experiments.

    ``outputs[i, k]`` is the output deviation at step ``k`` in experiment
    ``i``; experiment ``i`` perturbs input channel ``i % n_u`` at step
    ``i // n_u`` by ``amplitude``.
    """

    outputs: np.ndarray
    amplitude: float
    n_u: int

    @property
    def horizon(self):
        return self.outputs.shape[1] - 1

    @property
    def n_y(self):
        return self.outputs.shape[2]


@dataclass(frozen=True)
class MarkovParameters:
    """Generalized Markov parameters ``values[k, j] = h_{k,j}`` (n_y x n_u).

    Entries with ``j >= k`` are identically zero (causality, no feedthrough).
    """

    values: np.ndarray

    @property
    def horizon(self):
        return self.values.shape[1]

    def get(self, k, j):
        if not (0 <= j < self.values.shape[1] and 0 <= k < self.values.shape[0]):
            raise BoundaryError(f"Markov index (k={k}, j={j}) out of range")
        return self.values[k, j]


@dataclass(frozen=True)
class LtvRealization:
    """Identified time-varying triple ``(A_k, B_k, C_k)`` of order ``order``.

    Arrays are stacked over ``k = first_step .. first_step + len - 1``;
    ``singular_values[i]`` holds the full Hankel spectrum at that step.
    ``matrices_at`` optionally clamps out-of-range steps to the nearest
    in-range one, which is how controller design covers the horizon ends.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    first_step: int
    singular_values: np.ndarray

    @property
    def last_step(self):
        return self.first_step + self.a.shape[0] - 1

    @property
    def valid_range(self):
        return self.first_step, self.last_step

    @property
    def n_u(self):
        return self.b.shape[2]

    @property
    def n_y(self):
        return self.c.shape[1]

    def matrices_at(self, k, clamp=False):
        if clamp:
            k = min(max(k, self.first_step), self.last_step)
        elif not self.first_step <= k <= self.last_step:
            raise BoundaryError(
                f"step {k} outside realization range [{self.first_step}, {self.last_step}]"
            )
        i = k - self.first_step
        return self.a[i], self.b[i], self.c[i]

    def to_dict(self):
        return {
            "version": 1,
            "order": int(self.order),
            "first_step": int(self.first_step),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "singular_values": self.singular_values.tolist(),
        }

    @staticmethod
    def from_dict(payload):
        if payload.get("version") != 1:
            raise InvalidInputError(f"unsupported realization version {payload.get('version')}")
        return LtvRealization(
            a=np.asarray(payload["a"], dtype=float),
            b=np.asarray(payload["b"], dtype=float),
            c=np.asarray(payload["c"], dtype=float),
            order=int(payload["order"]),
            first_step=int(payload["first_step"]),
            singular_values=np.asarray(payload["singular_values"], dtype=float),
        )


def impulse_experiments(plant, nominal, cfg):
    """Run the ``N * n_u`` impulse perturbations of the nominal controls.

    ``nominal`` is the ``(controls, states)`` pair of the open-loop solution;
    it is re-simulated once and must match to 1e-10, which guards against a
    plant/trajectory mismatch. All rollouts are noiseless.
    """
    controls, states = np.asarray(nominal[0], dtype=float), np.asarray(nominal[1], dtype=float)
    n = controls.shape[0]
    if states.shape[0] != n + 1:
        raise InvalidInputError("nominal states must have one more row than controls")
    check = rollout(plant, states[0], controls)
    if not np.allclose(check, states, atol=1e-10, rtol=0.0):
        raise InvalidInputError("nominal trajectory is not a rollout of the nominal controls")
    n_u = plant.n_u
    count = n * n_u
    if cfg.experiment_count is not None and cfg.experiment_count != count:
        raise InvalidInputError(
            f"impulse design requires {count} experiments, config says {cfg.experiment_count}"
        )
    v0 = np.zeros(plant.n_y)
    base = np.array([plant.observe(states[k], v0, k) for k in range(n + 1)])
    outputs = np.empty((count, n + 1, plant.n_y))
    for i in range(count):
        step_idx, channel = divmod(i, n_u)
        perturbed = controls.copy()
        perturbed[step_idx, channel] += cfg.impulse_amplitude
        traj = rollout(plant, states[0], perturbed)
        for k in range(n + 1):
            outputs[i, k] = plant.observe(traj[k], v0, k) - base[k]
    return ImpulseResponses(outputs=outputs, amplitude=cfg.impulse_amplitude, n_u=n_u)


def estimate_markov(experiments, cfg):
    """Recover generalized Markov parameters from impulse experiments.

    Solves, for each step ``k``, the row-form least squares that equates the
    recorded output deviations with the unknown parameter block row times the
    stacked input deviations. The impulse design makes every one of these
    systems exactly determined.
    """
    outs = experiments.outputs
    count, n_plus_1, n_y = outs.shape
    n = n_plus_1 - 1
    n_u = experiments.n_u
    amp = experiments.amplitude
    values = np.zeros((n + 1, n, n_y, n_u))
    for k in range(1, n + 1):
        j_hi = min(k, n - 1)
        rows = (j_hi + 1) * n_u
        coeff = np.zeros((rows, count))
        for i in range(count):
            step_idx, channel = divmod(i, n_u)
            if step_idx <= j_hi:
                coeff[(j_hi - step_idx) * n_u + channel, i] = amp
        spectrum = svd(coeff, cfg.rank_tol).singular_values
        if spectrum[min(rows, count) - 1] <= 1e-12 * spectrum[0]:
            raise IdentificationError(f"input deviations are rank deficient at step {k}")
        solution = solve_least_squares(coeff, outs[:, k, :].T, rank_tol=1e-12)
        for r in range(j_hi + 1):
            j = j_hi - r
            if j <= k - 1:
                values[k, j] = solution[:, r * n_u:(r + 1) * n_u]
    return MarkovParameters(values=values)


def build_hankel(markov, k, p, q):
    """Generalized Hankel matrix at step ``k``: block ``(r, c)`` holds
    ``h[k + r, k - 1 - c]``. Needs ``q`` past inputs and ``p`` future outputs.
    """
    n_hi = markov.values.shape[0] - 1
    if k < q or k + p - 1 > n_hi:
        raise BoundaryError(
            f"Hankel at step {k} needs steps {k - q}..{k + p - 1}, have 0..{n_hi}"
        )
    n_y, n_u = markov.values.shape[2], markov.values.shape[3]
    hankel = np.empty((p * n_y, q * n_u))
    for r in range(p):
        for c in range(q):
            hankel[r * n_y:(r + 1) * n_y, c * n_u:(c + 1) * n_u] = markov.values[k + r, k - 1 - c]
    return hankel


def era_step(hankel_k, hankel_next, cfg, order=None):
    """One ERA step from consecutive Hankel matrices.

    Factors ``H_k = O_k R_{k-1}`` via SVD with the square-root split,
    likewise ``H_{k+1} = O_{k+1} R_k``, then::

        A_k = pinv(first (p-1) n_y rows of O_{k+1}) @ (last (p-1) n_y rows of O_k)
        B_k = first n_u columns of R_k
        C_k = first n_y rows of O_k

    Returns ``(A_k, B_k, C_k, singular_values_of_H_k)``. ``order`` overrides
    the rank chosen from ``cfg.rank_tol`` (used to hold the order constant
    across steps).
    """
    hankel_k = np.asarray(hankel_k, dtype=float)
    hankel_next = np.asarray(hankel_next, dtype=float)
    if hankel_k.shape != hankel_next.shape:
        raise InvalidInputError("consecutive Hankel matrices must share a shape")
    if hankel_k.shape[0] % cfg.p or hankel_k.shape[1] % cfg.q:
        raise InvalidInputError("Hankel shape is not divisible by (p, q)")
    n_y = hankel_k.shape[0] // cfg.p
    n_u = hankel_k.shape[1] // cfg.q
    dec_k = svd(hankel_k, cfg.rank_tol)
    dec_next = svd(hankel_next, cfg.rank_tol)
    n_r = dec_k.rank if order is None else int(order)
    if n_r < 1:
        raise IdentificationError("Hankel rank collapsed to zero")
    if n_r > dec_k.singular_values.size:
        raise InvalidInputError(f"requested order {n_r} exceeds Hankel size")
    obs_k = dec_k.left[:, :n_r] * np.sqrt(dec_k.singular_values[:n_r])
    obs_next = dec_next.left[:, :n_r] * np.sqrt(dec_next.singular_values[:n_r])
    reach_next = np.sqrt(dec_next.singular_values[:n_r])[:, None] * dec_next.right[:, :n_r].T
    split = (cfg.p - 1) * n_y
    a = pseudo_inverse(obs_next[:split]) @ obs_k[n_y:]
    b = reach_next[:, :n_u]
    c = obs_k[:n_y]
    return a, b, c, dec_k.singular_values


def identify_ltv(plant, nominal, cfg):
    """Identify the time-varying perturbation system along ``nominal``.

    Runs the impulse experiments, estimates Markov parameters, and applies
    :func:`era_step` at every step with a full-size Hankel pair. A single
    realization order is enforced across steps; it is chosen as the modal
    per-step Hankel rank under ``cfg.rank_tol`` and any per-step drift from
    it is logged as a diagnostic.
    """
    controls = np.asarray(nominal[0], dtype=float)
    n = controls.shape[0]
    if min(cfg.p * plant.n_y, cfg.q * plant.n_u) < plant.n_x:
        raise InvalidInputError(
            f"Hankel design min(p*n_y, q*n_u) = "
            f"{min(cfg.p * plant.n_y, cfg.q * plant.n_u)} is below the state "
            f"dimension {plant.n_x}"
        )
    k_min, k_max = cfg.q, n - cfg.p
    if k_max < k_min:
        raise IdentificationError(
            f"horizon {n} too short for Hankel design p={cfg.p}, q={cfg.q}"
        )
    experiments = impulse_experiments(plant, nominal, cfg)
    markov = estimate_markov(experiments, cfg)
    hankels = [build_hankel(markov, k, cfg.p, cfg.q) for k in range(k_min, k_max + 2)]
    ranks = [svd(h, cfg.rank_tol).rank for h in hankels[:-1]]
    order = int(np.bincount(ranks).argmax())
    if order < 1:
        raise IdentificationError("identified order is zero; increase the impulse amplitude")
    drift = [(k_min + i, r) for i, r in enumerate(ranks) if r != order]
    if drift:
        logger.info("per-step Hankel rank deviates from modal order %d at %s", order, drift)
    a_seq, b_seq, c_seq, spectra = [], [], [], []
    for i, k in enumerate(range(k_min, k_max + 1)):
        a, b, c, spectrum = era_step(hankels[i], hankels[i + 1], cfg, order=order)
        a_seq.append(a)
        b_seq.append(b)
        c_seq.append(c)
        spectra.append(spectrum)
    return LtvRealization(
        a=np.array(a_seq),
        b=np.array(b_seq),
        c=np.array(c_seq),
        order=order,
        first_step=k_min,
        singular_values=np.array(spectra),
    )


def reconstruct_markov(realization, k, j):
    """Markov parameter implied by the realization: ``C_k A_{k-1} ... A_{j+1} B_j``."""
    lo, hi = realization.valid_range
    if not (lo <= j < k <= hi):
        raise BoundaryError(
            f"(k={k}, j={j}) outside reconstructable range {lo} <= j < k <= {hi}"
        )
    _, b, _ = realization.matrices_at(j)
    prod = b
    for m in range(j + 1, k):
        a_m, _, _ = realization.matrices_at(m)
        prod = a_m @ prod
    _, _, c = realization.matrices_at(k)
    return c @ prod


def markov_comparison(realization, markov, k):
    """Measured vs. reconstructed parameter sequences at output step ``k``.

    Returns ``(j_values, measured, reconstructed)`` over every impulse step
    ``j`` the realization can reach; arrays are ``(len(j_values), n_y, n_u)``.
    """
    lo, hi = realization.valid_range
    if not lo < k <= hi:
        raise BoundaryError(f"step {k} outside comparison range ({lo}, {hi}]")
    j_values = np.arange(lo, k)
    measured = np.array([markov.get(k, j) for j in j_values])
    reconstructed = np.array([reconstruct_markov(realization, k, j) for j in j_values])
    return j_values, measured, reconstructed
