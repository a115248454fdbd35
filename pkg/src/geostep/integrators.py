"""Time stepping for multistep, one-leg, generalized, predictor-corrector
and partitioned schemes.

A trajectory with parameter `steps` holds exactly `steps` recorded states
y_0 .. y_{steps-1}: the starter supplies the first k (the window, y_0
included) and the scheme generates the rest.  `steps = k` therefore returns
the starter output untouched.

Implicit relations on linear fields are solved directly; nonlinear ones go
through damped fixed-point iteration with at most `max_iterations` sweeps.
Linear fields additionally get a fast propagation path: the per-step
relation is compiled once into the window transfer matrix and iterated.
The generic per-step path is kept as the reference implementation and for
nonlinear fields; both paths agree to roundoff and tests assert it.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import expm

from .methods import MethodError, MethodSpec
from .systems import LinearHamiltonian, sho_exact

__all__ = [
    "SolverConfig",
    "PCPair",
    "PartitionedPair",
    "Trajectory",
    "ConvergenceError",
    "SingularStepError",
    "StepFailure",
    "pad_method",
    "rk4_start",
    "exact_start",
    "lmm_step",
    "oneleg_step",
    "generalized_step",
    "pc_step",
    "partitioned_step",
    "integrate",
    "step_residual",
    "window_matrix",
    "scheme_window",
]


class ConvergenceError(RuntimeError):
    """Fixed-point solve failed to converge."""


class SingularStepError(RuntimeError):
    """The implicit per-step operator is singular at this h."""


class StepFailure(RuntimeError):
    """A step failed mid-run; carries the failing index and the partial run.

    `step` is the index of the state that could not be produced; `partial`
    is a Trajectory holding every state that was produced, `cause` the
    underlying error.
    """

    def __init__(self, step: int, cause: Exception, partial: "Trajectory"):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause
        self.partial = partial


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-14
    max_iterations: int = 50
    starter: str = "rk4"  # "rk4" or "exact"

    def __post_init__(self):
        if self.starter not in ("rk4", "exact"):
            raise ValueError(f"starter must be 'rk4' or 'exact', got {self.starter!r}")
        if not self.tolerance > 0 or self.max_iterations < 1:
            raise ValueError("tolerance must be > 0 and max_iterations >= 1")


DEFAULT_CONFIG = SolverConfig()


def pad_method(m: MethodSpec, k: int) -> MethodSpec:
    """Embed an m.k-step scheme in a k-step window by prepending zeros."""
    if k < m.k:
        raise MethodError(f"cannot pad {m.name} (k={m.k}) down to k={k}")
    if k == m.k:
        return m
    if m.gamma is not None:
        raise MethodError("padding is only supported for plain coefficient schemes")
    pad = (Fraction(0),) * (k - m.k)
    return MethodSpec(m.name, k, pad + m.alpha, pad + m.beta, m.kind)


@dataclass(frozen=True)
class PCPair:
    """Predictor-corrector pair, PECE by default.

    PECE: predict y*, evaluate f(y*), correct once using f(y*) for the
    implicit term, evaluate again at the corrected state for storage.  The
    `pec` mode skips the final evaluation and stores f(y*) instead.
    """

    name: str
    predictor: MethodSpec
    corrector: MethodSpec
    mode: str = "pece"

    def __post_init__(self):
        if self.mode not in ("pece", "pec"):
            raise MethodError(f"pc mode must be 'pece' or 'pec', got {self.mode!r}")
        k = max(self.predictor.k, self.corrector.k)
        object.__setattr__(self, "predictor", pad_method(self.predictor, k))
        object.__setattr__(self, "corrector", pad_method(self.corrector, k))
        if not self.predictor.explicit:
            raise MethodError(f"predictor {self.predictor.name} must be explicit")
        for m in (self.predictor, self.corrector):
            if m.kind != "lmm":
                raise MethodError("pc pairs are built from plain schemes")

    @property
    def k(self) -> int:
        return self.predictor.k


@dataclass(frozen=True)
class PartitionedPair:
    """Two explicit schemes, one driving q and one driving p.

    By default `first` advances the positions and `second` the momenta;
    `swap` exchanges the assignment.  The shorter window is zero-padded so
    both schemes share one window length.
    """

    name: str
    first: MethodSpec
    second: MethodSpec
    swap: bool = False

    def __post_init__(self):
        k = max(self.first.k, self.second.k)
        object.__setattr__(self, "first", pad_method(self.first, k))
        object.__setattr__(self, "second", pad_method(self.second, k))
        for m in (self.first, self.second):
            if not m.explicit:
                raise MethodError(f"partitioned member {m.name} must be explicit")
            if m.kind != "lmm":
                raise MethodError("partitioned pairs are built from plain schemes")

    @property
    def k(self) -> int:
        return self.first.k

    @property
    def q_method(self) -> MethodSpec:
        return self.second if self.swap else self.first

    @property
    def p_method(self) -> MethodSpec:
        return self.first if self.swap else self.second


Scheme = MethodSpec | PCPair | PartitionedPair


def scheme_window(scheme: Scheme) -> int:
    """Window length k of a scheme or pair."""
    return scheme.k


@dataclass(frozen=True)
class Trajectory:
    """Recorded run: states (steps, 2n), energies, optional exact-error channel."""

    h: float
    states: np.ndarray
    energies: np.ndarray
    errors: np.ndarray | None
    start_count: int
    t0: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self.states))


# ---------------------------------------------------------------------------
# starters


def rk4_start(field, y0, h: float, count: int) -> list[np.ndarray]:
    """y0 plus `count` further states from the classical fourth-order one-step."""
    y = np.array(y0, dtype=float)
    out = [y]
    f = field.evaluate
    for _ in range(count):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(y)
    return out


def _is_sho(field: LinearHamiltonian) -> bool:
    S = field.S
    return (
        field.n == 1 and S[0, 1] == 0.0 and S[1, 1] == 1.0 and S[0, 0] > 0.0
    )


def exact_start(field, y0, h: float, count: int) -> list[np.ndarray]:
    """y0 plus `count` states on the exact flow (linear fields only)."""
    if not isinstance(field, LinearHamiltonian):
        raise ValueError("exact starter requires a linear field")
    y0 = np.array(y0, dtype=float)
    if _is_sho(field):
        w = float(np.sqrt(field.S[0, 0]))
        return [sho_exact(w, y0, j * h) for j in range(count + 1)]
    # each state from its own matrix exponential, no error accumulation
    return [expm(j * h * field.A) @ y0 for j in range(count + 1)]


def _exact_trajectory(field: LinearHamiltonian, y0, h: float, steps: int) -> np.ndarray:
    """Exact flow sampled at the trajectory grid, for the error channel."""
    y0 = np.array(y0, dtype=float)
    if _is_sho(field):
        w = float(np.sqrt(field.S[0, 0]))
        return sho_exact(w, y0, h * np.arange(steps))
    out = np.empty((steps, field.dim))
    phi = expm(h * field.A)
    y = y0.copy()
    for j in range(steps):
        out[j] = y
        y = phi @ y
    return out


# ---------------------------------------------------------------------------
# implicit solves


def _fixed_point(phi, guess, cfg: SolverConfig, damping: float = 1.0):
    y = np.array(guess, dtype=float)
    for _ in range(cfg.max_iterations):
        ynew = phi(y)
        if damping != 1.0:
            ynew = (1.0 - damping) * y + damping * ynew
        if not np.all(np.isfinite(ynew)):
            raise ConvergenceError("fixed-point iteration diverged (non-finite)")
        # half the budget so the relation residual stays within tolerance
        if np.linalg.norm(ynew - y) <= 0.5 * cfg.tolerance * (
            1.0 + np.linalg.norm(ynew)
        ):
            return ynew
        y = ynew
    raise ConvergenceError(
        f"no convergence in {cfg.max_iterations} fixed-point iterations"
    )


def _linear_lead_solve(alpha_k: float, beta_k: float, A: np.ndarray, h: float, rhs):
    lead = alpha_k * np.eye(A.shape[0]) - h * beta_k * A
    try:
        return np.linalg.solve(lead, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(
            f"alpha_k I - h beta_k A is singular at h = {h}"
        ) from exc


# ---------------------------------------------------------------------------
# single steps (window = k states y_n .. y_{n+k-1}, returns y_{n+k})


def _check_window(m_k: int, window) -> list[np.ndarray]:
    ys = [np.asarray(y, dtype=float) for y in window]
    if len(ys) != m_k:
        raise ValueError(f"window must hold k = {m_k} states, got {len(ys)}")
    return ys


def lmm_step(m: MethodSpec, field, window, h: float,
             cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One step of the plain multistep relation."""
    ys = _check_window(m.k, window)
    a = [float(c) for c in m.alpha]
    b = [float(c) for c in m.beta]
    rhs = sum(
        (-a[j]) * ys[j] + (h * b[j]) * field.evaluate(ys[j]) if b[j] else (-a[j]) * ys[j]
        for j in range(m.k)
    )
    if m.explicit:
        return rhs / a[m.k]
    if isinstance(field, LinearHamiltonian):
        return _linear_lead_solve(a[m.k], b[m.k], field.A, h, rhs)
    return _fixed_point(
        lambda y: (rhs + h * b[m.k] * field.evaluate(y)) / a[m.k], ys[-1], cfg
    )


def oneleg_step(m: MethodSpec, field, window, h: float,
                cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One step of the one-leg relation: f evaluated once per iterate."""
    if sum(m.beta, Fraction(0)) != 1:
        raise MethodError("one-leg stepping requires sigma(1) = 1")
    ys = _check_window(m.k, window)
    a = [float(c) for c in m.alpha]
    b = [float(c) for c in m.beta]
    rhs = sum((-a[j]) * ys[j] for j in range(m.k))
    u_known = sum(b[j] * ys[j] for j in range(m.k))
    if m.explicit:
        return (rhs + h * field.evaluate(u_known)) / a[m.k]
    if isinstance(field, LinearHamiltonian):
        # alpha_k y - h beta_k A y = rhs + h A u_known
        return _linear_lead_solve(
            a[m.k], b[m.k], field.A, h, rhs + h * (field.A @ u_known)
        )
    return _fixed_point(
        lambda y: (rhs + h * field.evaluate(u_known + b[m.k] * y)) / a[m.k],
        ys[-1],
        cfg,
    )


def generalized_step(m: MethodSpec, field, window, h: float,
                     cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One step with derivative arguments taken at gamma-combinations."""
    if m.gamma is None:
        raise MethodError("generalized stepping requires a gamma matrix")
    ys = _check_window(m.k, window)
    a = [float(c) for c in m.alpha]
    b = [float(c) for c in m.beta]
    g = [[float(c) for c in row] for row in m.gamma]
    rhs = sum((-a[j]) * ys[j] for j in range(m.k))
    if isinstance(field, LinearHamiltonian):
        eb = [float(c) for c in m.effective_beta()]
        lin_rhs = rhs + h * (field.A @ sum(eb[l] * ys[l] for l in range(m.k)))
        return _linear_lead_solve(a[m.k], eb[m.k], field.A, h, lin_rhs)
    c_known = [sum(g[j][l] * ys[l] for l in range(m.k)) for j in range(m.k + 1)]

    def phi(y):
        s = rhs.copy()
        for j in range(m.k + 1):
            if b[j]:
                s = s + h * b[j] * field.evaluate(c_known[j] + g[j][m.k] * y)
        return s / a[m.k]

    if m.explicit:
        return phi(ys[-1])
    return _fixed_point(phi, ys[-1], cfg)


def _pc_advance(pair: PCPair, field, ys, fs, h: float):
    """One predictor-corrector step from explicit state and derivative history."""
    k = pair.k
    ap = [float(c) for c in pair.predictor.alpha]
    bp = [float(c) for c in pair.predictor.beta]
    ac = [float(c) for c in pair.corrector.alpha]
    bc = [float(c) for c in pair.corrector.beta]
    ystar = sum((-ap[j]) * ys[j] for j in range(k))
    ystar = (ystar + h * sum(bp[j] * fs[j] for j in range(k) if bp[j])) / ap[k]
    fstar = field.evaluate(ystar)
    ycorr = sum((-ac[j]) * ys[j] for j in range(k))
    ycorr = (
        ycorr
        + h * (sum(bc[j] * fs[j] for j in range(k) if bc[j]) + bc[k] * fstar)
    ) / ac[k]
    fnew = field.evaluate(ycorr) if pair.mode == "pece" else fstar
    return ycorr, fnew


def pc_step(pair: PCPair, field, window, h: float,
            cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One PECE step from a window of states (derivatives recomputed)."""
    ys = _check_window(pair.k, window)
    fs = [field.evaluate(y) for y in ys]
    ynew, _ = _pc_advance(pair, field, ys, fs, h)
    return ynew


def partitioned_step(pair: PartitionedPair, field, window, h: float,
                     cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """One partitioned step: q from q_method on f_q, p from p_method on f_p."""
    ys = _check_window(pair.k, window)
    n = field.dim // 2
    mq, mp = pair.q_method, pair.p_method
    aq = [float(c) for c in mq.alpha]
    bq = [float(c) for c in mq.beta]
    ap = [float(c) for c in mp.alpha]
    bp = [float(c) for c in mp.beta]
    fs = [field.evaluate(y) for y in ys]
    k = pair.k
    qnew = sum((-aq[j]) * ys[j][:n] for j in range(k))
    qnew = (qnew + h * sum(bq[j] * fs[j][:n] for j in range(k) if bq[j])) / aq[k]
    pnew = sum((-ap[j]) * ys[j][n:] for j in range(k))
    pnew = (pnew + h * sum(bp[j] * fs[j][n:] for j in range(k) if bp[j])) / ap[k]
    return np.concatenate([qnew, pnew])


def step_residual(scheme, field, states, h: float) -> float:
    """Norm of the defining relation over k+1 consecutive states.

    For pairs this is the corrector/partition relation the accepted step
    actually satisfied; for pc pairs the PECE substitution makes the plain
    corrector relation hold only approximately, so the residual reported is
    the one-step reconstruction error instead.
    """
    ys = [np.asarray(y, dtype=float) for y in states]
    if isinstance(scheme, MethodSpec):
        m = scheme
        if len(ys) != m.k + 1:
            raise ValueError(f"need k+1 = {m.k + 1} states")
        a = [float(c) for c in m.alpha]
        if m.kind == "lmm":
            r = sum(a[j] * ys[j] for j in range(m.k + 1)) - h * sum(
                float(b) * field.evaluate(ys[j])
                for j, b in enumerate(m.beta)
                if b != 0
            )
        elif m.kind == "one-leg":
            u = sum(float(b) * ys[j] for j, b in enumerate(m.beta))
            r = sum(a[j] * ys[j] for j in range(m.k + 1)) - h * field.evaluate(u)
        else:
            g = m.gamma
            r = sum(a[j] * ys[j] for j in range(m.k + 1))
            for j, b in enumerate(m.beta):
                if b != 0:
                    u = sum(float(g[j][l]) * ys[l] for l in range(m.k + 1))
                    r = r - h * float(b) * field.evaluate(u)
        return float(np.linalg.norm(r))
    if isinstance(scheme, (PCPair, PartitionedPair)):
        redo = (pc_step if isinstance(scheme, PCPair) else partitioned_step)(
            scheme, field, ys[:-1], h
        )
        return float(np.linalg.norm(ys[-1] - redo))
    raise TypeError(f"unsupported scheme {scheme!r}")


# ---------------------------------------------------------------------------
# window transfer matrices (linear fields)


def _lmm_window_matrix(m: MethodSpec, A: np.ndarray, h: float) -> np.ndarray:
    a = [float(c) for c in m.alpha]
    b = [float(c) for c in m.effective_beta()]
    k, d = m.k, A.shape[0]
    lead = a[k] * np.eye(d) - h * b[k] * A
    M = np.zeros((k * d, k * d))
    if k > 1:
        M[: (k - 1) * d, d:] = np.eye((k - 1) * d)
    try:
        bottom = np.linalg.solve(
            lead,
            np.hstack([h * b[j] * A - a[j] * np.eye(d) for j in range(k)]),
        )
    except np.linalg.LinAlgError as exc:
        raise SingularStepError(
            f"alpha_k I - h beta_k A is singular at h = {h}"
        ) from exc
    M[(k - 1) * d :, :] = bottom
    return M


def _pece_window_matrix(pair: PCPair, A: np.ndarray, h: float) -> np.ndarray:
    ap = [float(c) for c in pair.predictor.alpha]
    bp = [float(c) for c in pair.predictor.beta]
    ac = [float(c) for c in pair.corrector.alpha]
    bc = [float(c) for c in pair.corrector.beta]
    k, d = pair.k, A.shape[0]
    I = np.eye(d)
    M = np.zeros((k * d, k * d))
    if k > 1:
        M[: (k - 1) * d, d:] = np.eye((k - 1) * d)
    for j in range(k):
        Pj = (h * bp[j] * A - ap[j] * I) / ap[k]
        Cj = (h * bc[j] * A - ac[j] * I) / ac[k]
        M[(k - 1) * d :, j * d : (j + 1) * d] = Cj + (h * bc[k] / ac[k]) * (A @ Pj)
    return M


def _partitioned_window_matrix(pair: PartitionedPair, A: np.ndarray, h: float
                               ) -> np.ndarray:
    d = A.shape[0]
    n = d // 2
    mq, mp = pair.q_method, pair.p_method
    aq = [float(c) for c in mq.alpha]
    bq = [float(c) for c in mq.beta]
    ap = [float(c) for c in mp.alpha]
    bp = [float(c) for c in mp.beta]
    k = pair.k
    M = np.zeros((k * d, k * d))
    if k > 1:
        M[: (k - 1) * d, d:] = np.eye((k - 1) * d)
    Iq = np.hstack([np.eye(n), np.zeros((n, n))])
    Ip = np.hstack([np.zeros((n, n)), np.eye(n)])
    for j in range(k):
        Bq = (-aq[j] / aq[k]) * Iq + (h * bq[j] / aq[k]) * A[:n, :]
        Bp = (-ap[j] / ap[k]) * Ip + (h * bp[j] / ap[k]) * A[n:, :]
        M[(k - 1) * d : (k - 1) * d + n, j * d : (j + 1) * d] = Bq
        M[(k - 1) * d + n : k * d, j * d : (j + 1) * d] = Bp
    return M


def window_matrix(scheme: Scheme, A: np.ndarray, h: float) -> np.ndarray:
    """One-step matrix on the stacked window (y_n, ..., y_{n+k-1})."""
    A = np.asarray(A, dtype=float)
    if isinstance(scheme, MethodSpec):
        return _lmm_window_matrix(scheme, A, h)
    if isinstance(scheme, PCPair):
        if scheme.mode != "pece":
            raise ValueError("window matrix is defined for pece mode only")
        return _pece_window_matrix(scheme, A, h)
    if isinstance(scheme, PartitionedPair):
        return _partitioned_window_matrix(scheme, A, h)
    raise TypeError(f"unsupported scheme {scheme!r}")


# ---------------------------------------------------------------------------
# driver


def _starter_states(field, y0, h, k, cfg):
    if cfg.starter == "exact":
        return exact_start(field, y0, h, k - 1)
    return rk4_start(field, y0, h, k - 1)


class _LoopFailure(Exception):
    def __init__(self, step: int, cause: Exception, produced: np.ndarray):
        self.step = step
        self.cause = cause
        self.produced = produced


def _generic_loop(scheme, field, window, h, steps, cfg):
    k = scheme_window(scheme)
    d = len(window[0])
    states = np.empty((steps, d))
    for i, y in enumerate(window):
        states[i] = y
    ys = list(window)
    if isinstance(scheme, PCPair):
        fs = [field.evaluate(y) for y in ys]
        for j in range(k, steps):
            ynew, fnew = _pc_advance(scheme, field, ys, fs, h)
            ys = ys[1:] + [ynew]
            fs = fs[1:] + [fnew]
            states[j] = ynew
        return states
    if isinstance(scheme, PartitionedPair):
        stepper = partitioned_step
    elif scheme.kind == "one-leg":
        stepper = oneleg_step
    elif scheme.kind == "generalized":
        stepper = generalized_step
    else:
        stepper = lmm_step
    for j in range(k, steps):
        try:
            ynew = stepper(scheme, field, ys, h, cfg)
        except (ConvergenceError, SingularStepError) as exc:
            raise _LoopFailure(j, exc, states[:j].copy()) from exc
        ys = ys[1:] + [ynew]
        states[j] = ynew
    return states


def _matrix_loop(scheme, field, window, h, steps):
    k = scheme_window(scheme)
    d = len(window[0])
    M = window_matrix(scheme, field.A, h)
    states = np.empty((steps, d))
    for i, y in enumerate(window):
        states[i] = y
    Y = np.concatenate(window)
    tail = (k - 1) * d
    for j in range(k, steps):
        Y = M @ Y
        states[j] = Y[tail:]
    return states


def integrate(scheme: Scheme, field, y0, h: float, steps: int,
              cfg: SolverConfig = DEFAULT_CONFIG,
              force_generic: bool = False) -> Trajectory:
    """Run a scheme and record states, energies and the exact-error channel.

    `steps` counts recorded states including the k starter states; it must
    be at least k.  Errors are recorded only for linear fields, where the
    exact flow is available.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    k = scheme_window(scheme)
    if steps < k:
        raise ValueError(f"steps must be >= k = {k}, got {steps}")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (field.dim,):
        raise ValueError(f"y0 must have shape ({field.dim},), got {y0.shape}")
    window = _starter_states(field, y0, h, k, cfg)
    linear = isinstance(field, LinearHamiltonian)
    fast = (
        linear
        and not force_generic
        and not (isinstance(scheme, PCPair) and scheme.mode != "pece")
    )

    def finish(states):
        # overflow in exploding runs is data, not an error
        with np.errstate(over="ignore", invalid="ignore"):
            energies = field.energies(states)
            errors = None
            if linear:
                exact = _exact_trajectory(field, y0, h, len(states))
                errors = np.linalg.norm(states - exact, axis=1)
        return Trajectory(
            h=h, states=states, energies=energies, errors=errors, start_count=k
        )

    with np.errstate(over="ignore", invalid="ignore"):
        try:
            if fast:
                states = _matrix_loop(scheme, field, window, h, steps)
            else:
                states = _generic_loop(scheme, field, window, h, steps, cfg)
        except SingularStepError as exc:
            # the compiled map failed before any step was taken
            raise StepFailure(k, exc, finish(np.array(window))) from exc
        except _LoopFailure as exc:
            raise StepFailure(exc.step, exc.cause, finish(exc.produced)) from exc
    return finish(states)
