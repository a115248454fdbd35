"""Structural diagnostics: transfer matrices, quadratic-invariant defects,
area preservation, step transition operators and time-reversal residuals.

All checks here work on numbers produced by actual runs or on explicitly
compiled matrices; nothing is inferred from the coefficient table alone
except the pairing matrix (see `methods.lambda_matrix`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .methods import MethodSpec, lambda_matrix
from .integrators import PCPair, PartitionedPair, Scheme, window_matrix, scheme_window
from .systems import LinearHamiltonian, structure_matrix

__all__ = [
    "TransferMatrix",
    "StepTransitionMatrix",
    "StructureDefectReport",
    "transfer_matrix",
    "g_symplecticity_defect",
    "area_defect",
    "numerical_jacobian",
    "step_transition",
    "reversibility_residual",
    "energy_drift",
]


@dataclass(frozen=True)
class TransferMatrix:
    """One-step linear map on the stacked window of k states."""

    method: str
    h: float
    k: int
    dim: int  # single-state dimension 2n
    M: np.ndarray


@dataclass(frozen=True)
class StepTransitionMatrix:
    """Matrix G with y_{n+1} ~ G y_n on the principal mode of a linear run."""

    method: str
    h: float
    G: np.ndarray
    residual: float
    principal_roots: tuple[complex, ...]


@dataclass(frozen=True)
class StructureDefectReport:
    """Conservation defect of the window bilinear form K = Lambda (x) J."""

    method: str
    h: float
    defect: float  # ||M^T K M - K||_F / ||K||_F
    area_defect: float  # | |det M| - 1 |
    structure_matrix: str
    K: np.ndarray
    M: np.ndarray


def _field_matrix(field) -> np.ndarray:
    if isinstance(field, LinearHamiltonian):
        return field.A
    A = np.asarray(field, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
        raise ValueError("need a linear field or an even square matrix")
    return A


def _scheme_name(scheme: Scheme) -> str:
    return scheme.name


def transfer_matrix(scheme: Scheme, field, h: float) -> TransferMatrix:
    """Compile the one-step window map of a scheme on a linear field."""
    A = _field_matrix(field)
    M = window_matrix(scheme, A, h)
    return TransferMatrix(
        method=_scheme_name(scheme),
        h=h,
        k=scheme_window(scheme),
        dim=A.shape[0],
        M=M,
    )


def g_symplecticity_defect(m: MethodSpec, field, h: float) -> StructureDefectReport:
    """How far the window map is from conserving its bilinear pairing.

    The pairing couples window slots through the coefficient products of the
    scheme; when that pairing vanishes identically (every product cancels)
    the slotwise canonical form is used instead so the report still measures
    something, and the description string says so.
    """
    A = _field_matrix(field)
    d = A.shape[0]
    n = d // 2
    tm = transfer_matrix(m, A, h)
    lam = np.array([[float(x) for x in row] for row in lambda_matrix(m)])
    J = structure_matrix(n)
    if np.any(lam != 0.0):
        K = np.kron(lam, J)
        desc = f"pairing (x) J, k = {m.k}"
    else:
        K = np.kron(np.eye(m.k), J)
        desc = f"I_k (x) J (pairing vanished), k = {m.k}"
    M = tm.M
    defect = float(
        np.linalg.norm(M.T @ K @ M - K) / np.linalg.norm(K)
    )
    area = float(abs(abs(np.linalg.det(M)) - 1.0))
    return StructureDefectReport(
        method=m.name,
        h=h,
        defect=defect,
        area_defect=area,
        structure_matrix=desc,
        K=K,
        M=M,
    )


def numerical_jacobian(step_map, y: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a one-step map at y."""
    y = np.asarray(y, dtype=float)
    d = len(y)
    eps = 1e-6 * (1.0 + float(np.linalg.norm(y)))
    Jm = np.empty((d, d))
    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(d):
            e = np.zeros(d)
            e[i] = eps
            Jm[:, i] = (
                np.asarray(step_map(y + e)) - np.asarray(step_map(y - e))
            ) / (2.0 * eps)
    if not np.all(np.isfinite(Jm)):
        raise ValueError("non-finite Jacobian entries")
    return Jm


def area_defect(step_map, y: np.ndarray | None = None) -> float:
    """| |det D| - 1 | for a one-step map given as a matrix or a callable."""
    if callable(step_map):
        if y is None:
            raise ValueError("a callable map needs a point y")
        D = numerical_jacobian(step_map, y)
    else:
        D = np.asarray(step_map, dtype=float)
    return float(abs(abs(np.linalg.det(D)) - 1.0))


ROOT_PICK_TOL = 1e-8
EIGBASIS_COND_LIMIT = 1e8


def step_transition(m: MethodSpec, field, h: float) -> StepTransitionMatrix:
    """Principal one-step matrix G of a scheme on a linear field.

    Per eigenvalue lam of A, G acts as the root of rho(z) - h*lam*sigma(z)
    closest to exp(h*lam).  Two roots equally close (within ROOT_PICK_TOL)
    make the choice ambiguous and raise; a badly conditioned eigenbasis of A
    also raises rather than returning a meaningless real part.
    """
    A = _field_matrix(field)
    a = [float(c) for c in m.alpha]
    b = [float(c) for c in m.effective_beta()]
    evals, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if cond > EIGBASIS_COND_LIMIT:
        raise ValueError(
            f"field eigenbasis condition {cond:.3g} too large for a reliable G"
        )
    roots_per_mode = []
    for lam in evals:
        # rho(z) - h*lam*sigma(z), descending coefficients for the root solver
        coeffs = [a[j] - h * lam * b[j] for j in range(m.k + 1)][::-1]
        coeffs = np.trim_zeros(np.array(coeffs, dtype=complex), "f")
        if len(coeffs) < 2:
            raise ValueError(f"degenerate step polynomial at h = {h}")
        roots = np.roots(coeffs)
        target = np.exp(h * lam)
        dist = np.abs(roots - target)
        order = np.argsort(dist)
        # ambiguous when a second root sits within tolerance of the target,
        # or the two best candidates are indistinguishably close to it
        if len(roots) > 1 and (
            dist[order[1]] < ROOT_PICK_TOL
            or dist[order[1]] - dist[order[0]] < ROOT_PICK_TOL
        ):
            raise ValueError(
                f"principal root of {m.name} at h = {h} is ambiguous: "
                f"two candidates within {ROOT_PICK_TOL} of the target"
            )
        roots_per_mode.append(roots[order[0]])
    zeta = np.array(roots_per_mode)
    G = V @ np.diag(zeta) @ np.linalg.inv(V)
    G = np.real_if_close(G, tol=1000)
    if np.iscomplexobj(G):
        imag = float(np.linalg.norm(np.imag(G)))
        if imag > 1e-9 * max(1.0, float(np.linalg.norm(np.real(G)))):
            raise ValueError(f"step transition matrix not real (imag norm {imag:.3g})")
        G = np.real(G)
    Gp = np.eye(A.shape[0])
    R = np.zeros_like(Gp)
    for j in range(m.k + 1):
        R = R + a[j] * Gp - h * b[j] * (A @ Gp)
        Gp = G @ Gp
    residual = float(np.linalg.norm(R))
    return StepTransitionMatrix(
        method=m.name,
        h=h,
        G=np.asarray(G, dtype=float),
        residual=residual,
        principal_roots=tuple(complex(z) for z in zeta),
    )


def reversibility_residual(m: MethodSpec, field, traj) -> float:
    """Largest defect of the time-reversed sequence under the scheme.

    The reversed states are pushed through the defining relation with the
    step sign flipped; for symmetric coefficients this vanishes identically
    on any sequence the forward scheme produced, up to roundoff.
    """
    h = traj.h
    z = np.asarray(traj.states, dtype=float)[::-1]
    N = len(z)
    if N < m.k + 1:
        raise ValueError(f"need at least k+1 = {m.k + 1} states")
    a = [float(c) for c in m.alpha]
    worst = 0.0
    if m.kind == "one-leg":
        b = [float(c) for c in m.beta]
        for nidx in range(N - m.k):
            u = sum(b[j] * z[nidx + j] for j in range(m.k + 1))
            r = sum(a[j] * z[nidx + j] for j in range(m.k + 1)) + h * field.evaluate(u)
            worst = max(worst, float(np.linalg.norm(r)))
        return worst
    b = [float(c) for c in m.effective_beta()]
    if isinstance(field, LinearHamiltonian):
        fz = z @ field.A.T
    else:
        fz = np.array([field.evaluate(y) for y in z])
    nwin = N - m.k
    r = np.zeros((nwin, z.shape[1]))
    for j in range(m.k + 1):
        r += a[j] * z[j : j + nwin] + h * b[j] * fz[j : j + nwin]
    return float(np.max(np.linalg.norm(r, axis=1)))


def energy_drift(traj) -> tuple[float, float]:
    """(max deviation from H_0, least-squares slope of H over t)."""
    t = np.asarray(traj.times, dtype=float)
    H = np.asarray(traj.energies, dtype=float)
    if len(t) != len(H) or len(t) < 2:
        raise ValueError("need at least two energy samples")
    max_dev = float(np.max(np.abs(H - H[0])))
    A = np.vstack([t, np.ones_like(t)]).T
    slope = float(np.linalg.lstsq(A, H, rcond=None)[0][0])
    return max_dev, slope
