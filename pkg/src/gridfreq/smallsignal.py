"""Linearization, eigenanalysis, and geometric observability.

The assembled DAE is linearized at an equilibrium by central finite
differences; the algebraic variables are eliminated through the network
Jacobian, giving the reduced state matrix

    A = f_x - f_y g_y^{-1} g_x.

The primary-frequency-control mode is identified among the eigenvalues
by three criteria: it is global (all machine speeds participate), the
machine-speed mode-shape components are mutually in phase, and its
natural frequency lies in 0.02-0.1 Hz.  Geometric observability of a
measured signal is the cosine alignment between the signal's output row
and the mode's right eigenvector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dae import SystemModel, SystemState, _fd_jacobian


class ModeIdentificationError(RuntimeError):
    pass


@dataclass
class LinearModel:
    a_sys: np.ndarray
    state_labels: list[str]
    speed_indices: list[int]


@dataclass
class Mode:
    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray
    speed_shape: np.ndarray  # machine-speed components, normalized to max |.| = 1

    @property
    def natural_frequency_hz(self) -> float:
        return abs(self.eigenvalue) / (2.0 * np.pi)

    @property
    def damped_frequency_hz(self) -> float:
        return abs(self.eigenvalue.imag) / (2.0 * np.pi)

    @property
    def damping_ratio(self) -> float:
        m = abs(self.eigenvalue)
        return -self.eigenvalue.real / m if m > 0 else 1.0


@dataclass
class ObservabilityReport:
    k_grid: np.ndarray
    ratio: np.ndarray                      # go(omega_tilde(K)) / go(omega)
    go: dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------

def _check_equilibrium(model: SystemModel, eq: SystemState, tol: float = 1e-8) -> None:
    r = np.concatenate([model.f(eq.x, eq.y), model.g(eq.x, eq.y)])
    worst = np.max(np.abs(r))
    if worst > tol:
        raise ValueError(f"not an equilibrium: residual {worst:.3e} > {tol:g}")


def _central_jacobians(model: SystemModel, eq: SystemState, eps: float):
    """(f_x, f_y, g_x, g_y) by central finite differences."""
    x0, y0 = eq.x, eq.y
    n_x, n_y = model.n_x, model.n_y
    f_x = np.empty((n_x, n_x))
    g_x = np.empty((n_y, n_x))
    for i in range(n_x):
        d = eps * (1.0 + abs(x0[i]))
        xp, xm = x0.copy(), x0.copy()
        xp[i] += d
        xm[i] -= d
        f_x[:, i] = (model.f(xp, y0) - model.f(xm, y0)) / (2 * d)
        g_x[:, i] = (model.g(xp, y0) - model.g(xm, y0)) / (2 * d)
    f_y = np.empty((n_x, n_y))
    g_y = np.empty((n_y, n_y))
    for i in range(n_y):
        d = eps * (1.0 + abs(y0[i]))
        yp, ym = y0.copy(), y0.copy()
        yp[i] += d
        ym[i] -= d
        f_y[:, i] = (model.f(x0, yp) - model.f(x0, ym)) / (2 * d)
        g_y[:, i] = (model.g(x0, yp) - model.g(x0, ym)) / (2 * d)
    return f_x, f_y, g_x, g_y


def linearize(model: SystemModel, eq: SystemState, eps: float = 1e-6) -> LinearModel:
    """Reduced state matrix at an equilibrium (algebraic variables eliminated)."""
    _check_equilibrium(model, eq)
    f_x, f_y, g_x, g_y = _central_jacobians(model, eq, eps)
    try:
        gy_inv_gx = np.linalg.solve(g_y, g_x)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular algebraic Jacobian g_y") from exc
    a = f_x - f_y @ gy_inv_gx
    return LinearModel(a_sys=a, state_labels=list(model.state_labels),
                       speed_indices=list(model.speed_indices))


def eigensolve(lm: LinearModel, residual_tol: float = 1e-8) -> list[Mode]:
    """Full spectrum with right/left eigenvectors, residual-checked."""
    a = lm.a_sys
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries in the state matrix")
    w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    scale = max(np.linalg.norm(a, ord="fro"), 1.0)
    modes = []
    for i in range(len(w)):
        phi = vr[:, i]
        res = np.linalg.norm(a @ phi - w[i] * phi) / np.linalg.norm(phi)
        if res > residual_tol * scale:
            raise RuntimeError(
                f"eigenpair residual {res:.2e} exceeds {residual_tol:g}*||A||; "
                f"cond(A) = {np.linalg.cond(a):.2e}")
        shape = phi[lm.speed_indices]
        peak = np.max(np.abs(shape))
        if peak > 0:
            # rotate so the largest component is real-positive, then scale
            k = int(np.argmax(np.abs(shape)))
            shape = shape * np.exp(-1j * np.angle(shape[k])) / peak
        modes.append(Mode(eigenvalue=complex(w[i]), right=phi,
                          left=vl[:, i], speed_shape=shape))
    modes.sort(key=lambda m: (m.eigenvalue.real, abs(m.eigenvalue.imag)))
    return modes


def identify_frequency_mode(modes: list[Mode],
                            f_lo: float = 0.02, f_hi: float = 0.1,
                            phase_tol_deg: float = 30.0,
                            spread_min: float = 0.2) -> Mode:
    """Select the primary-frequency-control mode.

    Criteria: oscillatory (positive imaginary part of the pair),
    natural frequency in [f_lo, f_hi] Hz, machine-speed shape components
    pairwise in phase within phase_tol_deg, and global participation
    (min/max speed-shape magnitude >= spread_min).
    """
    cands = []
    for m in modes:
        if m.eigenvalue.imag <= 0:
            continue  # keep one of each conjugate pair
        if not (f_lo <= m.natural_frequency_hz <= f_hi):
            continue
        mags = np.abs(m.speed_shape)
        if np.min(mags) / np.max(mags) < spread_min:
            continue
        ang = np.angle(m.speed_shape)
        rel = np.angle(np.exp(1j * (ang[:, None] - ang[None, :])))
        if np.max(np.abs(rel)) > np.deg2rad(phase_tol_deg):
            continue
        cands.append(m)
    if not cands:
        raise ModeIdentificationError(
            f"no mode satisfies the frequency-control criteria in [{f_lo}, {f_hi}] Hz")
    if len(cands) > 1:
        raise ModeIdentificationError(
            f"{len(cands)} candidate modes: " +
            ", ".join(f"{m.eigenvalue:.3f}" for m in cands))
    return cands[0]


# ---------------------------------------------------------------------------
# Output rows and geometric observability
# ---------------------------------------------------------------------------

def _measured_signals(model: SystemModel, x: np.ndarray,
                      y_guess: np.ndarray) -> tuple[float, float]:
    """Exact (rho, omega) in pu at the converter terminal bus.

    The algebraic voltage derivative is recovered by implicit
    differentiation of the network equations, y' = -g_y^{-1} g_x f, so
    the signals are the true logarithmic-derivative quantities rather
    than their filtered estimates.
    """
    if model.cig_bus is None:
        raise ValueError("output rows require a converter (measurement point) in the model")
    y = model.solve_algebraic(x, y_guess)
    g_x = _fd_jacobian(lambda xx: model.g(xx, y), x)
    g_y = _fd_jacobian(lambda yy: model.g(x, yy), y)
    ydot = -np.linalg.solve(g_y, g_x @ model.f(x, y))
    i, n = model.cig_bus, model.n_bus
    v = y[i] + 1j * y[i + n]
    vdot = ydot[i] + 1j * ydot[i + n]
    eta = vdot / v
    rho = eta.real / model.omega_base
    omega = model.coi_speed(x) + eta.imag / model.omega_base
    return rho, omega


def _base_rows(model: SystemModel, eq: SystemState,
               eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """(c_rho, c_omega) by central differences over the state vector."""
    x0, y0 = eq.x, eq.y
    c_rho = np.empty(model.n_x)
    c_omega = np.empty(model.n_x)
    for i in range(model.n_x):
        d = eps * (1.0 + abs(x0[i]))
        xp, xm = x0.copy(), x0.copy()
        xp[i] += d
        xm[i] -= d
        rp, wp = _measured_signals(model, xp, y0)
        rm, wm = _measured_signals(model, xm, y0)
        c_rho[i] = (rp - rm) / (2 * d)
        c_omega[i] = (wp - wm) / (2 * d)
    return c_rho, c_omega


def output_row(model: SystemModel, eq: SystemState, signal: str,
               k: float = 0.0, eps: float = 1e-6) -> np.ndarray:
    """d(signal)/dx by central differences, re-solving the network each time."""
    if signal not in ("rho", "omega", "omega_tilde"):
        raise ValueError(f"unknown signal {signal!r}")
    c_rho, c_omega = _base_rows(model, eq, eps)
    if signal == "rho":
        return c_rho
    if signal == "omega":
        return c_omega
    return c_omega - k * c_rho


def geometric_observability(c: np.ndarray, mode: Mode) -> float:
    """Cosine alignment |c . phi| / (||c|| ||phi||) in [0, 1]."""
    cn = np.linalg.norm(c)
    pn = np.linalg.norm(mode.right)
    if cn == 0.0 or pn == 0.0:
        raise ValueError("zero vector in observability computation")
    return float(abs(np.dot(c.astype(complex), mode.right)) / (cn * pn))


def k_sweep(model: SystemModel, eq: SystemState, mode: Mode,
            k_grid: np.ndarray) -> ObservabilityReport:
    """Observability ratio go(omega_tilde(K)) / go(omega) over a gain grid.

    Uses the linearity of the compensated signal: its output row is
    c(omega) - K c(rho), so the two base rows are differentiated once.
    """
    c_rho, c_omega = _base_rows(model, eq)
    go_omega = geometric_observability(c_omega, mode)
    go_rho = geometric_observability(c_rho, mode)
    ratio = np.empty(len(k_grid))
    for i, k in enumerate(k_grid):
        if k == 0.0:
            ratio[i] = 1.0
        else:
            ratio[i] = geometric_observability(c_omega - k * c_rho, mode) / go_omega
    report = ObservabilityReport(k_grid=np.asarray(k_grid, dtype=float), ratio=ratio)
    report.go["omega"] = go_omega
    report.go["rho"] = go_rho
    report.go["omega_tilde_k1"] = geometric_observability(c_omega - c_rho, mode)
    return report
