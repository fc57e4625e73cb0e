"""Two-axis synchronous machine with IEEE Type-I AVR and droop governor.

Machine dq convention (generator sign): a machine-frame phasor f_d + j f_q
maps to the network frame through e^{j(delta - pi/2)}.  Speeds in per-unit
on the system frequency base; time constants in seconds; the swing and
damping terms are referenced to the centre-of-inertia speed, so the COI
mode itself is not damped by D.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .complex_frequency import ParkVector


class InitializationError(RuntimeError):
    """Dispatch infeasible for the machine limits at initialization."""


@dataclass
class SynMachineParams:
    H: float            # inertia constant, s
    D: float            # damping, pu torque / pu speed
    ra: float           # armature resistance, pu
    xd: float
    xq: float
    xd1: float          # transient reactances, pu
    xq1: float
    td01: float         # open-circuit transient time constants, s
    tq01: float
    s_rated: float = 100.0  # MVA, COI weight only; params already on system base

    def __post_init__(self) -> None:
        if self.H <= 0.0 or self.td01 <= 0.0 or self.tq01 <= 0.0:
            raise ValueError("H, Td0', Tq0' must be positive")
        if not (self.xd >= self.xd1 > 0.0 and self.xq >= self.xq1 > 0.0):
            raise ValueError("need xd >= xd' > 0 and xq >= xq' > 0")


@dataclass
class AVRParams:
    ka: float = 20.0
    ta: float = 0.2
    ke: float = 1.0
    te: float = 0.314
    kf: float = 0.063
    tf: float = 0.35
    vr_min: float = -5.0
    vr_max: float = 5.0
    v_ref: float = 1.0  # set by initialize_sm


@dataclass
class GovParams:
    droop: float = 0.05  # pu speed / pu power
    t_sv: float = 0.1    # servo time constant, s
    t_ch: float = 0.5    # turbine (reheat) time constant, s
    p_min: float = 0.0
    p_max: float = 2.5
    p_ref: float = 0.0   # set by initialize_sm

    def __post_init__(self) -> None:
        if self.droop <= 0.0:
            raise ValueError("droop must be positive")
        if self.p_min >= self.p_max:
            raise ValueError("p_min must be below p_max")


STATE_NAMES = ("delta", "omega", "eq1", "ed1", "efd", "rf", "vr", "psv", "pm")
N_STATES = len(STATE_NAMES)


@dataclass
class SynMachineState:
    delta: float   # rotor angle, rad (network frame)
    omega: float   # speed, pu
    eq1: float     # q-axis transient EMF, pu
    ed1: float     # d-axis transient EMF, pu
    efd: float     # field voltage, pu
    rf: float      # AVR rate feedback
    vr: float      # AVR regulator output
    psv: float     # governor valve position, pu
    pm: float      # mechanical power, pu

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "SynMachineState":
        return cls(*(float(v) for v in x))


def _machine_frame(vbus: ParkVector, delta: float) -> tuple[float, float]:
    """Bus voltage components on the machine dq axes."""
    vmag = vbus.mag
    th = vbus.angle
    return vmag * math.sin(delta - th), vmag * math.cos(delta - th)


def stator_currents(st: SynMachineState, vbus: ParkVector, p: SynMachineParams) -> tuple[float, float]:
    """Solve the stator algebraic equations for (i_d, i_q) in the machine frame."""
    vd, vq = _machine_frame(vbus, st.delta)
    det = p.ra * p.ra + p.xd1 * p.xq1
    if det == 0.0:
        raise ZeroDivisionError("singular stator impedance")
    ed = st.ed1 - vd
    eq = st.eq1 - vq
    i_d = (p.ra * ed + p.xq1 * eq) / det
    i_q = (-p.xd1 * ed + p.ra * eq) / det
    return i_d, i_q


def electrical_power(st: SynMachineState, i_d: float, i_q: float, p: SynMachineParams) -> float:
    return st.ed1 * i_d + st.eq1 * i_q + (p.xq1 - p.xd1) * i_d * i_q


def sm_derivatives(st: SynMachineState, vbus: ParkVector, p: SynMachineParams,
                   avr: AVRParams, gov: GovParams, omega_coi: float,
                   omega_base: float) -> np.ndarray:
    """Time derivatives of the 9 machine states (order of STATE_NAMES)."""
    i_d, i_q = stator_currents(st, vbus, p)
    pe = electrical_power(st, i_d, i_q, p)
    vmag = vbus.mag

    d_delta = omega_base * (st.omega - omega_coi)
    d_omega = (st.pm - pe - p.D * (st.omega - omega_coi)) / (2.0 * p.H)
    d_eq1 = (-st.eq1 - (p.xd - p.xd1) * i_d + st.efd) / p.td01
    d_ed1 = (-st.ed1 + (p.xq - p.xq1) * i_q) / p.tq01

    d_efd = (st.vr - avr.ke * st.efd) / avr.te
    d_rf = (-st.rf + (avr.kf / avr.tf) * st.efd) / avr.tf
    d_vr = (-st.vr + avr.ka * st.rf - (avr.ka * avr.kf / avr.tf) * st.efd
            + avr.ka * (avr.v_ref - vmag)) / avr.ta
    # anti-windup on regulator output
    if (st.vr >= avr.vr_max and d_vr > 0.0) or (st.vr <= avr.vr_min and d_vr < 0.0):
        d_vr = 0.0

    d_psv = (-st.psv + gov.p_ref + (1.0 - st.omega) / gov.droop) / gov.t_sv
    if (st.psv >= gov.p_max and d_psv > 0.0) or (st.psv <= gov.p_min and d_psv < 0.0):
        d_psv = 0.0
    d_pm = (st.psv - st.pm) / gov.t_ch

    return np.array([d_delta, d_omega, d_eq1, d_ed1, d_efd, d_rf, d_vr, d_psv, d_pm])


def sm_current_injection(st: SynMachineState, vbus: ParkVector, p: SynMachineParams) -> complex:
    """Stator current as a network-frame complex phasor."""
    i_d, i_q = stator_currents(st, vbus, p)
    return complex(i_d, i_q) * cmath.exp(1j * (st.delta - math.pi / 2.0))


def coi_frequency(speeds, params) -> float:
    """Inertia-weighted average speed sum(H_i S_i w_i) / sum(H_i S_i)."""
    if len(speeds) == 0:
        raise ValueError("COI of an empty machine set")
    w = np.array([p.H * p.s_rated for p in params])
    return float(np.dot(w, np.asarray(speeds, dtype=float)) / np.sum(w))


def initialize_sm(v_terminal: complex, p_gen: float, q_gen: float,
                  p: SynMachineParams, avr: AVRParams, gov: GovParams) -> SynMachineState:
    """Equilibrium machine state for a solved dispatch at terminal voltage.

    Also fills in the AVR voltage reference and governor power reference
    (mutated on the passed parameter objects) so that every derivative of
    the returned state is zero.
    """
    i_net = (complex(p_gen, q_gen) / v_terminal).conjugate()
    delta = cmath.phase(v_terminal + complex(p.ra, p.xq) * i_net)
    rot = cmath.exp(-1j * (delta - math.pi / 2.0))
    vm = v_terminal * rot
    im = i_net * rot
    vd, vq = vm.real, vm.imag
    i_d, i_q = im.real, im.imag

    eq1 = vq + p.ra * i_q + p.xd1 * i_d
    ed1 = vd + p.ra * i_d - p.xq1 * i_q
    efd = eq1 + (p.xd - p.xd1) * i_d
    vr = avr.ke * efd
    if not (avr.vr_min < vr < avr.vr_max):
        raise InitializationError(f"AVR output {vr:.3f} outside limits at initialization")
    avr.v_ref = abs(v_terminal) + vr / avr.ka
    rf = (avr.kf / avr.tf) * efd

    st = SynMachineState(delta=delta, omega=1.0, eq1=eq1, ed1=ed1, efd=efd,
                         rf=rf, vr=vr, psv=0.0, pm=0.0)
    pe = electrical_power(st, i_d, i_q, p)
    if not (gov.p_min <= pe <= gov.p_max):
        raise InitializationError(f"mechanical power {pe:.3f} outside governor limits")
    st.pm = pe
    st.psv = pe
    gov.p_ref = pe
    return st
