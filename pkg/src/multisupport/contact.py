"""Contact-switch hysteresis automaton.

The continuous contact command gamma is discretized with a dual threshold
plus a minimum dwell time: a switch fires only when gamma crosses the outer
band AND the clamped time since the last switch has saturated. This
reproduces the demonstrated waiting behavior and prevents chattering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

GAMMA_HI = 0.8
GAMMA_LO = 0.2
SWITCH_DWELL = 20.0


@dataclass(frozen=True)
class ContactAutomaton:
    contact: int = 0
    tau: float = SWITCH_DWELL  # episode start counts as "long since any switch"
    gamma_hi: float = GAMMA_HI
    gamma_lo: float = GAMMA_LO
    dwell: float = SWITCH_DWELL
    tau_max: float = SWITCH_DWELL

    def with_tau(self, tau: float) -> "ContactAutomaton":
        return replace(self, tau=min(tau, self.tau_max))


def hysteresis_update(aut: ContactAutomaton, gamma: float, dt: float):
    """Advance the automaton by dt under command gamma.

    Returns (automaton', event) where event is 'enable', 'disable', or None.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau = min(aut.tau + dt, aut.tau_max)
    if aut.contact == 0 and gamma >= aut.gamma_hi and tau >= aut.dwell:
        return replace(aut, contact=1, tau=0.0), "enable"
    if aut.contact == 1 and gamma <= aut.gamma_lo and tau >= aut.dwell:
        return replace(aut, contact=0, tau=0.0), "disable"
    return replace(aut, tau=tau), None
