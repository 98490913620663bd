"""Closed-form local and string (asymptotic) stability conditions for DCPID gains."""

from __future__ import annotations

from dataclasses import dataclass

from .controller import CascadeGains


@dataclass(frozen=True)
class StabilityPartials:
    """Partial derivatives of the acceleration law at equilibrium.

    ``f_v`` is taken w.r.t. the follower speed, ``f_ex_dot`` w.r.t. the
    relative speed and ``f_d`` w.r.t. the gap.
    """

    f_v: float
    f_ex_dot: float
    f_d: float


@dataclass(frozen=True)
class StabilityVerdict:
    local: bool
    asymptotic: bool
    margin_local: float
    margin_asymptotic: float

    @property
    def stable(self) -> bool:
        return self.local and self.asymptotic


def partials(
    gains: CascadeGains, ht: float, Ts: float, tau: float, t: float = 0.0
) -> StabilityPartials:
    """Equilibrium partials of the DCPID acceleration law.

    ``t`` only enters through the integral gains; both published gain groups
    have zero integral gains, so the default ``t = 0`` is immaterial for them.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts!r}")
    g = gains
    r = Ts / tau
    f_v = -r * ht * (
        0.5 * g.kix * g.kiv * t**2
        + (g.kix * g.kpv + g.kpx * g.kiv) * t
        + g.kpx * g.kpv
        + g.kix * g.kdv
    )
    f_ex_dot = -r * (g.kiv * t + g.kpv)
    f_d = r * (g.kix * t + g.kpx)
    return StabilityPartials(f_v=f_v, f_ex_dot=f_ex_dot, f_d=f_d)


def check_stability(p: StabilityPartials) -> StabilityVerdict:
    """Strict-inequality test; a zero margin counts as unstable."""
    margin_local = p.f_v - p.f_ex_dot
    margin_asym = 0.5 * p.f_v**2 - p.f_v * p.f_ex_dot - p.f_d
    return StabilityVerdict(
        local=margin_local < 0,
        asymptotic=margin_asym > 0,
        margin_local=margin_local,
        margin_asymptotic=margin_asym,
    )


def evaluate(
    gains: CascadeGains, ht: float, Ts: float, tau: float, t: float = 0.0
) -> tuple[StabilityPartials, StabilityVerdict]:
    p = partials(gains, ht, Ts, tau, t)
    return p, check_stability(p)
