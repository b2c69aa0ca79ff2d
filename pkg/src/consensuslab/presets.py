"""Built-in scenario presets for the studied platoon experiments.

Parameter values not fixed by the experiments themselves (agent counts for
some figures, gate frequency ranges, seeds, step sizes, horizons, initial
spreads) are toolkit defaults and are documented as such here. Presets are
plain Scenarios; tweak them with ``dataclasses.replace``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError
from .scenario import Scenario, StageSpec


def _gate_params(n, seed):
    """Seeded per-agent gate frequencies in [0.5, 2.0] rad/s and phases in
    [0, 2 pi); toolkit defaults for 'randomly chosen frequencies and phases'."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 303)))
    omega = rng.uniform(0.5, 2.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return tuple(omega.tolist()), tuple(phi.tolist())


def serial_lti() -> Scenario:
    """Second-order linear cascade on a 10-vehicle string: the minimal
    spanning-tree convergence witness."""
    return Scenario(
        name="serial_lti",
        seed=1,
        order=2,
        controller="compositional",
        graph_kind="path",
        graph_n=10,
        stages=(StageSpec(kind="linear_static"), StageSpec(kind="linear_static")),
        init_preset="uniform_pm1",
        dt=1e-3,
        t_end=60.0,
        record_every=10,
        tolerance=1e-6,
    )


def timevarying_fig1() -> Scenario:
    """20-vehicle string with sinusoidally gated connection strengths on
    both stages; the conventional baseline is expected to misbehave."""
    n = 20
    omega, phi = _gate_params(n, 7)
    stage = StageSpec(kind="linear_time_varying", omega=omega, phi=phi)
    return Scenario(
        name="timevarying_fig1",
        seed=7,
        order=2,
        controller="compositional",
        graph_kind="path",
        graph_n=n,
        stages=(stage, stage),
        init_preset="standstill_leader_v10",
        d_ref=tuple(-10.0 * i for i in range(n)),
        dt=5e-3,
        t_end=240.0,
        record_every=10,
        tolerance=1e-3,
    )


def saturated_fig2() -> Scenario:
    """20-vehicle string under unit-saturated control inputs, started at a
    common cruise speed with position errors large enough to saturate."""
    n = 20
    return Scenario(
        name="saturated_fig2",
        seed=11,
        order=2,
        controller="compositional",
        graph_kind="path",
        graph_n=n,
        stages=(StageSpec(kind="saturated"), StageSpec(kind="saturated")),
        init_preset="positional_error_v10",
        d_ref=tuple(-10.0 * i for i in range(n)),
        dt=2e-3,
        t_end=80.0,
        record_every=10,
        tolerance=1e-3,
    )


def gps_fig3() -> Scenario:
    """10-vehicle string with absolute velocity feedback toward the leader,
    received through per-agent Poisson-sampled delays (mean 1 s, unit gains)."""
    n = 10
    return Scenario(
        name="gps_fig3",
        seed=13,
        order=2,
        controller="compositional",
        graph_kind="path",
        graph_n=n,
        stages=(
            StageSpec(kind="linear_static"),
            StageSpec(
                kind="delayed_absolute_velocity",
                gains=(1.0,) * n,
                ref="constant:10.0",
                delay="poisson:1.0",
            ),
        ),
        init_preset="standstill_leader_v10",
        d_ref=tuple(-10.0 * i for i in range(n)),
        dt=4e-3,
        t_end=60.0,
        record_every=10,
        tolerance=1e-3,
    )


def counterexample_appD() -> Scenario:
    """Two agents from consensus under a common unit input; the follower
    reads the leader through the ramp delay tau(t) = min(t, 5)."""
    return Scenario(
        name="counterexample_appD",
        seed=0,
        order=1,
        controller="compositional",
        graph_kind="edges",
        graph_n=2,
        graph_edges=((2, 1, 1.0),),
        stages=(StageSpec(kind="delayed_relative", delay="ramp:5.0"),),
        x0=(0.0, 0.0),
        disturbance_kind="constant",
        disturbance_vector=(1.0, 1.0),
        dt=1e-3,
        t_end=5.0,
        record_every=5,
        tolerance=1e-6,
    )


def saturated_regime() -> Scenario:
    """First-order saturated string started deep outside the linear band,
    with a common-mode 0.05 disturbance; exercises regime entry."""
    return Scenario(
        name="saturated_regime",
        seed=3,
        order=1,
        controller="compositional",
        graph_kind="path",
        graph_n=5,
        stages=(StageSpec(kind="saturated"),),
        x0=(0.0, 4.0, -3.0, 5.0, -4.0),
        disturbance_kind="constant",
        disturbance_vector=(0.05,) * 5,
        dt=2e-3,
        t_end=100.0,
        record_every=10,
        tolerance=1e-4,
    )


PRESETS = {
    "serial_lti": serial_lti,
    "timevarying_fig1": timevarying_fig1,
    "saturated_fig2": saturated_fig2,
    "gps_fig3": gps_fig3,
    "counterexample_appD": counterexample_appD,
    "saturated_regime": saturated_regime,
}


def preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return PRESETS[name]()
