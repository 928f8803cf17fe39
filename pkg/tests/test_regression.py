"""Frozen numbers of the reference model; a change here means the physics moved."""

import numpy as np
import pytest

from partialwidths.pipeline import REFERENCE_FIXTURE


def test_cap_resonance_energy(cap_study):
    assert abs(cap_study.resonance.energy - REFERENCE_FIXTURE["cap_energy"]) <= 1e-9


def test_channel_energies(cap_study, ecs_study):
    for st in (cap_study, ecs_study):
        energies = [c.energy for c in st.channels][:2]
        assert energies == pytest.approx(REFERENCE_FIXTURE["channel_energies"], abs=1e-6)


def test_stability_of_both_scans(cap_study, ecs_study):
    assert cap_study.stability.stable and ecs_study.stability.stable
    assert cap_study.open_channels() == ecs_study.open_channels() == [0, 1]


def test_open_channels_carry_the_width(cap_study):
    # energetically closed channels pick up only a grid-level remainder
    rep = cap_study.report
    assert np.sum(rep.partials[:2]) / rep.gamma_total == pytest.approx(1.0, abs=1e-6)
