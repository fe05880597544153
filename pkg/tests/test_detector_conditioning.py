import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passive_tfqkd.detector_conditioning import (DetectorSpec, ModePattern, all_patterns,
                                                 click_probs, conditional_output_pmf,
                                                 decoy_states, merge_states, mode_probability,
                                                 or_groups)
from passive_tfqkd.errors import ConditioningError, ConfigurationError, DomainError
from passive_tfqkd.fock_optics import (JointPmf, SourceOptics, cascade_joint_pmf,
                                       joint_pmf_two_intensity, output_pmf_coherent)

TABLE1 = DetectorSpec(0.20, 1e-7)
BLIND = DetectorSpec(0.0, 0.0)


def test_click_probs():
    p_click, p_no = click_probs(TABLE1, 0)
    assert p_no == 1 - 1e-7 and p_click == pytest.approx(1e-7, rel=1e-9)
    assert click_probs(DetectorSpec(1.0, 0.0), 3)[0] == 1.0
    assert click_probs(TABLE1, 1)[1] == pytest.approx(0.79999992, abs=1e-15)
    with pytest.raises(DomainError):
        click_probs(TABLE1, -1)


def test_detector_validation():
    with pytest.raises(DomainError):
        DetectorSpec(1.1, 0.0)
    with pytest.raises(DomainError):
        DetectorSpec(0.5, 1.0)


@given(st.floats(0, 1), st.floats(0, 0.999), st.integers(0, 50))
def test_no_click_in_unit_interval(eta, dark, n):
    p_click, p_no = click_probs(DetectorSpec(eta, dark), n)
    assert 0.0 <= p_no <= 1.0 and abs(p_click + p_no - 1.0) < 1e-15


def test_pattern_labels():
    assert [p.label for p in all_patterns(2)] == ["00", "01", "10", "11"]
    assert ModePattern.parse("101").clicks == (True, False, True)
    with pytest.raises(ConfigurationError):
        ModePattern.parse("12")


def test_blind_detector_conditioning():
    joint = joint_pmf_two_intensity(SourceOptics(0.2, 0.5, 0.5))
    pmf = conditional_output_pmf(joint, BLIND, ModePattern((False,)))
    np.testing.assert_allclose(pmf.probs, joint.output_marginal().probs, atol=1e-15)
    assert mode_probability(joint, BLIND, ModePattern((False,))) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConditioningError):
        conditional_output_pmf(joint, BLIND, ModePattern((True,)))


def test_vacuum_dark_counts():
    vacuum = JointPmf(np.array([[1.0]]))
    assert mode_probability(vacuum, TABLE1, ModePattern((True,))) == pytest.approx(1e-7)


def test_pattern_length_checked():
    joint = joint_pmf_two_intensity(SourceOptics(0.2))
    with pytest.raises(ConfigurationError):
        mode_probability(joint, TABLE1, ModePattern((True, False)))


@pytest.mark.parametrize("mu", [0.01, 0.05, 0.2])
def test_total_probability_single_detector(mu):
    optics = SourceOptics(2 * mu, 0.5, 0.5)
    joint = joint_pmf_two_intensity(optics)
    states = decoy_states(joint, TABLE1)
    recombined = sum(p * pmf.probs for p, pmf in states.values())
    direct = output_pmf_coherent(mu, mu, 0.5).probs
    np.testing.assert_allclose(recombined, direct, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.6), st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.55, 0.95),
       st.sampled_from(["exact", "product"]))
def test_conditionals_normalized(mu, t1, t2, t3, convention):
    joint = cascade_joint_pmf(SourceOptics(mu, t1, t2, (t3,)), 2, convention=convention)
    states = decoy_states(joint, TABLE1)
    assert sum(p for p, _ in states.values()) == pytest.approx(1.0, abs=1e-10)
    for p, pmf in states.values():
        assert np.all(pmf.probs >= 0)
        assert abs(pmf.total + pmf.tail - 1.0) < 1e-10


@pytest.mark.parametrize("convention", ["exact", "product"])
def test_symmetric_split_gives_equal_states(convention):
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.5,)), 2, convention=convention)
    states = decoy_states(joint, TABLE1)
    assert states["10"][0] == pytest.approx(states["01"][0], rel=1e-12)
    np.testing.assert_allclose(states["10"][1].probs, states["01"][1].probs, atol=1e-10)


def test_unbalanced_split_separates_states():
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.7,)), 2)
    states = decoy_states(joint, TABLE1)
    diff = np.abs(states["10"][1].probs - states["01"][1].probs).max()
    assert diff > 1e-6


def test_clicks_lower_the_output_mean():
    # Given the relative phase, the two splitter outputs are independent
    # Poisson variables whose means add up to a constant, so light seen by
    # the local detector comes at the expense of mode a1.
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.7, 0.6)), 3)
    states = decoy_states(joint, TABLE1)
    by_clicks = {}
    for label, (_, pmf) in states.items():
        by_clicks.setdefault(label.count("1"), []).append(pmf.mean())
    means = [np.mean(by_clicks[k]) for k in sorted(by_clicks)]
    assert all(b < a for a, b in zip(means, means[1:]))
    assert states["000"][1].mean() > states["111"][1].mean()


def test_product_convention_states_coincide():
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.7,)), 2, convention="product")
    states = decoy_states(joint, TABLE1)
    ref = states["00"][1].probs
    for _, pmf in states.values():
        np.testing.assert_allclose(pmf.probs, ref, atol=1e-12)


def test_per_detector_specs():
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.5,)), 2)
    pat = ModePattern((True, False))
    same = mode_probability(joint, [TABLE1, TABLE1], pat)
    assert same == mode_probability(joint, TABLE1, pat)
    other = mode_probability(joint, [DetectorSpec(0.5, 1e-7), TABLE1], pat)
    assert other > same
    with pytest.raises(ConfigurationError):
        mode_probability(joint, [TABLE1], pat)


def test_zero_probability_patterns_dropped():
    joint = joint_pmf_two_intensity(SourceOptics(0.2))
    assert list(decoy_states(joint, BLIND)) == ["0"]


def test_or_groups_and_merge():
    groups = or_groups(2, [[0, 1]])
    assert groups == {"0": ["00"], "1": ["01", "10", "11"]}
    joint = cascade_joint_pmf(SourceOptics(0.3, 0.5, 0.5, (0.7,)), 2)
    merged = merge_states(decoy_states(joint, TABLE1), groups)
    # an OR readout of the two detectors is one detector that sees both arms
    # and collects both dark counts
    both_dark = DetectorSpec(0.20, 1 - (1 - 1e-7) ** 2)
    single = decoy_states(joint_pmf_two_intensity(SourceOptics(0.3, 0.5, 0.5)), both_dark)
    for label in ("0", "1"):
        assert merged[label][0] == pytest.approx(single[label][0], rel=1e-10)
        np.testing.assert_allclose(merged[label][1].probs, single[label][1].probs, atol=1e-12)
