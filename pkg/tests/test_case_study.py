"""Benchmark-family generator and its random topologies."""

import numpy as np
import pytest

from santt.casestudy import (
    CaseStudyParams,
    component_rates,
    generate_case_study,
    random_topology,
    reference_topology,
)
from santt.model import build_descriptor
from santt.oracle import dense_generator, dense_mtta
from santt.tt import RoundingPolicy, ttm_to_dense


def test_component_rates():
    assert component_rates(1) == (0.1, 1.0, 1.0)
    assert component_rates(7) == (0.7, 7.0, 7.0)


def test_k1_structure_and_mtta():
    model = generate_case_study(CaseStudyParams(1))
    np.testing.assert_allclose(
        model.local[0],
        np.array([[0.0, 0.0, 0.1], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
    )
    assert len(model.syncs) == 1
    assert model.syncs[0].rate == 1.0
    assert dense_mtta(dense_generator(model)) == pytest.approx(2.0 / 1.1, abs=1e-12)


def test_reference_topology_model_matches_enumeration():
    model = generate_case_study(CaseStudyParams(4, topology=reference_topology()))
    dense = ttm_to_dense(build_descriptor(model, RoundingPolicy(0.0)).q_tt)
    np.testing.assert_allclose(dense, dense_generator(model).q, atol=1e-11)


def test_cascade_semantics_two_components():
    # component 1's software failure drags component 2's software down when
    # the topology says 2 consumes data from 1
    t = np.array([[1.0, 1.0], [0.0, 1.0]])
    model = generate_case_study(CaseStudyParams(2, topology=t))
    chain = dense_generator(model)
    # state (1,1) -> (2,2): joint software failure at rate 1 (component 1)
    i = 0
    j = 1 * 3 + 1
    assert chain.q[i, j] == pytest.approx(1.0)
    # component 2's own software failure moves only component 2
    assert chain.q[0, 0 * 3 + 1] == pytest.approx(2.0)


def test_generated_models_validate():
    for k in (1, 2, 4, 6):
        for seed in (0, 1, 2):
            model = generate_case_study(CaseStudyParams(k, seed=seed))
            model.validate()
            assert model.potential_states == 3**k


def test_identity_topology_reaches_everything():
    from santt.oracle import reachable_states

    for k in (2, 3, 4):
        model = generate_case_study(CaseStudyParams(k, topology=np.eye(k)))
        chain = dense_generator(model)
        assert len(reachable_states(chain)) == 3**k


def test_random_topology_degenerate_densities():
    np.testing.assert_array_equal(random_topology(5, 0, density=0.0), np.eye(5))
    np.testing.assert_array_equal(
        random_topology(4, 0, density=1.0), np.ones((4, 4))
    )


def test_random_topology_deterministic_in_seed():
    a = random_topology(8, 123)
    b = random_topology(8, 123)
    c = random_topology(8, 124)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_random_topology_fill_statistics():
    k, seeds = 100, 2000
    p = 1.0 / (2 * k)
    total = 0
    for seed in range(seeds):
        t = random_topology(k, seed)
        total += int(t.sum()) - k
    draws = seeds * k * (k - 1)
    se = np.sqrt(p * (1 - p) / draws)
    assert abs(total / draws - p) <= 3 * se


def test_mtta_monotone_under_edge_additions():
    # more interaction edges can only hasten system failure
    for k in (2, 3):
        base = np.eye(k)
        base_mtta = dense_mtta(
            dense_generator(generate_case_study(CaseStudyParams(k, topology=base)))
        )
        for a in range(k):
            for b in range(k):
                if a == b:
                    continue
                t = base.copy()
                t[a, b] = 1.0
                mtta = dense_mtta(
                    dense_generator(generate_case_study(CaseStudyParams(k, topology=t)))
                )
                assert mtta <= base_mtta + 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        CaseStudyParams(0)
    with pytest.raises(ValueError):
        CaseStudyParams(3, density=1.5)
