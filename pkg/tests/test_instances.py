import json
from fractions import Fraction

import pytest

from pairsel import gf, verify
from pairsel.instances import (
    CrsInstance,
    ProphetParams,
    check_polytope,
    pairwise_weight_test,
    sample_crs_instance,
    sample_prophet_instance,
)


def test_crs_preconditions():
    with pytest.raises(ValueError):
        CrsInstance(2, 3, 2)  # 2^1 < 3: the binary regime forces c >= 3
    CrsInstance(2, 3, 3)
    with pytest.raises(ValueError):
        CrsInstance(5, 2, 2)  # d > 2 required
    with pytest.raises(ValueError):
        CrsInstance(4, 5, 3)  # modulus not prime


@pytest.mark.parametrize("q,d,c", [(5, 5, 2), (2, 16, 5), (3, 3, 2)])
def test_expected_active_size_is_exactly_d(q, d, c):
    instance = CrsInstance(q, d, c)
    assert instance.expected_active_size() == Fraction(d)
    assert instance.marginal() == Fraction(1, q**d)


def test_empirical_active_size_matches():
    instance = CrsInstance(5, 5, 2)
    rng = gf.substream(21, "size")
    trials = 4000
    total = sum(instance.sample(rng).size() for _ in range(trials))
    # D2 draws are 1/3125-rare; conditioned on D1 the size is exactly d.
    assert abs(total / trials - 5) < 0.25


def test_empirical_rank_below_paper_bound():
    instance = CrsInstance(5, 5, 2)
    matroid = instance.matroid
    rng = gf.substream(22, "rank")
    trials = 3000
    mean = sum(matroid.rank(instance.sample(rng)) for _ in range(trials)) / trials
    bound = 2 + 5 / 5**5
    assert mean <= bound + 3 * (0.5 / trials) ** 0.5
    assert mean <= 3  # "at most c + 1"


def test_sample_through_module_function():
    active = sample_crs_instance(5, 5, 2, gf.substream(1, "fn"))
    assert active.q == 5 and active.dim == 5
    assert active.labels == tuple(range(1, 6))


def test_sample_d1_is_explicit_branch():
    instance = CrsInstance(5, 5, 2)
    rng = gf.substream(2, "d1")
    for _ in range(20):
        active = instance.sample_d1(rng)
        assert active.branch == "D1"
        assert len(active.explicit) == 5


def test_d1_rank_matches_matrix_rank():
    # The instance rank oracle and the plain matrix rank must agree.
    instance = CrsInstance(5, 5, 2)
    rng = gf.substream(3, "agree")
    matroid = instance.matroid
    for _ in range(50):
        r = gf.random_matrix(5, 2, 5, rng)
        x = r.multiply(instance.sigma)
        from pairsel.matroid import LabeledVector

        explicit = [LabeledVector(x.column_vector(j), j + 1) for j in range(5)]
        assert matroid.rank(explicit) == x.rank()


@pytest.mark.parametrize("q,d,c", [(5, 5, 2), (3, 3, 2), (2, 8, 4)])
def test_polytope_check_passes(q, d, c):
    report = check_polytope(CrsInstance(q, d, c), 40, gf.substream(4, "poly", q, d))
    assert report.ok, report.violations


# --- prophet instance -------------------------------------------------------


def test_prophet_params_level_structure():
    params = ProphetParams(64, 3)
    assert params.n == 32 + 16 + 8 == 56
    assert list(params.labels_of_level(1)) == list(range(1, 33))
    assert list(params.labels_of_level(3)) == list(range(49, 57))
    assert params.level_of_label(1) == 1
    assert params.level_of_label(33) == 2
    assert params.level_of_label(56) == 3
    with pytest.raises(ValueError):
        params.level_of_label(57)
    assert params.theorem_faithful  # 64 = 2^(2*3)
    assert not ProphetParams(32, 2).theorem_faithful  # off-theorem, still legal


def test_prophet_params_preconditions():
    with pytest.raises(ValueError):
        ProphetParams(63, 3)
    with pytest.raises(ValueError):
        ProphetParams(16, 3)  # needs 2^(2*3-1) = 32


def test_e_hard_probability_overwhelming():
    params = ProphetParams(256, 4)
    assert params.e_hard_lower_bound() >= 1 - 1e-70
    rng = gf.substream(5, "ehard")
    hard = sum(sample_prophet_instance(64, 3, rng).e_hard for _ in range(50))
    assert hard == 50


def test_arrival_order_is_label_ascending():
    rng = gf.substream(6, "order")
    for _ in range(5):
        sample = sample_prophet_instance(64, 3, rng, condition_on_e_hard=True)
        labels = [e.label for e, _ in sample.candidates]
        assert labels == sorted(labels) == list(range(1, 57))


def test_weights_structure_under_the_hardness_event():
    rng = gf.substream(7, "weights")
    sample = sample_prophet_instance(64, 3, rng, condition_on_e_hard=True)
    params = sample.params
    by_level = {1: 0, 2: 0, 3: 0}
    vectors = set()
    for e, w in sample.candidates:
        level = params.level_of_label(e.label)
        assert w == 2**level
        assert sample.weight(e.vector, e.label) == w
        by_level[level] += 1
        vectors.add(e.vector)
    assert by_level == {1: 32, 2: 16, 3: 8}
    # injective map: exactly one labeled copy of any vector carries weight
    assert len(vectors) == 56
    # any other labeled copy of an active vector has weight zero
    e0, _ = sample.candidates[0]
    other_label = 2 if e0.label != 2 else 3
    assert sample.weight(e0.vector, other_label) == 0


def test_condition_on_e_hard_reports_rejections():
    rng = gf.substream(8, "rej")
    sample = sample_prophet_instance(64, 3, rng, condition_on_e_hard=True)
    assert sample.rejections == 0  # overwhelming probability at this scale


def test_prophet_sample_json():
    rng = gf.substream(9, "json")
    sample = sample_prophet_instance(16, 2, rng, condition_on_e_hard=True)
    blob = json.loads(json.dumps(sample.to_json()))
    assert blob["kind"] == "prophet"
    assert blob["e_hard"] is True
    assert len(blob["weights"]) == sample.params.n
    label, (vector, weight) = next(iter(blob["weights"].items()))
    assert sample.weight(vector, int(label)) == weight


def test_crs_instance_json():
    assert CrsInstance(5, 5, 2).to_json() == {"kind": "crs", "q": 5, "d": 5, "c": 2}


def test_toy_exact_weight_marginals():
    result = verify.exact_prophet_weight_check(2, 1)
    assert result.deviation == 0
    assert result.max_marginal_deviation == 0  # all marginals exactly 1/2^(2d)


def test_pairwise_weight_test_small_scale():
    rng = gf.substream(10, "wtest")
    report = pairwise_weight_test(16, 2, 60_000, rng, sigma_draws=2)
    assert not report.any_rejected
    assert report.case1_zero_ok
    cases = {r.case for r in report.rows}
    assert cases == {"same-level", "cross-level"}
    assert report.d2_probability == 1 / 2**32


def test_pairwise_weight_test_dimension_guard():
    with pytest.raises(ValueError):
        pairwise_weight_test(128, 3, 100, gf.substream(0, "g"))
