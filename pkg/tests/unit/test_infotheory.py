import numpy as np
import pytest

from src.errors import ExplainInputError
from src.explain.infotheory import (
    DiscreteDistribution,
    chain_rule_terms,
    conditional_entropy,
    entropy,
    fair_coin,
    gfi,
    independent_pair,
    info_demo,
    info_gain,
    is_markov_blanket,
    mutual_information,
    redundant_copy,
    rfi,
    sfi,
    xor_table,
)


class TestDistribution:
    @pytest.mark.parametrize(
        "variables,table",
        [
            (["a", "a"], np.full((2, 2), 0.25)),
            (["a"], np.full((2, 2), 0.25)),
            (["a"], np.array([1.5, -0.5])),
            (["a"], np.array([0.5, np.nan])),
            (["a"], np.array([0.5, 0.4])),
        ],
        ids=["duplicate", "rank", "negative", "nan", "unnormalised"],
    )
    def test_invalid_tables(self, variables, table):
        with pytest.raises(ExplainInputError):
            DiscreteDistribution(variables, table)

    def test_marginal_keeps_the_requested_order(self):
        table = np.array([[0.1, 0.2], [0.3, 0.4]])
        d = DiscreteDistribution(["a", "b"], table)
        assert d.marginal(["b", "a"]) == pytest.approx(table.T)
        assert d.probability({"a": 1}) == pytest.approx(0.7)
        assert d.probability({}) == 1.0

    def test_unknown_variable(self):
        with pytest.raises(ExplainInputError):
            entropy(fair_coin(), "dice")


class TestQuantities:
    def test_fair_coin_carries_one_bit(self):
        assert entropy(fair_coin(), "coin") == pytest.approx(1.0)

    def test_independent_variables_share_nothing(self):
        pair = independent_pair()
        assert mutual_information(pair, "x", "y") == pytest.approx(0.0, abs=1e-12)
        assert info_gain(pair, "y", "x") == pytest.approx(mutual_information(pair, "x", "y"), abs=1e-12)
        assert conditional_entropy(pair, "x", "y") == pytest.approx(np.log2(3))

    def test_xor_is_invisible_one_feature_at_a_time(self):
        xor = xor_table()
        assert mutual_information(xor, "x1", "y") == pytest.approx(0.0, abs=1e-12)
        assert mutual_information(xor, "x1", "y", given="x2") == pytest.approx(1.0)
        assert mutual_information(xor, ["x1", "x2"], "y") == pytest.approx(1.0)
        assert rfi(xor, "x1", "y") == pytest.approx(1.0)
        assert gfi(xor, "x2", "y") == pytest.approx(0.0, abs=1e-12)

    def test_chain_rule(self):
        xor = xor_table()
        terms = chain_rule_terms(xor, ["x1", "x2"], "y")
        assert terms == pytest.approx([0.0, 1.0], abs=1e-12)
        assert sum(terms) == pytest.approx(mutual_information(xor, ["x1", "x2"], "y"))

    def test_redundant_copies_have_no_relative_importance(self):
        copy = redundant_copy()
        assert rfi(copy, "x1", "y") == pytest.approx(0.0, abs=1e-12)
        assert rfi(copy, "x2", "y") == pytest.approx(0.0, abs=1e-12)
        assert gfi(copy, "x1", "y") == pytest.approx(1.0)
        assert gfi(copy, "x2", "y") == pytest.approx(1.0)


class TestPointwise:
    def test_xor_instance(self):
        result = sfi(xor_table(), {"x1": 0, "x2": 0, "y": 0}, "x1", "y")
        assert result.bits == pytest.approx(1.0)
        assert not result.degenerate

    def test_zero_probability_instance(self):
        result = sfi(xor_table(), {"x1": 0, "x2": 0, "y": 1}, "x1", "y")
        assert result.bits == 0.0
        assert result.degenerate

    def test_instance_must_cover_every_variable(self):
        with pytest.raises(ExplainInputError):
            sfi(xor_table(), {"x1": 0, "y": 0}, "x1", "y")
        with pytest.raises(ExplainInputError):
            sfi(xor_table(), {"x1": 0, "x2": 0, "y": 0, "z": 1}, "x1", "y")

    def test_expected_pointwise_value_is_the_conditional_information(self):
        xor = xor_table()
        expected = sum(
            xor.table[a, b, c] * sfi(xor, {"x1": a, "x2": b, "y": c}, "x1", "y").bits
            for a in (0, 1)
            for b in (0, 1)
            for c in (0, 1)
        )
        assert expected == pytest.approx(rfi(xor, "x1", "y"))


class TestMarkovBlanket:
    def test_xor_needs_both_parents(self):
        xor = xor_table()
        assert is_markov_blanket(xor, "y", ["x1", "x2"])
        assert not is_markov_blanket(xor, "y", ["x1"])
        assert not is_markov_blanket(xor, "y", [])

    def test_one_copy_is_enough(self):
        assert is_markov_blanket(redundant_copy(), "y", ["x1"])


def test_demo_covers_every_table():
    demo = info_demo()
    assert set(demo) == {"fair_coin", "independent_pair", "xor", "redundant_copy"}
    assert demo["fair_coin"]["H(coin)"] == pytest.approx(1.0)
    assert demo["xor"]["RFI(x1)"] == pytest.approx(1.0)
    assert demo["redundant_copy"]["GFI(x2)"] == pytest.approx(1.0)
