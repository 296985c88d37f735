"""
Exact information theory on small discrete joint distributions.

A ``DiscreteDistribution`` is a probability table with one named axis per
variable; outcomes are integer indices along each axis. Every quantity is an
exact sum over the table in bits, with ``0 log 0 = 0`` (``scipy.special.entr``).
These functions are the ground truth the feature importance definitions are
checked against: relative importance is the conditional mutual information
of a feature and the target given every other feature, global importance the
marginal mutual information, scene importance its pointwise counterpart at
one instance.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import entr

from src.errors import ExplainInputError, NumericalError

NORMALIZATION_TOLERANCE: float = 1e-12
IDENTITY_TOLERANCE: float = 1e-12


class DiscreteDistribution:
    """Joint probability table over named discrete variables.

    Args:
        variables: One name per table axis.
        table: Nonnegative probabilities summing to 1.

    Raises:
        ExplainInputError: For duplicate names, a rank mismatch, negative or
            non-finite entries, or a table that does not sum to 1.
    """

    def __init__(self, variables: Sequence[str], table: np.ndarray) -> None:
        table = np.array(table, dtype=np.float64)
        if len(set(variables)) != len(variables):
            raise ExplainInputError(f"duplicate variable names in {list(variables)}")
        if table.ndim != len(variables):
            raise ExplainInputError(f"table has {table.ndim} axes for {len(variables)} variables")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ExplainInputError("probabilities must be finite and nonnegative")
        total = float(table.sum())
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ExplainInputError(f"probabilities sum to {total!r}, not 1")
        self.variables: tuple[str, ...] = tuple(variables)
        self.table = table
        self.table.setflags(write=False)

    @classmethod
    def from_outcomes(cls, variables: Sequence[str], outcomes: Mapping[tuple[int, ...], float]) -> "DiscreteDistribution":
        """Build a table from ``{(index per variable): probability}``; missing outcomes are 0."""
        shape = tuple(max(key[axis] for key in outcomes) + 1 for axis in range(len(variables)))
        table = np.zeros(shape)
        for key, probability in outcomes.items():
            table[key] = probability
        return cls(variables, table)

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        """Axis index of every name.

        Raises:
            ExplainInputError: For an unknown variable name.
        """
        axes = []
        for name in names:
            if name not in self.variables:
                raise ExplainInputError(f"unknown variable {name!r}; known: {list(self.variables)}")
            axes.append(self.variables.index(name))
        return tuple(axes)

    def marginal(self, names: Sequence[str]) -> np.ndarray:
        """Probability table over ``names``, axes in the given order."""
        keep = self.axes(names)
        drop = tuple(axis for axis in range(self.table.ndim) if axis not in keep)
        reduced = self.table.sum(axis=drop)
        remaining = [axis for axis in range(self.table.ndim) if axis in keep]
        return np.transpose(reduced, [remaining.index(axis) for axis in keep])

    def probability(self, instance: Mapping[str, int]) -> float:
        """Marginal probability of a partial assignment."""
        names = list(instance)
        table = self.marginal(names)
        return float(table[tuple(instance[name] for name in names)]) if names else 1.0


def _names(value: str | Iterable[str]) -> list[str]:
    return [value] if isinstance(value, str) else list(value)


def entropy(d: DiscreteDistribution, variables: str | Iterable[str]) -> float:
    """Joint entropy H(variables) in bits."""
    names = _names(variables)
    if not names:
        return 0.0
    return float(entr(d.marginal(names)).sum() / math.log(2.0))


def conditional_entropy(
    d: DiscreteDistribution, targets: str | Iterable[str], given: str | Iterable[str] = ()
) -> float:
    """H(targets | given) = H(targets, given) - H(given)."""
    targets, given = _names(targets), _names(given)
    d.axes(targets + given)
    return entropy(d, _union(targets, given)) - entropy(d, given)


def mutual_information(
    d: DiscreteDistribution,
    xs: str | Iterable[str],
    ys: str | Iterable[str],
    given: str | Iterable[str] = (),
) -> float:
    """I(X; Y | Z) in bits; ``given`` empty gives the plain mutual information."""
    xs, ys, given = _names(xs), _names(ys), _names(given)
    d.axes(xs + ys + given)
    value = (
        entropy(d, _union(xs, given))
        + entropy(d, _union(ys, given))
        - entropy(d, _union(xs, ys, given))
        - entropy(d, given)
    )
    # Exact sums can land a few ulps below zero.
    return max(value, 0.0) if value > -IDENTITY_TOLERANCE else value


def info_gain(d: DiscreteDistribution, target: str, feature: str | Iterable[str]) -> float:
    """Entropy drop of ``target`` once ``feature`` is known: H(Y) - H(Y | X).

    Raises:
        NumericalError: If the result disagrees with I(X; Y).
    """
    gain = entropy(d, target) - conditional_entropy(d, target, feature)
    mi = mutual_information(d, feature, target)
    if abs(gain - mi) > IDENTITY_TOLERANCE:
        raise NumericalError(f"information gain {gain!r} differs from mutual information {mi!r}")
    return gain


def _rest(d: DiscreteDistribution, feature: str, target: str) -> list[str]:
    d.axes([feature, target])
    return [name for name in d.variables if name not in (feature, target)]


def rfi(d: DiscreteDistribution, feature: str, target: str) -> float:
    """Relative importance: I(feature; target | every other variable)."""
    return mutual_information(d, feature, target, given=_rest(d, feature, target))


def gfi(d: DiscreteDistribution, feature: str, target: str) -> float:
    """Global importance: I(feature; target)."""
    return mutual_information(d, feature, target)


@dataclass(frozen=True)
class PointwiseInformation:
    """Pointwise conditional mutual information at one instance.

    ``degenerate`` is set when the instance has zero probability and the
    value is defined as 0.
    """

    bits: float
    degenerate: bool = False


def sfi(d: DiscreteDistribution, instance: Mapping[str, int], feature: str, target: str) -> PointwiseInformation:
    """Scene importance of ``feature`` at ``instance``.

    ``log2 p(x, y | rest) / (p(x | rest) p(y | rest))`` with every variable
    other than ``feature`` and ``target`` fixed to its value in ``instance``.

    Raises:
        ExplainInputError: If ``instance`` lacks a variable or names an unknown one.
    """
    d.axes(instance)
    missing = [name for name in d.variables if name not in instance]
    if missing:
        raise ExplainInputError(f"instance lacks values for {missing}")
    rest = {name: instance[name] for name in _rest(d, feature, target)}
    p_all = d.probability({**rest, feature: instance[feature], target: instance[target]})
    p_rest = d.probability(rest)
    p_feature = d.probability({**rest, feature: instance[feature]})
    p_target = d.probability({**rest, target: instance[target]})
    if min(p_all, p_rest, p_feature, p_target) <= 0.0:
        return PointwiseInformation(0.0, degenerate=True)
    return PointwiseInformation(math.log2(p_all * p_rest / (p_feature * p_target)))


def chain_rule_terms(d: DiscreteDistribution, features: Sequence[str], target: str) -> list[float]:
    """``I(X_k; Y | X_1..X_{k-1})`` for each feature in order; they sum to I(X; Y)."""
    return [mutual_information(d, feature, target, given=list(features[:k])) for k, feature in enumerate(features)]


def is_markov_blanket(
    d: DiscreteDistribution, target: str, blanket: Iterable[str], tolerance: float = IDENTITY_TOLERANCE
) -> bool:
    """Whether ``target`` is independent of every other variable given ``blanket``."""
    blanket = _names(blanket)
    others = [name for name in d.variables if name != target and name not in blanket]
    if not others:
        return True
    return mutual_information(d, target, others, given=blanket) <= tolerance


def _union(*groups: list[str]) -> list[str]:
    seen: list[str] = []
    for group in groups:
        seen += [name for name in group if name not in seen]
    return seen


# =============================================================================
# Built-in tables
# =============================================================================


def fair_coin() -> DiscreteDistribution:
    return DiscreteDistribution(["coin"], np.array([0.5, 0.5]))


def independent_pair() -> DiscreteDistribution:
    """X uniform on three values, Y a biased coin independent of X."""
    return DiscreteDistribution(["x", "y"], np.outer(np.full(3, 1.0 / 3.0), np.array([0.25, 0.75])))


def xor_table() -> DiscreteDistribution:
    """Y = X1 XOR X2 with independent uniform bits."""
    return DiscreteDistribution.from_outcomes(
        ["x1", "x2", "y"], {(a, b, a ^ b): 0.25 for a in (0, 1) for b in (0, 1)}
    )


def redundant_copy() -> DiscreteDistribution:
    """Y = X1 with X1 uniform, and X2 an exact copy of X1."""
    return DiscreteDistribution.from_outcomes(["x1", "x2", "y"], {(a, a, a): 0.5 for a in (0, 1)})


def info_demo() -> dict[str, dict[str, float]]:
    """Every built-in quantity on the built-in tables, keyed by table."""
    coin = fair_coin()
    pair = independent_pair()
    xor = xor_table()
    copy = redundant_copy()
    xor_terms = chain_rule_terms(xor, ["x1", "x2"], "y")
    return {
        "fair_coin": {"H(coin)": entropy(coin, "coin")},
        "independent_pair": {
            "I(x;y)": mutual_information(pair, "x", "y"),
            "IG(y,x)": info_gain(pair, "y", "x"),
        },
        "xor": {
            "I(x1;y)": mutual_information(xor, "x1", "y"),
            "I(x1;y|x2)": mutual_information(xor, "x1", "y", given="x2"),
            "I(x1,x2;y)": mutual_information(xor, ["x1", "x2"], "y"),
            "chain_rule_x1": xor_terms[0],
            "chain_rule_x2_given_x1": xor_terms[1],
            "RFI(x1)": rfi(xor, "x1", "y"),
            "GFI(x1)": gfi(xor, "x1", "y"),
            "SFI(x1 at 0,0,0)": sfi(xor, {"x1": 0, "x2": 0, "y": 0}, "x1", "y").bits,
        },
        "redundant_copy": {
            "RFI(x1)": rfi(copy, "x1", "y"),
            "RFI(x2)": rfi(copy, "x2", "y"),
            "GFI(x1)": gfi(copy, "x1", "y"),
            "GFI(x2)": gfi(copy, "x2", "y"),
        },
    }
