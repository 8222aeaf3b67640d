"""
One-step polarization operators. Each operator exposes the child-channel maps
x -> (c_0(x), ..., c_{k-1}(x)); the operator acts on a test function by
averaging it over the children.
"""

from typing import Protocol, Tuple, Union, runtime_checkable

import numpy as np

from sources.de import psi_all, psi_pairs

@runtime_checkable
class ChildMaps(Protocol):
    """Anything that evaluates every child map at once, shape (m,) + shape(x)."""
    m: int
    q: int

    def evaluate_all(self, x) -> np.ndarray:
        ...

class RSOperator:
    """The q-ary erasure-channel operator built from the binomial tails psi_i."""
    symmetric = True

    def __init__(self, q: int):
        self.q = q

    @property
    def num_children(self) -> int:
        return self.q

    def children(self, x) -> np.ndarray:
        return psi_all(self.q, x)

    def child_pairs(self, x, xbar=None) -> Tuple[np.ndarray, np.ndarray]:
        return psi_pairs(self.q, x, xbar)

    def describe(self) -> str:
        return f"RS({self.q})"

class FixedOperator:
    """Operator of one fixed kernel, driven by its profile polynomial."""
    symmetric = False

    def __init__(self, profile: ChildMaps, name: str | None = None):
        self.profile = profile
        self.name = name

    @property
    def num_children(self) -> int:
        return self.profile.m

    def children(self, x) -> np.ndarray:
        return self.profile.evaluate_all(x)

    def child_pairs(self, x, xbar=None) -> Tuple[np.ndarray, np.ndarray]:
        rates = self.children(x)
        return rates, 1.0 - rates

    def describe(self) -> str:
        label = f"Fixed(m={self.profile.m}, q={self.profile.q})"
        return f"{label}[{self.name}]" if self.name else label

class EnsembleOperator:
    """Average operator of the uniform full-rank kernel ensemble, driven by a RhoTable."""
    symmetric = True

    def __init__(self, table: ChildMaps):
        self.table = table

    @property
    def num_children(self) -> int:
        return self.table.m

    def children(self, x) -> np.ndarray:
        return self.table.evaluate_all(x)

    def child_pairs(self, x, xbar=None) -> Tuple[np.ndarray, np.ndarray]:
        rates = self.children(x)
        return rates, 1.0 - rates

    def describe(self) -> str:
        return f"EnsembleAvg(m={self.table.m}, q={self.table.q})"

OperatorSpec = Union[RSOperator, FixedOperator, EnsembleOperator]
