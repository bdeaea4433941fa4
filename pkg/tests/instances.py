"""Random instance generators shared across test modules."""
import numpy as np

from drobandit import CostVector, SupportSet, make_distribution


def random_dual_instance(rng, max_support=12, dim_choices=(1, 2)):
    """A nominal distribution and a [0, 1] cost vector on a shared support."""
    size = int(rng.integers(2, max_support + 1))
    dim = int(rng.choice(dim_choices))
    points = rng.random((size, dim))
    support = SupportSet(points)
    p0 = make_distribution(support, rng.dirichlet(np.ones(size)))
    f = CostVector(support, rng.random(size))
    return p0, f
