"""Shared fixtures: the three-person reference setup and random instances.

The "reference setup" used throughout is 3 patients at 10% prior with a
tpr=0.99 / tnr=0.95 test and the complement pools (each test mixes
everybody except one patient).  Its exact outputs are frozen in the
golden tests.
"""

from __future__ import annotations

import numpy as np
import pytest

from pooltest.model import (
    Prior,
    SecretDistribution,
    TestSpec,
    mask_from_string,
    prior_to_distribution,
)

REF_SPEC = TestSpec(tpr=0.99, tnr=0.95)
REF_PRIOR = Prior((0.1, 0.1, 0.1))
# The i-th pool mixes everybody but patient i.
REF_EVAL_DESIGNS = tuple(mask_from_string(s) for s in ("011", "101", "110"))
REF_OPTIM_DESIGNS = tuple(mask_from_string(s) for s in ("110", "101", "011"))


@pytest.fixture
def ref_spec() -> TestSpec:
    return REF_SPEC


@pytest.fixture
def ref_prior() -> Prior:
    return REF_PRIOR


@pytest.fixture
def ref_dist() -> SecretDistribution:
    return prior_to_distribution(REF_PRIOR)


def random_instance(
    rng: np.random.Generator,
    max_n: int = 4,
    max_m: int = 4,
) -> tuple[SecretDistribution, tuple[int, ...], TestSpec]:
    """A random (distribution, designs, spec) triple, non-degenerate rates."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(0, max_m + 1))
    prior = Prior(tuple(rng.uniform(0.02, 0.6, size=n)))
    spec = TestSpec(
        tpr=float(rng.uniform(0.7, 0.995)),
        tnr=float(rng.uniform(0.7, 0.995)),
    )
    designs = tuple(int(rng.integers(0, 1 << n)) for _ in range(m))
    return prior_to_distribution(prior), designs, spec


def random_distribution(rng: np.random.Generator, n: int) -> SecretDistribution:
    """A dense random distribution (not necessarily a product law)."""
    mass = rng.uniform(0.01, 1.0, size=1 << n)
    return SecretDistribution(n, mass / mass.sum())
