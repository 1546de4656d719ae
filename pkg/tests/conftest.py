import math

import numpy as np
import pytest


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return (B + B.T) / (2.0 * np.sqrt(n))


def records_equal(a, b):
    """Dataclass record equality with NaN == NaN."""
    if type(a) is not type(b):
        return False
    for name in a.__dataclass_fields__:
        va, vb = getattr(a, name), getattr(b, name)
        if isinstance(va, float) and isinstance(vb, float):
            if math.isnan(va) and math.isnan(vb):
                continue
            if va != vb:
                return False
        elif va != vb:
            return False
    return True


def traces_equal(t1, t2):
    return (
        t1.schema == t2.schema
        and t1.status == t2.status
        and t1.config == t2.config
        and len(t1.records) == len(t2.records)
        and all(records_equal(a, b) for a, b in zip(t1.records, t2.records))
        and set(t1.observed) == set(t2.observed)
        and all(
            (math.isnan(t1.observed[k]) and math.isnan(t2.observed[k]))
            if isinstance(t1.observed[k], float) and math.isnan(t1.observed[k])
            else t1.observed[k] == t2.observed[k]
            for k in t1.observed
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
