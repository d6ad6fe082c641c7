import numpy as np

from sampledefect.population import Population


def make_pop(y, **kw):
    return Population([f"u{i}" for i in range(len(y))], np.asarray(y, dtype=float), **kw)
