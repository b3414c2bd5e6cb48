import numpy as np

from sqformat import BankConfig, PrecisionPair, encode_weight, select_weight_mask
from sqformat.errors import ConfigError

BANK_GRID = (4, 8, 16, 32, 64, 128)
SPARSITY_GRID = (0.5, 0.75, 0.875, 0.9375)
PAIR_GRID = ((8, 4), (8, 3), (8, 2), (4, 2))


def valid_bank_configs():
    """All (b, s) grid points with an integral per-bank high count."""
    configs = []
    for b in BANK_GRID:
        for s in SPARSITY_GRID:
            try:
                configs.append(BankConfig(b=b, s=s))
            except ConfigError:
                continue
    return configs


def make_outlier_matrix(rng, k, n, outlier_rows=0, scale=40.0):
    w = rng.standard_normal((k, n))
    if outlier_rows:
        rows = rng.choice(k, size=outlier_rows, replace=False)
        w[rows] *= scale
    return w


def make_random_sq(rng, banking, precision, num_banks=2, n=3, outlier_rows=0):
    """Encode a random matrix under a random importance mask."""
    k = banking.b * num_banks
    w = make_outlier_matrix(rng, k, n, outlier_rows)
    mask = select_weight_mask(rng.random((k, n)), banking)
    return w, mask, encode_weight(w, mask, banking, precision)
