"""Bits shared by the two adversarial training loops."""
import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainingLog:
    columns: tuple
    rows: list = field(default_factory=list)

    def append(self, **values):
        self.rows.append(tuple(values[c] for c in self.columns))

    def column(self, name):
        return np.array([r[self.columns.index(name)] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([v if isinstance(v, int) else repr(float(v)) for v in r])


def epoch_batches(n, batch_size, rng):
    """Shuffled index batches of near-equal size.

    ``n // batch_size`` batches (at least one), so with ``n >= 2`` every batch
    has at least two rows, as batch-norm needs in train mode.
    """
    perm = rng.permutation(n)
    return np.array_split(perm, max(1, n // batch_size))


def split_real_fake_grad(grad_fn, d, n_real):
    """Gradient of BCE(real, 1) + BCE(fake, 0) on a stacked [real; fake] output."""
    return np.concatenate([grad_fn(d[:n_real], 1.0), grad_fn(d[n_real:], 0.0)])
