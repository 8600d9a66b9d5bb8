import numpy as np
import pytest

from diiv import ObservationTable, edge_contrasts


def hand_parallel_table() -> ObservationTable:
    """16 rows, 4 per (z, h) cell.

    Frame 1: y means 1.0 / 0.25, d means 0.75 / 0.25 -> rf 0.75, fs 0.5.
    Frame 2: y means 0.25 / 0.25, d means 0.5 / 0.25 -> rf 0.0, fs 0.25.
    """
    y = [1, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]
    d = [1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0]
    z = [1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0]
    h = [1] * 8 + [0] * 8
    return ObservationTable(y=np.array(y, float), d=d, z1=z, h=h)


@pytest.fixture
def hand_table():
    return hand_parallel_table()


def random_parallel_table(rng: np.random.Generator, balanced: bool = True) -> ObservationTable:
    """Parallel-design table with every (z, h) cell populated.

    When ``balanced``, frame 2 reuses frame 1's cell sizes (possibly swapped),
    which equalizes the assignment variance across frames.
    """
    while True:
        n_on1, n_off1 = rng.integers(10, 101, size=2)
        if balanced:
            n_on2, n_off2 = (n_on1, n_off1) if rng.random() < 0.5 else (n_off1, n_on1)
        else:
            n_on2, n_off2 = rng.integers(10, 101, size=2)
        sizes = [(1, 1, n_on1), (0, 1, n_off1), (1, 0, n_on2), (0, 0, n_off2)]
        z = np.concatenate([np.full(k, a) for a, _, k in sizes])
        h = np.concatenate([np.full(k, b) for _, b, k in sizes])
        p = rng.uniform(0.1, 0.9, size=4)
        d = np.concatenate([rng.random(k) < p[i] for i, (_, _, k) in enumerate(sizes)]).astype(int)
        y = rng.normal(size=z.size) + rng.uniform(-3, 3) * d + rng.normal() * h
        perm = rng.permutation(z.size)
        table = ObservationTable(y=y[perm], d=d[perm], z1=z[perm], h=h[perm])
        c1, c2 = edge_contrasts(table, 1), edge_contrasts(table, 2)
        if abs(c1.fs - c2.fs) > 0.02:
            return table


def random_joint_table(rng: np.random.Generator, n=None, cells=((0, 0), (1, 0), (0, 1), (1, 1))):
    """Joint-design table whose (z1, z2) cells are exactly ``cells``, each populated."""
    while True:
        n = n or int(rng.integers(40, 401))
        idx = np.concatenate([np.arange(len(cells)), rng.integers(0, len(cells), n - len(cells))])
        rng.shuffle(idx)
        z1 = np.array([cells[i][0] for i in idx])
        z2 = np.array([cells[i][1] for i in idx])
        p = rng.uniform(0.1, 0.9, size=len(cells))
        d = (rng.random(n) < p[idx]).astype(int)
        y = rng.normal(size=n) + rng.uniform(-3, 3) * d + 0.5 * z1 - 0.3 * z2
        table = ObservationTable(y=y, d=d, z1=z1, z2=z2)
        dm = [d[idx == i].mean() for i in range(len(cells))]
        if len(set(np.round(dm, 6))) == len(cells):
            return table
