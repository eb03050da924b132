"""Shared helpers for the test suite."""

import numpy as np

from entbuffer import SystemParams, werner_from_fidelity


def make_params(
    n=2,
    p_gen=0.5,
    p_con=0.25,
    gamma=0.02,
    q=1.0,
    f_new=0.9,
):
    return SystemParams(
        n=n, p_gen=p_gen, p_con=p_con, gamma=gamma, q=q,
        new_link=werner_from_fidelity(f_new),
    )


def random_valid_params(rng: np.random.Generator, n_max=6) -> SystemParams:
    """Parameters kept away from degenerate corners (p_con > 0, p_gen > 0)."""
    return SystemParams(
        n=int(rng.integers(1, n_max + 1)),
        p_gen=float(rng.uniform(0.05, 1.0)),
        p_con=float(rng.uniform(0.05, 1.0)),
        gamma=float(rng.uniform(0.0, 1.5)),
        q=float(rng.uniform(0.0, 1.0)),
        new_link=werner_from_fidelity(float(rng.uniform(0.3, 1.0))),
    )
