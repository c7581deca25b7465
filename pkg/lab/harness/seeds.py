"""Per-trial seed derivation.

trial seed = first uint64 word of SeedSequence(master_seed, spawn_key=(trial,));
the per-site disorder stream is Philox keyed by (trial seed, blake2b-64 of the site),
see ``lab.hamiltonian.site_uniform``.
"""

import numpy as np

GENERATOR_FAMILY = "numpy.SeedSequence/Philox4x64"


def trial_seed(master_seed: int, trial: int) -> int:
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),))
    return int(sequence.generate_state(1, np.uint64)[0])


def trial_seeds(master_seed: int, count: int) -> list[int]:
    return [trial_seed(master_seed, i) for i in range(count)]


def trial_rng(master_seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Auxiliary generator for non-disorder randomness of a trial (picking sites, energies)."""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), 1 + int(stream)))
    return np.random.default_rng(sequence)


def run_rng(master_seed: int) -> np.random.Generator:
    """Run-level generator from the root of the seed tree, for sampling done once per run."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed)))
