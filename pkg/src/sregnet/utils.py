from typing import List, Any

import numpy as np


def set_in_dict(data: dict, keys: List[str], val) -> Any:
    for key in keys[:-1]:
        data = data.setdefault(key, {})
    data[keys[-1]] = val
    return data


def get_in_dict(data: dict, *keys: str) -> Any:
    for key in keys:
        try:
            data = data[key]
        except (KeyError, TypeError):
            return None

    return data


def falling_factorial(m: int, k: int) -> int:
    out = 1
    for step in range(k):
        out *= m - step
    return out


def derive_seed(*keys: int) -> int:
    """
    Map an ordered key tuple, e.g. (base_seed, cell, rep), to a 64-bit seed.
    Equal keys give equal seeds on every platform and in every process.
    """
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def rng_for(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))
