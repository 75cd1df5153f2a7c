import numpy as np

# Stream labels and their spawn-key integers
_STREAM_KEYS = {
    "run": 0,
    "sim": 1,
    "autoencoder": 2,
    "noise": 3,
    "prediction": 4,
    "cell": 5,
}


def _key(part) -> int:
    if isinstance(part, str):
        if part not in _STREAM_KEYS:
            raise KeyError(f"Unknown seed stream '{part}'")
        return _STREAM_KEYS[part]
    return int(part)


def derive_seed(master: int, *keys) -> int:
    """Counter-based child seed: depends only on (master, keys), never on run count"""
    sequence = np.random.SeedSequence(int(master), spawn_key=tuple(_key(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])
