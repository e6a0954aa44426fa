"""Per-field random streams (PCG64 seeded through SeedSequence spawn keys)."""
import numpy as np

STREAM_COORDS = 0
STREAM_DEMANDS = 1
STREAM_TIME_WINDOWS = 2
STREAM_DISTANCE_LIMIT = 3
STREAM_MUTATION = 4


def stream(seed: int, stream_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))
