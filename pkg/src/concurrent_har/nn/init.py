import numpy as np


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=np.float32):
    """Uniform on +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
