import os

import numpy as np

from scancap.operations.errors import ConfigError

PRECISION_ENV = "SCANCAP_PRECISION"

_DTYPES = {"32": np.float32, "64": np.float64}


def compute_dtype() -> type[np.floating]:
    """Float dtype selected by the SCANCAP_PRECISION environment variable."""
    value = os.environ.get(PRECISION_ENV, "32").strip()
    if value not in _DTYPES:
        raise ConfigError(f"{PRECISION_ENV} must be 32 or 64, got {value!r}")
    return _DTYPES[value]
