"""eegtile: multichannel EEG recordings -> [channel x sample] grayscale
tiles -> compact CNN song classification, with PSD / channel-reordering
input ablations and a validation suite (kappa, permutation tests, BPM
confusion analysis).

Submodules are imported lazily so the CLI can configure BLAS threading
before NumPy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "nn",
    "model",
    "dataio",
    "reprs",
    "train",
    "metrics",
    "synthgen",
    "errors",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
