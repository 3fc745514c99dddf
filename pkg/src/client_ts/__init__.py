"""Cross-variable attention forecaster with an integrated linear branch and
reversible instance normalization, plus the experiment harness around it.

Submodules import lazily so the CLI can export thread caps to the BLAS
runtime before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "backend", "tensor", "model", "data", "training", "experiments",
    "reference_values", "cli", "errors",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
