"""Additive self-attributing set model with Shapley-consistent attributions.

Submodules import lazily so the CLI can pin thread counts before numpy
loads: ``nn`` (tensor/autodiff core), ``data``, ``model``, ``training``,
``oracle``, ``evaluation``, ``cli``.
"""
import importlib

__version__ = "0.1.0"

_SUBMODULES = ("nn", "data", "model", "training", "oracle", "evaluation", "cli")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'sasanet' has no attribute '{name}'")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
