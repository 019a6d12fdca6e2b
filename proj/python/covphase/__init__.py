"""Lattice covariant phase space: constraint analysis, slice flow and brackets."""

import json
import os

from ._covphase import CovphaseError, Theory, version
from . import _covphase

__all__ = ["CovphaseError", "Theory", "version", "load_config", "analyze", "bracket", "evolve", "verify"]
__version__ = "0.1.0"


def _config_text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config) as f:
            return f.read()
    if isinstance(config, str):
        return config
    raise TypeError("config must be a dict, a JSON string or a path")


def load_config(config):
    """Validated, fully defaulted configuration as a dict."""
    return json.loads(_covphase._emit_config(_config_text(config)))


def _run(command, config, stable_output=True, threads=0):
    text, ok = _covphase._run(command, _config_text(config), stable_output, threads)
    report = json.loads(text)
    report.setdefault("ok", ok)
    return report


def analyze(config, **kw):
    return _run("analyze", config, **kw)


def bracket(config, **kw):
    return _run("bracket", config, **kw)


def evolve(config, **kw):
    return _run("evolve", config, **kw)


def verify(config, **kw):
    return _run("verify", config, **kw)
