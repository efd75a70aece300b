"""Numerical settings shared across the package.

Settings live in a :mod:`contextvars` variable so overrides are scoped to the
current thread/task. ``QBNET_CONFIG`` may point at a YAML file whose keys
override the defaults at import time.
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import os
from dataclasses import dataclass

import yaml


@dataclass(frozen=True)
class Settings:
    #: infinitesimal used in place of vanishing masses; 0 means strict errors
    eps: float = 0.0
    #: tolerance for unit-norm / unit-trace checks
    norm_tol: float = 1e-9
    #: a CMI below this is zero
    cmi_tol: float = 1e-8
    #: a CMI above this is nonzero; values in between are indeterminate
    cmi_band: float = 1e-7
    #: per-entry residual for the product (P / A) independence tests
    factor_tol: float = 1e-8
    #: relative / absolute tolerance when comparing reconstructed amplitudes
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    #: masses at or below this count as zero when conditioning
    zero_tol: float = 1e-14
    #: node limit for exhaustive triple enumeration
    enum_limit: int = 8
    #: largest joint state count a dense tensor may hold
    max_joint_states: int = 1 << 16


def _from_file(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    known = {f.name for f in dataclasses.fields(Settings)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{path}: unknown settings {sorted(unknown)}")
    return Settings(**data)


_default = _from_file(os.environ["QBNET_CONFIG"]) if os.environ.get("QBNET_CONFIG") else Settings()
_current: contextvars.ContextVar[Settings] = contextvars.ContextVar("qbnet_settings", default=_default)


def get_settings() -> Settings:
    return _current.get()


@contextlib.contextmanager
def settings_override(**changes):
    """Temporarily replace individual settings.

    >>> with settings_override(eps=1e-12):
    ...     get_settings().eps
    1e-12
    """
    token = _current.set(dataclasses.replace(_current.get(), **changes))
    try:
        yield _current.get()
    finally:
        _current.reset(token)
