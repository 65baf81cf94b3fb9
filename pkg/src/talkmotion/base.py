"""Shared plumbing for estimators whose weights live in a ParameterStore."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .kernels import ParameterStore


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


class TapeEstimator(BaseEstimator):
    """Subclasses implement ``_build(store, rng)`` to create their layers.

    ``fit`` (or :meth:`initialize`) populates ``params_``; checkpoints store
    the constructor arguments next to the weights so :meth:`load` can rebuild
    an identical object.
    """

    def _build(self, store, rng):
        raise NotImplementedError

    def initialize(self):
        rng = np.random.default_rng(self.random_state)
        store = ParameterStore()
        self._build(store, rng)
        self.params_ = store
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} is not initialized; call fit() first")

    def _extra_state(self):
        return {}

    def _load_extra_state(self, state):
        pass

    def save(self, path):
        self._check_fitted()
        meta = {
            "estimator": type(self).__name__,
            "init_params": {k: _jsonable(v) for k, v in self.get_params(deep=False).items()},
            "state": self._extra_state(),
        }
        self.params_.save(path, extra=meta)

    @classmethod
    def load(cls, path):
        state, meta = ParameterStore.read_checkpoint(path)
        kwargs = {}
        for k, v in meta.get("init_params", {}).items():
            kwargs[k] = _tuplify(v)
        est = cls(**kwargs).initialize()
        est.params_.load_state_dict(state)
        est._load_extra_state(meta.get("state", {}))
        return est
