"""Python bindings for the automiseg engine."""

import json

from . import _core
from ._core import (
    Error,
    InvalidArgument,
    clahe,
    dice,
    hsv_shift,
    pearson,
    rgb_shift,
    synthetic_benchmark,
    unsharp_mask,
    write_synthetic_benchmark,
)

__all__ = [
    "Engine",
    "Error",
    "InvalidArgument",
    "clahe",
    "dice",
    "hsv_shift",
    "pearson",
    "rgb_shift",
    "synthetic_benchmark",
    "transform_chain",
    "unsharp_mask",
    "write_synthetic_benchmark",
]


def transform_chain(image, **params):
    """Apply one transform block, e.g. transform_chain(img, clahe_clip=2.0, clahe_grid=4)."""
    return _core._transform_chain(image, json.dumps(params))


class Engine:
    """A task bound to a set of backends. Configurations are plain dicts."""

    def __init__(self, core):
        self._core = core

    @classmethod
    def synthetic_mock(cls):
        return cls(_core._Engine.synthetic_mock())

    @classmethod
    def mock(cls, task, world):
        return cls(_core._Engine.mock(str(task), str(world)))

    @classmethod
    def remote(cls, task, url, timeout=120.0, retries=2):
        return cls(_core._Engine.remote(str(task), url, timeout, retries))

    @property
    def parameter_names(self):
        return self._core.parameter_names()

    def base_config(self):
        return json.loads(self._core.base_config())

    def segment(self, image, config=None):
        config = self.base_config() if config is None else config
        return self._core.segment(image, json.dumps(config))

    def adapt(self, images, n_trials=100, subset_size=100, seed=0, mode="batch", workers=1):
        out = self._core.adapt(list(images), n_trials, subset_size, seed, mode, workers)
        out["best_config"] = json.loads(out["best_config"])
        out["per_sample_configs"] = [json.loads(c) for c in out["per_sample_configs"]]
        return out
