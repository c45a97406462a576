# -*- coding: utf-8 -*-

"""
Utilities used when testing.
"""
import contextlib
import io
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from tests.context import FOLD_TABLE_COLUMNS
from tumorseg.__main__ import main
from tumorseg.seglib.config import ModelConfig
from tumorseg.seglib.data.case import Case
from tumorseg.seglib.data.phantom import PhantomSpec, gen_phantom
from tumorseg.seglib.nn.layers import Conv3d, ConvTranspose3d, GroupNorm, Module


def tiny_model_config(**overrides) -> ModelConfig:
    """
    A levels=2 network small enough to run forward and backward in well under a second.
    """
    params = {"in_channels": 4, "out_classes": 3, "base_filters": 4, "levels": 2,
              "bottleneck_filters": None, "seed": 0}
    params.update(overrides)
    return ModelConfig(**params)


def init_module(module: Module, seed: int = 0) -> Module:
    """
    Gives every layer of `module` its default random initialization.
    """
    rng = np.random.default_rng(seed)
    for m in module.modules():
        if isinstance(m, (Conv3d, ConvTranspose3d, GroupNorm)):
            m.reset_parameters(rng)
    return module


def phantom_cases(count: int, size: int = 16, seed: int = 0) -> list[Case]:
    """
    `count` phantoms with their modalities in stored units (not normalized).
    """
    spec = PhantomSpec(size=size)
    return [gen_phantom(spec, [seed, i], case_id=f"case-{i:04d}") for i in range(count)]


def write_fold_csv(path: Path, rows: Sequence[Sequence[float]]) -> Path:
    pd.DataFrame([list(r) for r in rows], columns=FOLD_TABLE_COLUMNS).to_csv(path, index=False)
    return path


def run_cli(*argv: str) -> tuple[int, str, str]:
    """
    Runs the command line entry point in-process.

    :return: exit code, captured stdout and captured stderr
    """
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def error_line(stderr: str) -> dict:
    """
    The JSON error report; it is always the last line written to stderr.
    """
    return json.loads(stderr.strip().splitlines()[-1])
