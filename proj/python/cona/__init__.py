"""Python front end for the cona pipeline.

The heavy lifting lives in the native ``_cona`` extension; this module turns
its JSON results into plain dictionaries.
"""

import json
from os import PathLike
from typing import Optional, Sequence, Union

from . import _cona
from ._cona import (
    ConaError,
    PhaseError,
    estimate_tokens,
    format_cell,
    level_schedule,
    score_labels,
    trimmed_mean,
)

PathArg = Union[str, PathLike]

__all__ = [
    "ConaError",
    "PhaseError",
    "config_digest",
    "estimate_tokens",
    "format_cell",
    "kbtest",
    "level_schedule",
    "load_config",
    "report",
    "run",
    "score",
    "score_labels",
    "trimmed_mean",
]


def load_config(path: Optional[PathArg] = None, overrides: Sequence[str] = ()) -> dict:
    return json.loads(_cona.load_config(path, list(overrides)))


def config_digest(path: Optional[PathArg] = None, overrides: Sequence[str] = ()) -> str:
    return _cona.config_digest(path, list(overrides))


def run(material: PathArg, audience: PathArg, script: PathArg, out_dir: PathArg,
        config: Optional[PathArg] = None, overrides: Sequence[str] = (), jobs: int = 1) -> dict:
    """Replay a full pipeline run from a recorded script."""
    return json.loads(_cona.run(material, audience, script, out_dir, config, list(overrides), jobs))


def kbtest(audience: PathArg, script: PathArg, out_dir: PathArg,
           config: Optional[PathArg] = None, overrides: Sequence[str] = ()) -> dict:
    return json.loads(_cona.kbtest(audience, script, out_dir, config, list(overrides)))


def score(transcript: PathArg, script: PathArg, out_dir: PathArg,
          config: Optional[PathArg] = None, overrides: Sequence[str] = ()) -> dict:
    return json.loads(_cona.score(transcript, script, out_dir, config, list(overrides)))


def report(scores_dir: PathArg, out_dir: Optional[PathArg] = None,
           config: Optional[PathArg] = None, overrides: Sequence[str] = ()) -> dict:
    return json.loads(_cona.report(scores_dir, out_dir, config, list(overrides)))
