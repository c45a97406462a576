# -*- coding: utf-8 -*-

"""
JSON schemas describing every JSON document tumorseg reads or writes.
"""

import json
from pathlib import Path

SCHEMA_DIR = Path(__file__).parent


def load_schema(name: str) -> dict:
    """
    :param name: schema name without suffix, e.g. "folds"
    """
    with open(SCHEMA_DIR / f"{name}.schema.json", "r", encoding="utf-8") as f:
        return json.load(f)
