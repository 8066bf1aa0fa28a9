from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .model import Domain
from .parser import parse_domain


def shipped_domain_text() -> str:
    return resources.files("boltplan.data").joinpath("disassembly.pddl").read_text()


@lru_cache(maxsize=1)
def load_shipped_domain() -> Domain:
    return parse_domain(shipped_domain_text())
