import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from spmc.corpus import Interaction, build_corpus  # noqa: E402


@pytest.fixture
def tiny_corpus():
    """Three users; u0 and u1 trust each other, u2 trusts u0."""
    recs = [
        Interaction("a", "x", 1),
        Interaction("a", "y", 2),
        Interaction("a", "z", 3),
        Interaction("a", "w", 4),
        Interaction("a", "v", 5),
        Interaction("b", "y", 1),
        Interaction("b", "x", 3),
        Interaction("b", "v", 6),
        Interaction("b", "z", 7),
        Interaction("c", "w", 2),
        Interaction("c", "z", 4),
    ]
    trust = [("a", "b"), ("b", "a"), ("c", "a")]
    return build_corpus(recs, trust)


def pytest_terminal_summary(terminalreporter):
    import oracles

    if oracles.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in oracles.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
