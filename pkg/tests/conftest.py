import pytest
import torch

from ecpe.corpus import Document
from helpers import ACCEPTANCE_RESULTS

torch.set_num_threads(1)


@pytest.fixture
def fig1_doc():
    """Five clauses; the emotion is in clause 4, its causes in clauses 2 and 3."""
    return Document.build(
        "fig1",
        [
            ["yesterday", "morning"],
            ["a", "policeman", "visited", "the", "old", "man", "with", "the", "lost", "money"],
            ["and", "told", "him", "that", "the", "thief", "was", "caught"],
            ["the", "old", "man", "was", "very", "happy"],
            ["and", "deposited", "the", "money", "in", "the", "bank"],
        ],
        [(4, 2), (4, 3)],
    )


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split(".")[0])):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"AC{key:<4} {status:<5} {detail}")
