import numpy as np
import pytest

from incomenet.data_model import BINARY_SCHEMA
from incomenet.graph import CommGraph


def make_graph(incomes: dict, calls: list, schema=BINARY_SCHEMA, sms=()):
    """Small graph from ``{user: income or None}`` and ``[(src, dst, n_calls), ...]``."""
    ids = sorted(incomes)
    index = {u: i for i, u in enumerate(ids)}
    inc = [np.nan if incomes[u] is None else incomes[u] for u in ids]
    rows = [(index[s], index[d], c, 0) for s, d, c in calls]
    rows += [(index[s], index[d], 0, m) for s, d, m in sms]
    if not rows:
        empty = np.empty(0, dtype=np.int64)
        return CommGraph(ids, inc, empty, empty, empty, empty, empty, schema)
    src, dst, c, m = (np.array(col) for col in zip(*rows))
    return CommGraph.from_events(ids, inc, src, dst, c, m, np.zeros_like(c), schema)


@pytest.fixture
def toy_graph():
    # u calls two low earners 4 times and one high earner twice; v only receives
    incomes = {"a1": 100.0, "a2": 120.0, "b1": 500.0, "u": None, "v": None}
    calls = [("u", "a1", 3), ("u", "a2", 1), ("u", "b1", 2), ("a1", "v", 5)]
    return make_graph(incomes, calls)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
