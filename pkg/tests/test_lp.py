import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persuade import lp


def vertex_max(c, A, b):
    """Maximize c@x over {A x <= b, x >= 0} in 2-d by enumerating vertices."""
    rows = [(np.asarray(a, float), float(bb)) for a, bb in zip(A, b)]
    rows += [(np.array([-1.0, 0.0]), 0.0), (np.array([0.0, -1.0]), 0.0)]
    best = -math.inf
    for (a1, b1), (a2, b2) in itertools.combinations(rows, 2):
        M = np.vstack([a1, a2])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, [b1, b2])
        if all(a @ x <= bb + 1e-9 for a, bb in rows):
            best = max(best, float(np.dot(c, x)))
    return best


def test_textbook_maximum():
    prog = lp.LinearProgram(objective=[3.0, 5.0])
    prog.add([1, 0], lp.LE, 4)
    prog.add([0, 2], lp.LE, 12)
    prog.add([3, 2], lp.LE, 18)
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.objective_value == pytest.approx(36.0)
    assert sol.x == pytest.approx([2.0, 6.0])


def test_equality_and_ge_rows():
    prog = lp.LinearProgram(objective=[-1.0, -1.0])
    prog.add([1, 1], lp.EQ, 1)
    prog.add([1, -1], lp.GE, 0.2)
    sol = lp.solve(prog)
    assert sol.objective_value == pytest.approx(-1.0)
    assert sol.x[0] - sol.x[1] >= 0.2 - 1e-9


def test_infeasible_and_unbounded():
    prog = lp.LinearProgram(objective=[1.0])
    prog.add([1], lp.LE, 1)
    prog.add([1], lp.GE, 2)
    assert lp.solve(prog).status == "infeasible"
    prog = lp.LinearProgram(objective=[1.0, 0.0])
    prog.add([1, -1], lp.LE, 1)
    assert lp.solve(prog).status == "unbounded"


def test_free_and_boxed_variables():
    prog = lp.LinearProgram(objective=[1.0, -1.0], bounds=[(-2.0, 3.0), (-math.inf, math.inf)])
    prog.add([0, 1], lp.GE, -5)
    sol = lp.solve(prog)
    assert sol.objective_value == pytest.approx(8.0)
    assert sol.x == pytest.approx([3.0, -5.0])


def test_redundant_equalities():
    prog = lp.LinearProgram(objective=[1.0, 2.0])
    prog.add([1, 1], lp.EQ, 1)
    prog.add([2, 2], lp.EQ, 2)
    sol = lp.solve(prog)
    assert sol.objective_value == pytest.approx(2.0)


def test_badly_scaled_rows():
    # rows with coefficients ~1e-15 still produce the right answer
    prog = lp.LinearProgram(objective=[1.0, 1.0])
    prog.add([1e-15, 2e-15], lp.LE, 1e-15)
    prog.add([1.0, 0.0], lp.LE, 0.5)
    sol = lp.solve(prog)
    assert sol.objective_value == pytest.approx(0.75)


def test_zero_row_feasibility():
    prog = lp.LinearProgram(objective=[1.0])
    prog.add([0.0], lp.GE, 1.0)
    assert lp.solve(prog).status == "infeasible"


@settings(max_examples=150, deadline=None)
@given(
    c=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    A=st.lists(st.lists(st.floats(0.05, 5), min_size=2, max_size=2), min_size=1, max_size=4),
    b=st.lists(st.floats(0.1, 10), min_size=4, max_size=4),
)
def test_matches_vertex_enumeration(c, A, b):
    b = b[: len(A)]
    prog = lp.LinearProgram(objective=c)
    for row, rhs in zip(A, b):
        prog.add(row, lp.LE, rhs)
    sol = lp.solve(prog)
    assert sol.optimal
    assert sol.objective_value == pytest.approx(vertex_max(c, A, b), abs=1e-7)
