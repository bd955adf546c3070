import numpy as np
import pytest

from smallgain.expr import Input, Scale, State, Sum
from smallgain.gainop import tridiagonal_spec
from smallgain.netsim import NetworkSpec, QuadV, SubsystemSpec
from smallgain.rules import BlockRule
from smallgain.seqspace import SetSpec


def chain_f(c=0.1, with_input=True):
    terms = [Scale(-1.0, State()), Scale(c, State(-1)), Scale(c, State(1))]
    if with_input:
        terms.append(Input())
    return Sum(tuple(terms))


def chain_matrix(N, c=0.1):
    return -np.eye(N) + c * (np.eye(N, k=1) + np.eye(N, k=-1))


def chain_network(c=0.1, gamma_u=1.25, m=1):
    sub = SubsystemSpec(chain_f(c, m > 0), 1, m, QuadV.scalar(), 1.0 + 2 * c)
    return NetworkSpec(BlockRule((), sub), tridiagonal_spec(c, gamma_u=gamma_u), SetSpec.origin(), 2.0, 2.0)


@pytest.fixture
def chain():
    return chain_network()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
