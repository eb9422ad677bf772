import pytest

from smcheck import query

TRANSIENT_LISTING = """\
obsAtStep(step,obs) = if (s.eval("steps") == step)
            then s.eval(obs)
            else next(obsAtStep(step,obs)) fi ;
eval autoIR(E[ obsAtStep(step,"tothouseholds") ],
        E[ obsAtStep(step,"abs(tothouseholds - histothouseholds)") ],
        step,0,1,570) ;
"""

STEADY_LISTING = """\
obs(o) = s.eval(o) ;
eval autoBM(E[ obs("count turtles") ]) ;
"""


def transient_query(observable: str, lo: int, inc: int, hi: int) -> query.QueryAst:
    """autoIR query sampling one observable at each step of an inclusive range."""
    src = (
        'obsAtStep(step,obs) = if (s.eval("steps") == step) '
        "then s.eval(obs) else next(obsAtStep(step,obs)) fi ;\n"
        f'eval autoIR(E[ obsAtStep(step,"{observable}") ], step,{lo},{inc},{hi}) ;\n'
    )
    return query.check_or_raise(query.parse(src))


def steady_query(observable: str, kind: str = "autoBM", warmup: int | None = None) -> query.QueryAst:
    tail = f", {warmup}" if warmup is not None else ""
    src = f'obs(o) = s.eval(o) ;\neval {kind}(E[ obs("{observable}") ]{tail}) ;\n'
    return query.check_or_raise(query.parse(src))


@pytest.fixture
def listing_transient_ast():
    return query.parse(TRANSIENT_LISTING)


@pytest.fixture
def listing_steady_ast():
    return query.parse(STEADY_LISTING)


class CountingSim:
    """Wraps a simulator and counts next() calls (for stepping-economy checks)."""

    def __init__(self, inner):
        self.inner = inner
        self.next_calls = 0

    def reset(self, seed, params=None):
        self.inner.reset(seed, params)

    def next(self):
        self.next_calls += 1
        self.inner.next()

    def eval(self, obs):
        return self.inner.eval(obs)

    @property
    def current_step(self):
        return self.inner.current_step

    def close(self):
        self.inner.close()
