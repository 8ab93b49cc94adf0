import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "erecho", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("erecho")


def noisy(y, rel, seed=0):
    """Multiplicative Gaussian noise y (1 + rel z) from a seeded generator."""
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=float)
    return y * (1.0 + rel * rng.standard_normal(y.shape))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance sub-check results: criterion -> [(name, ok, detail)]
ACCEPTANCE: dict = {}


def record(criterion: int, name: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(ok), detail))
    print(f"criterion {criterion} / {name}: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        subs = ACCEPTANCE[crit]
        bad = [n for n, ok, _ in subs if not ok]
        verdict = "PASS" if not bad else "FAIL"
        extra = f" (failing: {', '.join(bad)})" if bad else ""
        tr.write_line(f"CRITERION {crit}: {verdict} [{len(subs) - len(bad)}/{len(subs)} sub-checks]{extra}")
        for n, ok, d in subs:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {n}: {d}")
