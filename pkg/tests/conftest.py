import functools

import numpy as np
import pytest

from fuzzyglucose import fuzzy, lmi

BERGMAN_PRESETS = {"sat6": (6.0, 0.095), "sat10": (10.0, 0.25), "sat25": (25.0, 1.2)}
TOLIC_PRESETS = {"sat6": (6.0, 0.004), "sat12": (12.0, 0.08), "sat20": (20.0, 0.18)}


@functools.lru_cache(maxsize=None)
def synthesized(model_name: str, mu: float) -> lmi.SynthesisResult:
    model = fuzzy.bergman_ts_model() if model_name == "bergman" else fuzzy.tolic_ts_model()
    return lmi.synthesize(model, lmi.SynthesisOptions(mu=mu))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
