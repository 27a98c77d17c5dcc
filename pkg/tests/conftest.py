import numpy as np
import pytest


def py_mlp(store, prefix, spec, x):
    """Loop-by-loop forward pass over plain Python floats."""
    h = [float(v) for v in np.atleast_1d(x)]
    for i, act in enumerate(spec.activations):
        W = store[f"{prefix}/W{i}"].tolist()
        b = store[f"{prefix}/b{i}"].tolist()
        out = []
        for c in range(len(b)):
            z = b[c]
            for k in range(len(h)):
                z += h[k] * W[k][c]
            out.append(max(z, 0.0) if act == "relu" else z)
        h = out
    return h


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
