import pytest

from vocovar import kernels

BACKENDS = [kernels.python_backend] + ([kernels.compiled_backend] if kernels.compiled_backend else [])

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_RESULTS = {}


@pytest.fixture(params=BACKENDS, ids=lambda b: b.BACKEND)
def kernel_backend(request, monkeypatch):
    """Routes the sparse kernels through one specific backend."""
    monkeypatch.setattr(kernels, "cholesky_csc", request.param.cholesky_csc)
    monkeypatch.setattr(kernels, "recover_entries", request.param.recover_entries)
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
