import numpy as np
import pytest

from stitchformer import tensor as T


@pytest.fixture(autouse=True)
def float64_session():
    """Every test starts in 64-bit precision and leaves the global setting untouched."""
    old = T.get_precision()
    T.set_precision("float64")
    yield
    T.set_precision(old)


def numeric_grad(f, arrays, i, h=1e-5):
    """Central finite differences of scalar ``f(*arrays)`` w.r.t. ``arrays[i]``."""
    x = arrays[i]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f(*arrays)
        x[idx] = old - h
        down = f(*arrays)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_error(a, b, floor=1e-2):
    """Elementwise |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries meaningful."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def check_grads(build, arrays, tol=1e-4):
    """``build(*tensors)`` returns a scalar Tensor; compare tape gradients with finite differences."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [T.Tensor(a, requires_grad=True) for a in arrays]
    build(*tensors).backward()

    def f(*xs):
        with T.no_grad():
            return build(*[T.Tensor(x) for x in xs]).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_grad(f, arrays, i)
        worst = max(worst, float(rel_error(t.grad, num).max()))
    assert worst <= tol, f"max relative gradient error {worst}"
    return worst


def fd_subset(build, params, rng, coords=6, h=1e-6):
    """Compare tape gradients with central differences on a random subset of parameter entries.

    The small step keeps probes from crossing ReLU kinks inside the networks.
    """
    for p in params:
        p.zero_grad()
    build().backward()
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for j in rng.choice(flat.size, size=min(coords, flat.size), replace=False):
            old = flat[j]
            with T.no_grad():
                flat[j] = old + h
                up = build().item()
                flat[j] = old - h
                down = build().item()
            flat[j] = old
            worst = max(worst, float(rel_error(gflat[j], (up - down) / (2 * h))))
    return worst


# -- acceptance summary -------------------------------------------------------------
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
