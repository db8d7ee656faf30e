import numpy as np
import pytest

from cfmimo.large_scale import ArrayGeometry, PropagationParams, build_large_scale_state
from cfmimo.topology import PlacementSpec, build_hex_layout, place_ues


def make_state(K=6, L=1, S=3, n_h=2, n_v=1, n_ue=1, seed=0, isd=200.0):
    lay = build_hex_layout(L, S, isd)
    rng = np.random.default_rng(seed)
    ues = place_ues(lay, K, PlacementSpec(), rng)
    return build_large_scale_state(lay, ues, PropagationParams(), ArrayGeometry(n_h, n_v),
                                   ArrayGeometry(n_ue, 1), rng)


@pytest.fixture(scope="session")
def small_state():
    return make_state()


@pytest.fixture(scope="session")
def desk_state():
    return make_state(K=21, L=7, n_h=4, n_v=2, seed=1)


def estimates_for(ls, plan, n_blocks, seed=0, noise_var=3.16e-12, p_pilot=0.2, trps=None):
    from cfmimo.estimation import mmse_estimate, receive_pilots
    from cfmimo.small_scale import draw_blocks

    rng = np.random.default_rng(seed)
    trps = np.arange(ls.n_trp) if trps is None else np.asarray(trps)
    G = draw_blocks(ls, rng, n_blocks)[:, trps]
    Y = receive_pilots(G, plan, p_pilot, noise_var, rng)
    return G, mmse_estimate(Y, plan, ls, p_pilot, noise_var, trps=trps)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def record(n, name, ok, detail=""):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
    ACCEPTANCE.append((n, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
