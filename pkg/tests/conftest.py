import functools

import numpy as np
import pytest

from ncprobe.core import FeatureMatrix

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = mark.args
        _ACCEPTANCE[number] = (title, rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] AC{number:>2} {title}")


def random_features(rng, k, d, n_per, spread=1.0, shift=0.0):
    """Class means plus isotropic noise; n_per is an int or a per-class sequence."""
    counts = [n_per] * k if np.isscalar(n_per) else list(n_per)
    means = rng.standard_normal((k, d)) * 2.0 + shift
    data = np.concatenate([means[c] + spread * rng.standard_normal((counts[c], d)) for c in range(k)])
    labels = np.repeat(np.arange(k), counts)
    return FeatureMatrix.from_arrays(data, labels, k)


def collapsed_features(rng, k, d, n_per):
    means = rng.standard_normal((k, d)) * 3.0
    labels = np.repeat(np.arange(k), n_per)
    return FeatureMatrix.from_arrays(means[labels], labels, k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gradcheck(net, x, y, loss, n_probes, rng, step=1e-5, skip_from=None, mask=None):
    """Max relative error of backprop against central differences at random entries.

    Relative error is ``|bp - fd| / max(|bp|, |fd|, 1e-3)``: the floor keeps
    rounding noise of the difference quotient (~1e-10) from dominating entries
    whose true gradient is essentially zero.
    """
    from ncprobe.network import loss_and_grads, loss_value

    _, grads = loss_and_grads(net, x, y, loss, mask, skip_from)
    worst = 0.0
    for _ in range(n_probes):
        i = int(rng.integers(net.n_layers))
        if mask is not None and not mask[i]:
            continue
        ly = net.layers[i]
        if rng.random() < 0.7:
            param, g = ly.weight, grads.weights[i]
        else:
            param, g = ly.bias, grads.biases[i]
        idx = tuple(int(rng.integers(s)) for s in param.shape)
        orig = param[idx]
        param[idx] = orig + step
        up = loss_value(net, x, y, loss, skip_from)
        param[idx] = orig - step
        down = loss_value(net, x, y, loss, skip_from)
        param[idx] = orig
        fd = (up - down) / (2 * step)
        bp = g[idx]
        worst = max(worst, abs(bp - fd) / max(abs(bp), abs(fd), 1e-3))
    return worst


@functools.lru_cache(maxsize=None)
def pretrained_pair(seed):
    """Standard source/target pair plus a 6-layer MLP trained on the source."""
    from ncprobe.network import NetworkSpec, init_network
    from ncprobe.synth import make_transfer_pair, standard_pair
    from ncprobe.training import desk_config, train

    src, tgt = make_transfer_pair(standard_pair(seed))
    net, hist = train(init_network(NetworkSpec(src.d, [64] * 5, src.n_classes, seed=seed)), src, desk_config(seed))
    return src, tgt, net, hist
