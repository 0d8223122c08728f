import numpy as np
import pytest

from mmhcl.dataset import make_eval_scenarios, standard_benchmark
from mmhcl.evaluation import (
    ablation_suite,
    average_fusion_predictor,
    comparison_suite,
    dominance_rate,
    evaluate,
)
from mmhcl.training import TrainConfig, train

BENCH_SEEDS = (0, 1, 2, 3, 4)
BENCH_EPOCHS = 30

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_run():
    """A quick trained model on a reduced benchmark, shared by unit tests."""
    spec, catalog, ds = standard_benchmark(7, n_classes=8, n_train=20, n_test=5, catalog_groups=4, catalog_rank=6)
    model = train(ds, catalog, TrainConfig(epochs=5, seed=7, batch_size=32))
    return spec, catalog, ds, model


def _bench_one(seed):
    _, catalog, ds = standard_benchmark(seed)
    cfg = TrainConfig(epochs=BENCH_EPOCHS, seed=seed)
    model = train(ds, catalog, cfg)
    ablation = {r.name: r.accuracy for r in ablation_suite(ds, catalog, cfg, model=model)}
    comparison = {r.name: r.accuracy for r in comparison_suite(model, ds)}
    _, cat0, ds0 = standard_benchmark(seed, rho=0.0)
    model0 = train(ds0, cat0, cfg)
    rho0 = evaluate(average_fusion_predictor(model0), make_eval_scenarios(ds0)).accuracy
    return {
        "ablation": ablation,
        "comparison": comparison,
        "rho0": rho0,
        "dominance": 100.0 * dominance_rate(model, ds.test, ds.partition),
        "chance": 100.0 / catalog.n_classes,
    }


@pytest.fixture(scope="session")
def benchmark_runs():
    """Standard benchmark results for every seed (trained once per session)."""
    return [_bench_one(s) for s in BENCH_SEEDS]
