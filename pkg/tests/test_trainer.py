import numpy as np
import pytest

from gpnd.data import Dataset
from gpnd.errors import InvalidInputError, TrainingError
from gpnd.exact_gp import ExactBackend, posterior
from gpnd.kernel import KernelParams
from gpnd.negcon import NegativeSet
from gpnd.optim import AdamState, optimizer_step
from gpnd.svgp import SparseBackend
from gpnd.trainer import TrainConfig, fit


@pytest.fixture
def sine():
    # pinned draw; with only four kernel hyperparameters to move, the repulsion
    # on 40 dense points is draw-dependent
    rng = np.random.default_rng(0)
    X = np.sort(rng.uniform(0, 2 * np.pi, 40))[:, None]
    return Dataset(X, np.sin(X[:, 0]) + 0.1 * rng.standard_normal(40))


def on_curve_negatives():
    xb = np.array([[1.0], [3.0], [5.0]])
    return NegativeSet(xb, np.sin(xb[:, 0]), 0.1)


def test_adam_zero_gradient_is_fixed_point():
    x = np.array([1.0, -2.0, 3.0])
    new, state = optimizer_step(x, np.zeros(3), AdamState.zeros(3), 0.1)
    np.testing.assert_array_equal(new, x)
    assert state.t == 1


def test_adam_first_step_is_lr_times_sign():
    g = np.array([3.0, -0.01, 250.0])
    new, _ = optimizer_step(np.zeros(3), g, AdamState.zeros(3), 0.05)
    np.testing.assert_allclose(new, -0.05 * np.sign(g), rtol=1e-6)


def test_adam_descends_quadratic():
    x, state = np.array([1.0]), AdamState.zeros(1)
    for _ in range(50):
        x, state = optimizer_step(x, 2 * x, state, 0.1)
    assert abs(x[0]) < 0.1


def test_adam_rejects_bad_input():
    with pytest.raises(TrainingError):
        optimizer_step(np.zeros(2), np.array([np.nan, 0.0]), AdamState.zeros(2), 0.1)
    with pytest.raises(InvalidInputError):
        optimizer_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), 0.1)


@pytest.mark.parametrize("backend", [ExactBackend, lambda: SparseBackend(8)])
def test_classical_equals_zero_beta(sine, backend):
    neg = on_curve_negatives()
    a = fit(backend(), sine, None, TrainConfig(mode="classical", beta=5.0, epochs=60))
    b = fit(backend(), sine, neg, TrainConfig(mode="gp_nd", beta=0.0, epochs=60))
    assert a.nll_trace == b.nll_trace
    np.testing.assert_array_equal(_vec(a.final_params), _vec(b.final_params))


def _vec(params):
    if hasattr(params, "var"):
        return np.concatenate([params.kernel.to_vector(), params.var.to_vector()])
    return params.to_vector()


def test_training_descends(sine):
    r = fit(ExactBackend(), sine, None, TrainConfig(mode="classical", epochs=400))
    assert r.nll_trace[-1] < r.nll_trace[0]
    assert r.epochs_run == 400
    assert r.penalty_trace == [0.0] * 400


def test_negatives_push_the_mean_away(sine):
    neg = on_curve_negatives()
    be = ExactBackend()
    classical = fit(be, sine, None, TrainConfig(mode="classical", epochs=400))
    nd = fit(be, sine, neg, TrainConfig(beta=3.0, sigma_neg=0.1, epochs=400))
    gap_c = np.abs(posterior(classical.final_params, sine, neg.X).means - neg.y)
    gap_n = np.abs(posterior(nd.final_params, sine, neg.X).means - neg.y)
    assert np.all(gap_n > gap_c)
    assert any(v != 0.0 for v in nd.penalty_trace)


def test_joint_mode_runs_and_differs(sine):
    neg = on_curve_negatives()
    alt = fit(ExactBackend(), sine, neg, TrainConfig(beta=3.0, epochs=30))
    joint = fit(ExactBackend(), sine, neg, TrainConfig(beta=3.0, epochs=30,
                                                        alternation="joint"))
    assert joint.epochs_run == 30
    assert _vec(alt.final_params).tolist() != _vec(joint.final_params).tolist()


def test_same_seed_same_trajectory(sine):
    cfg = TrainConfig(beta=1.0, epochs=25, batch_size=16, seed=9)
    be = SparseBackend(6)
    a = fit(be, sine, on_curve_negatives(), cfg)
    b = fit(SparseBackend(6), sine, on_curve_negatives(), cfg)
    assert a.nll_trace == b.nll_trace
    np.testing.assert_array_equal(_vec(a.final_params), _vec(b.final_params))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_with_epoch(sine):
    huge = Dataset(sine.X, np.full(len(sine), 1e200))
    with pytest.raises(TrainingError) as info:
        fit(ExactBackend(), huge, None, TrainConfig(mode="classical", epochs=5),
            init=KernelParams())
    assert info.value.epoch == 0
    assert len(info.value.snapshot) == 4


def test_early_stop_and_convergence_record():
    X = np.linspace(0, 1, 5)[:, None]
    data = Dataset(X, np.zeros(5))
    cfg = TrainConfig(mode="classical", epochs=3000, learning_rate=0.05, early_stop=True,
                      tol=1e-3, patience=5)
    r = fit(ExactBackend(), data, None, cfg)
    assert r.converged_epoch is not None
    assert r.epochs_run == r.converged_epoch + 1


def test_config_validation(sine):
    with pytest.raises(InvalidInputError):
        TrainConfig(mode="other")
    with pytest.raises(InvalidInputError):
        TrainConfig(beta=-1)
    with pytest.raises(InvalidInputError):
        fit(ExactBackend(), sine, None, TrainConfig(mode="gp_nd"))
    assert TrainConfig(mode="classical", beta=4.0).beta == 0.0


def test_report_serializes(sine):
    r = fit(ExactBackend(), sine, None, TrainConfig(mode="classical", epochs=3,
                                                   record_params=True))
    d = r.to_dict()
    assert list(d) == ["backend", "epochs_run", "converged_epoch", "final_params",
                       "nll_trace", "penalty_trace", "wall_clock_per_epoch"]
    assert len(r.param_trace) == 4
