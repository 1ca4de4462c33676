import numpy as np
import pytest

from advchain import models as M
from advchain import tensor as T
from advchain.data import make_blobs, split
from advchain.models import Classifier, Ensemble, MlpSpec, TrainConfig
from advchain.tensor import Tensor

from conftest import central_diff_grad, max_rel_err


def small_blobs(seed=7, n=120):
    centers = [np.array([0.25, 0.25]), np.array([0.75, 0.75])]
    return make_blobs(n, centers, sigma=0.05, seed=seed)


def test_zero_weight_model_gives_zero_logits():
    spec = MlpSpec((3, 4, 2))
    params = {
        "W0": Tensor(np.zeros((3, 4))),
        "b0": Tensor(np.zeros(4)),
        "W1": Tensor(np.zeros((4, 2))),
        "b1": Tensor(np.zeros(2)),
    }
    model = Classifier(spec, params)
    out = M.forward(model, Tensor([0.2, 0.9, 0.5]))
    assert out.data.tolist() == [0.0, 0.0]


def test_forward_deterministic_across_runs():
    x = Tensor([0.1, 0.4, 0.8])
    a = M.forward(Classifier(MlpSpec((3, 5, 2), seed=42)), x)
    b = M.forward(Classifier(MlpSpec((3, 5, 2), seed=42)), x)
    np.testing.assert_array_equal(a.data, b.data)


def test_forward_dimension_mismatch():
    model = Classifier(MlpSpec((3, 4, 2)))
    with pytest.raises(T.ShapeError):
        M.forward(model, Tensor([1.0, 2.0]))


def test_input_grad_matches_finite_differences():
    model = Classifier(MlpSpec((4, 6, 3), seed=1))
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 4)
    y = np.zeros(3)
    y[1] = 1.0

    _, grad = M.loss_and_input_grad(model, Tensor(x), y)

    def f(v):
        loss, _ = M.loss_and_input_grad(model, Tensor(v), y)
        return loss

    assert max_rel_err(grad.data, central_diff_grad(f, x)) < 1e-4


def test_input_grad_zero_for_saturated_correct_model():
    # weights steer class 0 with a huge margin -> softmax saturates
    spec = MlpSpec((2, 2))
    params = {"W0": Tensor([[200.0, -200.0], [200.0, -200.0]]), "b0": Tensor([0.0, 0.0])}
    model = Classifier(spec, params)
    y = np.array([1.0, 0.0])
    _, grad = M.loss_and_input_grad(model, Tensor([0.8, 0.9]), y)
    assert np.abs(grad.data).max() < 1e-6


def test_loss_and_input_grad_does_not_touch_params():
    model = Classifier(MlpSpec((3, 5, 2), seed=3))
    before = M.params_checksum(model)
    M.loss_and_input_grad(model, Tensor([0.1, 0.2, 0.3]), np.array([0.0, 1.0]))
    assert M.params_checksum(model) == before


def test_ensemble_grad_is_mean_of_member_grads():
    members = [Classifier(MlpSpec((3, 6, 2), seed=s)) for s in (1, 2, 3)]
    ens = Ensemble(members)
    x = Tensor([0.3, 0.6, 0.1])
    y = np.array([1.0, 0.0])

    # mean-of-logits CE gradient computed directly from the fused graph
    _, ens_grad = M.loss_and_input_grad(ens, x, y)

    logits = np.mean([M.forward(m, x).data for m in members], axis=0)
    s = T.softmax_nd(logits)
    # chain rule through each member at the shared input
    manual = np.zeros(3)
    for m in members:
        xl = Tensor(x.data)
        z = M.forward(m, xl)
        surrogate = T.sum_all(T.elementwise_mul(z, Tensor((s - y) / len(members))))
        manual += T.backward(surrogate)[xl].data
    np.testing.assert_allclose(ens_grad.data, manual, rtol=1e-12, atol=1e-15)


def test_single_member_ensemble_equals_member():
    m = Classifier(MlpSpec((3, 4, 2), seed=9))
    x = Tensor([0.5, 0.2, 0.7])
    np.testing.assert_array_equal(Ensemble([m]).forward(x).data, M.forward(m, x).data)


def test_duplicate_members_equal_one():
    m = Classifier(MlpSpec((3, 4, 2), seed=9))
    x = Tensor([0.5, 0.2, 0.7])
    one = M.forward(m, x).data
    two = Ensemble([m, m]).forward(x).data
    np.testing.assert_allclose(two, one, rtol=1e-15)


def test_three_member_ensemble_is_arithmetic_mean():
    members = [Classifier(MlpSpec((2, 5, 3), seed=s)) for s in (4, 5, 6)]
    x = Tensor([0.4, 0.9])
    fused = Ensemble(members).forward(x).data
    mean = np.mean([M.forward(m, x).data for m in members], axis=0)
    np.testing.assert_allclose(fused, mean, rtol=1e-15)


def test_ensemble_rejects_heterogeneous_classes():
    a = Classifier(MlpSpec((3, 4, 2)))
    b = Classifier(MlpSpec((3, 4, 5)))
    with pytest.raises(ValueError):
        Ensemble([a, b])


def test_sgd_lr_zero_leaves_params_unchanged():
    data = small_blobs()
    model = Classifier(MlpSpec((2, 8, 2), seed=0))
    before = M.params_checksum(model)
    M.sgd_train(model, data, TrainConfig(epochs=2, lr=0.0, seed=0))
    assert M.params_checksum(model) == before


def test_sgd_train_separable_blobs():
    data = small_blobs()
    train, test = split(data, 0.75, seed=1)
    model = Classifier(MlpSpec((2, 8, 2), seed=0))
    report = M.sgd_train(model, train, TrainConfig(epochs=20, lr=0.1, seed=0))
    assert report.epoch_accuracies[-1] > 0.99
    assert M.accuracy(model, test.inputs, test.labels) > 0.95


def test_sgd_train_bit_reproducible():
    data = small_blobs()
    cfg = TrainConfig(epochs=3, lr=0.05, seed=12)
    m1 = Classifier(MlpSpec((2, 6, 2), seed=5))
    m2 = Classifier(MlpSpec((2, 6, 2), seed=5))
    M.sgd_train(m1, data, cfg)
    M.sgd_train(m2, data, cfg)
    assert M.params_checksum(m1) == M.params_checksum(m2)


def test_sgd_empty_dataset_rejected():
    from advchain.data import Dataset

    empty = Dataset("none", np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    model = Classifier(MlpSpec((2, 4, 2)))
    with pytest.raises(ValueError):
        M.sgd_train(model, empty, TrainConfig(epochs=1, lr=0.1))


def test_checkpoint_roundtrip(tmp_path):
    model = Classifier(MlpSpec((3, 7, 4), seed=21))
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(path, model, train_config={"epochs": 5, "lr": 0.1})
    loaded = M.load_checkpoint(path)
    assert loaded.spec == model.spec
    assert M.params_checksum(loaded) == M.params_checksum(model)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(M.CheckpointError):
        M.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    model = Classifier(MlpSpec((3, 7, 4), seed=21))
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(path, model)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(M.CheckpointError):
        M.load_checkpoint(path)
