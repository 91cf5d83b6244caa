import numpy as np
import pytest

from multisupport.cli import main
from multisupport.generative import FlowModel


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "reach.msds"
    assert main(["collect", "--task", "reach", "--episodes", "4",
                 "--seed", "50", "--out", str(path)]) == 0
    return path


class TestCollectTrainRun:
    def test_collect_wrote_dataset(self, small_dataset):
        from multisupport.dataset import load_dataset

        demos = load_dataset(small_dataset)
        assert len(demos) == 4
        assert all(d.source == "scripted" for d in demos)

    def test_train_zero_epochs_writes_untrained_checkpoint(self, small_dataset, tmp_path):
        out = tmp_path / "flow0.ckpt"
        assert main(["train", "--dataset", str(small_dataset), "--method", "flow",
                     "--epochs", "0", "--out", str(out)]) == 0
        model = FlowModel.load(out)
        assert model.method == "flow"
        assert np.all(model.params["head.w"].data == 0.0)  # zero-head untrained
        assert model.norm is not None

    def test_train_and_run(self, small_dataset, tmp_path):
        out = tmp_path / "flow.ckpt"
        assert main(["train", "--dataset", str(small_dataset), "--method", "flow",
                     "--epochs", "2", "--lr", "3e-4", "--out", str(out),
                     "--log-every", "0"]) == 0
        assert main(["run", "--checkpoint", str(out), "--task", "reach",
                     "--episodes", "1", "--seed", "9"]) == 0

    def test_replay_bit_exact(self, small_dataset):
        assert main(["replay", "--dataset", str(small_dataset)]) == 0

    def test_replay_unknown_episode(self, small_dataset):
        assert main(["replay", "--dataset", str(small_dataset),
                     "--episode", "nope"]) == 2
