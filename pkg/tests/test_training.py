import numpy as np
import pytest
import torch

from splitdet.datasets import AnnotatedSample, synth_shapes
from splitdet.detector import OptimizerParams, build_detector, ingest_samples, train
from splitdet.exceptions import IngestionError
from splitdet.scaling import ScalingSpec, reduced_config
from splitdet.structures import GroundTruthBox

DESK_CONFIG = reduced_config(ScalingSpec.from_split(0, "1-5"))


def fresh_net(num_classes=2, seed=0):
    torch.manual_seed(seed)
    return build_detector(DESK_CONFIG, num_classes)


class TestIngestion:
    def test_wrong_size_rejected(self):
        net = fresh_net()
        bad = AnnotatedSample(
            key="bad",
            boxes=[GroundTruthBox((1, 1, 10, 10), 0)],
            image=np.zeros((64, 64, 3), dtype=np.uint8),
        )
        with pytest.raises(IngestionError, match="letterbox"):
            ingest_samples(net, [bad])

    def test_class_id_out_of_range(self):
        net = fresh_net(num_classes=2)
        bad = AnnotatedSample(
            key="bad",
            boxes=[GroundTruthBox((1, 1, 10, 10), 7)],
            image=np.zeros((128, 128, 3), dtype=np.uint8),
        )
        with pytest.raises(IngestionError, match="class id"):
            ingest_samples(net, [bad])

    def test_targets_shapes(self):
        net = fresh_net()
        samples = synth_shapes(2, 128, 2, seed=0)
        prepared = ingest_samples(net, samples)
        tensor, targets = prepared[0]
        assert tensor.shape == (3, 128, 128)
        assert targets.class_onehot.shape == (net.anchors.shape[0], 2)
        assert targets.num_positive > 0


class TestTrainLoop:
    def test_history_bookkeeping(self):
        net = fresh_net()
        samples = synth_shapes(1, 128, 2, seed=1)
        history = train(net, samples, epochs=1, params=OptimizerParams(batch_size=1), seed=0)
        assert len(history) == 1

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            train(fresh_net(), [], epochs=1)

    def test_bad_epochs_rejected(self):
        samples = synth_shapes(1, 128, 2, seed=1)
        with pytest.raises(ValueError, match="epochs"):
            train(fresh_net(), samples, epochs=0)

    def test_loss_decreases_on_toy_data(self):
        net = fresh_net(seed=3)
        samples = synth_shapes(12, 128, 2, seed=5)
        history = train(net, samples, epochs=4, params=OptimizerParams(batch_size=6), seed=3)
        assert history[-1] < history[0]

    def test_deterministic_given_seed(self):
        def run():
            net = fresh_net(seed=11)
            samples = synth_shapes(6, 128, 2, seed=4)
            return train(net, samples, epochs=2, params=OptimizerParams(batch_size=3), seed=11)

        assert run() == run()

    def test_optimizer_params_validation(self):
        with pytest.raises(ValueError):
            OptimizerParams(learning_rate=0)
        with pytest.raises(ValueError):
            OptimizerParams(momentum=1.5)
        with pytest.raises(ValueError):
            OptimizerParams(batch_size=0)
