"""
End-to-end captioning on the default synthetic split.

TESTING APPROACH:
- Default configuration: 16 frames, 3 pathways at stride 2, add aggregation,
  d = 64, 2 layers, 2000 train / 200 held-out scenes
- Held-out corpus BLEU must clear fixed bars for every seed
- The scan ablation keeps full > single-pathway > no-backward > no-scan on
  event captions, with fixed margins against the last two

Run explicitly: pytest -m slow
"""

import numpy as np
import pytest

from scancap.operations.config import load_config
from scancap.operations.synthdata import make_split
from scancap.operations.tokenizer import Vocabulary
from scancap.operations.training import ablate, evaluate, make_encoders, train


def default_split(config):
    data = config.data
    return make_split(data.n_train, data.n_eval, data.seed, data.frames, data.height, data.width)


@pytest.mark.e2e
@pytest.mark.slow
class TestToyCaptioning:
    """Train and evaluate the default captioner."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_held_out_bleu(self, tmp_path, seed):
        config = load_config(seed=seed, out=str(tmp_path))
        train_scenes, eval_scenes = default_split(config)

        result = train(config, train_scenes)
        summary = evaluate(result.params, eval_scenes, config, make_encoders(config), Vocabulary())

        assert summary.bleu1 >= 0.90
        assert summary.bleu4 >= 0.60


@pytest.mark.e2e
@pytest.mark.slow
class TestAblationDirection:
    """Each removed scan component costs event-caption BLEU-1, in a fixed order."""

    def test_variant_ordering(self, tmp_path):
        config = load_config(out=str(tmp_path))
        train_scenes, eval_scenes = default_split(config)

        rows = ablate(config, train_scenes, eval_scenes)

        mean = {r["variant"]: r["event_bleu1"] for r in rows if r["seed"] == "mean"}
        assert mean["full"] > mean["single-pathway"] > mean["no-backward"] > mean["no-scan"]
        assert mean["full"] - mean["no-backward"] >= 0.05
        assert mean["full"] - mean["no-scan"] >= 0.10
        assert np.isfinite(list(mean.values())).all()
