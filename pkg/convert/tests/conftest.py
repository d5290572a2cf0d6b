import numpy as np
import pytest
import torch

from devo_convert.reference import ReferenceModel


def small_config(causal=True, channels=6, base=8):
    """A compact engine config document with the 160-sample stride law."""
    def conv(in_ch, out_ch, kernel, stride=1, dilation=1, transposed=False,
             activation="none", act_alpha=0.1):
        return {"in_ch": in_ch, "out_ch": out_ch, "kernel": kernel, "stride": stride,
                "dilation": dilation, "causal": causal, "bias": True,
                "transposed": transposed, "activation": activation,
                "act_alpha": act_alpha}

    encoder = []
    in_ch = 1
    for k, s in ((10, 5), (8, 4), (4, 2), (4, 2), (4, 2)):
        encoder.append(conv(in_ch, channels, k, s, activation="leaky_relu",
                            act_alpha=0.0))
        in_ch = channels
    stages = []
    mrf = []
    ch = base
    for s in (5, 4, 4, 2):
        stages.append(conv(ch, ch, 2 * s, s, transposed=True))
        mrf.append([{"kernel": 3, "dilations": [1, 2]}])
    return {
        "encoder_layers": encoder,
        "aggregator_weights": None,
        "feature_upsample": 1,
        "vocoder_pre": conv(channels, base, 5),
        "upsample_stages": stages,
        "mrf_blocks": mrf,
        "vocoder_post": conv(ch, 1, 5),
        "causal": causal,
    }


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def checkpoint(tmp_path, config):
    torch.manual_seed(7)
    model = ReferenceModel(config)
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(0.0, 0.1)
    path = tmp_path / "reference.pt"
    torch.save(model.state_dict(), path)
    return path


@pytest.fixture
def probe():
    rng = np.random.default_rng(99)
    return rng.normal(0, 0.2, 16000).astype(np.float32)
