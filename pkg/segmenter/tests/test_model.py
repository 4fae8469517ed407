import numpy as np
import torch

from limbseg.model import SegmenterConfig, build_model


def small_model():
    torch.manual_seed(0)
    return build_model(SegmenterConfig(pretrained=False))


def test_io_shapes():
    m = small_model()
    m.eval()
    with torch.no_grad():
        y = m(torch.rand(1, 1, 256, 256))
    assert y.shape == (1, 1, 256, 256)


def test_decoder_adds_parameters():
    m = small_model()
    total = sum(p.numel() for p in m.parameters())
    encoder_only = sum(p.numel() for name, p in m.named_parameters()
                       if name.startswith(("stem", "enc")))
    assert total > encoder_only
    assert encoder_only > 0


def test_eval_mode_deterministic():
    m = small_model()
    m.eval()
    x = torch.rand(1, 1, 256, 256)
    with torch.no_grad():
        a = m(x)
        b = m(x)
    assert torch.equal(a, b)


def test_max_channels_512():
    m = small_model()
    feats = {}

    def hook(name):
        def fn(_m, _i, out):
            feats[name] = out.shape[1]
        return fn

    m.enc4.register_forward_hook(hook("enc4"))
    m.eval()
    with torch.no_grad():
        m(torch.rand(1, 1, 256, 256))
    assert feats["enc4"] == 512


def test_channel_replication_matches_3ch_input():
    m = small_model()
    m.eval()
    x = torch.rand(1, 1, 256, 256)
    with torch.no_grad():
        a = m(x)
        b = m(x.repeat(1, 3, 1, 1))
    assert torch.equal(a, b)
