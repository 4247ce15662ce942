import numpy as np
import pytest
import torch

from boxvid.dataset import ClipSpec, synth_clip
from boxvid.diffusion import ScheduleConfig
from boxvid.model import build_model, tiny_config

SCHEDULE_TINY = ScheduleConfig(steps_total=100, beta_start=1e-4, beta_end=2e-2,
                               ddim_steps=10, guidance_scale=9.0)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    return build_model(tiny_cfg, SCHEDULE_TINY, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_clip(tiny_cfg):
    spec = ClipSpec(shape="circle", color="red", size=0.2, start=(0.3, 0.3),
                    end=(0.7, 0.7), frames=tiny_cfg.frames,
                    pixel_size=tiny_cfg.pixel_size)
    return synth_clip(spec, seed=11)


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(1234)
