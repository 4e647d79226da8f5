import pytest
import torch

from partvae import networks


def small_config(**overrides) -> networks.ModelConfig:
    base = dict(n_parts=3, global_dim=64)
    base.update(overrides)
    return networks.ModelConfig(**base)


def small_model(seed: int = 0, **overrides) -> networks.PartVAE:
    torch.manual_seed(seed)
    model = networks.PartVAE(small_config(**overrides))
    model.eval()
    return model


@pytest.fixture(scope="session")
def model() -> networks.PartVAE:
    return small_model(seed=0)


@pytest.fixture()
def rng() -> torch.Generator:
    return torch.Generator(device="cpu").manual_seed(1234)
