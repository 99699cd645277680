import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from binselect.generate import GeneratorSpec, sample_instance, stream_rng


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_instance(spec: GeneratorSpec, seed: int, index: int):
    return sample_instance(spec, stream_rng(seed, index), f"fx{seed}-{index}")


@pytest.fixture
def ds2_instances():
    spec = GeneratorSpec.preset("ds2")
    return [random_instance(spec, 99, i) for i in range(50)]
