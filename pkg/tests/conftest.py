"""测试共用的fixture"""

import json

import numpy as np
import pytest

from sampledrnn.core.dynamics import generate_dataset, make_system


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_vdp_dataset():
    """10条短Van der Pol轨迹"""
    spec = make_system("vdp")
    return generate_dataset(spec, n_traj=10, init_box=[[-3, 3], [-3, 3]], t_end=4.0, dt=0.1, seed=7)


@pytest.fixture(scope="session")
def vdp_dataset():
    """默认协议的Van der Pol训练集：50条轨迹，t ∈ [0, 20]，dt = 0.1"""
    spec = make_system("vdp")
    return generate_dataset(spec, n_traj=50, init_box=[[-3, 3], [-3, 3]], t_end=20.0, dt=0.1, seed=0)


@pytest.fixture
def write_config(tmp_path):
    """把配置字典写成JSON文件并返回路径"""

    def _write(data, name="test_config"):
        path = tmp_path / f"{name}.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f)
        return str(path)

    return _write


@pytest.fixture
def tiny_vdp_config():
    """几秒内能跑完的Van der Pol实验配置"""
    return {
        "name": "tiny_vdp",
        "data": {"system": "vdp", "n_traj": 8, "n_test_traj": 3, "t_end": 3.0,
                 "test_t_end": 3.0, "dt": 0.1, "seed": 0},
        "model": {"width": 20, "activation": "tanh", "rcond": 1e-8},
        "prediction": {"metric": "mse"},
        "seeds": [0],
    }
