"""
基准动力系统插件

Van der Pol（自由和受迫）、Lorenz-63、Rössler，以及用于检验的线性系统。
"""

from typing import Any, Dict, Optional

import numpy as np

from .base import SystemPlugin


class VanDerPolPlugin(SystemPlugin):
    """Van der Pol振子，μ=1时处于极限环区域"""

    name = "vdp"
    description = "Van der Pol振子"
    aliases = ("van_der_pol",)
    state_dim = 2
    input_dim = 0
    default_params = {"mu": 1.0}
    protocol = {
        "n_traj": 50,
        "init_box": [[-3.0, 3.0], [-3.0, 3.0]],
        "t_end": 20.0,
        "dt": 0.1,
        "test_t_end": 50.0,
        "normalize": False,
    }

    def rhs(self, h, x, params):
        h1, h2 = h[..., 0], h[..., 1]
        forcing = 0.0 if x is None else x[..., 0]
        dh2 = params["mu"] * (1.0 - h1 ** 2) * h2 - h1 + forcing
        return np.stack([h2, dh2], axis=-1)


class ForcedVanDerPolPlugin(VanDerPolPlugin):
    """第二个分量受外部输入x驱动的Van der Pol振子"""

    name = "forced_vdp"
    description = "受迫Van der Pol振子"
    aliases = ()
    input_dim = 1
    protocol = {
        "n_traj": 150,
        "init_box": [[-3.0, 3.0], [-3.0, 3.0]],
        "t_end": 2.5,
        "dt": 0.05,
        "test_t_end": 2.5,
        "normalize": False,
        "input_law": "uniform_random",
        "input_box": [[-3.0, 3.0]],
    }


class Lorenz63Plugin(SystemPlugin):
    """Lorenz-63系统（混沌区域）"""

    name = "lorenz63"
    description = "Lorenz-63系统"
    aliases = ("lorenz",)
    state_dim = 3
    input_dim = 0
    default_params = {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}
    protocol = {
        "n_traj": 50,
        "init_box": [[-20.0, 20.0], [-20.0, 20.0], [0.0, 50.0]],
        "t_end": 5.0,
        "dt": 0.01,
        "test_t_end": 50.0,
        "normalize": True,
    }

    def rhs(self, h, x, params):
        h1, h2, h3 = h[..., 0], h[..., 1], h[..., 2]
        return np.stack([
            params["sigma"] * (h2 - h1),
            h1 * (params["rho"] - h3) - h2,
            h1 * h2 - params["beta"] * h3,
        ], axis=-1)


class RosslerPlugin(SystemPlugin):
    """Rössler系统（混沌区域）"""

    name = "rossler"
    description = "Rössler系统"
    state_dim = 3
    input_dim = 0
    default_params = {"alpha": 0.15, "beta": 0.2, "kappa": 10.0}
    protocol = {
        "n_traj": 50,
        "init_box": [[-20.0, 20.0], [-20.0, 20.0], [0.0, 40.0]],
        "t_end": 10.0,
        "dt": 0.01,
        "test_t_end": 200.0,
        "normalize": True,
    }

    def rhs(self, h, x, params):
        h1, h2, h3 = h[..., 0], h[..., 1], h[..., 2]
        return np.stack([
            -h2 - h3,
            h1 + params["alpha"] * h2,
            params["beta"] + h3 * (h1 - params["kappa"]),
        ], axis=-1)


class LinearPlugin(SystemPlugin):
    """线性系统 ḣ = A h + B x，参数A、B为矩阵"""

    name = "linear"
    description = "线性系统（检验用）"
    default_params = {"A": [[-1.0]], "B": None}
    protocol = {
        "n_traj": 10,
        "init_box": [[-1.0, 1.0]],
        "t_end": 1.0,
        "dt": 0.1,
        "test_t_end": 1.0,
        "normalize": False,
    }

    def dims(self, params: Dict[str, Any]):
        A = np.asarray(params["A"], dtype=float)
        B = params.get("B")
        return A.shape[0], (0 if B is None else np.asarray(B, dtype=float).shape[1])

    def rhs(self, h, x, params):
        A = np.asarray(params["A"], dtype=float)
        out = h @ A.T
        B: Optional[Any] = params.get("B")
        if B is not None and x is not None:
            out = out + x @ np.asarray(B, dtype=float).T
        return out
