"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``AEROTHROW_PURE=1`` to
force the NumPy implementation. ``BACKEND`` names the active one.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("AEROTHROW_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

NX, NU = _kernels_py.NX, _kernels_py.NU

nmpc_f = _impl.nmpc_f
nmpc_jac = _impl.nmpc_jac
rk4_rollout = _impl.rk4_rollout
rk4_linearize = _impl.rk4_linearize
plant_deriv = _impl.plant_deriv
plant_step = _impl.plant_step

# plant parameter vector layout
P_M, P_G, P_I = 0, 1, slice(2, 11)
P_LX, P_LY, P_CT, P_CM, P_IR, P_MTAU = 11, 12, 13, 14, 15, 16
P_WMIN, P_WMAX, P_MP, P_R = 17, 18, 19, slice(20, 23)
N_PARAMS = 23


def pack_plant_params(params, payload_mass=0.0, r_att=(0.0, 0.0, 0.0)):
    prm = np.empty(N_PARAMS)
    prm[P_M] = params.m
    prm[P_G] = params.g_mag
    prm[P_I] = np.asarray(params.inertia, dtype=float).ravel()
    prm[P_LX] = params.l_x
    prm[P_LY] = params.l_y
    prm[P_CT] = params.c_t
    prm[P_CM] = params.c_m
    prm[P_IR] = params.I_r
    prm[P_MTAU] = params.motor_tau
    prm[P_WMIN] = params.u_min
    prm[P_WMAX] = params.u_max
    prm[P_MP] = payload_mass
    prm[P_R] = r_att
    return prm
