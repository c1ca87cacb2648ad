from pathlib import Path

import numpy as np
import pytest

import effham as eh

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def dicke_model():
    spec = eh.ModelSpec(kind="dicke", omega_field=10.0, omega0=11.0,
                        g=0.04, atoms=1, n_max=6)
    return eh.build(spec)


@pytest.fixture
def xi_two_photon_model():
    # two-photon resonance: E3 - E1 = 2 omega_f, so D12 = -D23 = 1
    spec = eh.ModelSpec(kind="xi3", energies=(0.0, 11.0, 20.0), omega_field=10.0,
                        couplings=(0.04, 0.04), atoms=1, n_max=6)
    return eh.build(spec)


@pytest.fixture
def lambda_model():
    spec = eh.ModelSpec(kind="lambda3", energies=(0.0, 0.0, 11.0), omega_field=10.0,
                        couplings=(0.05, 0.05), atoms=1, n_max=5)
    return eh.build(spec)


@pytest.fixture
def four_level_model():
    # D2 = 1, D3 = 1.7, D4 = 0 (three-photon resonance, no two-photon or
    # dipole-dipole resonances)
    wf = 10.0
    spec = eh.ModelSpec(kind="cascade", energies=(0.0, wf + 1.0, 2 * wf + 1.7, 3 * wf),
                        omega_field=wf, couplings=(0.03, 0.03, 0.03), atoms=1, n_max=8)
    return eh.build(spec, require_resonance=True)
