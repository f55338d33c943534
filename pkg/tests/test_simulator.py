import math

import numpy as np
import pytest

from motility.acceptance import FIG2, figure_params
from motility.geometry import BoundaryShape, PolarField, PolarGrid
from motility.simulator import (
    CFLError,
    InsufficientDecayError,
    PositivityError,
    SimConfig,
    Trajectory,
    decay_rate,
    eigenvector_state,
    init_state,
    mass_matched_radius,
    perturbed_state,
    run,
    stable_dt,
    step,
)
from motility.stability import (
    assemble_operator_mode,
    compliant_params,
    full_spectrum,
    mode_spectrum,
    radial_steady_state,
)

R_STABLE = 1.2


@pytest.fixture(scope="module")
def stable_params():
    return compliant_params(1.1, R_STABLE, 2.1, 0.75)


def test_resting_disk_is_a_fixed_point(stable_params):
    cfg = SimConfig(R=R_STABLE, k_e=stable_params.k_e, n_r=16, n_phi=32, dt=1e-3, t_end=0.1, kind="steady",
                    sample_every=20, tol_converge=0.0)
    traj = run(cfg)
    assert traj.event == "t_end"
    assert np.max(traj.deviation()) < 1e-12
    assert abs(traj.mass[-1] - traj.mass[0]) < 1e-12 * traj.mass[0]


def test_mass_is_conserved_and_symmetry_kept(stable_params):
    state = perturbed_state(R_STABLE, stable_params, 16, 32, 1e-2, seed=3)
    m0 = state.mass()
    for _ in range(20):
        state = step(state, 2e-3)
    assert state.mass() == pytest.approx(m0, rel=1e-13)
    v = state.myosin.values
    mirrored = np.concatenate([v[:, :1], v[:, :0:-1]], axis=1)
    assert np.max(np.abs(v - mirrored)) < 1e-12
    assert state.time == pytest.approx(0.04)


def test_mode_two_eigenvector_decays_at_its_eigenvalue(stable_params):
    steady = radial_steady_state(R_STABLE, stable_params)
    system = assemble_operator_mode(2, steady, 16)
    lam, vec, _ = mode_spectrum(system)
    m, rho = system.split(np.real(vec[:, 0]))
    state = eigenvector_state(R_STABLE, stable_params, 2, m, float(rho), 32, 1e-5)
    cfg = SimConfig(n_r=16, n_phi=32, dt=4e-3, t_end=2.0, sample_every=25, tol_converge=0.0)
    traj = run(cfg, state=state)
    rate = decay_rate(traj, min_efolds=2)
    assert rate == pytest.approx(lam[0].real, rel=0.03)


def test_unstable_disk_grows_and_moves():
    Rc, _ = figure_params(FIG2)
    R = 1.3 * Rc
    p = compliant_params(1.1, R, 2.1, 0.75)
    lam = full_spectrum(radial_steady_state(R, p), 4, 16, richardson=False).max_real(1)
    assert lam > 0
    state = perturbed_state(R, p, 16, 32, 1e-4, modes=(1,))
    traj = run(SimConfig(n_r=16, n_phi=32, dt=2e-3, t_end=2.0, sample_every=50, tol_converge=0.0), state=state)
    t, d = np.asarray(traj.times), traj.deviation()
    half = t.size // 2
    growth = np.polyfit(t[half:], np.log(d[half:]), 1)[0]
    assert 0.5 * lam < growth < 1.5 * lam
    assert abs(traj.Xc[-1]) > abs(traj.Xc[half]) > 0


def test_wave_seed_travels_near_its_speed(fig2):
    Rc, p = fig2
    cfg = SimConfig(R=Rc, k_e=p.k_e, n_r=16, n_phi=32, dt=1e-3, t_end=0.3, kind="tw_seed", V=0.1,
                    sample_every=100, tol_converge=0.0)
    traj = run(cfg)
    assert traj.event == "t_end"
    assert traj.Xc[-1] / traj.times[-1] == pytest.approx(0.1, rel=0.05)


def test_large_step_is_rejected(stable_params):
    state = perturbed_state(R_STABLE, stable_params, 16, 32, 1e-3)
    limit = stable_dt(state)
    with pytest.raises(CFLError):
        step(state, 5 * limit)
    traj = run(SimConfig(n_r=16, n_phi=32, dt=5 * limit, t_end=10 * limit), state=state)
    assert traj.event == "CFLError"
    assert len(traj.times) == 1


def test_init_state_validation(stable_params):
    grid = PolarGrid(R_STABLE, 16, 32)
    with pytest.raises(PositivityError):
        init_state(BoundaryShape(R_STABLE), PolarField(grid, -np.ones((17, 32))), stable_params)
    with pytest.raises(ValueError):
        init_state(BoundaryShape(1.0), PolarField(grid, np.ones((17, 32))), stable_params)
    s = init_state(BoundaryShape(R_STABLE, [0.0, 0.05]), PolarField(grid, np.ones((17, 32))), stable_params)
    assert s.shape.Xc == pytest.approx(0.05) and s.shape.rho_cos[1] == 0.0


def test_smoothing_keeps_mass(stable_params):
    grid = PolarGrid(R_STABLE, 16, 32)
    vals = 1.1 + 0.2 * np.cos(2 * grid.phi)[None, :] * (grid.r[:, None] / R_STABLE) ** 2
    raw = init_state(BoundaryShape(R_STABLE), PolarField(grid, vals), stable_params)
    smooth = init_state(BoundaryShape(R_STABLE), PolarField(grid, vals), stable_params, smooth=True)
    assert smooth.mass() == pytest.approx(raw.mass(), rel=1e-12)


def test_mass_matched_radius(stable_params):
    mass = stable_params.density(1.25) * math.pi * 1.25**2
    assert mass_matched_radius(mass, stable_params, 1.2) == pytest.approx(1.25, rel=1e-12)


def test_config_parsing():
    cfg = SimConfig.from_dict({"grid": {"n_r": 24}, "time.dt": 0.01, "kind": "steady"})
    assert (cfg.n_r, cfg.dt, cfg.kind) == (24, 0.01, "steady")
    with pytest.raises(KeyError):
        SimConfig.from_dict({"grid.n_x": 3})
    with pytest.raises(ValueError):
        SimConfig.from_dict({"init.kind": "random"})
    p = SimConfig(m0=1.1, R=1.0, k_e=0.5).model_params()
    assert p.density(1.0) == pytest.approx(1.1) and p.k_e == 0.5


def test_decay_rate_on_synthetic_trajectory():
    traj = Trajectory()
    t = np.linspace(0, 5, 51)
    traj.times, traj.rho_dev, traj.m_dev = list(t), list(np.exp(-2 * t)), list(np.zeros_like(t))
    assert decay_rate(traj) == pytest.approx(-2.0, rel=1e-10)
    traj.rho_dev = list(np.exp(-0.1 * t))
    with pytest.raises(InsufficientDecayError):
        decay_rate(traj)


def test_trajectory_output(stable_params):
    traj = run(SimConfig(R=R_STABLE, k_e=stable_params.k_e, n_r=16, n_phi=32, dt=1e-3, t_end=0.01, kind="steady",
                         sample_every=5, tol_converge=0.0))
    assert traj.to_csv().splitlines()[0] == "t,mass,area,Xc,rho_dev,m_dev"
    assert traj.to_dict()["n_samples"] == 3
    with pytest.raises(ValueError):
        traj.record(traj.states[-1], lambda s, m: (0.0, 0.0))
