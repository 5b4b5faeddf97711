import time

import pytest

import subosc


def timed_run(oracle, x0, schedule, policy, n_steps):
    t0 = time.perf_counter()
    traj = subosc.run(oracle, x0, schedule, policy, n_steps)
    return traj, time.perf_counter() - t0


@pytest.fixture(scope="session")
def tripod_fast():
    """Tripod benchmark at the 1/i schedule pinned by the acceptance checks."""
    oracle = subosc.tripod()
    traj, wall = timed_run(oracle, [0.3, -0.7], subosc.StepSchedule(c=0.1, p=1.0),
                           subosc.SelectionPolicy("first-active", seed=1), 10**6)
    return oracle, traj, wall


@pytest.fixture(scope="session")
def tripod_long():
    """Tripod reference run at the 1/sqrt(i) schedule (much more elapsed time)."""
    oracle = subosc.tripod()
    traj, _ = timed_run(oracle, [0.3, -0.7], subosc.StepSchedule(c=0.1, p=0.5),
                        subosc.SelectionPolicy("first-active", seed=1), 10**6)
    return oracle, traj


@pytest.fixture(scope="session")
def absvalley_run():
    oracle = subosc.absvalley()
    traj, _ = timed_run(oracle, [1.0, 0.0], subosc.StepSchedule(c=0.1, p=0.5),
                        subosc.SelectionPolicy("first-active", seed=1), 10**6)
    return oracle, traj


@pytest.fixture(scope="session")
def nsbanana_run():
    oracle = subosc.nsbanana()
    traj, _ = timed_run(oracle, [1.0, 1.0], subosc.StepSchedule(c=0.002, p=0.5),
                        subosc.SelectionPolicy("first-active", seed=1), 10**6)
    return oracle, traj
