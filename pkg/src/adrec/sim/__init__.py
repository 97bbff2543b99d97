"""Closed-loop simulation: synthetic catalog and users, reward scoring,
log construction, and the streaming online learner."""

from adrec.sim.catalog import SyntheticUser, gen_catalog, gen_users
from adrec.sim.loop import SimConfig, build_rl_log, online_loop
from adrec.sim.reward import RewardModelStub

__all__ = [
    "RewardModelStub",
    "SimConfig",
    "SyntheticUser",
    "build_rl_log",
    "gen_catalog",
    "gen_users",
    "online_loop",
]
