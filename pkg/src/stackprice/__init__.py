"""Leader pricing for aggregative follower games.

Followers play a quadratic aggregative game over polyhedral strategy sets;
the leader sets a price vector in a box and descends its objective through
the equilibrium map.
"""

from .errors import *  # noqa: F401,F403
from .game import FollowerSpec, PricingGame, TrackingObjective, validate_game
from .leader import LeaderConfig, solve_stackelberg
from .nash import NashConfig, solve_nash, verify_nash
from .sensitivity import equilibrium_jacobians, follower_jacobian

__version__ = "0.1.0"
