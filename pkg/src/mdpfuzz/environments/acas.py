"""Toy aircraft collision-avoidance environment.

State (5,): [rho, theta, psi, v_own, v_int]
  rho    distance ownship -> intruder [ft]
  theta  bearing of the intruder in the ownship frame [rad, -pi..pi)
  psi    intruder heading relative to ownship heading [rad, -pi..pi)
  v_own  ownship speed [ft/s]
  v_int  intruder speed [ft/s]

The ownship follows a scripted advisory policy: it turns away from the side
the intruder's relative track will pass on, strongly for traffic near the
nose and weakly for traffic off the beam. The intruder is non-cooperative:
whenever the ownship sits within ACQ_DEG of its nose it steers toward it at
up to INTRUDER_TURN_DEG per second, so an acquired chase keeps correcting
its aim; traffic outside the cone flies straight.
Dynamics are 1-second Euler steps of planar kinematics, re-expressed in the
ownship frame after every step. A state is a crash when the separation
drops below RHO_CRASH.

The policy has genuine weaknesses the fuzzer can hunt for: it is blind to
traffic approaching from more than BLIND_DEG behind, and a pursuer holds
that rear bearing by construction, so a fast enough intruder runs the
ownship down without ever tripping the alert. Even seen traffic wins when
its speed advantage is large enough that the late alert leaves no room to
build lateral offset. Randomly sampled encounters start far out and
tail-aspect (the intruder behind the ownship's beam) at cruise-band speeds
whose differential cannot close the gap within a horizon; crash geometries
need a speed gap, a rear or point-blank approach, or both — initial states
well outside the sampled pocket.
"""

from __future__ import annotations

import numpy as np

from ..mdp import Environment, EnvironmentSpec, Policy

# Geometry / limits
RHO_CRASH = 500.0     # ft; closer than this is a collision
# Reward separation scale: each step pays min(rho / RHO_SAFE, 1), so the
# term saturates at comfortable range and only genuinely close passes --
# well inside the alert radius -- dent the score.
RHO_SAFE = 5000.0
RHO_MIN, RHO_MAX = 1000.0, 20000.0
V_MIN, V_CAP = 350.0, 900.0
DT = 1.0              # s per step

# Random encounters start as benign tail-aspect traffic: far out, behind the
# ownship's beam, at cruise-band speeds, with the intruder's nose pointed
# well away from its acquisition cone so nothing ever gives chase. Conflict
# geometries exist only deeper in the bounds, where mutated initial states
# have to walk.
SAMPLE_RHO_MIN = 17500.0
SAMPLE_REAR_DEG = 140.0
SAMPLE_V_LO, SAMPLE_V_HI = 525.0, 575.0
SAMPLE_OFFAIM_DEG = 60.0

# The intruder chases whatever sits within ACQ_DEG of its own nose, turning
# toward it at up to INTRUDER_TURN_DEG per second; traffic outside that cone
# is ignored and the intruder holds its heading.
INTRUDER_TURN_DEG = 3.0
ACQ_DEG = 45.0

# Advisory policy shape
ALERT_RHO = 13500.0   # ft; farther intruders are ignored
BLIND_DEG = 150.0     # deg; bearings beyond this are not seen
STRONG_DEG = 45.0     # deg; closer bearings get the strong turn

# Actions: clear-of-conflict, weak/strong turns (left positive)
COC, WEAK_LEFT, WEAK_RIGHT, STRONG_LEFT, STRONG_RIGHT = range(5)
TURN_RATES_DEG = np.array([0.0, 1.5, -1.5, 3.0, -3.0])

# Maneuvering cost: turning with no conflict in progress is wasted fuel and
# passenger discomfort. Turns the advisory actually owes (traffic inside the
# alert radius and closing) are free, so following the script never pays it;
# benign traffic scores a full-marks episode and only close passes cost.
TURN_PENALTY = 0.5


def _wrap(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def _relative_track(state: np.ndarray):
    """Intruder position and velocity in the ownship frame, plus the closing
    speed along the line of sight (positive while the range shrinks).

    Shared by the policy and the reward so that "is a conflict in progress"
    is one computation, not two nearly-equal ones.
    """
    rho, theta, psi, v_own, v_int = state
    px, py = rho * np.cos(theta), rho * np.sin(theta)
    vx = v_int * np.cos(psi) - v_own
    vy = v_int * np.sin(psi)
    closing = -(px * vx + py * vy) / rho
    return px, py, vx, vy, closing


class AcasEnv(Environment):
    """Two-aircraft planar encounter with a scripted avoidance policy."""

    def __init__(self, horizon: int = 50, alert_rho: float = ALERT_RHO,
                 blind_deg: float = BLIND_DEG, strong_deg: float = STRONG_DEG):
        bounds = np.array([
            [RHO_MIN, RHO_MAX],
            [-np.pi, np.pi],
            [-np.pi, np.pi],
            [V_MIN, V_CAP],
            [V_MIN, V_CAP],
        ])
        self.spec = EnvironmentSpec(name="acas-toy", state_dim=5,
                                    bounds=bounds, default_horizon=horizon)
        self.alert_rho = float(alert_rho)
        self.blind = np.deg2rad(blind_deg)
        self.strong = np.deg2rad(strong_deg)

    def sample_initial(self, rng_seed: int) -> np.ndarray:
        rng = np.random.default_rng(int(rng_seed))
        lo = self.spec.bounds[:, 0].copy()
        lo[0] = SAMPLE_RHO_MIN
        hi = self.spec.bounds[:, 1].copy()
        lo[3] = lo[4] = SAMPLE_V_LO
        hi[3] = hi[4] = SAMPLE_V_HI
        state = rng.uniform(lo, hi)
        bearing = rng.uniform(np.deg2rad(SAMPLE_REAR_DEG), np.pi)
        state[1] = bearing if rng.random() < 0.5 else -bearing
        # heading pointed at least SAMPLE_OFFAIM_DEG away from the ownship:
        # the intruder starts with nothing in its acquisition cone
        toward = state[1] - np.pi
        offset = rng.uniform(np.deg2rad(SAMPLE_OFFAIM_DEG), np.pi)
        state[2] = _wrap(toward + (offset if rng.random() < 0.5 else -offset))
        return state

    def validate(self, state: np.ndarray) -> bool:
        return (np.all(np.isfinite(state)) and self.in_bounds(state)
                and state[0] > RHO_CRASH)

    def oracle(self, state: np.ndarray) -> bool:
        return bool(state[0] < RHO_CRASH)

    def transition(self, state: np.ndarray, action: int,
                   rng: np.random.Generator) -> np.ndarray:
        rho, theta, psi, v_own, v_int = state
        d_heading = np.deg2rad(TURN_RATES_DEG[int(action)]) * DT
        # intruder steers toward the ownship's current position (pure
        # pursuit, rate-limited) while the ownship sits inside its
        # acquisition cone; otherwise it holds heading
        px, py = rho * np.cos(theta), rho * np.sin(theta)
        want = np.arctan2(-py, -px)
        err = _wrap(want - psi)
        if abs(err) <= np.deg2rad(ACQ_DEG):
            limit = np.deg2rad(INTRUDER_TURN_DEG) * DT
            psi = psi + np.clip(err, -limit, limit)
        # positions after one step, in the *old* ownship frame
        intruder = np.array([px, py])
        intruder += v_int * DT * np.array([np.cos(psi), np.sin(psi)])
        own = v_own * DT * np.array([np.cos(d_heading), np.sin(d_heading)])
        rel = intruder - own
        # re-express in the rotated (new-heading) ownship frame
        c, s = np.cos(-d_heading), np.sin(-d_heading)
        x = c * rel[0] - s * rel[1]
        y = s * rel[0] + c * rel[1]
        return np.array([np.hypot(x, y), np.arctan2(y, x),
                         _wrap(psi - d_heading), v_own, v_int])

    def reward(self, state: np.ndarray, action: int) -> float:
        separation = min(state[0] / RHO_SAFE, 1.0)
        turn = abs(TURN_RATES_DEG[int(action)]) / TURN_RATES_DEG[STRONG_LEFT]
        _, _, _, _, closing = _relative_track(state)
        conflict = state[0] <= self.alert_rho and closing > 0.0
        return float(separation - (0.0 if conflict else TURN_PENALTY * turn))

    def policy(self) -> Policy:
        alert, blind, strong = self.alert_rho, self.blind, self.strong

        def advisory(state: np.ndarray) -> int:
            rho, theta, psi, v_own, v_int = state
            if rho > alert or abs(theta) > blind:
                return COC
            px, py, vx, vy, closing = _relative_track(state)
            if closing <= 0.0:
                return COC    # range opening: no conflict
            hard = abs(theta) < strong
            # Signed offset of the straight-line closest approach: positive
            # means the intruder passes down the left side. One turn step
            # shifts it by about v_own * rate * |px| / |v_rel|, so inside
            # twice that the sign is just the ownship's own maneuver noise
            # and the advisory commits to a left break instead of chasing it.
            vrel = float(np.hypot(vx, vy))
            miss = (px * vy - py * vx) / vrel
            rate = np.deg2rad(TURN_RATES_DEG[STRONG_LEFT]) * DT
            if abs(miss) < 2.0 * v_own * rate * abs(px) / vrel:
                return STRONG_LEFT if hard else WEAK_LEFT
            # A turn widens the pass on opposite sides depending on where
            # the traffic rides: forward of the beam the nose swerves away
            # from it, abaft the beam it is the tail that must swing clear.
            if miss * px > 0.0:
                return STRONG_RIGHT if hard else WEAK_RIGHT
            return STRONG_LEFT if hard else WEAK_LEFT

        return advisory
