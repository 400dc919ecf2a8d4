"""Quasi-static lift simulation and the ground-truth slip oracle.

Provides:
  SlipLabel         — {no_slip, cw_rotational, ccw_rotational, translational}
  TactileFrame / WrenchSample / Episode — the recorded sensor streams
  NoiseConfig       — sensor noise, drift, and per-episode bias levels
  slip_outcome      — analytic Coulomb-model slip classification
  simulate_lift     — 1 kHz synthesis, filtered and decimated to 50 Hz
  taxel_pressures   — render a contact footprint onto the 2 x 4 x 4 grid

Slip model. With total mass m, grip force F, friction mu, and signed
center-of-mass offset d along the grasp reference direction:
  translational capacity F_t    = 2 mu F        (two jaws)
  rotational capacity   tau_cap = 2 mu (F/16) sum_i r_i
where r_i are the 16 taxel radii of a 4 mm pitch grid. The object slips
translationally when m g > F_t, rotates cw when m g d > tau_cap (ccw for
d < 0), and otherwise holds.

Lift storyline. The recorded episode starts at established grip: a short
hold, a lift ramp during which the object's weight transfers to the hand,
and a settle phase. A rotational slip starts once the transferred-weight
torque exceeds tau_cap; from then on the object keeps one end on the table,
so the transfer ramp continues at a much smaller slope and saturates early.
The pattern on the taxel grid rotates at a rate proportional to the excess
torque until the torque balance is restored. A translational slip slides
the pattern off the patch and the object drops back onto the table.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import NotForceClosureError, SlipGraspError
from .geometry import GraspPose, ObjectModel, is_force_closure, signed_com_offset
from .preprocessing import DECIMATION, RAW_RATE_HZ, decimate, iir_lowpass
from .seeding import as_rng

GRAVITY = 9.81
TAXEL_PITCH = 0.004          # meters between taxel centers
CUTOFF_HZ = 25.0
SAMPLE_RATE_HZ = RAW_RATE_HZ / DECIMATION   # 50 Hz after decimation

# Storyline shape parameters. These set how sequences look, never the label.
K_ROTATION = 20.0            # rad/s per N*m of excess torque
TRANSFER_FRACTION = 0.35     # weight transfer window as fraction of the lift
SLIP_SLOPE_FACTOR = 0.3      # transfer slope once rotational slip has begun
EXTRA_TRANSFER_RANGE = (0.15, 0.35)  # additional transfer beyond slip onset
SLIDE_SPEED = 0.05           # m/s, translational pattern speed
SLIDE_LIMIT = 0.006          # m of slide before the object drops
DROP_TAU = 0.08              # s, contact decay constant after a drop
PRESSURE_PER_NEWTON = 1.0 / 25.0   # total normalized pressure per N of grip
FOOTPRINT_SIGMA = (0.0055, 0.0045)  # m, footprint spread along/across
OFFSET_MAX = 0.0025          # m, max load-induced centroid offset
HOLD_BEFORE_RANGE = (0.3, 0.5)
LIFT_RANGE = (0.8, 1.2)
HOLD_AFTER_RANGE = (0.3, 0.6)


def taxel_positions() -> np.ndarray:
    """(16, 2) taxel centers of one sensor, patch center at the origin."""
    axis = (np.arange(4) - 1.5) * TAXEL_PITCH
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


TAXEL_RADIUS_SUM = float(np.linalg.norm(taxel_positions(), axis=1).sum())
TORQUE_ARM = TAXEL_RADIUS_SUM / 16.0   # mean taxel radius, meters


class SlipLabel(IntEnum):
    NO_SLIP = 0
    CW_ROTATIONAL = 1
    CCW_ROTATIONAL = 2
    TRANSLATIONAL = 3


@dataclass(frozen=True)
class TactileFrame:
    """One 50 Hz sample of both 4x4 sensors, indexed [sensor, x, y]."""
    pressures: np.ndarray
    timestamp: float

    def __post_init__(self):
        arr = np.asarray(self.pressures, dtype=float)
        if arr.shape != (2, 4, 4):
            raise SlipGraspError(f"pressures shape {arr.shape} != (2, 4, 4)")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise SlipGraspError("pressures must be finite and non-negative")
        object.__setattr__(self, "pressures", arr)


@dataclass(frozen=True)
class WrenchSample:
    """Force (N) and torque (N*m) in the end-effector frame: x along the
    closing axis, y along the grasp reference direction, z up."""
    force: np.ndarray
    torque: np.ndarray
    timestamp: float

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3)
        tq = np.asarray(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(tq))):
            raise SlipGraspError("wrench values must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", tq)


@dataclass(frozen=True)
class Episode:
    tactile_seq: tuple
    wrench_seq: tuple
    label: SlipLabel
    object_name: str
    grasp: GraspPose
    com_offset_d: float
    lift_height: float
    sample_rate: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        if len(self.tactile_seq) < 1:
            raise SlipGraspError("episode must contain at least one frame")
        if len(self.tactile_seq) != len(self.wrench_seq):
            raise SlipGraspError("tactile and wrench sequences must align")
        object.__setattr__(self, "tactile_seq", tuple(self.tactile_seq))
        object.__setattr__(self, "wrench_seq", tuple(self.wrench_seq))

    def __len__(self):
        return len(self.tactile_seq)

    def tactile_array(self) -> np.ndarray:
        """(T, 32) flattened taxel values."""
        return np.stack([f.pressures.ravel() for f in self.tactile_seq])

    def wrench_array(self) -> np.ndarray:
        """(T, 6) [fx, fy, fz, tx, ty, tz]."""
        return np.stack([np.concatenate([w.force, w.torque])
                         for w in self.wrench_seq])


@dataclass(frozen=True)
class NoiseConfig:
    tactile_sigma: float = 0.02   # per-taxel, fraction of full scale
    force_sigma: float = 0.2      # N per raw sample
    torque_sigma: float = 0.01    # N*m per raw sample
    force_drift: float = 0.02     # N/s; per-episode random slope scale
    torque_drift: float = 0.001   # N*m/s
    force_bias: float = 0.0       # N; per-episode constant offset scale
    torque_bias: float = 0.0      # N*m

    @classmethod
    def quiet(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# Slip oracle --------------------------------------------------------------

def translational_capacity(grasp: GraspPose) -> float:
    return 2.0 * grasp.friction_coefficient * grasp.grip_force


def rotational_capacity(grasp: GraspPose) -> float:
    return (2.0 * grasp.friction_coefficient * grasp.grip_force * TORQUE_ARM)


def slip_outcome(obj: ObjectModel, grasp: GraspPose) -> SlipLabel:
    """Analytic outcome of lifting `obj` with `grasp`; the ground truth
    every simulated episode is labeled with."""
    if not is_force_closure(obj, grasp.contact_a, grasp.contact_b,
                            grasp.friction_coefficient):
        raise NotForceClosureError(
            f"grasp on {obj.name!r} is not force-closure at mu="
            f"{grasp.friction_coefficient}")
    weight = obj.total_mass * GRAVITY
    d = signed_com_offset(obj, grasp)
    if weight > translational_capacity(grasp):
        return SlipLabel.TRANSLATIONAL
    if weight * d > rotational_capacity(grasp):
        return SlipLabel.CW_ROTATIONAL
    if weight * abs(d) > rotational_capacity(grasp) and d < 0:
        return SlipLabel.CCW_ROTATIONAL
    return SlipLabel.NO_SLIP


# Tactile rendering --------------------------------------------------------

@dataclass
class ContactState:
    """Footprint description in the sensor-1 frame; sensor 2 sees the
    x-mirrored pattern rotating the opposite way."""
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angle: float = 0.0
    total_pressure: float = 0.0
    sigma: tuple = FOOTPRINT_SIGMA
    lost: bool = False
    timestamp: float = 0.0


def _render(offsets, angles, totals, sigma) -> np.ndarray:
    """Gaussian footprints on the 4x4 grid for T steps -> (T, 4, 4).
    Weights are normalized so each frame sums to its total."""
    pos = taxel_positions()                      # (16, 2)
    offsets = np.atleast_2d(offsets)
    angles = np.atleast_1d(angles)
    totals = np.atleast_1d(totals)
    rel = pos[None, :, :] - offsets[:, None, :]  # (T, 16, 2)
    c, s = np.cos(angles), np.sin(angles)
    # rotate into the footprint frame (inverse rotation by `angle`)
    local_x = c[:, None] * rel[:, :, 0] + s[:, None] * rel[:, :, 1]
    local_y = -s[:, None] * rel[:, :, 0] + c[:, None] * rel[:, :, 1]
    w = np.exp(-0.5 * ((local_x / sigma[0]) ** 2 + (local_y / sigma[1]) ** 2))
    sums = w.sum(axis=1, keepdims=True)
    w = np.where(sums > 1e-12, w / np.maximum(sums, 1e-12), 0.0)
    return (w * totals[:, None]).reshape(-1, 4, 4)


def taxel_pressures(state: ContactState, rng=None,
                    tactile_sigma: float = 0.0) -> TactileFrame:
    """Render one frame from a contact state; optional Gaussian noise."""
    if state.lost or state.total_pressure <= 0.0:
        frame = np.zeros((2, 4, 4))
    else:
        half = state.total_pressure / 2.0
        s1 = _render(state.offset, state.angle, half, state.sigma)[0]
        mirrored = np.array([-state.offset[0], state.offset[1]])
        s2 = _render(mirrored, -state.angle, half, state.sigma)[0]
        frame = np.stack([s1, s2])
    if tactile_sigma > 0.0 and rng is not None:
        frame = frame + rng.normal(0.0, tactile_sigma, size=(2, 4, 4))
    return TactileFrame(np.clip(frame, 0.0, 1.0), state.timestamp)


# Lift simulation ----------------------------------------------------------

def simulate_lift(obj: ObjectModel, grasp: GraspPose, lift_height: float,
                  rng_seed, noise: NoiseConfig = NoiseConfig()) -> Episode:
    """Synthesize one labeled episode. Deterministic in (inputs, seed)."""
    if lift_height <= 0:
        raise SlipGraspError("lift_height must be positive")
    label = slip_outcome(obj, grasp)
    rng = as_rng(rng_seed)

    weight = obj.total_mass * GRAVITY
    d = signed_com_offset(obj, grasp)
    f_t = translational_capacity(grasp)
    tau_cap = rotational_capacity(grasp)
    dt = 1.0 / RAW_RATE_HZ

    # Draws happen in a fixed order so reruns are bit-identical.
    t_hold1 = rng.uniform(*HOLD_BEFORE_RANGE)
    t_lift = rng.uniform(*LIFT_RANGE)
    t_hold2 = rng.uniform(*HOLD_AFTER_RANGE)
    extra_transfer = rng.uniform(*EXTRA_TRANSFER_RANGE)

    n = int(round((t_hold1 + t_lift + t_hold2) * RAW_RATE_HZ))
    t = np.arange(n) * dt
    transfer_time = TRANSFER_FRACTION * t_lift

    # Weight-transfer fraction w(t), with the reduced-slope saturation once
    # a rotational slip keeps the object partly on the table.
    w = np.clip((t - t_hold1) / transfer_time, 0.0, 1.0)
    rotational = label in (SlipLabel.CW_ROTATIONAL, SlipLabel.CCW_ROTATIONAL)
    if rotational:
        w_onset = tau_cap / (weight * abs(d))   # < 1 because the slip is real
        w_cap = min(1.0, w_onset + extra_transfer)
        t_onset = t_hold1 + w_onset * transfer_time
        after = t > t_onset
        w[after] = np.minimum(
            w_onset + SLIP_SLOPE_FACTOR * (t[after] - t_onset) / transfer_time,
            w_cap)

    # Rotation angle of the object about the closing axis.
    theta = np.zeros(n)
    if rotational:
        start = int(np.searchsorted(t, t_onset))
        th = 0.0
        for i in range(start, n):
            excess = w[i] * weight * abs(d) * np.cos(th) - tau_cap
            if excess > 0.0:
                th = min(th + K_ROTATION * excess * dt, np.pi / 2.0)
            theta[i] = th

    # Transmitted load and the translational-drop storyline.
    load = w * weight
    slide = np.zeros(n)
    decay = np.ones(n)
    if label == SlipLabel.TRANSLATIONAL:
        w_slip = f_t / weight                   # < 1 because m g > F_t
        t_slip = t_hold1 + w_slip * transfer_time
        sliding = t > t_slip
        slide[sliding] = SLIDE_SPEED * (t[sliding] - t_slip)
        load = np.minimum(load, f_t)
        t_drop = t_slip + SLIDE_LIMIT / SLIDE_SPEED
        dropped = t > t_drop
        slide[dropped] = SLIDE_LIMIT
        decay[dropped] = np.exp(-(t[dropped] - t_drop) / DROP_TAU)
        load = load * decay

    # Wrench in the end-effector frame. Gravity appears on f_z; the COM
    # offset appears as torque about the closing axis (x), shrinking with
    # cos(theta) as the COM swings under the grasp line.
    wrench = np.zeros((n, 6))
    wrench[:, 2] = -load
    wrench[:, 3] = -load * d * np.cos(theta)

    # Tactile footprint: centroid offset grows with the normalized torque
    # demand and the whole pattern rotates with the object. Sensor 2 is the
    # x-mirror of sensor 1.
    if tau_cap > 0:
        demand = np.clip(load * d * np.cos(theta) / tau_cap, -1.0, 1.0)
    else:
        demand = np.zeros(n)
    signed_theta = theta if label == SlipLabel.CW_ROTATIONAL else -theta
    radius = OFFSET_MAX * demand
    offsets = np.stack([radius * np.cos(signed_theta),
                        radius * np.sin(signed_theta)], axis=1)
    offsets[:, 1] -= slide
    totals = np.full(n, grasp.grip_force * PRESSURE_PER_NEWTON) * decay

    half = totals / 2.0
    s1 = _render(offsets, signed_theta, half, FOOTPRINT_SIGMA)
    mirrored = offsets * np.array([-1.0, 1.0])
    s2 = _render(mirrored, -signed_theta, half, FOOTPRINT_SIGMA)
    tactile = np.stack([s1, s2], axis=1)        # (n, 2, 4, 4)

    # Noise stays unclipped until after the filter: clipping raw samples
    # would rectify it into a positive pressure floor on empty taxels.
    if noise.tactile_sigma > 0:
        tactile = tactile + rng.normal(0.0, noise.tactile_sigma, tactile.shape)

    sigmas = np.array([noise.force_sigma] * 3 + [noise.torque_sigma] * 3)
    biases = np.array([noise.force_bias] * 3 + [noise.torque_bias] * 3)
    drifts = np.array([noise.force_drift] * 3 + [noise.torque_drift] * 3)
    if np.any(sigmas > 0):
        wrench = wrench + rng.normal(0.0, 1.0, wrench.shape) * sigmas
    if np.any(biases > 0):
        wrench = wrench + rng.normal(0.0, 1.0, 6) * biases
    if np.any(drifts > 0):
        wrench = wrench + t[:, None] * (rng.normal(0.0, 1.0, 6) * drifts)

    tactile_50 = decimate(iir_lowpass(tactile.reshape(n, 32), CUTOFF_HZ))
    wrench_50 = decimate(iir_lowpass(wrench, CUTOFF_HZ))
    tactile_50 = np.clip(tactile_50, 0.0, 1.0)

    stamps = np.arange(tactile_50.shape[0]) / SAMPLE_RATE_HZ
    frames = tuple(
        TactileFrame(tactile_50[i].reshape(2, 4, 4), float(stamps[i]))
        for i in range(tactile_50.shape[0]))
    wrenches = tuple(
        WrenchSample(wrench_50[i, :3], wrench_50[i, 3:], float(stamps[i]))
        for i in range(wrench_50.shape[0]))
    return Episode(tactile_seq=frames, wrench_seq=wrenches, label=label,
                   object_name=obj.name, grasp=grasp, com_offset_d=float(d),
                   lift_height=float(lift_height))
