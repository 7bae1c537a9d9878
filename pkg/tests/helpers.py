"""Test-only constructions shared by several test modules."""

import math

from tilestream.media import GazePoint


def quaternion_from_gaze(g: GazePoint):
    """Inverse of gaze_from_quaternion: yaw about +z after pitch-up about -y."""
    cy, sy = math.cos(g.yaw / 2), math.sin(g.yaw / 2)
    cp, sp = math.cos(-g.pitch / 2), math.sin(-g.pitch / 2)
    # (cy + sy k) * (cp + sp j)
    return (cy * cp, -sy * sp, cy * sp, sy * cp)
