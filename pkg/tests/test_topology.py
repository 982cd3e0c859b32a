"""Tests for the landmark topology."""

import numpy as np
import pytest

from avatar.talking import topology
from avatar.talking.models._enums import LandmarkGroup
from avatar.talking.synthetic.render import landmark_template


def test_primary_groups_partition_the_landmarks() -> None:
    """Tests that every landmark belongs to exactly one primary group."""
    primary = [g for g in LandmarkGroup if g != LandmarkGroup.pose_ring]
    counts = np.zeros(topology.NUM_LANDMARKS, dtype=int)
    for group in primary:
        counts[list(topology.GROUPS[group])] += 1
    assert np.all(counts == 1)


@pytest.mark.parametrize(
    ("index", "group"),
    [
        (0, LandmarkGroup.jaw),
        (16, LandmarkGroup.jaw),
        (17, LandmarkGroup.brows),
        (30, LandmarkGroup.nose),
        (36, LandmarkGroup.eyes),
        (48, LandmarkGroup.mouth),
        (67, LandmarkGroup.mouth),
    ],
)
def test_group_of(index: int, group: LandmarkGroup) -> None:
    """Tests the primary group of selected indices."""
    assert topology.group_of(index) == group


def test_group_of_out_of_range() -> None:
    """Tests that an index outside the topology raises."""
    with pytest.raises(ValueError, match="outside 0..67"):
        topology.group_of(68)


def test_group_mask_union() -> None:
    """Tests that a group mask selects the union of its groups."""
    mask = topology.group_mask([LandmarkGroup.eyes, LandmarkGroup.mouth])
    assert mask.shape == (68,)
    assert mask.sum() == 12 + 20
    assert mask[36]
    assert mask[60]
    assert not mask[0]

    assert topology.group_mask([]).sum() == 0
    ring = topology.group_mask(["pose-ring"])
    assert ring.sum() == 17 + 9


def test_mouth_openness_tracks_the_template() -> None:
    """Tests that mouth openness is zero when closed and grows with opening."""
    closed = landmark_template(0.0, 1.0)[:, :2]
    half = landmark_template(0.5, 1.0)[:, :2]
    wide = landmark_template(1.0, 1.0)[:, :2]

    assert topology.mouth_openness(closed) == pytest.approx(0.0)
    assert 0 < topology.mouth_openness(half) < topology.mouth_openness(wide)

    batch = np.stack([closed, wide])
    openness = topology.mouth_openness(batch)
    assert openness.shape == (2,)
    assert openness[1] == pytest.approx(topology.mouth_openness(wide))
