import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitdet.scaling import (
    ArchitectureConfig,
    ScalingSpec,
    build_config,
    depths,
    raw_width,
    reduced_config,
    resolution,
    snapped_width,
)

# (split, phi) -> (input_resolution, backbone_tier, fused_channels, bifpn_depth, head_depth)
FAMILY_ROWS = {
    ("1-5", 0): (512, 0, 64, 1, 5),
    ("1-5", 1): (640, 1, 88, 2, 5),
    ("1-5", 2): (768, 2, 112, 3, 5),
    ("1-5", 3): (896, 3, 160, 4, 6),
    ("5-1", 0): (512, 0, 64, 5, 1),
    ("5-1", 1): (640, 1, 88, 6, 1),
    ("5-1", 2): (768, 2, 112, 7, 1),
    ("5-1", 3): (896, 3, 160, 8, 2),
    ("3-3", 0): (512, 0, 64, 3, 3),
    ("3-3", 1): (640, 1, 88, 4, 3),
    ("3-3", 2): (768, 2, 112, 5, 3),
    ("3-3", 3): (896, 3, 160, 6, 4),
}


class TestRawWidth:
    def test_parent(self):
        assert raw_width(0) == 64.0

    def test_geometric_growth(self):
        assert raw_width(1) == pytest.approx(86.4)
        assert raw_width(3) == pytest.approx(157.464)

    def test_negative_phi_rejected(self):
        with pytest.raises(ValueError):
            raw_width(-1)


class TestSnappedWidth:
    @pytest.mark.parametrize("phi,width", [(0, 64), (1, 88), (2, 112), (3, 160)])
    def test_pinned_family_values(self, phi, width):
        assert snapped_width(phi) == width

    @pytest.mark.parametrize("phi", [4, 5, 6, 7])
    def test_extrapolation_snaps_to_8(self, phi):
        width = snapped_width(phi)
        assert width % 8 == 0
        assert abs(width - raw_width(phi)) <= 4.0

    def test_ties_round_up(self):
        # 64 * 1.35**4 = 212.576..; candidates 208 and 216, 216 is nearer.
        assert snapped_width(4) == 216

    def test_negative_phi_rejected(self):
        with pytest.raises(ValueError):
            snapped_width(-2)


class TestResolution:
    @pytest.mark.parametrize("phi,res", [(0, 512), (3, 896), (7, 1408)])
    def test_values(self, phi, res):
        assert resolution(phi) == res

    def test_negative_phi_rejected(self):
        with pytest.raises(ValueError):
            resolution(-1)


class TestDepths:
    def test_table_rows(self):
        assert depths(ScalingSpec(3, 1, 5)) == (4, 6)
        assert depths(ScalingSpec(3, 5, 1)) == (8, 2)
        assert depths(ScalingSpec(0, 3, 3)) == (3, 3)

    @pytest.mark.parametrize("phi", range(8))
    def test_balanced_split_matches_base_equations(self, phi):
        # For the 3-3 parent the depths reduce to 3 + phi and 3 + phi // 3.
        assert depths(ScalingSpec(phi, 3, 3)) == (3 + phi, 3 + phi // 3)

    @pytest.mark.parametrize("split", ["1-5", "3-3", "5-1"])
    def test_parent_budget_conserved(self, split):
        spec = ScalingSpec.from_split(0, split)
        assert sum(depths(spec)) == 6


class TestBuildConfig:
    @pytest.mark.parametrize("key", sorted(FAMILY_ROWS))
    def test_family_rows_exact(self, key):
        split, phi = key
        config = build_config(ScalingSpec.from_split(phi, split))
        assert (
            config.input_resolution,
            config.backbone_tier,
            config.fused_channels,
            config.bifpn_depth,
            config.head_depth,
        ) == FAMILY_ROWS[key]

    @pytest.mark.parametrize("split", ["1-5", "3-3", "5-1"])
    def test_monotone_in_phi(self, split):
        rows = [build_config(ScalingSpec.from_split(phi, split)) for phi in range(8)]
        for prev, cur in zip(rows, rows[1:]):
            assert cur.input_resolution >= prev.input_resolution
            assert cur.backbone_tier >= prev.backbone_tier
            assert cur.fused_channels >= prev.fused_channels
            assert cur.bifpn_depth >= prev.bifpn_depth
            assert cur.head_depth >= prev.head_depth


class TestSpecValidation:
    def test_phi_range(self):
        with pytest.raises(ValueError):
            ScalingSpec(8, 1, 5)
        with pytest.raises(ValueError):
            ScalingSpec(-1, 1, 5)

    def test_depths_at_least_one(self):
        with pytest.raises(ValueError):
            ScalingSpec(0, 0, 6)
        with pytest.raises(ValueError):
            ScalingSpec(0, 6, 0)

    def test_from_split_enforces_budget(self):
        with pytest.raises(ValueError):
            ScalingSpec.from_split(0, "2-5")
        with pytest.raises(ValueError):
            ScalingSpec.from_split(0, "nonsense")

    def test_other_sums_allowed_directly(self):
        assert depths(ScalingSpec(1, 2, 2)) == (3, 2)

    def test_name(self):
        assert ScalingSpec.from_split(2, "1-5").name == "D2(1-5)"


class TestConfigRecord:
    def test_roundtrip(self):
        config = build_config(ScalingSpec.from_split(2, "1-5"))
        assert ArchitectureConfig.from_kv(config.to_kv()) == config

    def test_kv_keys(self):
        text = build_config(ScalingSpec.from_split(0, "3-3")).to_kv()
        keys = [line.split("=")[0] for line in text.strip().splitlines()]
        assert keys == [
            "input_resolution",
            "backbone_tier",
            "fused_channels",
            "bifpn_depth",
            "head_depth",
        ]

    def test_missing_key_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            ArchitectureConfig.from_kv("input_resolution=512\n")

    def test_invalid_resolution_rejected(self):
        with pytest.raises(ValueError):
            ArchitectureConfig(500, 0, 64, 1, 5)

    def test_invalid_width_rejected(self):
        with pytest.raises(ValueError):
            ArchitectureConfig(512, 0, 63, 1, 5)


class TestReducedConfig:
    def test_desk_scale_parent(self):
        config = reduced_config(ScalingSpec.from_split(0, "1-5"))
        assert config.input_resolution == 128
        assert config.fused_channels == 32
        assert (config.bifpn_depth, config.head_depth) == (1, 5)

    def test_resolution_grows_and_stays_valid(self):
        for phi in range(4):
            config = reduced_config(ScalingSpec.from_split(phi, "1-5"))
            assert config.input_resolution == 128 * (1 + phi)
            assert config.input_resolution % 128 == 0
            assert config.fused_channels % 8 == 0


@given(
    phi=st.integers(min_value=0, max_value=7),
    fusion=st.integers(min_value=1, max_value=8),
    head=st.integers(min_value=1, max_value=8),
)
def test_depths_formula_property(phi, fusion, head):
    bifpn_depth, head_depth = depths(ScalingSpec(phi, fusion, head))
    assert bifpn_depth == fusion + phi
    assert head_depth == head + math.floor(phi / 3)
