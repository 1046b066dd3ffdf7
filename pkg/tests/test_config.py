import json

import pytest

from crowdperc.config import ConfigError, DecodeParams, RunConfig, TrackerParams, dumps_config, load_config
from crowdperc.core import DistanceMode


class TestDefaults:
    def test_grid(self):
        assert RunConfig().grid.dims == (256, 256, 25)

    def test_tracker(self):
        assert RunConfig().tracker == TrackerParams(1.0, 1)

    def test_thresholds(self):
        cfg = RunConfig()
        assert cfg.thresholds == (0.25, 0.5, 1.0)
        assert cfg.distance_mode is DistanceMode.EUCLID_3D

    def test_param_validation(self):
        with pytest.raises(ValueError):
            DecodeParams(k_max=0)
        with pytest.raises(ValueError):
            DecodeParams(agg_weight=1.5)
        with pytest.raises(ValueError):
            TrackerParams(threshold=0.0)
        with pytest.raises(ValueError):
            RunConfig(thresholds=())


class TestFromDict:
    def test_empty_is_default(self):
        assert RunConfig.from_dict({}) == RunConfig()

    def test_partial_nested_merge(self):
        cfg = RunConfig.from_dict({"nms": {"radius": 0.5}})
        assert cfg.nms.radius == 0.5
        assert cfg.nms.min_points == RunConfig().nms.min_points

    def test_distance_mode_string(self):
        assert RunConfig.from_dict({"distance_mode": "bev"}).distance_mode is DistanceMode.BEV_2D

    @pytest.mark.parametrize("d", [
        {"bogus": 1}, {"nms": {"radious": 0.3}}, {"nms": 0.3}, {"thresholds": []},
        {"decode": {"k_max": -2}}, [1, 2],
    ])
    def test_rejects(self, d):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(d)

    def test_replace(self):
        cfg = RunConfig().replace(track_threshold=0.75)
        assert cfg.track_threshold == 0.75 and cfg.grid == RunConfig().grid


class TestFiles:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict({"tracker": {"threshold": 1.5}, "distance_mode": "bev"})
        p = tmp_path / "cfg.json"
        p.write_text(dumps_config(cfg))
        assert load_config(p) == cfg
        assert dumps_config(load_config(p)) == dumps_config(cfg)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{\"nms\": ")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_dump_is_sorted(self):
        d = json.loads(dumps_config(RunConfig()))
        assert list(d) == sorted(d)
