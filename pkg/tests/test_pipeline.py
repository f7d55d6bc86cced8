import json

import numpy as np
import pytest

from gsvdmusic.errors import ConfigError
from gsvdmusic.frontend import SampleBlock, StftConfig
from gsvdmusic.gsvd import NoiseModel
from gsvdmusic.music import MusicConfig
from gsvdmusic.pipeline import PipelineConfig, apply_env, load_config, run_pipeline
from gsvdmusic.synth import SceneSpec, SourceSpec, circular_array, make_steering, azimuth_grid, synthesize_scene


@pytest.fixture(scope="module")
def scene(circ8):
    return synthesize_scene(circ8, SceneSpec([SourceSpec(60.0), SourceSpec(180.0)], noise_db=-20,
                                             duration=0.8, seed=11))


class TestConfig:
    def test_defaults_valid(self):
        cfg = PipelineConfig()
        assert cfg.problems() == []
        assert cfg.T == 50 and cfg.stft.n_bins == 73 and cfg.solver.tolerance_scale == 0.1

    def test_dict_roundtrip(self):
        cfg = PipelineConfig(T=20, music=MusicConfig(num_sources=3), path="naive")
        assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match=r"music\.sources"):
            PipelineConfig.from_dict({"music": {"sources": 2}})

    def test_problems_collected(self):
        cfg = PipelineConfig(T=0, precision="half", path="gpu", chunk_frames=0)
        assert len(cfg.problems()) == 4

    def test_env_overrides(self):
        env = {"SSL_T": "30", "SSL_MUSIC__NUM_SOURCES": "1", "SSL_PATH": "naive",
               "SSL_CERT_FILE": "/etc/ssl/cert.pem", "HOME": "/root"}
        cfg = PipelineConfig.from_dict(apply_env({"T": 50}, env))
        assert cfg.T == 30 and cfg.music.num_sources == 1 and cfg.path == "naive"

    def test_load_config_resolves_paths(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"audio": "a.wav", "steering": "/abs/h.bin"}))
        cfg = load_config(tmp_path / "c.json", env={})
        assert cfg.audio == str(tmp_path / "a.wav") and cfg.steering == "/abs/h.bin"
        assert cfg.out == str(tmp_path / "out")

    def test_load_config_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(tmp_path / "c.json", env={})


class TestCrossChecks:
    def test_channel_mismatch(self, scene):
        steer4 = make_steering(circular_array(4), azimuth_grid())
        with pytest.raises(ConfigError, match="steering: M=4"):
            run_pipeline(scene, steer4)

    def test_noise_mismatch(self, scene, circ8_steering):
        with pytest.raises(ConfigError, match="noise_model: M=3"):
            run_pipeline(scene, circ8_steering, NoiseModel.identity(3, 73))

    def test_bins_not_covered(self, scene, circ8_steering):
        cfg = PipelineConfig(stft=StftConfig(bin_min=10, bin_max=20))
        with pytest.raises(ConfigError, match="do not cover"):
            run_pipeline(scene, circ8_steering, cfg=cfg)

    def test_too_short(self, circ8_steering):
        block = SampleBlock(np.zeros((8, 1000)), 16000)
        with pytest.raises(ConfigError, match="T: window"):
            run_pipeline(block, circ8_steering)

    def test_too_many_sources(self, scene, circ8_steering):
        with pytest.raises(ConfigError, match="num_sources"):
            run_pipeline(scene, circ8_steering, cfg=PipelineConfig(music=MusicConfig(num_sources=8)))


class TestRun:
    def test_two_sources(self, scene, circ8_steering):
        out = run_pipeline(scene, circ8_steering, cfg=PipelineConfig(T=20))
        n_frames = (scene.n_samples - 512) // 160 + 1
        assert [f.frame for f in out.frames] == list(range(19, n_frames))
        for fr in out.frames:
            assert {e.index for e in fr.estimates} == {12, 36}
            assert not any(e.low_power for e in fr.estimates)
        assert out.fallback_bins == 0
        assert set(out.timings) == {"frontend", "correlation", "gsvd", "music", "total"}

    def test_chunking_does_not_change_output(self, scene, circ8_steering):
        a = run_pipeline(scene, circ8_steering, cfg=PipelineConfig(T=20, chunk_frames=1))
        b = run_pipeline(scene, circ8_steering, cfg=PipelineConfig(T=20, chunk_frames=64))
        assert a.jsonl() == b.jsonl()

    def test_paths_agree(self, scene, circ8_steering):
        runs = [run_pipeline(scene, circ8_steering, cfg=PipelineConfig(T=20, path=p, precision=q))
                for p, q in [("naive", "single"), ("batched", "single"), ("reference", "double")]]
        assert runs[0].jsonl() == runs[1].jsonl()
        for a, b in zip(runs[1].frames, runs[2].frames):
            assert [e.index for e in a.estimates] == [e.index for e in b.estimates]

    def test_silent_scene_flags_low_power(self, circ8, circ8_steering):
        # white noise only: the spectrum is flat, so no peak rises above the floor
        block = synthesize_scene(circ8, SceneSpec(noise_db=-20, duration=0.5, seed=3))
        out = run_pipeline(block, circ8_steering, cfg=PipelineConfig(T=20))
        assert out.frames and all(fr.estimates for fr in out.frames)
        flagged = np.mean([all(e.low_power for e in fr.estimates) for fr in out.frames])
        assert flagged >= 0.9

    def test_keep_power(self, scene, circ8_steering):
        out = run_pipeline(scene, circ8_steering, cfg=PipelineConfig(T=20), keep_power=True)
        assert out.power.shape == (len(out.frames), 72, 73)
        np.testing.assert_allclose(out.power.sum(-1), np.stack([f.pbar for f in out.frames]), rtol=1e-5)
