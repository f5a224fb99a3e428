"""INI config parsing, canonical rendering, and recipe hashes."""

import pytest

from tenca import config, training
from tenca.errors import ConfigError


def test_train_config_canonical_fixed_point():
    cfg = training.TrainConfig()
    text = config.train_config_text(cfg)
    back = config.parse_train_config(text)
    assert back == cfg
    assert config.train_config_text(back) == text


def test_train_config_partial_sections_get_defaults():
    cfg = config.parse_train_config("[model]\nd = 8\nhidden = 16\n")
    assert cfg.d == 8 and cfg.hidden == 16
    assert cfg.learning_rate == training.TrainConfig().learning_rate


def test_train_config_unknown_key_and_section():
    with pytest.raises(ConfigError) as err:
        config.parse_train_config("[model]\nwidht = 8\n")
    assert "widht" in str(err.value) and "[model]" in str(err.value)
    with pytest.raises(ConfigError) as err:
        config.parse_train_config("[modle]\nd = 8\n")
    assert "modle" in str(err.value)


def test_train_config_type_errors_name_location():
    with pytest.raises(ConfigError) as err:
        config.parse_train_config("[model]\nd = eight\n")
    assert "d" in str(err.value)
    with pytest.raises(ConfigError):
        config.parse_train_config("[train]\nlearning_rate = fast\n")


def test_train_config_value_validation_applies():
    with pytest.raises(ConfigError):
        config.parse_train_config("[train]\nbatch_size = 0\n")


def test_train_config_init_style_round_trip():
    cfg = config.parse_train_config("[model]\ninit_style = identity\n")
    assert cfg.init_style == "identity"
    assert "init_style = identity" in config.train_config_text(cfg)
    assert config.parse_train_config("[model]\n").init_style == "feature"
    with pytest.raises(ConfigError) as err:
        config.parse_train_config("[model]\ninit_style = xavier\n")
    assert "init_style" in str(err.value)
    assert config.train_config_hash(cfg) != config.train_config_hash(
        training.TrainConfig())


def test_train_config_hash_sensitivity():
    base = training.TrainConfig()
    assert config.train_config_hash(base) == config.train_config_hash(
        training.TrainConfig())
    bumped = base.replace(learning_rate=2e-3)
    assert config.train_config_hash(base) != config.train_config_hash(bumped)
    assert len(config.train_config_hash(base)) == 16


def test_run_config_round_trip():
    text = (
        "[model]\nd = 8\nhidden = 16\n"
        "[paths]\ndataset = data/train\ncheckpoints = ckpt\nreports = out\n"
        "[mode]\nreproducible = true\ncheckpoint_every = 5\n"
    )
    run = config.parse_run_config(text)
    assert run.train.d == 8
    assert run.dataset == "data/train"
    assert run.reproducible is True
    assert run.checkpoint_every == 5
    canon = config.run_config_text(run)
    again = config.parse_run_config(canon)
    assert again == run
    assert config.run_config_text(again) == canon


def test_run_config_reproducible_forces_single_thread():
    run = config.parse_run_config("[mode]\nreproducible = true\nthreads = 8\n")
    assert run.threads == 1


def test_run_config_rejects_unknown_mode_key():
    with pytest.raises(ConfigError):
        config.parse_run_config("[mode]\nturbo = yes\n")
    with pytest.raises(ConfigError):
        config.parse_run_config("[paths]\noutput = x\n")
    with pytest.raises(ConfigError):
        config.parse_run_config("[mystery]\nx = 1\n")


def test_run_config_bool_parsing():
    run = config.parse_run_config("[mode]\nfull_horizon = yes\n")
    assert run.full_horizon is True
    with pytest.raises(ConfigError):
        config.parse_run_config("[mode]\nfull_horizon = maybe\n")


def test_phantom_job_defaults_and_pairs():
    job = config.parse_phantom_job(
        "[phantom]\nseed = 3\ncases = 7\nheight = 32\nwidth = 32\n"
        "amplitude_min = 0.4\namplitude_max = 0.6\n")
    assert job.spec.seed == 3
    assert job.n_cases == 7
    assert job.spec.amplitude_range == (0.4, 0.6)
    # untouched pairs keep their defaults
    from tenca.phantom import PhantomSpec
    assert job.spec.uptake_range == PhantomSpec().uptake_range


def test_phantom_job_scalar_float_keys():
    job = config.parse_phantom_job(
        "[phantom]\nnoise_sigma = 0.02\nfootprint_scale = 0.15\n")
    assert job.spec.noise_sigma == 0.02
    assert job.spec.footprint_scale == 0.15


def test_phantom_job_requires_both_pair_ends():
    with pytest.raises(ConfigError) as err:
        config.parse_phantom_job("[phantom]\namplitude_min = 0.4\n")
    assert "amplitude_max" in str(err.value)


def test_phantom_job_requires_single_section():
    with pytest.raises(ConfigError):
        config.parse_phantom_job("[model]\nd = 8\n")
    with pytest.raises(ConfigError):
        config.parse_phantom_job("[phantom]\nseed = 1\n[extra]\nx = 2\n")


def test_phantom_job_unknown_key():
    with pytest.raises(ConfigError):
        config.parse_phantom_job("[phantom]\nshape = round\n")


def test_phantom_job_spec_validation_propagates():
    with pytest.raises(ConfigError):
        config.parse_phantom_job(
            "[phantom]\nuptake_min = 0.001\nuptake_max = 0.001\n"
            "washout_min = 0.002\nwashout_max = 0.002\n")


def test_load_helpers_read_files(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[model]\nd = 6\nhidden = 12\n")
    assert config.load_run_config(str(p)).train.d == 6
    q = tmp_path / "phantom.ini"
    q.write_text("[phantom]\nseed = 1\ncases = 2\n")
    assert config.load_phantom_job(str(q)).n_cases == 2
