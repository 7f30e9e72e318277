import pytest

from weighted_ensemble.config import ExperimentConfig, parse_state_set


class TestParseStateSet:
    def test_interval(self):
        assert parse_state_set("28..33") == [27, 28, 29, 30, 31, 32]

    def test_list(self):
        assert parse_state_set("1,5,7") == [0, 4, 6]

    def test_empty(self):
        assert parse_state_set("") == []

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            parse_state_set("0,3")


class TestExperimentConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig.from_file(None)
        assert cfg.chain == "three-well"
        assert cfg.modes == ("adaptive",)

    def test_file_plus_overrides(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("mode = all\nreps = 50  # comment\n\nhorizons = 1,2\n")
        cfg = ExperimentConfig.from_file(p, seed=9)
        assert cfg.mode == "all" and cfg.reps == 50
        assert cfg.horizons == (1, 2) and cfg.seed == 9
        assert cfg.modes == ("adaptive", "traditional", "naive")

    def test_unknown_key_errors(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("bogus = 1\n")
        with pytest.raises(ValueError, match="bogus"):
            ExperimentConfig.from_file(p)

    def test_bad_mode_errors(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_file(None, mode="fancy")

    def test_unsorted_horizons_error(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("horizons = 5,1\n")
        with pytest.raises(ValueError):
            ExperimentConfig.from_file(p)

    def test_canonical_text_distinguishes_configs(self):
        a = ExperimentConfig.from_file(None, seed=1).canonical_text()
        b = ExperimentConfig.from_file(None, seed=2).canonical_text()
        assert a != b
        assert "seed=1" in a

    def test_build_setup_three_well(self):
        setup = ExperimentConfig.from_file(None).build_setup()
        assert setup.K.n_states == 90
        assert setup.bins.n_bins == 30
        assert setup.f.values.sum() == 6.0

    def test_build_setup_from_csv_chain(self, tmp_path, two_state):
        from weighted_ensemble.serialize import write_matrix_csv

        path = tmp_path / "K.csv"
        write_matrix_csv(path, two_state)
        cfg = ExperimentConfig.from_file(
            None, chain=f"csv:{path}", bin_width=1, f_states="2"
        )
        setup = cfg.build_setup()
        assert setup.K.n_states == 2 and setup.bins.n_bins == 2
        assert list(setup.f.values) == [0.0, 1.0]
