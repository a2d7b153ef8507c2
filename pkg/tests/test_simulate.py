import numpy as np
import pandas as pd
import pytest

from bps.pipeline import ingest
from bps.simulate import (AuxSpec, RegimeSpec, SimConfig, default_sim_config,
                          generate, write_regime_csv, write_series_csv)


class TestGenerate:
    def test_unit_ar_zero_noise_constant_series(self):
        cfg = SimConfig(length=50,
                        regimes=(RegimeSpec("rw", 0.0, (("p", 1, 1.0),)),),
                        switch=0.0, noise=0.0, seed=1, aux=())
        table, regimes = generate(cfg)
        np.testing.assert_allclose(table["p"], table["p"].iloc[0])
        assert (regimes == 0).all()

    def test_zero_switch_probability_constant_path(self):
        cfg = default_sim_config(seed=3, length=120, switch=0.0)
        _, regimes = generate(cfg)
        assert np.unique(regimes).size == 1

    def test_switch_frequency_matches_probability(self):
        prob = 0.05
        cfg = default_sim_config(seed=11, length=100_000, switch=prob)
        _, regimes = generate(cfg)
        switches = np.mean(regimes[1:] != regimes[:-1])
        se = np.sqrt(prob * (1 - prob) / (len(regimes) - 1))
        assert abs(switches - prob) < 3 * se

    def test_same_seed_bit_identical(self):
        cfg = default_sim_config(seed=7, length=80)
        t1, r1 = generate(cfg)
        t2, r2 = generate(cfg)
        pd.testing.assert_frame_equal(t1, t2)
        np.testing.assert_array_equal(r1, r2)

    def test_labels_align_with_rows(self):
        cfg = default_sim_config(seed=5, length=64)
        table, regimes = generate(cfg)
        assert len(table) == 64 == len(regimes)
        assert table.index[0] == "1960Q1"
        assert table.index[4] == "1961Q1"

    def test_explicit_regime_path_is_honored(self):
        path = np.array([0, 0, 1, 1, 2, 2, 3, 3, 0, 0])
        cfg = default_sim_config(seed=2, length=10)
        cfg = SimConfig(length=10, regimes=cfg.regimes, switch=path,
                        noise=cfg.noise, seed=2, aux=cfg.aux)
        _, regimes = generate(cfg)
        np.testing.assert_array_equal(regimes, path)

    def test_bad_configs_rejected(self):
        base = default_sim_config(seed=0)
        with pytest.raises(ValueError):
            SimConfig(length=0, regimes=base.regimes, switch=0.1,
                      noise=0.1, seed=0)
        with pytest.raises(ValueError):
            SimConfig(length=10, regimes=base.regimes, switch=1.5,
                      noise=0.1, seed=0)
        with pytest.raises(ValueError):
            SimConfig(length=10, regimes=base.regimes,
                      switch=np.array([0, 9] * 5), noise=0.1, seed=0)

    def test_series_look_stationary(self):
        table, _ = generate(default_sim_config(seed=19, length=400))
        assert np.all(np.isfinite(table.to_numpy()))
        assert table["p"].abs().max() < 50


class TestCsvRoundtrip:
    def test_written_schema_ingests(self, tmp_path):
        cfg = default_sim_config(seed=9, length=40)
        table, regimes = generate(cfg)
        csv = tmp_path / "sim.csv"
        write_series_csv(table, csv)
        write_regime_csv(regimes, list(table.index), tmp_path / "regimes.csv")
        loaded = ingest(csv)
        assert list(loaded.columns) == list(table.columns)
        np.testing.assert_allclose(loaded.to_numpy(), table.to_numpy())
        side = pd.read_csv(tmp_path / "regimes.csv")
        assert list(side.columns) == ["date", "regime"]
        assert len(side) == 40
