import pytest

from steering_core import core_config
from steering_core.core_config import get_config, print_all_configs, update_config


class TestCoreConfig:

    def test_sections(self):
        assert get_config("simulation")["sme_scheme"] == "kraus"
        assert get_config("reference")["coupling_two_qubit"] == 0.49
        with pytest.raises(ValueError):
            get_config("gpu")

    def test_update(self, monkeypatch):
        monkeypatch.setitem(core_config.SWEEP_CONFIG, "min_snr", 2.0)
        update_config("sweep", "min_snr", 5.0)
        assert core_config.SWEEP_CONFIG["min_snr"] == 5.0
        with pytest.raises(ValueError):
            update_config("sweep", "max_snr", 1.0)

    def test_print(self, capsys):
        print_all_configs()
        out = capsys.readouterr().out
        assert "TOLERANCE:" in out
        assert "weak_measurement_limit" in out
