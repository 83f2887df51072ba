"""
Test suite for runtime settings and the error hierarchy
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from speedchange.config import get_settings, reset_settings
from speedchange.errors import InputError, NumericalError, ResourceError, SpeedChangeError, StructuralError


@pytest.mark.unit
class TestSettings:
    """Test cases for environment-driven settings"""

    def test_environment_overrides(self, monkeypatch):
        """Test that SPEEDCHANGE_* variables are read"""
        monkeypatch.setenv("SPEEDCHANGE_OUTPUT", "/tmp/runs")
        monkeypatch.setenv("SPEEDCHANGE_LOG_LEVEL", "debug")
        monkeypatch.setenv("SPEEDCHANGE_SEED", "7")
        reset_settings()
        settings = get_settings()
        assert settings.output_dir == Path("/tmp/runs")
        assert settings.log_level == "DEBUG"
        assert settings.seed == 7
        assert settings.threads == 1

    def test_settings_are_cached(self):
        """Test that settings load once until reset"""
        assert get_settings() is get_settings()

    @pytest.mark.parametrize("name,value", [
        ("SPEEDCHANGE_THREADS", "0"),
        ("SPEEDCHANGE_LOG_LEVEL", "chatty"),
    ])
    def test_invalid_values(self, monkeypatch, name, value):
        """Test validation of environment values"""
        monkeypatch.setenv(name, value)
        reset_settings()
        with pytest.raises(ValidationError):
            get_settings()


@pytest.mark.unit
class TestErrors:
    """Test cases for error exit codes and payloads"""

    @pytest.mark.parametrize("cls,code", [
        (InputError, 1),
        (StructuralError, 2),
        (NumericalError, 3),
        (ResourceError, 3),
    ])
    def test_exit_codes(self, cls, code):
        """Test the CLI exit code carried by each error"""
        error = cls("boom")
        assert isinstance(error, SpeedChangeError)
        assert error.exit_code == code

    def test_payloads(self):
        """Test counterexamples and diagnostics"""
        assert StructuralError("bad", counterexample=((0,), (2,))).counterexample == ((0,), (2,))
        assert NumericalError("slow", diagnostics={"iterations": 5}).diagnostics == {"iterations": 5}
