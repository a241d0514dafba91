from src.config.presets_loader import get_preset, get_preset_names, load_presets
from src.config.settings import Settings, build_experiment_config


def test_shipped_presets_are_valid():
    presets = load_presets()
    assert {"delay-vs-users", "protocol-comparison", "smoke"} <= set(get_preset_names())
    for preset in presets:
        config = build_experiment_config(base=preset.base, defaults=Settings())
        assert config.protocol in ("cima", "tdma", "backoff")


def test_sweep_preset():
    preset = get_preset("delay-vs-users")
    assert preset.is_sweep
    assert preset.axis == "users"
    assert preset.values == [10, 20, 40, 80]
    assert preset.base["lambda_tot"] == 0.6


def test_comparison_preset_lists_protocols():
    assert get_preset("protocol-comparison").protocols == ["cima", "tdma", "backoff"]


def test_unknown_preset():
    assert get_preset("no-such-preset") is None


def test_missing_file(tmp_path):
    assert load_presets(tmp_path / "presets.yaml") == []


def test_invalid_entries_are_skipped(tmp_path):
    path = tmp_path / "presets.yaml"
    path.write_text("presets:\n  - description: no name\n  - name: ok\n    config: {N: 2}\n",
                    encoding="utf-8")
    presets = load_presets(path)
    assert [p.name for p in presets] == ["ok"]
    assert not presets[0].is_sweep
