"""Configuration loading and case overrides."""

from pathlib import Path

import pytest

from dlmp import init_app
from dlmp.config import deep_merge, get_output_path, load_config, resolve_env_vars


class TestLoadConfig:

    @pytest.mark.parametrize('case', ['current', 'future'])
    def test_case_merged_over_default(self, case):
        config = load_config(case)
        assert config['case'] == case
        assert config['label'] == case
        assert config['power_flow']['tolerance_pu'] == 1e-8
        assert config['opf']['voltage_support'] is False
        assert config['capacity']['gas'][400] == 1045

    def test_case_name_not_case_sensitive(self):
        assert load_config('FUTURE')['case'] == 'future'

    def test_config_path_from_environment(self, tmp_path, monkeypatch):
        (tmp_path / 'cases').mkdir()
        (tmp_path / 'default.yaml').write_text('runner:\n  workers: 3\n', encoding='utf-8')
        (tmp_path / 'cases' / 'current.yaml').write_text('runner:\n  chunk_size: 12\n', encoding='utf-8')
        monkeypatch.setenv('DLMP_CONFIG_PATH', str(tmp_path))
        config = load_config('current')
        assert config['runner'] == {'workers': 3, 'chunk_size': 12}

    def test_missing_files_give_empty_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv('DLMP_CONFIG_PATH', str(tmp_path))
        assert load_config('current') == {'case': 'current'}

    def test_log_level_from_environment(self, monkeypatch):
        monkeypatch.setenv('DLMP_LOG_LEVEL', 'WARNING')
        assert load_config('current')['logging']['level'] == 'WARNING'


class TestHelpers:

    def test_deep_merge_keeps_siblings(self):
        base = {'opf': {'max_iterations': 20, 'screen_fraction': 0.5}, 'runner': {'workers': 1}}
        merged = deep_merge(base, {'opf': {'max_iterations': 5}})
        assert merged == {'opf': {'max_iterations': 5, 'screen_fraction': 0.5}, 'runner': {'workers': 1}}
        assert base['opf']['max_iterations'] == 20

    def test_placeholder_default_keeps_yaml_type(self, monkeypatch):
        monkeypatch.delenv('DLMP_TEST_WORKERS', raising=False)
        resolved = resolve_env_vars({'workers': '${DLMP_TEST_WORKERS:-4}', 'items': ['${DLMP_TEST_WORKERS:-x}']})
        assert resolved == {'workers': 4, 'items': ['x']}

    def test_placeholder_inside_text(self, monkeypatch):
        monkeypatch.setenv('DLMP_TEST_ROOT', '/data')
        assert resolve_env_vars({'path': '${DLMP_TEST_ROOT}/runs'}) == {'path': '/data/runs'}

    def test_output_path(self):
        assert get_output_path({'output': {'path': 'runs'}}) == Path('runs')
        assert get_output_path({'output': {'path': 'runs'}}, 'elsewhere') == Path('elsewhere')


class TestInitApp:

    def test_case_from_environment(self, monkeypatch):
        monkeypatch.setenv('DLMP_CASE', 'future')
        assert init_app()['case'] == 'future'

    def test_override_merged(self):
        config = init_app('current', {'runner': {'workers': 6}})
        assert config['runner']['workers'] == 6
        assert config['runner']['chunk_size'] == 48
