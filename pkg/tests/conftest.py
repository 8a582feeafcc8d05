import numpy as np
import pytest
from click.testing import CliRunner

from app import create_app
from config import TestingConfig, resolve_config
from core.data import split_gncd, synth_gen


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def testing_config():
    return resolve_config(TestingConfig)


@pytest.fixture
def toy_split():
    base = synth_gen(num_classes=4, dim=8, samples_per_class=12, class_separation=0.5, noise_sigma=0.05, seed=3)
    return split_gncd(base, known_fraction=0.5, labeling_ratio=0.5, seed=3)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def app():
    return create_app(TestingConfig)


@pytest.fixture
def dataset_dir(tmp_path, runner, app):
    """gen + split of a 4-class, 48-item dataset; returns the split directory."""
    raw = tmp_path / 'raw'
    data = tmp_path / 'data'
    result = runner.invoke(app, ['gen', '--num-classes', '4', '--dim', '8', '--samples-per-class', '12',
                                 '--separation', '0.5', '--noise-sigma', '0.05', '--seed', '3', '--out', str(raw)])
    assert result.exit_code == 0, result.output
    result = runner.invoke(app, ['split', '--data', str(raw), '--known-fraction', '0.5',
                                 '--labeling-ratio', '0.5', '--seed', '3', '--out', str(data)])
    assert result.exit_code == 0, result.output
    return data
