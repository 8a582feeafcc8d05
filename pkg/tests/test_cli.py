import csv
import json
import shutil

import pytest
from jsonschema import validate

from metrics_schema import definition
from utils.embedding_io import read_embeddings

FAST = ['--epochs-stage1', '1', '--epochs-stage2', '1']


def invoke(runner, app, *args):
    result = runner.invoke(app, [str(a) for a in args])
    assert result.exit_code == 0, result.output
    return result


def load(path):
    return json.loads(path.read_text())


def read_rows(path):
    with open(path, newline='') as fh:
        return list(csv.reader(fh))


def test_version(runner, app):
    result = runner.invoke(app, ['--version'])
    assert result.exit_code == 0
    assert '1.2.0' in result.output


def test_dataset_commands_write_valid_artifacts(dataset_dir):
    for name in ('embeddings.f32', 'truth.csv', 'splits.csv', 'dataset.json', 'manifest.json'):
        assert (dataset_dir / name).exists()
    dataset = load(dataset_dir / 'dataset.json')
    validate(instance=dataset, schema=definition('Dataset'))
    assert dataset['numSamples'] == 48 and len(dataset['knownClasses']) == 2
    assert dataset['generation']['seed'] == 3

    manifest = load(dataset_dir / 'manifest.json')
    validate(instance=manifest, schema=definition('Manifest'))
    assert manifest['command'] == 'split'
    assert manifest['datasetHash'] is not None
    assert manifest['config']['params']['known_fraction'] == 0.5


def test_warmup_then_cal_from_its_checkpoint(tmp_path, runner, app, dataset_dir):
    warm, cal = tmp_path / 'warm', tmp_path / 'cal'
    invoke(runner, app, 'warmup', '--data', dataset_dir, '--out', warm)
    assert read_embeddings(warm / 'stage1' / 'student_cls.f32').shape == (48, 8)
    lines = (warm / 'metrics.jsonl').read_text().splitlines()
    assert len(lines) == 2
    for line in lines:
        validate(instance=json.loads(line), schema=definition('EpochMetrics'))
    assert (warm / 'loss.svg').read_text().startswith('<?xml')

    result = invoke(runner, app, 'cal', '--data', dataset_dir, '--init', warm, '--dump-memory', '--out', cal)
    assert 'K = 4' in result.output
    assert not (cal / 'stage1').exists()
    for name in ('student_cls', 'student_prompt', 'teacher_cls', 'teacher_prompt'):
        assert (cal / 'stage2' / f'{name}.f32').exists()
    assert read_embeddings(cal / 'memory_cls.f32').shape == (64, 8)
    assert read_embeddings(cal / 'memory_prompt.f32').shape == (64, 8)
    assert all(json.loads(line)['stage'] == 2 for line in (cal / 'metrics.jsonl').read_text().splitlines())

    manifest = load(cal / 'manifest.json')
    assert manifest['config']['train']['memory_size'] == 64
    assert manifest['layout']['stage2'] == 'stage2/'


def test_cal_without_init_runs_both_stages(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'cal'
    invoke(runner, app, 'cal', '--data', dataset_dir, *FAST, '--k', '3', '--out', out)
    assert (out / 'stage1' / 'student_cls.f32').exists()
    assert (out / 'stage2' / 'student_cls.f32').exists()
    assert not (out / 'memory_cls.f32').exists()
    stages = [json.loads(line)['stage'] for line in (out / 'metrics.jsonl').read_text().splitlines()]
    assert stages == [1, 2]


def test_eval_of_a_trained_table(tmp_path, runner, app, dataset_dir):
    trained, out = tmp_path / 'cal', tmp_path / 'eval'
    invoke(runner, app, 'cal', '--data', dataset_dir, *FAST, '--out', trained)
    result = invoke(runner, app, 'eval', '--data', dataset_dir, '--embeddings', trained / 'stage2' / 'student_cls.f32',
                    '--task-informed', '--retrieval-dump', '3', '--out', out)
    assert 'Known*' in result.output

    report = load(out / 'report.json')
    validate(instance=report, schema=definition('AccuracyReport'))
    assert report['protocol'] == 'transductive'
    assert report['numEvaluated'] == 48 - 12
    assert 'knownStar' in report and 'newStar' in report
    assert 0.0 <= report['knnPrecision'] <= 1.0

    confusion = read_rows(out / 'confusion.csv')
    assert confusion[0] == ['class', 'pred_0', 'pred_1', 'pred_2', 'pred_3']
    assert sum(int(v) for row in confusion[1:] for v in row[1:]) == report['numEvaluated']
    assert len(read_rows(out / 'retrieval.csv')) == 1 + 3 * 8
    assert (out / 'accuracy.svg').exists()


def test_inductive_protocol_scores_the_test_subset(tmp_path, runner, app):
    raw, data, out = tmp_path / 'raw', tmp_path / 'held', tmp_path / 'eval'
    invoke(runner, app, 'gen', '--num-classes', '4', '--dim', '8', '--samples-per-class', '12',
           '--separation', '0.5', '--noise-sigma', '0.05', '--seed', '3', '--out', raw)
    invoke(runner, app, 'split', '--data', raw, '--test-fraction', '0.25', '--seed', '3', '--out', data)
    assert load(data / 'dataset.json')['subsetCounts'] == {'train': 36, 'test': 12}

    invoke(runner, app, 'eval', '--data', data, '--protocol', 'inductive', '--out', out)
    report = load(out / 'report.json')
    assert report['protocol'] == 'inductive'
    assert report['numEvaluated'] == 12


def test_pseudo_label_with_ground_truth(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'graph'
    result = invoke(runner, app, 'pseudo-label', '--embeddings', dataset_dir / 'embeddings.f32',
                    '--labels', dataset_dir / 'splits.csv', '--truth', dataset_dir / 'truth.csv', '--out', out)
    assert 'edges over 48 nodes' in result.output
    report = load(out / 'report.json')
    validate(instance=report, schema=definition('PseudoLabelReport'))
    assert report['k'] == 4 and report['nodes'] == 48
    assert 'precision' in report and 'consensusEdges' in report

    edges = read_rows(out / 'edges.csv')
    assert edges[0] == ['i', 'j']
    assert len(edges) - 1 == report['edges']
    assert all(int(i) < int(j) for i, j in edges[1:])


def test_pseudo_label_knn_baseline_has_no_threshold(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'graph'
    invoke(runner, app, 'pseudo-label', '--embeddings', dataset_dir / 'embeddings.f32',
           '--labels', dataset_dir / 'splits.csv', '--no-cknn', '--out', out)
    report = load(out / 'report.json')
    assert 'consensusEdges' not in report
    assert 'precision' not in report


def test_ablation_table(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'ablate'
    invoke(runner, app, 'ablate', '--data', dataset_dir, '--table', '--seeds', '0,1', *FAST, '--out', out)
    table = read_rows(out / 'ablation.csv')
    assert table[0] == ['variant', 'cknn', 'ap', 'semipriori', 'semicl', 'seeds', 'acc_all', 'acc_known', 'acc_new']
    assert [row[0] for row in table[1:]] == ['knn-baseline', 'no-semicl', 'no-semipriori', 'no-ap', 'full']
    assert table[1][1:5] == ['0', '0', '1', '1']
    assert all(row[5] == '2' for row in table[1:])
    assert len(read_rows(out / 'runs.csv')) == 1 + 5 * 2


def test_sweep(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'sweep'
    invoke(runner, app, 'ablate', '--data', dataset_dir, '--sweep', 'alpha=0.2:0.4:0.1', *FAST, '--out', out)
    rows = read_rows(out / 'sweep.csv')
    assert rows[0] == ['alpha', 'acc_all', 'acc_known', 'acc_new']
    assert [float(row[0]) for row in rows[1:]] == [0.2, 0.3, 0.4]
    assert (out / 'sweep.svg').exists()
    assert not (out / 'ablation.csv').exists()


def test_table_and_sweep_are_exclusive(tmp_path, runner, app, dataset_dir):
    result = runner.invoke(app, ['ablate', '--data', str(dataset_dir), '--table', '--sweep', 'beta=0:1:0.5',
                                 '--out', str(tmp_path / 'x')])
    assert result.exit_code == 2


@pytest.mark.parametrize('sweep', ['tau=0:1:0.5', 'alpha=0.5:0.1:0.1', 'alpha'])
def test_bad_sweeps_are_usage_errors(tmp_path, runner, app, dataset_dir, sweep):
    result = runner.invoke(app, ['ablate', '--data', str(dataset_dir), '--sweep', sweep,
                                 '--out', str(tmp_path / 'x')])
    assert result.exit_code == 2
    assert '--sweep' in result.output


def test_unknown_flag_is_a_usage_error(runner, app, dataset_dir):
    result = runner.invoke(app, ['warmup', '--data', str(dataset_dir), '--learning-rate', '0.1'])
    assert result.exit_code == 2


def test_invalid_config_lists_every_offending_flag(tmp_path, runner, app, dataset_dir):
    out = tmp_path / 'warm'
    result = runner.invoke(app, ['warmup', '--data', str(dataset_dir), '--alpha', '1.5', '--tau-a', '0',
                                 '--out', str(out)])
    assert result.exit_code == 2
    assert '--alpha' in result.output and '--tau-a' in result.output
    assert not out.exists()


def test_knn_baseline_conflicts_with_cknn(tmp_path, runner, app, dataset_dir):
    result = runner.invoke(app, ['ablate', '--data', str(dataset_dir), '--knn-baseline', '--cknn',
                                 '--out', str(tmp_path / 'x')])
    assert result.exit_code == 2
    assert '--knn-baseline' in result.output


def test_config_file_and_preset(tmp_path, runner, app, dataset_dir):
    config_file = tmp_path / 'run.json'
    config_file.write_text(json.dumps({'alpha': 0.2, 'epochs_stage1': 1}))
    out = tmp_path / 'warm'
    invoke(runner, app, '--preset', 'testing', '--config', config_file,
           'warmup', '--data', dataset_dir, '--gamma', '0.5', '--out', out)
    train = load(out / 'manifest.json')['config']['train']
    assert (train['alpha'], train['gamma'], train['epochs_stage1']) == (0.2, 0.5, 1)
    assert len((out / 'metrics.jsonl').read_text().splitlines()) == 1


def test_reruns_produce_identical_bytes(tmp_path, runner, app, dataset_dir):
    first, second = tmp_path / 'a', tmp_path / 'b'
    for out in (first, second):
        invoke(runner, app, 'cal', '--data', dataset_dir, *FAST, '--out', out)
    for name in ('manifest.json', 'metrics.jsonl', 'loss.svg', 'stage1/student_cls.f32',
                 'stage2/student_cls.f32', 'stage2/teacher_prompt.f32'):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_infeasible_separation_exits_with_a_runtime_error(tmp_path, runner, app):
    result = runner.invoke(app, ['gen', '--num-classes', '10', '--dim', '2', '--separation', '1.5',
                                 '--out', str(tmp_path / 'raw')])
    assert result.exit_code == 1
    assert 'Could not place 10 class means' in result.output


def test_missing_dataset_file_exits_nonzero(tmp_path, runner, app, dataset_dir):
    broken = tmp_path / 'broken'
    shutil.copytree(dataset_dir, broken)
    (broken / 'truth.csv').unlink()
    result = runner.invoke(app, ['eval', '--data', str(broken), '--out', str(tmp_path / 'eval')])
    assert result.exit_code == 1
    assert 'File not found' in result.output


def test_missing_input_path_is_a_usage_error(tmp_path, runner, app):
    result = runner.invoke(app, ['eval', '--data', str(tmp_path / 'nowhere')])
    assert result.exit_code == 2
