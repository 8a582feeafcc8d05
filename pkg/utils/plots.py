"""Static SVG plots of loss curves, accuracies and sweeps."""
import matplotlib

matplotlib.use('Agg')
matplotlib.rcParams['svg.hashsalt'] = 'novelcat'

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    # No date metadata, so identical inputs give identical files.
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def loss_curve(history, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for stage in (1, 2):
        points = [(r['epoch'], r['loss']) for r in history if r['stage'] == stage]
        if points:
            epochs, losses = zip(*points)
            ax.plot(epochs, losses, marker='o', label=f'stage {stage}')
    ax.set_xlabel('epoch')
    ax.set_ylabel('loss')
    ax.legend()
    _save(fig, path)


def accuracy_bars(report, path):
    names = ['All', 'Known', 'New']
    values = [report.get('accAll'), report.get('accKnown'), report.get('accNew')]
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(names, [v if v is not None else 0.0 for v in values], color=['#4c72b0', '#55a868', '#c44e52'])
    ax.set_ylim(0, 1)
    ax.set_ylabel('accuracy')
    _save(fig, path)


def sweep_lines(parameter, rows, path):
    """rows: (value, acc_all, acc_known, acc_new) averaged over seeds."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    values = [r[0] for r in rows]
    for column, name in ((1, 'All'), (2, 'Known'), (3, 'New')):
        ax.plot(values, [r[column] if r[column] is not None else float('nan') for r in rows],
                marker='o', label=name)
    ax.set_xlabel(parameter)
    ax.set_ylabel('accuracy')
    ax.legend()
    _save(fig, path)
