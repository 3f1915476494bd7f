import numpy as np


def head_classes(n_classes):
    """Positive class of each one-vs-rest head; a binary problem needs one."""
    return [1] if n_classes == 2 else list(range(n_classes))


def margins_to_scores(margins, n_classes):
    """(n, heads) margins -> (n, n_classes) scores."""
    if n_classes == 2:
        f = margins[:, 0]
        return np.column_stack([-f, f])
    return margins
