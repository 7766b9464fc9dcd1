import numpy as np

from boRank.utils.errors import DimensionMismatchError, InvalidParameterError


def check_in_range(name, value, low, high):
    """Raise if ``value`` is not within the closed interval [low, high].

    Examples
    --------
    >>> check_in_range("mmr_lambda", 0.7, 0, 1)
    True
    """
    if not low <= value <= high:
        raise InvalidParameterError(f"{name} is not allowed (requested {value}, should be within [{low}, {high}])")
    return True


def check_positive(name, value, strict=True):
    """Raise unless ``value`` > 0 (or >= 0 when ``strict`` is False)."""
    ok = value > 0 if strict else value >= 0
    if not ok:
        bound = "> 0" if strict else ">= 0"
        raise InvalidParameterError(f"{name} must be {bound} (requested {value})")
    return True


def check_dimension(expected, got, what="vector"):
    if expected != got:
        raise DimensionMismatchError(expected, got, what)
    return True


def as_matrix(points, dim, what="points"):
    """Coerce ``points`` to a float64 (n, dim) array, checking the dimension."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2:
        raise DimensionMismatchError(dim, points.shape, what)
    check_dimension(dim, points.shape[1], what)
    return points


def unit_normalize(matrix):
    """Scale every row to unit Euclidean norm. All-zero rows are left untouched."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def rows_are_unit(matrix, tol=1e-4):
    if len(matrix) == 0:
        return True
    norms = np.linalg.norm(np.asarray(matrix, dtype=np.float64), axis=1)
    return bool(np.all(np.abs(norms - 1.0) <= tol))


def lexicographic_ranks(ids):
    """Position of every id in the lexicographically sorted id list.

    Used everywhere a tie needs breaking in favour of the smaller doc id.
    """
    order = sorted(range(len(ids)), key=ids.__getitem__)
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(len(ids))
    return ranks


def order_by_score(scores, tie_ranks):
    """Indices sorting ``scores`` descending, ties by ascending ``tie_ranks``."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.asarray(tie_ranks), -scores))


def argmax_tiebreak(scores, tie_ranks):
    """Index of the maximum score; among equal maxima the smallest tie rank wins."""
    scores = np.asarray(scores, dtype=np.float64)
    best = np.flatnonzero(scores == scores.max())
    return int(best[np.argmin(np.asarray(tie_ranks)[best])])
