"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

from .block_codec import MAX_K, CoefficientPlane
from .errors import InvalidK
from .jpeg_parser import CoefficientImage


def check_plane(x) -> CoefficientPlane:
    if isinstance(x, CoefficientPlane):
        return x
    if isinstance(x, CoefficientImage):
        return x.to_plane()
    raise TypeError(f"expected CoefficientPlane or CoefficientImage, got {type(x).__name__}")


def check_planes(X) -> list[CoefficientPlane]:
    """Accept one plane/image or an iterable of them."""
    if isinstance(X, (CoefficientPlane, CoefficientImage)):
        return [check_plane(X)]
    planes = [check_plane(x) for x in X]
    if not planes:
        raise ValueError("expected at least one coefficient plane")
    return planes


def check_k(k) -> int:
    if isinstance(k, bool) or int(k) != k or not 1 <= int(k) <= MAX_K:
        raise InvalidK(f"k must be an integer in [1, {MAX_K}], got {k!r}")
    return int(k)


def check_T(T) -> int:
    if isinstance(T, bool) or int(T) != T or int(T) < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    return int(T)


def check_threshold(t) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {t}")
    return t
