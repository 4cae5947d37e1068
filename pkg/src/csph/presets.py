"""Reference models used by the CLI defaults, tests and documentation."""

from .model import CSPHModel

__all__ = ["example_one", "exponential_model"]


def example_one():
    """Three pre-shock states, two post-shock states, shock scaling (2, 1)."""
    return CSPHModel(
        alpha=[1.0, 0.0, 0.0],
        T=[
            [-1 / 2, 1 / 4, 1 / 8],
            [1 / 8, -5 / 8, 1 / 4],
            [1 / 8, 1 / 8, -3 / 4],
        ],
        U=[
            [1 / 10, 1 / 40],
            [1 / 8, 1 / 8],
            [1 / 8, 3 / 8],
        ],
        Q1=[[-3 / 8, 3 / 8], [0.0, -3 / 8]],
        Q2=[[-1 / 2, 1 / 4], [1 / 4, -1 / 2]],
        a1=2.0,
        a2=1.0,
    )


def exponential_model(shock_rate=1.0, rate1=1.0, rate2=1.0, a1=1.0, a2=1.0):
    """Exponential shock time with exponential residuals on each margin."""
    return CSPHModel(
        alpha=[1.0],
        T=[[-shock_rate]],
        U=[[shock_rate]],
        Q1=[[-rate1]],
        Q2=[[-rate2]],
        a1=a1,
        a2=a2,
    )
