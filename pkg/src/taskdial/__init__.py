"""Multi-domain task-oriented dialogue engine: state tracking, act
prediction, and response generation trained end to end on a numpy
autodiff core."""

__version__ = "0.1.0"
