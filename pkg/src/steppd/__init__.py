"""Stage-aware, explainable Parkinson's disease severity classification."""

__version__ = "0.1.0"
