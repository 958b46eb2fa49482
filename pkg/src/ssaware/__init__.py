"""Set-membership cooperative perception: zonotope estimation, CPM exchange and fusion."""

__version__ = "0.1.0"
