"""Link-level simulator for LIS-assisted MIMO channel estimation and phase design."""

__version__ = "0.1.0"
