"""Discrete-event simulator of a TTE backbone with PTP-synchronized 5G URLLC
access carrying PMU synchrophasor traffic."""

__version__ = "0.1.0"
