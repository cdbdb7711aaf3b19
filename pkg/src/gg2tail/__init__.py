"""Simulation and rare-event toolkit for the critically loaded two-server FCFS queue."""
