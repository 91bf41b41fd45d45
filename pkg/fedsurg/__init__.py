"""
FedSurg Challenge Simulator
Federated learning simulation and challenge evaluation package
"""

__version__ = "1.0.0"
__author__ = "FedSurg Simulation Team"
