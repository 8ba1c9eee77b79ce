"""Federated emoji prediction on simulated devices: CIFG-LSTM, FedAvg, serving."""

__version__ = "0.1.0"
