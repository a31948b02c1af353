"""deskgrid: a desk-scale hybrid API-GUI desktop RL training stack."""

__version__ = "0.1.0"
