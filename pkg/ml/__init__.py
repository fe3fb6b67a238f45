from .cnn_model import CnnModel, bce_loss
from .trainer import TrainReport, fit

__all__ = ['CnnModel', 'TrainReport', 'bce_loss', 'fit']
