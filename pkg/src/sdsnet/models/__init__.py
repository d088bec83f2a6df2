from .baselines import decide, decide_all, sds_sum_baseline
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig
from .encoders import BiLSTM, NonLocal, Q3DCNN, lstm_step
from .fusion import Batch, FusionHead, ScreeningModel
