import numpy as np

from mgt.exceptions import ConfigException
from mgt.params import ParamStore


def adam_step(param: np.ndarray, grad: np.ndarray, state: dict, t: int, lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
    """Bias-corrected adaptive moment update of ``param`` in place.

    ``state`` holds the moment estimates ``m`` and ``v`` and is created on the
    first call.
    """
    if t < 1:
        raise ConfigException(f'step counter starts at 1, got {t}', 't')

    if 'm' not in state:
        state['m'] = np.zeros_like(param)
        state['v'] = np.zeros_like(param)

    state['m'] = beta1 * state['m'] + (1.0 - beta1) * grad
    state['v'] = beta2 * state['v'] + (1.0 - beta2) * grad * grad
    m_hat = state['m'] / (1.0 - beta1 ** t)
    v_hat = state['v'] / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return param


class Adam:
    """Adam over the trainable parameters of a store; frozen names are left untouched."""

    def __init__(self, store: ParamStore, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self):
        self.t += 1
        for name, tensor in self.store.trainable():
            if tensor.grad is None:
                continue

            adam_step(tensor.data, tensor.grad, self.store.state.setdefault(name, {}), self.t,
                      self.lr, self.beta1, self.beta2, self.eps)
