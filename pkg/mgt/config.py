"""Model and training configuration.

A training config is a UTF-8 JSON object whose keys mirror ``TrainConfig``;
its nested ``"model"`` object mirrors ``MGTConfig``. Unknown keys are
rejected. Relative paths are resolved against the config file's directory.
"""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from io import TextIOWrapper
from pathlib import Path

from mgt.exceptions import ConfigException

POSITIONAL_KINDS = ('wavepe', 'rwpe', 'lappe', 'none')
READOUTS = ('sum', 'mean', 'max')
TASKS = ('regression', 'multilabel')


@dataclass(frozen=True)
class MGTConfig:
    embed_dim: int = 16
    positional_dim: int = 8
    atom_layers: int = 2
    substructure_layers: int = 2
    heads: int = 4
    clusters: int = 10
    positional: str = 'wavepe'
    scales: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    wavelet_layers: int = 1
    # promoted node and dense edge features stacked next to the wavelets
    wavelet_features: bool = False
    walk_steps: int = 5
    laplacian_dim: int = 5
    readout: str = 'mean'
    lambda_link: float = 0.001
    lambda_entropy: float = 0.001
    dropout: float = 0.25
    attention_dropout: float = 0.5
    task: str = 'regression'
    outputs: int = 1
    # input widths; 0 means "take them from the dataset"
    node_features: int = 0
    edge_features: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'scales', tuple(float(s) for s in self.scales))
        validate_model(self)

    @property
    def positional_width(self) -> int:
        return 0 if self.positional == 'none' else self.positional_dim

    @property
    def width(self) -> int:
        """Working width after the positional channels are concatenated."""
        return self.embed_dim + self.positional_width

    @property
    def positional_inputs(self) -> int:
        return {
            'wavepe': len(self.scales),
            'rwpe': self.walk_steps,
            'lappe': self.laplacian_dim,
            'none': 0,
        }[self.positional]

    def with_inputs(self, node_features: int, edge_features: int):
        return replace(self, node_features=node_features, edge_features=edge_features)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['scales'] = list(self.scales)
        return data


@dataclass(frozen=True)
class TrainConfig:
    model: MGTConfig = field(default_factory=MGTConfig)
    epochs: int = 200
    batch_size: int = 8
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    data: str = 'data'
    checkpoint: str = 'model.ckpt'
    log: str = 'train_log.csv'
    normalize_targets: bool = False
    freeze_wavelets: bool = False

    def __post_init__(self):
        validate_train(self)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['model'] = self.model.to_dict()
        return data


def _require(condition: bool, message: str, location: str):
    if not condition:
        raise ConfigException(message, location)


def validate_model(cfg: MGTConfig):
    for name in ('embed_dim', 'heads', 'clusters', 'outputs', 'walk_steps', 'laplacian_dim'):
        value = getattr(cfg, name)
        _require(isinstance(value, int) and value >= 1, f'must be a positive integer, got {value!r}',
                 f'config.model.{name}')

    for name in ('atom_layers', 'substructure_layers', 'positional_dim', 'wavelet_layers',
                 'node_features', 'edge_features'):
        value = getattr(cfg, name)
        _require(isinstance(value, int) and value >= 0, f'must be a non-negative integer, got {value!r}',
                 f'config.model.{name}')

    _require(isinstance(cfg.wavelet_features, bool), f'must be true or false, got {cfg.wavelet_features!r}',
             'config.model.wavelet_features')
    _require(cfg.positional in POSITIONAL_KINDS, f'unknown positional encoding "{cfg.positional}"',
             'config.model.positional')
    _require(cfg.positional == 'none' or cfg.positional_dim >= 1, 'positional encodings need positional_dim >= 1',
             'config.model.positional_dim')
    _require(cfg.readout in READOUTS, f'unknown readout "{cfg.readout}"', 'config.model.readout')
    _require(cfg.task in TASKS, f'unknown task "{cfg.task}"', 'config.model.task')
    _require(len(cfg.scales) >= 1, 'at least one scale is required', 'config.model.scales')
    for index, scale in enumerate(cfg.scales):
        _require(scale >= 0, f'scale must be non-negative, got {scale}', f'config.model.scales[{index}]')

    _require(cfg.lambda_link >= 0, 'must be non-negative', 'config.model.lambda_link')
    _require(cfg.lambda_entropy >= 0, 'must be non-negative', 'config.model.lambda_entropy')
    for name in ('dropout', 'attention_dropout'):
        _require(0.0 <= getattr(cfg, name) < 1.0, 'must lie in [0, 1)', f'config.model.{name}')

    _require(cfg.width % cfg.heads == 0, f'working width {cfg.width} is not divisible into {cfg.heads} heads',
             'config.model.heads')


def validate_train(cfg: TrainConfig):
    _require(isinstance(cfg.model, MGTConfig), 'expected a model section', 'config.model')
    _require(isinstance(cfg.epochs, int) and cfg.epochs >= 1, f'must be at least 1, got {cfg.epochs!r}',
             'config.epochs')
    _require(isinstance(cfg.batch_size, int) and cfg.batch_size >= 1, f'must be at least 1, got {cfg.batch_size!r}',
             'config.batch_size')
    _require(cfg.learning_rate > 0, f'must be positive, got {cfg.learning_rate}', 'config.learning_rate')
    _require(0.0 <= cfg.beta1 < 1.0 and 0.0 <= cfg.beta2 < 1.0, 'betas must lie in [0, 1)', 'config.beta1')
    _require(cfg.eps > 0, 'must be positive', 'config.eps')
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0, 'must be a non-negative integer', 'config.seed')


def _known_keys(cls, data: dict, location: str):
    if not isinstance(data, dict):
        raise ConfigException('expected a JSON object', location)

    names = {item.name for item in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigException(f'unknown key "{key}"', f'{location}.{key}')


def model_config_from_dict(data: dict, location: str = 'config.model') -> MGTConfig:
    _known_keys(MGTConfig, data, location)
    try:
        return MGTConfig(**data)
    except TypeError as error:
        raise ConfigException(str(error), location) from error


def train_config_from_dict(data: dict, base_dir: Path | None = None) -> TrainConfig:
    _known_keys(TrainConfig, data, 'config')
    data = dict(data)
    data['model'] = model_config_from_dict(data.get('model', {}))
    if base_dir is not None:
        for key in ('data', 'checkpoint', 'log'):
            if key in data:
                data[key] = str(base_dir / data[key])

    try:
        return TrainConfig(**data)
    except TypeError as error:
        raise ConfigException(str(error), 'config') from error


def load_config(source: Path | str | TextIOWrapper) -> TrainConfig:
    base_dir = None
    if isinstance(source, TextIOWrapper):
        text = source.read()
    else:
        path = Path(source)
        base_dir = path.parent
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as error:
            raise ConfigException(f'cannot read config ({error.strerror})', str(path)) from error

    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigException(f'malformed JSON ({error.msg})', f'line {error.lineno} column {error.colno}') from error

    return train_config_from_dict(data, base_dir)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def config_hash(cfg: TrainConfig | MGTConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode('utf-8')).hexdigest()


def desk_preset(**overrides) -> TrainConfig:
    """Desk-scale defaults: d=16, two atom and two substructure layers, ten clusters."""
    return replace(TrainConfig(model=MGTConfig(), epochs=200), **overrides)


def polymer_baseline_preset(**overrides) -> TrainConfig:
    """Same model as the desk preset with the shorter schedule used for polymer baselines."""
    return replace(TrainConfig(model=MGTConfig(), epochs=50), **overrides)
