"""air-gsr run configuration and shared state."""


import argparse
import copy
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from air_gsr.data import TimeSeriesMatrix, load_csv
from air_gsr.errors import ConfigError
from air_gsr.evaluation import HyperGrid
from air_gsr.graph.covariance import GlassoConfig
from air_gsr.graph.laplacian import DEFAULT_EDGE_TAU
from air_gsr.reconstruction import MethodKind


COMMANDS = ('learn', 'cv', 'reconstruct', 'cluster', 'semi-eval', 'drift-sim', 'info')
LOG_LEVELS = ('TRACE', 'DEBUG', 'INFO', 'SUCCESS', 'WARNING', 'ERROR', 'CRITICAL')


class LearnSettings(BaseModel):
    """Iteration settings of graph learning (alpha and beta come from the grid).

    Attributes:
        max_outer_iters (int): Alternating-minimization iterations.
        rel_tol (float): Relative objective change that stops the iterations.
        qp_max_iters (int): Projected-gradient iterations of each L-step.
        qp_tol (float): Projected-gradient tolerance.
    """

    model_config = ConfigDict(extra='forbid')

    max_outer_iters: int = Field(default=50, ge=1)
    rel_tol: float = Field(default=1e-4, gt=0)
    qp_max_iters: int = Field(default=2000, ge=1)
    qp_tol: float = Field(default=1e-8, gt=0)


class CVConfig(BaseModel):
    """Cross-validation settings.

    Attributes:
        folds (int): Number of folds k.
        seed (int): Seed of every random choice (fold split, node subsets, noise).
        fold_mode (str): ``shuffle`` or ``temporal``.
        greedy (bool): Two-stage search with the graph fixed by edge density.
        target_density (float): Edge density targeted by the greedy stage.
        workers (int): Threads used for grid cells.
    """

    model_config = ConfigDict(extra='forbid')

    folds: int = Field(default=5, ge=2)
    seed: int = Field(default=0, ge=0)
    fold_mode: Literal['shuffle', 'temporal'] = Field(default='shuffle')
    greedy: bool = Field(default=False)
    target_density: float = Field(default=0.2, ge=0, le=1)
    workers: int = Field(default=1, ge=1)


class ExperimentConfig(BaseModel):
    """Semi-supervised and drift experiment settings.

    Attributes:
        percentages (list[float]): Percentages of available nodes.
        reps (int): Random node subsets per percentage.
        target (str): Drifting node (id or column index).
        sigmas (list[float]): Nondecreasing drift noise schedule.
        exclude (list[str]): Nodes additionally treated as unobserved.
        train_fraction (float): Leading share of samples used for training.
    """

    model_config = ConfigDict(extra='forbid')

    percentages: List[float] = Field(default_factory=lambda: [20.0, 35.0, 50.0, 65.0, 80.0, 95.0])
    reps: int = Field(default=10, ge=1)
    target: Optional[str] = Field(default=None)
    sigmas: List[float] = Field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0])
    exclude: List[str] = Field(default_factory=list)
    train_fraction: float = Field(default=0.66, gt=0, lt=1)


class RunConfig(BaseModel):
    """Fully resolved configuration of one subcommand run.

    Attributes:
        command (str): Subcommand to run.
        data (str): Input CSV path.
        method (MethodKind): Reconstruction method.
        out (str): Output directory.
        model (str): Directory written by ``learn`` (used by ``reconstruct``).
        clusters (int | 'auto' | None): Cluster count, or choose it by score.
        cluster_range (list[int]): Candidate counts for ``auto``.
        cluster_metric (str): ``calinski_harabasz`` or ``silhouette``.
        tau (float): Edge threshold.
        grid (HyperGrid): Hyperparameter grids.
        cv (CVConfig): Cross-validation settings.
        experiment (ExperimentConfig): Experiment settings.
        learn (LearnSettings): Graph-learning iteration settings.
        glasso (GlassoConfig): Graphical lasso settings.
    """

    model_config = ConfigDict(extra='forbid')

    command: Literal[COMMANDS]
    data: Optional[str] = Field(default=None)
    method: MethodKind = Field(default=MethodKind.LAP_INT)
    out: str = Field(default='out')
    model: Optional[str] = Field(default=None)
    clusters: Union[int, Literal['auto'], None] = Field(default=None)
    cluster_range: List[int] = Field(default_factory=lambda: list(range(2, 11)))
    cluster_metric: Literal['calinski_harabasz', 'silhouette'] = Field(default='calinski_harabasz')
    tau: float = Field(default=DEFAULT_EDGE_TAU, ge=0)
    grid: HyperGrid = Field(default_factory=HyperGrid)
    cv: CVConfig = Field(default_factory=CVConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    learn: LearnSettings = Field(default_factory=LearnSettings)
    glasso: GlassoConfig = Field(default_factory=GlassoConfig)


# flag name -> location in RunConfig
FLAG_PATHS = {
    'data': ('data',),
    'method': ('method',),
    'out': ('out',),
    'model': ('model',),
    'clusters': ('clusters',),
    'cluster_metric': ('cluster_metric',),
    'alpha': ('grid', 'alphas'),
    'beta': ('grid', 'betas'),
    'k': ('grid', 'ks'),
    'mu': ('grid', 'mus'),
    'sigma2': ('grid', 'sigma2s'),
    'lambda_': ('grid', 'lambdas'),
    'seed': ('cv', 'seed'),
    'folds': ('cv', 'folds'),
    'fold_mode': ('cv', 'fold_mode'),
    'greedy': ('cv', 'greedy'),
    'target_density': ('cv', 'target_density'),
    'workers': ('cv', 'workers'),
    'percentages': ('experiment', 'percentages'),
    'reps': ('experiment', 'reps'),
    'target': ('experiment', 'target'),
    'sigmas': ('experiment', 'sigmas'),
    'exclude': ('experiment', 'exclude'),
    'train_fraction': ('experiment', 'train_fraction'),
}


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expected comma-separated numbers, got "{text}"') from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got "{text}"') from e


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(',') if v.strip()]


def _cluster_count(text: str) -> Union[int, str]:
    if text == 'auto':
        return text
    try:
        return int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f'expected an integer or "auto", got "{text}"') from e


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class Core:
    """Configuration and shared state of one air-gsr invocation.

    Keyword Arguments:
        command (str): Subcommand name.
        config_file (str): Optional YAML file shaped like :class:`RunConfig`.
            File format:
                ```yaml
                method: krr-diff
                clusters: 3
                grid:
                    alphas: [0.1, 1.0]
                    mus: [0.001]
                cv:
                    folds: 5
                    seed: 7
                learn:
                    max_outer_iters: 30
                ```
        log_level (str): Overrides the ``AIR_GSR_LOG_LEVEL`` environment variable.
        <flag> : Any key of ``FLAG_PATHS``; None means "not given".

    Precedence: given flags, then the config file, then defaults.
    """
    DEFAULT_CONFIG = {
        'command': None,
        'config_file': '',
        'log_level': None,
        **{name: None for name in FLAG_PATHS},
    }

    def __init__(self, **configs):
        logger.debug(f'Starting air-gsr core with configuration: {configs}')
        extra_configs = set(configs).difference(self.DEFAULT_CONFIG)
        if extra_configs:
            raise ConfigError(f'Unrecognized configs: {extra_configs}')
        self.config = copy.copy(self.DEFAULT_CONFIG)
        self.config.update(configs)

        resolved = {}
        if self.config['config_file']:
            resolved = self._parse_config_file(self.config['config_file'])
        overrides = {'command': self.config['command']}
        for name, path in FLAG_PATHS.items():
            if self.config[name] is not None:
                node = overrides
                for key in path[:-1]:
                    node = node.setdefault(key, {})
                node[path[-1]] = self.config[name]
        try:
            self.run_config = RunConfig(**_merge(resolved, overrides))
        except ValidationError as e:
            raise ConfigError(f'Invalid configuration: {e}') from e

        self._datasets = {}

    @staticmethod
    def from_flags(argv: List[str] = None) -> 'Core':
        """Create a Core instance from command line flags.

        Returns:
            An instance of the Core class.
        """
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--data', type=str, help='Input CSV: timestamp column then one column per node.')
        common.add_argument('--method', type=str, choices=[m.value for m in MethodKind],
                            help='Reconstruction method.')
        common.add_argument('--alpha', type=_float_list, help='Smoothness weights (comma list).')
        common.add_argument('--beta', type=_float_list, help='Frobenius weights (comma list).')
        common.add_argument('--k', type=_int_list, help='GSP bandwidths (comma list).')
        common.add_argument('--mu', type=_float_list, help='KRR ridges (comma list).')
        common.add_argument('--sigma2', type=_float_list, help='Diffusion kernel widths (comma list).')
        common.add_argument('--lambda', dest='lambda_', type=_float_list,
                            help='Graphical lasso penalties (comma list).')
        common.add_argument('--clusters', type=_cluster_count, help='Cluster count, or "auto".')
        common.add_argument('--cluster-metric', type=str, choices=['calinski_harabasz', 'silhouette'],
                            help='Score used by --clusters auto.')
        common.add_argument('--seed', type=int, help='Random seed.')
        common.add_argument('--folds', type=int, help='Number of CV folds.')
        common.add_argument('--fold-mode', type=str, choices=['shuffle', 'temporal'], help='How folds are cut.')
        common.add_argument('--greedy', action='store_true', default=None,
                            help='Fix the graph by edge density, then grid the reconstruction only.')
        common.add_argument('--target-density', type=float, help='Edge density targeted by --greedy.')
        common.add_argument('--workers', type=int, help='Threads for grid cells.')
        common.add_argument('--out', type=str, help='Output directory.')
        common.add_argument('--config', dest='config_file', type=str, help='YAML configuration file.')
        common.add_argument('--log-level', type=str.upper, choices=LOG_LEVELS, help='Log level.')

        parser = argparse.ArgumentParser(
            prog='air-gsr',
            description='Graph learning and graph signal reconstruction for air pollution sensor networks',
        )
        sub = parser.add_subparsers(dest='command', required=True)
        sub.add_parser('learn', parents=[common], help='Learn a graph (or covariance) from complete samples.')
        sub.add_parser('cv', parents=[common], help='Cross-validate a method over its hyperparameter grid.')
        reconstruct = sub.add_parser('reconstruct', parents=[common], help='Fill missing cells with a learned model.')
        reconstruct.add_argument('--model', type=str, help='Directory written by "learn".')
        sub.add_parser('cluster', parents=[common], help='Cluster the nodes by Ward linkage.')
        semi = sub.add_parser('semi-eval', parents=[common], help='RMSE versus percentage of available nodes.')
        semi.add_argument('--percentages', type=_float_list, help='Available-node percentages (comma list).')
        semi.add_argument('--reps', type=int, help='Random node subsets per percentage.')
        drift = sub.add_parser('drift-sim', parents=[common], help='Inject drift on a node and reconstruct it.')
        drift.add_argument('--target', type=str, help='Drifting node id or column index.')
        drift.add_argument('--sigmas', type=_float_list, help='Nondecreasing drift noise schedule (comma list).')
        drift.add_argument('--exclude', type=_str_list, help='Nodes also treated as unobserved (comma list).')
        drift.add_argument('--train-fraction', type=float, help='Leading share of samples used for training.')
        sub.add_parser('info', parents=[common], help='Summarize a dataset.')
        args = parser.parse_args(argv)

        return Core(**{key: value for key, value in vars(args).items() if key in Core.DEFAULT_CONFIG})

    def _parse_config_file(self, file_path) -> dict:
        """Parse the YAML configuration file.

        Args:
            file_path (str): Path to the configuration file.

        Returns:
            dict: Parsed configuration.
        """
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                config = yaml.safe_load(f.read())
        except OSError as e:
            raise ConfigError(f'Cannot read config file {file_path}: {e}') from e
        except yaml.YAMLError as e:
            raise ConfigError(f'Invalid YAML in {file_path}: {e}') from e

        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(f'Config file {file_path} must hold a mapping')
        if 'command' in config:
            raise ConfigError('The subcommand cannot be set from the config file')
        return config

    @property
    def command(self) -> str:
        return self.run_config.command

    @property
    def log_level(self) -> Optional[str]:
        return self.config['log_level']

    @property
    def out_dir(self) -> Path:
        """Output directory, created on first use."""
        path = Path(self.run_config.out)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def learn_options(self) -> dict:
        return self.run_config.learn.model_dump()

    def dataset(self) -> TimeSeriesMatrix:
        """Load (once) the CSV given by ``--data``."""
        path = self.run_config.data
        if not path:
            raise ConfigError(f'"{self.command}" needs --data')
        if not Path(path).is_file():
            raise ConfigError(f'Data file not found: {path}')
        if path not in self._datasets:
            self._datasets[path] = load_csv(path)
        return self._datasets[path]

    def model_dir(self) -> Path:
        path = self.run_config.model
        if not path:
            raise ConfigError(f'"{self.command}" needs --model')
        if not Path(path).is_dir():
            raise ConfigError(f'Model directory not found: {path}')
        return Path(path)

    def close(self):
        """Release cached datasets."""
        for path in self._datasets:
            logger.debug(f'Releasing dataset: {path}')
        self._datasets.clear()


class CoreManager:
    """Manager for the Core instance."""
    _core: Core = None

    @classmethod
    def set_core(cls, core: Core):
        cls._core = core

    @classmethod
    def get_core(cls) -> Core:
        return cls._core
