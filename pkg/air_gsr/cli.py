"""air-gsr command-line entry point."""

import json
import os
import sys

from loguru import logger

from air_gsr.commands import (
    cmd_cluster,
    cmd_cv,
    cmd_drift_sim,
    cmd_info,
    cmd_learn,
    cmd_reconstruct,
    cmd_semi_eval,
)
from air_gsr.core import Core, CoreManager
from air_gsr.errors import AirGsrError


COMMANDS = {
    'learn': cmd_learn,
    'cv': cmd_cv,
    'reconstruct': cmd_reconstruct,
    'cluster': cmd_cluster,
    'semi-eval': cmd_semi_eval,
    'drift-sim': cmd_drift_sim,
    'info': cmd_info,
}


def setup_logging(level: str = None):
    logger.remove()
    logger.add(sys.stderr, level=level or os.getenv('AIR_GSR_LOG_LEVEL', 'WARNING'))


def run(argv=None) -> int:
    """Run one subcommand and return its exit code (0 ok, 1 computation, 2 usage)."""
    setup_logging()
    try:
        core = Core.from_flags(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except AirGsrError as e:
        logger.error(f'Error in configuration: {e}')
        return e.exit_code

    if core.log_level:
        setup_logging(core.log_level)
    CoreManager.set_core(core)
    logger.info(f'Running {core.command}')
    try:
        result = COMMANDS[core.command](core)
    finally:
        core.close()

    if 'error' in result:
        return result['exit_code']
    print(json.dumps(result['data'], indent=2, default=str))
    return 0


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
