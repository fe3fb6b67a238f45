#!/usr/bin/env python3
"""
Ledger Image Pipeline - command line entry point
Runs one stage (or the whole chain) of the failure-prediction pipeline

Exit codes: 0 success, 1 usage error or missing input, 2 invalid data,
3 internal error.
"""

import argparse
import logging
import sys

from config import get_config
from backend.models.image import Variant
from backend.services.pipeline import PipelineRunner
from backend.services.pipeline_config import STAGES, PipelineConfig
from backend.utils.errors import ContractError, DataValidationError, MissingArtifactError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

logger = logging.getLogger('pipeline')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='SME failure prediction from monthly ledger images')
    parser.add_argument('--config', required=True, help='Pipeline JSON config (paths are relative to it)')
    parser.add_argument('--stage', required=True, choices=STAGES + ('all',),
                        help="Stage to run, or 'all' for the full chain")
    parser.add_argument('--variant', choices=[v.value for v in Variant], help='Image variant override')
    parser.add_argument('--seed', type=int, help='Seed override for synth, split and training')
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(level=get_config().LOG_LEVEL,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = PipelineConfig.from_file(args.config).with_overrides(args.variant, args.seed)
        stages = STAGES if args.stage == 'all' else (args.stage,)
        runner = PipelineRunner(config)
        for stage in stages:
            result = runner.run_stage(stage)
            print(f"✅ {stage}: {result['output_dir']}")
        if 'report' in stages:
            print(result['summary'])
        return EXIT_OK
    except (ContractError, MissingArtifactError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as e:
        print(f"❌ Invalid data: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.exception("Pipeline failed")
        print(f"❌ Internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == '__main__':
    sys.exit(main())
