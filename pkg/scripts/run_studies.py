import logging
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import List, Tuple

from tqdm import tqdm

from app.cli.commands import execute_run
from app.utils.helpers import output_dir

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Configuration
MAX_WORKERS = 4
CONFIG_DIR = "configs"


def run_config(config_path: Path) -> int:
    """Run one study; returns the number of levels computed."""
    outcome = execute_run(config_path, output_dir())
    if not outcome.result.ok:
        raise outcome.result.error
    logger.info(f"{config_path.name}:\n{outcome.summary}")
    return len(outcome.result.records)


def run_all(config_dir: str = CONFIG_DIR) -> List[Tuple[str, str]]:
    """Run every *.cfg of a directory in parallel; one failing study never stops the others."""
    configs = sorted(Path(config_dir).glob("*.cfg"))
    if not configs:
        logger.warning(f"No configs found in {config_dir}")
        return []

    total_levels = 0
    failed: List[Tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=MAX_WORKERS) as executor:
        future_to_config = {executor.submit(run_config, path): path for path in configs}
        with tqdm(total=len(configs), desc="Running studies") as pbar:
            for future in as_completed(future_to_config):
                path = future_to_config[future]
                try:
                    total_levels += future.result()
                except Exception as e:
                    logger.error(f"Failed study {path}: {e}")
                    failed.append((str(path), str(e)))
                finally:
                    pbar.update(1)

    logger.info(f"Finished {len(configs) - len(failed)} of {len(configs)} studies, {total_levels} levels")
    if failed:
        logger.warning(f"Failed to run {len(failed)} studies:")
        for f, e in failed:
            logger.warning(f"- {f}: {e}")
    return failed


if __name__ == "__main__":
    sys.exit(1 if run_all(*sys.argv[1:2]) else 0)
