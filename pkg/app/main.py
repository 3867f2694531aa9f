import logging
import os

from dotenv import load_dotenv

from app.cli.commands import cli

load_dotenv()

logging.basicConfig(
    level=os.getenv("STRATUM_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(),
        logging.FileHandler(os.getenv("STRATUM_LOG_FILE", "stratum.log"))
    ]
)
logger = logging.getLogger(__name__)

if __name__ == "__main__":
    cli()
