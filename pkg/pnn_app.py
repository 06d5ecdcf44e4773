import sys
import os
import logging

logger = logging.getLogger(__name__)

# Add the project root directory to the import path
current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.insert(0, current_dir)

try:
    from pnnlab.cli import main
except Exception as e:
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    logger.error(f"Failed to import pnnlab: {str(e)}", exc_info=True)
    raise

if __name__ == "__main__":
    sys.exit(main())
