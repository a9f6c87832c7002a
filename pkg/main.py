"""
Light Graph Collaborative Filtering
Entry point for the command-line harness.
See docs/ for the command reference.
"""

import sys
from pathlib import Path
from dotenv import load_dotenv

def main():
    """
    Main entry point.
    Loads .env configuration and dispatches the command line.
    """

    # Load environment configuration
    env_path = Path(__file__).parent / ".env"
    load_dotenv(dotenv_path=env_path)

    # Import CLI after .env loaded (loggers read LOG_DIR on import)
    from src.cli.interface import run_cli

    try:
        sys.exit(run_cli(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(130)


if __name__ == "__main__":
    main()
