import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file in the project root
load_dotenv(Path(__file__).parent.parent / ".env")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class CliConfig:
    """Environment defaults for the kerdock-radar command line"""

    # Output Configuration
    OUTPUT_ROOT = os.getenv("KERDOCK_OUTPUT_ROOT", "results")

    # Parallelism: unset means one worker per available core
    JOBS = int(os.getenv("KERDOCK_JOBS")) if os.getenv("KERDOCK_JOBS") else None

    # Logging Configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

    @classmethod
    def validate(cls):
        """Validate the environment settings"""
        errors = []

        if cls.JOBS is not None and cls.JOBS < 1:
            errors.append(f"KERDOCK_JOBS must be at least 1, got {cls.JOBS}")

        if cls.LOG_LEVEL not in LOG_LEVELS:
            errors.append(f"LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {cls.LOG_LEVEL}")

        if errors:
            raise ValueError(f"Configuration errors: {'; '.join(errors)}")

        return True


# Create a global config instance
config = CliConfig()
