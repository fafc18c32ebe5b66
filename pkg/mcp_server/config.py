"""Settings for the kernel MCP server."""
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from vr3dense.config import Config as KernelConfig
from vr3dense.config import RunConfig, load_run_config

# Load environment variables from .env file if it exists
load_dotenv()


class Config(KernelConfig):
    """Kernel settings plus the server's own log level."""

    SERVER_NAME: str = os.getenv("VR3DENSE_MCP_NAME", "vr3dense-kernels")
    LOG_LEVEL: str = os.getenv("VR3DENSE_MCP_LOG_LEVEL", "INFO").upper()

    @classmethod
    def run_config(cls) -> RunConfig:
        """RunConfig from VR3DENSE_CONFIG, or the defaults when it is unset."""
        path: Optional[Path] = cls.get_default_config_path()
        return load_run_config(path)
