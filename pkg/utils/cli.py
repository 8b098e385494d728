import logging
from contextlib import contextmanager

import typer
from pydantic import ValidationError

from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIGURATION = 1
EXIT_INVARIANT = 2
EXIT_RUNTIME = 3


@contextmanager
def exit_codes():
    """
    Map exceptions escaping a command onto process exit codes:
    configuration problems exit 1, anything else exits 3.
    """
    try:
        yield
    except typer.Exit:
        raise
    except (ConfigurationError, ValidationError) as e:
        typer.echo(f"Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIGURATION)
    except Exception as e:
        logger.exception("Command failed")
        typer.echo(f"Error: {type(e).__name__}: {e}", err=True)
        raise typer.Exit(EXIT_RUNTIME)
