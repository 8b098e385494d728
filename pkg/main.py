import logging

import typer

from config import LOG_LEVEL
from routers.experiment_router import router as experiment_router
from routers.mesh_router import router as mesh_router

app = typer.Typer(
    help="Reduced basis sample-set selection for the hyperspectral DOT forward problem",
    no_args_is_help=True,
    add_completion=False,
)


def include_router(target: typer.Typer, router: typer.Typer) -> None:
    """Mount a router's commands at the top level of `target`."""
    target.registered_commands.extend(router.registered_commands)


include_router(app, experiment_router)
include_router(app, mesh_router)


@app.callback()
def configure(log_level: str = typer.Option(LOG_LEVEL, "--log-level", help="Logging level (RBM_LOG_LEVEL)")):
    """Configure logging before any command runs."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


if __name__ == "__main__":
    app()
