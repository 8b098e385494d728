"""
Mesh command: generate the configured mesh and write it as text.
"""
from pathlib import Path

import typer

from config import load_config
from services.mesh_service import generate_mesh, write_mesh
from utils.cli import exit_codes

router = typer.Typer()


@router.command("mesh")
def mesh(
    config: Path = typer.Option(..., "--config", help="Experiment configuration file"),
    out: Path = typer.Option(..., "--out", help="Mesh file to write"),
):
    """Write the mesh of the configured geometry."""
    with exit_codes():
        settings = load_config(config)
        generated = generate_mesh(settings.geometry_model(), settings.mesh.target_elements, settings.mesh.seed)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_mesh(generated, out)

    typer.echo(
        f"✓ Wrote {out}: {generated.n_vertices} vertices, {generated.n_triangles} triangles, "
        f"{len(generated.boundary_edges)} boundary edges"
    )
