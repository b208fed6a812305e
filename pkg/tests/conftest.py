import numpy as np
import pytest

from gpdm import geometry


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.column_stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)]
    )


@pytest.fixture(scope="session")
def sphere_obj(tmp_path_factory):
    """A 600-vertex sphere cloud written as an OBJ file (faces ignored)."""
    pts = fibonacci_sphere(600)
    path = tmp_path_factory.mktemp("meshes") / "sphere.obj"
    lines = [f"v {p[0]:.12f} {p[1]:.12f} {p[2]:.12f}" for p in pts]
    lines += ["f 1 2 3", "f 4 5 6"]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def annulus2070():
    return geometry.sample_annulus(90, 23)


@pytest.fixture(scope="session")
def circle2048():
    return geometry.sample_circle(2048)
