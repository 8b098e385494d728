"""Domain services: mesh, optics, finite elements, reduced basis, selectors and the experiment harness."""
