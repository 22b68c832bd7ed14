"""One-dimensional TGV, TV and TV2 denoising with dual certificates."""
