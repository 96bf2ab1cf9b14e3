"""Dataset generation: many independently seeded clips, written in order.

Each clip consumes only its own child stream of the root seed, so clips are
independent of the thread count and of each other; workers may render out of
order but the writer consumes results in clip order, which keeps the output
bytes identical for any --threads value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator

from .config import GenerationConfig
from .dataset import dataset_write
from .render import ClipSample, make_clip, sample_light, sample_material
from .rng import SeededRng
from .synth import sample_params
from .textures import texture_source


def generate_clip(config: GenerationConfig, root: SeededRng, index: int,
                  textures) -> ClipSample:
    """Render clip ``index`` of a dataset rooted at ``root``."""
    config.validate()
    rng = root.stream("clip", index)
    params = sample_params(rng, config.deform, config.grid_n, config.frames, rng_stream=index)
    material = sample_material(rng, config.material, textures.sample(rng))
    light = sample_light(rng, config.light)
    noise_sigma = float(rng.uniform(*config.noise_sigma))
    return make_clip(
        params, material, light, noise_sigma, rng,
        width=config.width, height=config.height,
        traj_ranges=config.trajectory,
        seed=root.seed,
        extra_meta={"clip_index": index},
    )


def generate_clips(config: GenerationConfig, count: int, seed: int,
                   threads: int = 1) -> Iterator[ClipSample]:
    """Yield ``count`` clips in index order, optionally rendering in parallel."""
    config.validate()
    root = SeededRng(seed)
    textures = texture_source(config.texture)
    if threads <= 1:
        for i in range(count):
            yield generate_clip(config, root, i, textures)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda i: generate_clip(config, root, i, textures), range(count))


def generate_dataset(config: GenerationConfig, count: int, seed: int,
                     out_dir: str | Path, threads: int = 1) -> dict:
    """Generate a dataset directory; returns its manifest."""
    return dataset_write(generate_clips(config, count, seed, threads), out_dir)
