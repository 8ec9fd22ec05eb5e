#!/usr/bin/env python
"""
Script to generate sample_manifest.csv with a handful of synthetic scenes
"""
from scancap.operations.synthdata import caption_of, make_dataset
from scancap.store.manifest_store import ManifestFile

FRAMES, HEIGHT, WIDTH = 16, 32, 32


def generate_sample_manifest(n: int = 8, seed: int = 0):
    """Generate a small manifest for manual runs of `eval` and `generate`"""
    manifest = ManifestFile("sample_manifest.csv")
    scenes = make_dataset(n, seed, FRAMES, HEIGHT, WIDTH, manifest)

    print("✓ Sample manifest generated successfully!")
    for scene in scenes:
        print(f"  - {scene.sample_seed}: {caption_of(scene)}")
    print(f"✓ Manifest file: {manifest.path}")


if __name__ == "__main__":
    generate_sample_manifest()
