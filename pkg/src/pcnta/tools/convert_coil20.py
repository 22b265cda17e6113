"""
COIL-20 converter.
Turns the published obj<k>__<angle>.png files into 8-bit P5 PGM files the
training pipeline reads, keeping the file stem.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from pcnta.data.pgm import write_pgm

PNG_PATTERN = "obj*__*.png"


def convert_image(source: Path, target: Path, size: int | None = None) -> None:
    with Image.open(source) as img:
        gray = img.convert("L")
        if size is not None and gray.size != (size, size):
            gray = gray.resize((size, size), Image.Resampling.BILINEAR)
        pixels = np.asarray(gray, dtype=np.float64) / 255.0
    write_pgm(target, pixels[None, :, :])


def convert_directory(source_dir: Path, target_dir: Path, size: int | None = None) -> int:
    """
    Returns:
        Number of files converted
    """
    sources = sorted(source_dir.glob(PNG_PATTERN))
    target_dir.mkdir(parents=True, exist_ok=True)
    for source in sources:
        convert_image(source, target_dir / f"{source.stem}.pgm", size)
    return len(sources)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Convert COIL-20 PNG files to binary PGM")
    parser.add_argument("source", help="Directory with obj<k>__<angle>.png files")
    parser.add_argument("target", help="Output directory for .pgm files")
    parser.add_argument("--size", type=int, default=None, help="Resize to size×size (default: keep 128×128)")
    return parser.parse_args()


def main():
    args = parse_args()
    source_dir = Path(args.source)
    if not source_dir.is_dir():
        print(f"Source directory not found: {source_dir}", file=sys.stderr)
        sys.exit(2)
    count = convert_directory(source_dir, Path(args.target), args.size)
    if count == 0:
        print(f"No {PNG_PATTERN} files in {source_dir}", file=sys.stderr)
        sys.exit(2)
    print(f"Converted {count} images to {args.target}")


if __name__ == "__main__":
    main()
