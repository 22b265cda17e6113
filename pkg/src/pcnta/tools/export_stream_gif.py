"""
GIF exporter for frame streams.
Renders the training stream of a run config (synthetic or COIL-20) in
presentation order, one annotated GIF frame per stream frame.
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from pcnta.cli.main import load_streams
from pcnta.cli.run_config import apply_overrides, load_run_config
from pcnta.data.frames import Frame, FrameStream
from pcnta.errors import PcntaError


def load_font(size: int) -> ImageFont.ImageFont:
    """
    Try a handful of system fonts for decent readability; fall back to default.
    """
    font_candidates = [
        "Inter-Regular.ttf",
        "Helvetica.ttc",
        "Arial.ttf",
        "DejaVuSans.ttf",
    ]
    for name in font_candidates:
        try:
            return ImageFont.truetype(name, size)
        except OSError:
            continue
    return ImageFont.load_default()


BODY_FONT = load_font(15)
SMALL_FONT = load_font(13)

IMAGE_PANEL = 256
PADDING = 16
FOOTER = 56
BACKGROUND_COLOR = (11, 13, 18)
PANEL_COLOR = (23, 27, 38)
TEXT_COLOR = (234, 237, 243)
MUTED_TEXT = (156, 167, 190)
ACCENT_COLOR = (255, 193, 94)


def to_grayscale(frame: Frame) -> Image.Image:
    """1×H×W tensor in [0, 1] → 8-bit grayscale image."""
    pixels = np.clip(np.rint(frame.image[0] * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(pixels)


def layout_frame(frame: Frame, position: int, total: int, ordering: str) -> Image.Image:
    width = IMAGE_PANEL + 2 * PADDING
    height = IMAGE_PANEL + 2 * PADDING + FOOTER
    img = Image.new("RGB", (width, height), color=BACKGROUND_COLOR)
    draw = ImageDraw.Draw(img)

    draw.rounded_rectangle(
        [PADDING - 6, PADDING - 6, PADDING + IMAGE_PANEL + 6, PADDING + IMAGE_PANEL + 6],
        radius=10,
        fill=PANEL_COLOR,
    )
    scaled = to_grayscale(frame).resize((IMAGE_PANEL, IMAGE_PANEL), Image.Resampling.NEAREST)
    img.paste(scaled.convert("RGB"), (PADDING, PADDING))

    text_y = PADDING + IMAGE_PANEL + 12
    draw.text(
        (PADDING, text_y),
        f"obj {frame.object_id}  ·  view {frame.view_angle_index}  ·  label {frame.label}",
        fill=TEXT_COLOR,
        font=BODY_FONT,
    )
    draw.text(
        (PADDING, text_y + 22),
        f"frame {position + 1}/{total}  ({ordering})",
        fill=MUTED_TEXT,
        font=SMALL_FONT,
    )
    # progress bar along the bottom edge
    bar = int((width - 2 * PADDING) * (position + 1) / max(total, 1))
    draw.rectangle([PADDING, height - 6, PADDING + bar, height - 3], fill=ACCENT_COLOR)
    return img


def build_frames(stream: FrameStream, max_frames: int | None = None) -> list[Image.Image]:
    frames = stream.frames if max_frames is None else stream.frames[:max_frames]
    total = len(frames)
    return [
        layout_frame(frame, position, total, stream.ordering_mode.value)
        for position, frame in enumerate(frames)
    ]


def export_gif(stream: FrameStream, output_path: Path, max_frames: int | None = None, duration: int = 120) -> int:
    """
    Returns:
        Number of GIF frames written
    """
    frames = build_frames(stream, max_frames=max_frames)
    if not frames:
        raise PcntaError("stream has no frames to render")
    frames[0].save(
        output_path,
        format="GIF",
        save_all=True,
        append_images=frames[1:],
        loop=0,
        duration=duration,
        disposal=2,
    )
    return len(frames)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Render a run config's training stream as a GIF")
    parser.add_argument("-c", "--config", help="YAML run file (defaults apply when omitted)")
    parser.add_argument("--data", help="COIL-20 directory of obj<k>__<angle>.pgm files")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument("--output", "-o", default="stream.gif", help="Output GIF path (default: stream.gif)")
    parser.add_argument("--max-frames", type=int, default=None, help="Render only the first N frames")
    parser.add_argument("--duration", type=int, default=120, help="Milliseconds per frame (default: 120)")
    return parser.parse_args()


def main():
    args = parse_args()
    try:
        cfg = apply_overrides(load_run_config(args.config), seed=args.seed, data_dir=args.data)
        train, _ = load_streams(cfg)
        count = export_gif(train, Path(args.output), max_frames=args.max_frames, duration=args.duration)
    except PcntaError as e:
        raise SystemExit(f"Error: {e}")
    print(f"Saved {count}-frame stream GIF to {args.output}")


if __name__ == "__main__":
    main()
