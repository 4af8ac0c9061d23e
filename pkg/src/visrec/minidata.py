"""Deterministic synthetic mini-corpus so the whole pipeline runs without a
real rating corpus or trailer videos: 8 procedurally generated trailers,
50 users, hand-written tags and genres, and block-structured embeddings.

Movies 1-4 and 5-8 form two taste blocks; users prefer one block, which gives
the recommender a learnable signal while staying small enough for CI.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .featureio import FeatureRecord, FeatureVector, write_feature_bin
from .media import FrameBuffer, FrameStream, hsv_to_rgb, write_y4m

FRAME_W, FRAME_H = 64, 48
N_USERS = 50
MOVIE_IDS = tuple(range(1, 9))

# (movie_id, title, pipe-separated genres): block one leans action, block two comedy.
MINI_MOVIES = (
    (1, "Crimson Pursuit", "Action|Thriller"),
    (2, "Ironclad Verdict", "Action|Crime|Drama"),
    (3, "Night Cartographers", "Thriller|Mystery|Film-Noir"),
    (4, "The Last Semaphore", "Action|Adventure|War"),
    (5, "Picnic Logistics", "Comedy|Romance"),
    (6, "Waltz for a Vacuum", "Comedy|Musical"),
    (7, "Herding Clouds", "Comedy|Children's|Fantasy"),
    (8, "Marmalade Diplomacy", "Romance|Comedy|Drama"),
)

# (user_id, movie_id, tag) hand-written; every movie carries at least one tag.
MINI_TAGS = (
    (3, 1, "car chase"), (8, 1, "gritty"), (12, 1, "neon"),
    (5, 2, "courtroom"), (11, 2, "gritty"), (19, 2, "slow burn"),
    (2, 3, "neon"), (14, 3, "night"), (21, 3, "maps"),
    (7, 4, "flags"), (16, 4, "car chase"), (23, 4, "desert"),
    (28, 5, "picnic"), (31, 5, "whimsical"), (40, 5, "romance"),
    (26, 6, "dancing"), (35, 6, "whimsical"), (44, 6, "appliances"),
    (29, 7, "clouds"), (38, 7, "whimsical"), (47, 7, "sheep"),
    (27, 8, "romance"), (36, 8, "breakfast"), (49, 8, "diplomats"),
)

# Segment hues per movie (degrees); far enough apart that adjacent segments
# never share an HSV histogram cell, so shot boundaries are unambiguous.
_MOVIE_HUES = {
    1: (0, 120, 240),
    2: (30, 200, 310),
    3: (60, 180, 300, 0),
    4: (90, 270),
    5: (15, 135, 255),
    6: (45, 165, 285, 75),
    7: (105, 225, 345),
    8: (150, 330),
}


def _segment_frame(hue: float, stripe_hue: float, phase: int) -> FrameBuffer:
    """Solid base color with a few vertical stripes of a second color; gives
    the texture descriptors something to see while staying constant within a
    shot."""
    base = hsv_to_rgb(hue, 0.9, 0.9)
    stripe = hsv_to_rgb(stripe_hue, 0.9, 0.45)
    px = np.empty((FRAME_H, FRAME_W, 3), dtype=np.uint8)
    px[:, :] = base
    for x0 in range(phase % 8, FRAME_W, 16):
        px[:, x0 : x0 + 4] = stripe
    return FrameBuffer(px)


def build_trailer(movie_id: int, rng: np.random.Generator) -> tuple[FrameStream, list[tuple[int, int]]]:
    """Frames plus the ground-truth (start, end) range of each shot."""
    hues = _MOVIE_HUES[movie_id]
    frames: list[FrameBuffer] = []
    ranges = []
    for seg, hue in enumerate(hues):
        length = int(rng.integers(10, 18))
        frame = _segment_frame(hue, (hue + 37) % 360, phase=seg)
        start = len(frames)
        frames.extend([frame] * length)
        ranges.append((start, len(frames) - 1))
    return FrameStream(frames, frame_rate=24.0), ranges


def _ratings(rng: np.random.Generator) -> list[tuple[int, int, float, int]]:
    rows = []
    stamp = 1_400_000_000
    for user in range(1, N_USERS + 1):
        block = (1, 2, 3, 4) if user <= N_USERS // 2 else (5, 6, 7, 8)
        other = (5, 6, 7, 8) if user <= N_USERS // 2 else (1, 2, 3, 4)
        liked = rng.permutation(block)[: int(rng.integers(3, 5))]
        disliked = rng.permutation(other)[: int(rng.integers(1, 3))]
        for m in liked:
            rows.append((user, int(m), float(rng.choice([4.0, 4.5, 5.0])), stamp))
            stamp += 60
        for m in disliked:
            rows.append((user, int(m), float(rng.choice([1.0, 2.0, 2.5, 3.0])), stamp))
            stamp += 60
    return rows


def _embedding(movie_id: int, keyframe: int, rng: np.random.Generator) -> np.ndarray:
    """1024-dim block-structured activation pattern with per-keyframe jitter."""
    base = np.zeros(1024)
    block = 0 if movie_id <= 4 else 1
    base[block * 512 : (block + 1) * 512] = 1.0
    movie_rng = np.random.default_rng([movie_id, keyframe])
    return np.abs(base * 3.0 + 0.3 * movie_rng.standard_normal(1024) + 0.1 * rng.standard_normal(1024))


def generate(out_dir: str | Path, seed: int = 7) -> Path:
    """Write the mini-corpus under out_dir and return the pipeline config path."""
    out = Path(out_dir)
    videos = out / "videos"
    videos.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    embedding_records = []
    for movie_id in MOVIE_IDS:
        stream, ranges = build_trailer(movie_id, rng)
        (videos / f"{movie_id}.y4m").write_bytes(write_y4m(stream))
        for start, end in ranges:
            kf = (start + end) // 2
            embedding_records.append(
                FeatureRecord(movie_id, kf, FeatureVector("DNN", _embedding(movie_id, kf, rng)))
            )
    write_feature_bin(out / "embeddings.bin", embedding_records)

    with open(out / "ratings.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["userId", "movieId", "rating", "timestamp"])
        writer.writerows(_ratings(rng))

    with open(out / "movies.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["movieId", "title", "genres"])
        writer.writerows(MINI_MOVIES)

    with open(out / "tags.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["userId", "movieId", "tag", "timestamp"])
        for i, (user, movie, tag) in enumerate(MINI_TAGS):
            writer.writerow([user, movie, tag, 1_450_000_000 + 60 * i])

    config = {
        "videos_dir": "videos",
        "ratings": "ratings.csv",
        "tags": "tags.csv",
        "movies": "movies.csv",
        "embeddings": "embeddings.bin",
        "cache_dir": "cache",
        "seed": seed,
        "epochs": 12,
        "learning_rate": 0.05,
        "alpha": 0.6,
        "gamma": 1e-4,
        "lsa_rank": 6,
        "folds": 5,
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return config_path
