"""Generates the small synthetic dataset bundled for tests and demos.

The texts are invented: each one mixes a couple of cue words tied to its
label with shared filler words, plus occasional mentions, hashtags,
emoticons and links. Label frequencies are skewed like the real data.
Output is deterministic.

    python3 make_fixture.py   # writes *.tsv, labels.txt, manifest.json here
"""

import hashlib
import json
import random
from pathlib import Path

LABELS = [
    ":heart:", ":heart_eyes:", ":joy:", ":two_hearts:", ":fire:", ":blush:",
    ":sunglasses:", ":sparkles:", ":blue_heart:", ":kiss:", ":camera:",
    ":flag-us:", ":sunny:", ":purple_heart:", ":wink:", ":100:", ":grin:",
    ":christmas_tree:", ":camera_with_flash:", ":stuck_out_tongue_winking_eye:",
]

CUES = [
    ["love", "forever", "babe", "family", "always", "miss"],
    ["gorgeous", "obsessed", "stunning", "crush", "beautiful"],
    ["lol", "lmao", "hilarious", "dying", "funny", "joke"],
    ["besties", "sweetest", "adore", "sisters", "cuties"],
    ["lit", "fire", "hottest", "flames", "banger", "insane"],
    ["shy", "blushing", "flattered", "aww", "sweet"],
    ["cool", "swag", "boss", "shades", "chillin"],
    ["magic", "glitter", "sparkle", "shine", "dreamy"],
    ["blue", "ocean", "dodgers", "navy", "royal"],
    ["kisses", "mwah", "smooch", "lips", "xoxo"],
    ["photo", "pic", "shot", "snap", "portrait"],
    ["america", "usa", "freedom", "july", "patriot"],
    ["sun", "beach", "summer", "sunshine", "warm"],
    ["purple", "lavender", "violet", "grape", "lakers"],
    ["wink", "hint", "secret", "sneaky", "guess"],
    ["facts", "real", "truth", "respect", "legit"],
    ["grin", "excited", "yay", "happy", "cheese"],
    ["christmas", "tree", "santa", "xmas", "festive"],
    ["flash", "selfie", "camera", "paparazzi", "posing"],
    ["silly", "crazy", "tongue", "goofy", "nuts"],
]

FILLER = [
    "today", "with", "my", "the", "so", "this", "at", "we", "got", "just",
    "night", "new", "good", "day", "time", "out", "all", "here", "friends",
    "weekend", "city", "park", "game", "show", "party", "home", "morning",
    "again", "finally", "best", "first", "last", "big", "little", "really",
    "never", "ever", "tonight", "year", "life", "work", "school", "team",
    "music", "food", "coffee", "road", "trip", "world", "girl", "boy",
]

EXTRAS = ["@user", "#tbt", "#nyc", "#love", ":)", ";)", "<3", ":D", "!", "http://t.co/x1"]

TRAIN = [16, 9, 9, 6, 8, 5, 5, 6, 5, 4, 5, 6, 5, 4, 4, 4, 3, 5, 6, 5]
VALIDATION = [5, 2, 2, 1, 2, 1, 1, 2, 1, 1, 1, 2, 1, 1, 1, 1, 1, 1, 2, 1]
TEST = [8, 4, 4, 2, 3, 2, 2, 3, 2, 2, 2, 2, 2, 2, 2, 2, 1, 2, 2, 1]


def make_text(rng, label, seen):
    while True:
        words = rng.sample(CUES[label], rng.randint(1, 2))
        words += rng.sample(FILLER, rng.randint(2, 6))
        if rng.random() < 0.4:
            words.append(rng.choice(EXTRAS))
        if rng.random() < 0.1:
            words.append(rng.choice(CUES[rng.randrange(len(CUES))]))
        rng.shuffle(words)
        key = frozenset(words)
        if key not in seen:
            seen.add(key)
            words[0] = words[0].capitalize() if rng.random() < 0.5 else words[0]
            return " ".join(words)


def make_split(rng, counts, seen):
    rows = [(make_text(rng, label, seen), label)
            for label, n in enumerate(counts) for _ in range(n)]
    rng.shuffle(rows)
    return rows


def main():
    out = Path(__file__).resolve().parent
    rng = random.Random(20240611)
    seen = set()
    manifest = {"labels": LABELS, "splits": {}}
    for name, counts in [("train", TRAIN), ("validation", VALIDATION), ("test", TEST)]:
        rows = make_split(rng, counts, seen)
        body = "".join(f"{text}\t{label}\n" for text, label in rows)
        (out / f"{name}.tsv").write_text(body, encoding="utf-8")
        manifest["splits"][name] = {
            "size": len(rows),
            "class_counts": counts,
            "sha256": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        }
    (out / "labels.txt").write_text("\n".join(LABELS) + "\n", encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
