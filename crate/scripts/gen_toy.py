"""Writes the bundled toy corpus (MovieLens-100K layout) used by smoke tests.

Users of each gender favour a different half of the catalog, so attribute
inference on the recommendation lists has signal to find.
"""
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "data" / "toy"
USERS, ITEMS = 60, 90
OCCUPATIONS = ["engineer", "student", "writer"]
ZIPS = ["02139", "10001", "60614", "94110", "73301"]


def main() -> None:
    rng = random.Random(7)
    users, ratings = [], []
    for u in range(1, USERS + 1):
        gender = "M" if u % 2 else "F"
        age = rng.choice([16, 21, 29, 38, 47, 52, 60])
        users.append(f"{u}|{age}|{gender}|{rng.choice(OCCUPATIONS)}|{rng.choice(ZIPS)}")
        home = range(1, 46) if gender == "M" else range(46, ITEMS + 1)
        away = [i for i in range(1, ITEMS + 1) if i not in home]
        count = rng.randint(22, 30)
        picked = set()
        while len(picked) < count:
            pool = home if rng.random() < 0.8 else away
            picked.add(rng.choice(list(pool)))
        ts = 880000000 + rng.randint(0, 100000)
        for item in sorted(picked, key=lambda _: rng.random()):
            ts += rng.randint(60, 5000)
            rating = rng.choice([3, 4, 4, 5, 5]) if rng.random() < 0.9 else rng.choice([1, 2])
            ratings.append(f"{u}\t{item}\t{rating}\t{ts}")
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "u.data").write_text("\n".join(ratings) + "\n")
    (OUT / "u.user").write_text("\n".join(users) + "\n")


if __name__ == "__main__":
    main()
