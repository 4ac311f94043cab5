import re

WORD = re.compile(r"[a-z]+")


def words(text):
    return [w.lower() for w in WORD.findall(text) if len(w) > 2]
