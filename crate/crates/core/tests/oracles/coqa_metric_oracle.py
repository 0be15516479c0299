"""Freezes reference F1 values for tests/data/metric_pairs.json.

The normalization and scoring functions below follow the public CoQA
evaluation script line for line. Run from this directory:

    python3 coqa_metric_oracle.py > ../data/metric_pairs.json
"""

import collections
import json
import re
import string


def normalize_answer(s):
    def remove_articles(text):
        regex = re.compile(r"\b(a|an|the)\b", re.UNICODE)
        return re.sub(regex, " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    def lower(text):
        return text.lower()

    return white_space_fix(remove_articles(remove_punc(lower(s))))


def get_tokens(s):
    if not s:
        return []
    return normalize_answer(s).split()


def compute_exact(a_gold, a_pred):
    return int(normalize_answer(a_gold) == normalize_answer(a_pred))


def compute_f1(a_gold, a_pred):
    gold_toks = get_tokens(a_gold)
    pred_toks = get_tokens(a_pred)
    common = collections.Counter(gold_toks) & collections.Counter(pred_toks)
    num_same = sum(common.values())
    if len(gold_toks) == 0 or len(pred_toks) == 0:
        return int(gold_toks == pred_toks)
    if num_same == 0:
        return 0
    precision = 1.0 * num_same / len(pred_toks)
    recall = 1.0 * num_same / len(gold_toks)
    return (2 * precision * recall) / (precision + recall)


def compute_turn_score(a_gold_list, a_pred):
    f1_sum = 0.0
    em_sum = 0.0
    if len(a_gold_list) > 1:
        for i in range(len(a_gold_list)):
            gold_answers = a_gold_list[0:i] + a_gold_list[i + 1:]
            em_sum += max(compute_exact(a, a_pred) for a in gold_answers)
            f1_sum += max(compute_f1(a, a_pred) for a in gold_answers)
    else:
        em_sum += max(compute_exact(a, a_pred) for a in a_gold_list)
        f1_sum += max(compute_f1(a, a_pred) for a in a_gold_list)
    return {"em": em_sum / max(1, len(a_gold_list)), "f1": f1_sum / max(1, len(a_gold_list))}


PAIRS = [
    # exact and near-exact
    ("a bottle", ["a bottle"]),
    ("bottle", ["a bottle"]),
    ("The bottle", ["a bottle"]),
    ("an apple", ["the apple"]),
    ("yes", ["yes"]),
    ("no", ["yes"]),
    ("unknown", ["unknown"]),
    ("three", ["3"]),
    ("Three.", ["three"]),
    ("in the park", ["the park"]),
    # articles and punctuation
    ("the the the", ["a"]),
    ("a", ["the"]),
    ("The cat, the hat!", ["cat hat"]),
    ("U.S.A.", ["USA"]),
    ("don't", ["dont"]),
    ("rock-and-roll", ["rock and roll"]),
    ("anthem", ["an them"]),
    ("theater", ["the ater"]),
    ("A man, a plan, a canal: Panama", ["man plan canal panama"]),
    ("(in) [the] {box}", ["in box"]),
    ("$5.00", ["500"]),
    ("100%", ["100"]),
    ("he said \"hello\"", ["he said hello"]),
    ("Anne's dog", ["annes dog"]),
    ("   spaced    out   ", ["spaced out"]),
    # partial overlap
    ("the big red dog", ["red dog"]),
    ("red dog", ["the big red dog"]),
    ("dog dog dog", ["dog"]),
    ("dog", ["dog dog dog"]),
    ("cat and dog", ["dog and cat"]),
    ("in the house by the lake", ["by the lake"]),
    ("John went to school", ["Mary went home"]),
    ("alpha beta gamma delta", ["beta delta epsilon"]),
    ("one two", ["three four"]),
    # multiple references
    ("a bottle", ["a bottle", "bottle", "the green bottle"]),
    ("green", ["a bottle", "bottle", "the green bottle"]),
    ("Paris", ["Paris", "in Paris", "France", "paris"]),
    ("yes", ["yes", "no", "yes"]),
    ("her mother", ["mother", "her mom", "mom"]),
    ("park", ["the park", "a park"]),
    ("four", ["three", "four", "five", "six"]),
    ("the old man", ["an old man", "old man", "the man"]),
    # empty cases
    ("", ["something"]),
    ("something", [""]),
    ("", [""]),
    ("the", ["something"]),
    ("!!!", ["..."]),
    ("a an the", [""]),
    ("", ["a", "the"]),
    ("x", ["", "x"]),
]


def main():
    out = []
    for pred, refs in PAIRS:
        single_max = max(compute_f1(r, pred) for r in refs)
        out.append({
            "prediction": pred,
            "references": refs,
            "normalized_prediction": get_tokens(pred),
            "normalized_references": [get_tokens(r) for r in refs],
            "f1_max": float(single_max),
            "f1_official": compute_turn_score(refs, pred)["f1"],
        })
    print(json.dumps(out, indent=1, ensure_ascii=False))


if __name__ == "__main__":
    main()
