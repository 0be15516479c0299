#!/usr/bin/env python3
"""Build the verb-form lexicon used by the rule-based SRL fallback.

Usage: build_verbs.py <wordnet-dict-dir> > verbs.tsv

Each output line is `form \t lemma`. Base verbs come from the curated list
below; irregular forms are taken from WordNet's `verb.exc`, regular forms are
generated with the usual English spelling rules.
"""
import os
import sys

BASE = """
accept add admire agree allow answer appear arrive ask attack avoid bake
be bear beat become begin believe belong bite blow borrow break bring build
burn buy call carry catch celebrate change chase cheer choose clean climb
close collect come complain cook cost count cover cross cry cut dance decide
defeat deliver describe destroy die dig discover do drag draw dream dress
drink drive drop eat enjoy enter escape examine expect explain fall feed feel
fight find finish fix fly follow forget forgive freeze get give go grab grow
guess hang happen hate have hear help hide hit hold hope hug hunt hurry hurt
imagine include invite join jump keep kick kill kiss know land laugh lead
learn leave lend let lie like listen live lose love make marry mean meet
miss move need notice offer open order own paint pay pick plan plant play
pour prefer prepare promise protect pull punish push put reach read receive
recognize refuse remember repair reply rescue return ride ring rise run save
say scream see seek sell send serve shake share shoot shout show sing sink
sit sleep slide smell smile speak spend stand start stay steal stop study
succeed suggest swim take talk teach tear tell thank think throw touch travel
try turn understand use visit wait wake walk want wash watch wave wear win
wish wonder work worry write yell
approve arrest chew clap collapse compete complete connect contain continue
create deny develop disappear divide earn elect employ encourage establish
fail float gather greet hire identify improve increase inform intend invent
kidnap knock lift manage measure mention obey observe operate organize
perform permit prevent produce publish raise refer release remain remove
represent request require rob rush sail settle solve spill squeeze steer
survive swing trust vote wrap
""".split()


def regular_forms(verb):
    if verb.endswith("e") and not verb.endswith("ee"):
        past, ing = verb + "d", verb[:-1] + "ing"
    elif verb.endswith("y") and verb[-2] not in "aeiou":
        past, ing = verb[:-1] + "ied", verb + "ing"
    elif (len(verb) <= 4 and verb[-1] not in "aeiouwxy"
          and verb[-2] in "aeiou" and verb[-3] not in "aeiou"):
        past, ing = verb + verb[-1] + "ed", verb + verb[-1] + "ing"
    else:
        past, ing = verb + "ed", verb + "ing"
    if verb.endswith(("s", "sh", "ch", "x", "z", "o")):
        third = verb + "es"
    elif verb.endswith("y") and verb[-2] not in "aeiou":
        third = verb[:-1] + "ies"
    else:
        third = verb + "s"
    return [verb, third, past, ing]


def main(root):
    irregular = {}
    with open(os.path.join(root, "verb.exc"), encoding="utf-8") as fh:
        for line in fh:
            form, *lemmas = line.split()
            for lemma in lemmas:
                irregular.setdefault(lemma, set()).add(form)
    out = set()
    for verb in BASE:
        forms = set(irregular.get(verb, ()))
        if forms:
            forms.update([verb, regular_forms(verb)[1], regular_forms(verb)[3]])
        else:
            forms.update(regular_forms(verb))
        for f in forms:
            if "_" not in f:
                out.add((f, verb))
    for form, lemma in [("is", "be"), ("am", "be"), ("are", "be"),
                        ("was", "be"), ("were", "be"), ("been", "be"),
                        ("being", "be"), ("has", "have"), ("had", "have"),
                        ("did", "do"), ("does", "do"), ("done", "do")]:
        out.add((form, lemma))
    for form, lemma in sorted(out):
        print(f"{form}\t{lemma}")


if __name__ == "__main__":
    main(sys.argv[1])
