#!/usr/bin/env python3
"""Regenerates toy_corpus.jsonl and girlfriend_mini.jsonl from the marked-up
dialogues below. Cause spans are written inline as [[ ... ]].

The tokenizer here mirrors ectg::tokenize; the C++ parser re-validates every
span, so a mismatch shows up as a test failure rather than silently.
"""
import json
import os
import string

PUNCT = set(string.punctuation)


def tokenize(text):
    out, cur = [], ""
    for i, ch in enumerate(text):
        if ch.isspace() and ord(ch) < 0x80:
            if cur:
                out.append(cur)
            cur = ""
        elif ch in PUNCT:
            nxt = text[i + 1] if i + 1 < len(text) else ""
            inner = ch == "-" and cur and nxt and not nxt.isspace() and nxt not in PUNCT
            if inner:
                cur += ch
            else:
                if cur:
                    out.append(cur)
                cur = ""
                out.append(ch)
        else:
            cur += ch.lower()
    if cur:
        out.append(cur)
    return out


def parse_marked(marked):
    """Returns (plain text, [[start, end], ...]) from '[[...]]' markup."""
    text, spans, pos = "", [], 0
    while True:
        a = marked.find("[[", pos)
        if a < 0:
            text += marked[pos:]
            break
        b = marked.find("]]", a)
        text += marked[pos:a]
        before = len(tokenize(text))
        text += marked[a + 2:b]
        after = len(tokenize(text))
        spans.append([before, after - 1])
        pos = b + 2
    return text, spans


def dialogue(did, emotion, turns):
    utts = []
    for i, marked in enumerate(turns):
        text, spans = parse_marked(marked)
        utts.append({"cause_spans": spans,
                     "speaker": "speaker" if i % 2 == 0 else "listener",
                     "text": text})
    return {"emotion": emotion, "id": did, "utterances": utts}


TOY = [
    ("toy-01", "surprised", [
        "I couldnt celebrate my 18th birthday because of exams. But [[my friends threw a surprise party]] for me!",
        "That is [[so sweet of them]]! Did you [[enjoy the party]]?",
        "When I went out [[the whole place was decorated]] and everyone was there.",
        "That sounds [[like a sweet surprise]], I hope you [[enjoy every memory]]."]),
    ("toy-02", "surprised", [
        "My coworkers [[planned a surprise party]] for my retirement.",
        "How [[sweet of your coworkers]]! I bet you will [[enjoy retirement]]."]),
    ("toy-03", "surprised", [
        "[[My sister organized a surprise party]] for my thirtieth.",
        "That is [[a sweet sister]]. I hope you [[enjoy turning thirty]]."]),
    ("toy-04", "joyful", [
        "We had [[a huge party]] after graduation last night.",
        "[[Sweet celebration]]! Did everyone [[enjoy the music]]?"]),
    ("toy-05", "nostalgic", [
        "I recently spoke with [[my ex-girlfriend on the phone]].",
        "Do you still [[love her]]?",
        "I think so, [[the girlfriend I lost]] still matters to me.",
        "I hope [[you two can be together]] again and [[find love]]."]),
    ("toy-06", "nostalgic", [
        "I found [[old letters from my girlfriend]] in a drawer.",
        "Maybe [[you still love]] her and want to [[be together]]."]),
    ("toy-07", "sentimental", [
        "[[My girlfriend moved abroad]] last spring.",
        "Long distance is hard, but [[love keeps people together]]."]),
    ("toy-08", "lonely", [
        "I miss [[my girlfriend]] since she started working nights.",
        "[[Plan time together]], [[love needs attention]]."]),
    ("toy-09", "anxious", [
        "[[My final exam]] is tomorrow morning and I cannot sleep.",
        "[[Good luck]]! I [[hope you pass]]."]),
    ("toy-10", "anxious", [
        "I have [[a driving exam]] next week.",
        "[[Best of luck]], I [[hope it goes smoothly]]."]),
    ("toy-11", "apprehensive", [
        "[[The math exam]] scares me more than anything.",
        "Deep breaths. [[Luck favors]] the prepared, and I [[hope you rest]] first."]),
    ("toy-12", "terrified", [
        "[[The bar exam results]] come out today.",
        "[[Fingers crossed and good luck]]. I [[hope for great news]]."]),
    ("toy-13", "sad", [
        "[[My dog died]] this morning.",
        "I am [[so sorry for your loss]]."]),
    ("toy-14", "devastated", [
        "We had to [[put our old dog down]] yesterday.",
        "[[Sorry to hear]] that. [[Losing a pet]] is [[a painful loss]]."]),
    ("toy-15", "sad", [
        "[[The neighbors dog]] that I walked every day [[passed away]].",
        "[[So sorry]]. That is [[a real loss]] for you too."]),
    ("toy-16", "grieving", [
        "I keep [[seeing my dog's bowl]] in the kitchen.",
        "I am [[sorry]]. [[Grief after a loss]] takes time."]),
    ("toy-17", "proud", [
        "[[I got the promotion at work]] today!",
        "[[Congratulations]]! You must be [[so proud]]."]),
    ("toy-18", "proud", [
        "[[My son got his first job]] as an engineer.",
        "[[Congratulations to him]]! You should be [[proud parents]]."]),
    ("toy-19", "impressed", [
        "[[My friend landed a job]] at a big studio.",
        "[[Congratulations to your friend]]! Be [[proud of her]]."]),
    ("toy-20", "confident", [
        "[[I finally got the job offer]] I wanted.",
        "That deserves [[congratulations]]. Stay [[proud and humble]]."]),
    ("toy-21", "afraid", [
        "[[The storm knocked out the power]] and it is pitch dark.",
        "Stay [[safe]]! [[Storms are scary]]."]),
    ("toy-22", "afraid", [
        "I heard [[a strange noise]] in the basement last night.",
        "That would be [[scary]]. I hope you [[stayed safe]]."]),
    ("toy-23", "terrified", [
        "[[Thunder during the storm]] shook the whole house.",
        "[[So scary]]! Glad [[you are safe]]."]),
    ("toy-24", "anxious", [
        "[[A tornado warning]] just went off near us.",
        "Please [[get somewhere safe]]. [[Tornadoes are scary]]."]),
    ("toy-25", "excited", [
        "[[We booked a trip to the beach]] for next month!",
        "[[Sounds fun]]! [[Enjoy the beach]]."]),
    ("toy-26", "excited", [
        "[[Our family vacation]] starts tomorrow.",
        "Have [[fun]]! Will you [[visit a beach]]?"]),
    ("toy-27", "joyful", [
        "[[The road trip with my cousins]] was amazing.",
        "[[Road trips are fun]]! [[Any beach stops]]?"]),
    ("toy-28", "hopeful", [
        "I am [[saving for a trip]] to Hawaii.",
        "[[What fun]]! [[The beaches are beautiful]]."]),
    ("toy-29", "grateful", [
        "[[My neighbor helped me]] fix my car.",
        "[[How kind]]! You must be [[grateful]]."]),
    ("toy-30", "grateful", [
        "[[A stranger helped me]] carry groceries in the rain.",
        "[[Kind people]] make the world better. That is [[something grateful]] to remember."]),
    ("toy-31", "caring", [
        "[[My neighbor brought soup]] when I was sick.",
        "[[Such a kind neighbor]]. I bet you feel [[grateful]]."]),
    ("toy-32", "trusting", [
        "[[My coworker helped me]] finish the report.",
        "[[Kind coworkers]] are rare. [[Stay grateful]]."]),
]

GIRLFRIEND = [
    ("gf-a", "nostalgic", [
        "I miss [[my girlfriend]] so much.",
        "I hope you still [[love]] each other and get back [[together]]."]),
    ("gf-b", "sentimental", [
        "I keep thinking about [[my girlfriend]].",
        "Maybe you [[love]] her and should be [[together]]."]),
]


def write(path, dialogues):
    with open(path, "w", encoding="utf-8") as f:
        for d in dialogues:
            obj = dialogue(*d)
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":")))
            f.write("\n")


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    write(os.path.join(here, "toy_corpus.jsonl"), TOY)
    write(os.path.join(here, "girlfriend_mini.jsonl"), GIRLFRIEND)
