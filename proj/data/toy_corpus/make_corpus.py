#!/usr/bin/env python3
"""Regenerates the toy corpus: page PNGs, generic-jsonl OCR and mock fixtures.

Output is deterministic; re-running rewrites identical files.
"""
import json
import pathlib

from PIL import Image, ImageDraw, ImageFont

HERE = pathlib.Path(__file__).resolve().parent
PAGES = HERE / "pages"
FIXTURES = HERE / "fixtures"
W, H = 600, 800

# (doc_id, title, [(label, value, question, partial_answer or None)])
DOCS = [
    ("receipt_01", "GREEN MARKET", [
        ("Store", "Green Market", "What is the store name?", None),
        ("Date", "2024-03-05", "On what date was the purchase made?", None),
        ("Payment", "Visa", "How was the purchase paid?", None),
        ("Total", "12.50", "What is the total amount?", "12"),
    ]),
    ("invoice_02", "INVOICE", [
        ("Invoice No", "INV-0042", "What is the invoice number?", None),
        ("Customer", "Harbor Tools Ltd", "Who is the customer on the invoice?", "Harbor"),
        ("Due Date", "2024-04-30", "When is the invoice due?", None),
        ("Amount Due", "980.00", "How much is due?", None),
    ]),
    ("shares_03", "SHARE CERTIFICATE", [
        ("Company", "Northwind Holdings", "Which company issued the shares?", None),
        ("Holder", "Maria Lopez", "Who holds the shares?", None),
        ("Share Type", "Ordinary Shares", "What is the type of shares?", "Shares"),
        ("Quantity", "1,500", "How many shares are held?", None),
    ]),
    ("student_04", "ENROLMENT FORM", [
        ("Student Name", "Chen Xiaoming", "What is the student's name?", "Chen"),
        ("School", "Riverside High", "Which school is the student enrolled in?", None),
        ("Grade", "Year 10", "What grade is the student in?", None),
        ("Student ID", "S-20931", "What is the student ID?", None),
    ]),
    ("bank_05", "ACCOUNT STATEMENT", [
        ("Account Holder", "Priya Nair", "Who holds the account?", None),
        ("Account No", "0042-7719", "What is the account number?", None),
        ("Period", "March 2024", "Which period does the statement cover?", None),
        ("Closing Balance", "2,315.40", "What is the closing balance?", None),
    ]),
]

LABEL_QUESTION = "Which text is printed on this document?"


def ecma_escape(s):
    return "".join("\\" + c if c in r".^$*+?()[]{}|\/" else c for c in s)


def text_box(draw, font, x, y, s):
    l, t, r, b = draw.textbbox((x, y), s, font=font)
    return [l - 2, t - 2, r + 2, b + 2]


def render(doc_id, title, rows):
    img = Image.new("RGB", (W, H), "white")
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    items = []

    tw = draw.textlength(title, font=font)
    tx, ty = (W - tw) / 2, 40
    draw.text((tx, ty), title, fill="black", font=font)
    items.append((title, text_box(draw, font, tx, ty, title)))
    draw.line([(40, 80), (W - 40, 80)], fill=(160, 160, 160), width=1)

    y = 120
    for label, value, _, _ in rows:
        draw.text((60, y), label, fill=(60, 60, 60), font=font)
        items.append((label, text_box(draw, font, 60, y, label)))
        draw.text((300, y), value, fill="black", font=font)
        items.append((value, text_box(draw, font, 300, y, value)))
        y += 60

    img.save(PAGES / f"{doc_id}.png", optimize=False)
    with open(PAGES / f"{doc_id}.jsonl", "w") as f:
        for text, box in items:
            f.write(json.dumps({"text": text, "box": [float(v) for v in box], "confidence": 0.99}) + "\n")


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    PAGES.mkdir(exist_ok=True)
    FIXTURES.mkdir(exist_ok=True)
    gen, answer_full, answer_partial = [], [], []
    for doc_id, title, rows in DOCS:
        render(doc_id, title, rows)
        for _, value, question, partial in rows:
            gen.append({"match": f"Target answer: {value}\n", "regex": False, "response": question})
            q = ecma_escape(question)
            answer_full.append({
                "match": f"E\\d+: {ecma_escape(value)}\\n[\\s\\S]*Question: {q}$",
                "regex": True,
                "response": value,
            })
            if partial:
                answer_partial.append({"match": f"Question: {q}$", "regex": True, "response": partial})
    gen.append({"default": LABEL_QUESTION})
    write_jsonl(FIXTURES / "generator.jsonl", gen)

    write_jsonl(FIXTURES / "verifier.jsonl", [
        {"match": f"Question: {LABEL_QUESTION}", "regex": False,
         "response": {"relevant_and_clear": False, "answer_valid": False,
                      "rationale": "question is not specific to one field"}},
        {"default": {"relevant_and_clear": True, "answer_valid": True,
                     "rationale": "answer is the printed field value"}},
    ])

    # Correct only when the gold entity was retrieved; a few questions get a
    # partial answer without it, the rest "unknown".
    write_jsonl(FIXTURES / "answerer.jsonl", answer_full + answer_partial + [{"default": "unknown"}])


if __name__ == "__main__":
    main()
